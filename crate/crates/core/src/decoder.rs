//! Cross-attention decoder whose keys and values come from the shared
//! encoder features while the query is carried through the layers, plus the
//! cascade that chains one decoder per task.

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamAlloc, ParamStore, Scalar, Tensor, Var};
use crate::vit::{multi_head_attention, AttentionParams, LayerNorm, Linear, Mlp};

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub query_norm: LayerNorm,
    pub attn: AttentionParams,
    pub mlp_norm: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct DecoderParams {
    /// Maps the incoming query stream `d_in -> d_d`.
    pub input_proj: Linear,
    /// The single `d_e -> d_d` projection that produces K and V.
    pub kv_dense: Linear,
    pub kv_norm: LayerNorm,
    pub layers: Vec<DecoderLayer>,
}

impl DecoderParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alloc: &mut dyn ParamAlloc,
        name: &str,
        d_in: usize,
        feature_dim: usize,
        dim: usize,
        layers: usize,
        heads: usize,
        mlp_ratio: usize,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::invalid("vit_decoder", "needs at least one layer"));
        }
        let input_proj = Linear::new(alloc, &format!("{name}.input_proj"), d_in, dim);
        let kv_dense = Linear::new(alloc, &format!("{name}.kv_dense"), feature_dim, dim);
        let kv_norm = LayerNorm::new(alloc, &format!("{name}.kv_norm"), dim);
        let layers = (0..layers)
            .map(|l| {
                let p = format!("{name}.{l}");
                Ok(DecoderLayer {
                    query_norm: LayerNorm::new(alloc, &format!("{p}.query_norm"), dim),
                    attn: AttentionParams::new(alloc, &format!("{p}.attn"), dim, heads)?,
                    mlp_norm: LayerNorm::new(alloc, &format!("{p}.mlp_norm"), dim),
                    mlp: Mlp::new(alloc, &format!("{p}.mlp"), dim, dim * mlp_ratio, dim),
                })
            })
            .collect::<Result<_>>()?;
        Ok(DecoderParams {
            input_proj,
            kv_dense,
            kv_norm,
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.input_proj.d_out
    }
}

/// Tensors consumed by each decoder layer, for inspecting the recursion.
#[derive(Clone, Debug, Default)]
pub struct DecoderTrace<T> {
    pub queries: Vec<Tensor<T>>,
    pub keys: Vec<Tensor<T>>,
    pub values: Vec<Tensor<T>>,
}

/// One decoder pass:
///
/// ```text
/// K, V = Norm(Dense(F))            (once)
/// Y    = InputProj(y_in)
/// repeat L times:
///     Q  = Norm(Y)
///     Z  = MHA(Q, K, V)
///     Z' = Z + Y
///     Y  = MLP(Norm(Z')) + Z'
/// ```
pub fn vit_decoder_forward<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &DecoderParams,
    y_in: Var,
    features: Var,
    mut trace: Option<&mut DecoderTrace<T>>,
) -> Result<Var> {
    if params.layers.is_empty() {
        return Err(Error::invalid("vit_decoder", "needs at least one layer"));
    }
    if g.shape(y_in)[0] != g.shape(features)[0] {
        return Err(Error::shape("vit_decoder", g.shape(y_in), g.shape(features)));
    }
    let kv = params.kv_dense.forward(g, store, features)?;
    let kv = params.kv_norm.forward(g, store, kv)?;
    let (keys, values) = (kv, kv);

    let mut y = params.input_proj.forward(g, store, y_in)?;
    for layer in &params.layers {
        let q = layer.query_norm.forward(g, store, y)?;
        if let Some(t) = trace.as_deref_mut() {
            t.queries.push(g.value(q).clone());
            t.keys.push(g.value(keys).clone());
            t.values.push(g.value(values).clone());
        }
        let z = multi_head_attention(g, store, &layer.attn, q, keys, values)?.output;
        let z_res = g.add(z, y)?;
        let h = layer.mlp_norm.forward(g, store, z_res)?;
        let y_mlp = layer.mlp.forward(g, store, h)?;
        y = g.add(y_mlp, z_res)?;
    }
    Ok(y)
}

/// `Y1 = dec1(F, F)`, `Yi = deci(Y(i-1), F)`. Returns every stage's output.
pub fn cascade_forward<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    decoders: &[DecoderParams],
    features: Var,
) -> Result<Vec<Var>> {
    if decoders.is_empty() {
        return Err(Error::invalid("cascade", "no decoders"));
    }
    let mut outputs = Vec::with_capacity(decoders.len());
    let mut query = features;
    for dec in decoders {
        query = vit_decoder_forward(g, store, dec, query, features, None)?;
        outputs.push(query);
    }
    Ok(outputs)
}
