use super::layers::Linear;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamAlloc, ParamStore, Scalar, Var};

/// Query/key/value/output projections of one multi-head attention block.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl AttentionParams {
    pub fn new(alloc: &mut dyn ParamAlloc, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::invalid(
                "multi_head_attention",
                format!("width {dim} is not divisible by {heads} heads"),
            ));
        }
        Ok(AttentionParams {
            query: Linear::new(alloc, &format!("{name}.query"), dim, dim),
            key: Linear::new(alloc, &format!("{name}.key"), dim, dim),
            value: Linear::new(alloc, &format!("{name}.value"), dim, dim),
            output: Linear::new(alloc, &format!("{name}.output"), dim, dim),
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.query.d_in
    }
}

pub struct AttentionOutput {
    pub output: Var,
    /// Per-head `[N_q, N_k]` attention weights.
    pub weights: Vec<Var>,
}

/// Scaled dot-product attention over `heads` column groups. Self-attention
/// is the case `q_in == k_in == v_in`.
pub fn multi_head_attention<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &AttentionParams,
    q_in: Var,
    k_in: Var,
    v_in: Var,
) -> Result<AttentionOutput> {
    let d = params.dim();
    let heads = params.heads;
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::invalid(
            "multi_head_attention",
            format!("width {d} is not divisible by {heads} heads"),
        ));
    }
    if g.shape(k_in)[0] != g.shape(v_in)[0] {
        return Err(Error::shape("multi_head_attention", g.shape(k_in), g.shape(v_in)));
    }
    let head_dim = d / heads;
    let scale = T::one() / T::from_usize(head_dim).expect("fits").sqrt();

    let q = params.query.forward(g, store, q_in)?;
    let k = params.key.forward(g, store, k_in)?;
    let v = params.value.forward(g, store, v_in)?;

    let mut outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * head_dim, head_dim)?;
        let kh = g.slice_cols(k, h * head_dim, head_dim)?;
        let vh = g.slice_cols(v, h * head_dim, head_dim)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let attn = g.softmax(scores, 1)?;
        outputs.push(g.matmul(attn, vh)?);
        weights.push(attn);
    }
    let merged = if heads == 1 {
        outputs[0]
    } else {
        g.concat_cols(&outputs)?
    };
    let output = params.output.forward(g, store, merged)?;
    Ok(AttentionOutput { output, weights })
}
