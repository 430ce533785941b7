use super::attention::{multi_head_attention, AttentionParams};
use super::layers::{LayerNorm, Mlp};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::numerics::{Graph, ParamAlloc, ParamStore, Scalar, Var};

/// Pre-norm ViT block: `x + MHA(LN(x))`, then `x + MLP(LN(x))`.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub norm1: LayerNorm,
    pub attn: AttentionParams,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

impl EncoderBlock {
    pub fn new(alloc: &mut dyn ParamAlloc, name: &str, dim: usize, heads: usize, mlp_ratio: usize) -> Result<Self> {
        Ok(EncoderBlock {
            norm1: LayerNorm::new(alloc, &format!("{name}.norm1"), dim),
            attn: AttentionParams::new(alloc, &format!("{name}.attn"), dim, heads)?,
            norm2: LayerNorm::new(alloc, &format!("{name}.norm2"), dim),
            mlp: Mlp::new(alloc, &format!("{name}.mlp"), dim, dim * mlp_ratio, dim),
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.norm1.forward(g, store, x)?;
        let a = multi_head_attention(g, store, &self.attn, h, h, h)?;
        let x = g.add(x, a.output)?;
        let h = self.norm2.forward(g, store, x)?;
        let m = self.mlp.forward(g, store, h)?;
        g.add(x, m)
    }
}

/// Shared feature extractor: joint space-time self-attention over all
/// tokens. No final norm, so an empty stack is the identity.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub blocks: Vec<EncoderBlock>,
}

impl Encoder {
    pub fn new(alloc: &mut dyn ParamAlloc, cfg: &ModelConfig) -> Result<Self> {
        let blocks = (0..cfg.encoder_layers)
            .map(|l| {
                EncoderBlock::new(
                    alloc,
                    &format!("encoder.{l}"),
                    cfg.encoder_dim,
                    cfg.encoder_heads,
                    cfg.mlp_ratio,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Encoder { blocks })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.blocks.iter().try_fold(x, |x, b| b.forward(g, store, x))
    }
}
