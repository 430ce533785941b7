//! Parameter bundles for the small building blocks shared by encoder,
//! decoders and heads.

use crate::error::Result;
use crate::numerics::{Graph, Init, ParamAlloc, ParamId, ParamStore, Scalar, Var};

/// Std of the truncated-normal weight init.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(alloc: &mut dyn ParamAlloc, name: &str, d_in: usize, d_out: usize) -> Self {
        Linear {
            weight: alloc.alloc(&format!("{name}.weight"), &[d_in, d_out], Init::TruncNormal(INIT_STD)),
            bias: alloc.alloc(&format!("{name}.bias"), &[d_out], Init::Zeros),
            d_in,
            d_out,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.dense(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(alloc: &mut dyn ParamAlloc, name: &str, d: usize) -> Self {
        LayerNorm {
            gain: alloc.alloc(&format!("{name}.gain"), &[d], Init::Ones),
            bias: alloc.alloc(&format!("{name}.bias"), &[d], Init::Zeros),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Tokenwise two-layer perceptron with a GELU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(alloc: &mut dyn ParamAlloc, name: &str, d_in: usize, hidden: usize, d_out: usize) -> Self {
        Mlp {
            fc1: Linear::new(alloc, &format!("{name}.fc1"), d_in, hidden),
            fc2: Linear::new(alloc, &format!("{name}.fc2"), hidden, d_out),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, store, x)?;
        let h = g.gelu(h);
        self.fc2.forward(g, store, h)
    }
}
