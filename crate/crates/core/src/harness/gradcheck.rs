//! Per-component finite-difference gradient checks in 64-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::decoder::{cascade_forward, vit_decoder_forward, DecoderParams};
use crate::error::Result;
use crate::model::{Model, MultiTaskOutput, StrategyKind, Task, TaskHead};
use crate::numerics::{
    grad_check_store, BackwardFault, GradCheckReport, Graph, Initializer, ParamAlloc, ParamStore, Tensor, Var,
};
use crate::objective::{multitask_loss, LossWeights, MultiTaskLabels};
use crate::vit::{multi_head_attention, AttentionParams, Embedding, EncoderBlock, INIT_STD};

/// Maximum accepted relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentCheck {
    pub component: String,
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

impl ComponentCheck {
    fn from_report(component: impl Into<String>, r: GradCheckReport) -> Self {
        ComponentCheck {
            component: component.into(),
            passed: r.max_rel_error < GRADCHECK_TOLERANCE,
            max_rel_error: r.max_rel_error,
            coordinates: r.coordinates,
            worst: r.worst,
        }
    }
}

fn normal(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()).expect("shape")
}

/// Weight std used for checks; large enough that gradients are O(1),
/// small enough that finite-difference truncation error stays negligible.
const STRESS_STD: f64 = 0.5;

/// Rescales matrices initialized with std `init_std` to [`STRESS_STD`] and
/// jitters vectors away from their 0/1 initial values.
fn stress(store: &mut ParamStore<f64>, init_std: f64, rng: &mut impl Rng) {
    let k = STRESS_STD / init_std;
    for t in store.tensors_mut() {
        if t.ndim() == 2 {
            *t = t.map(|v| v * k);
        } else {
            let jitter = normal(rng, t.shape(), 0.2);
            t.add_assign(&jitter).expect("same shape");
        }
    }
}

/// Random linear readout `sum(x ⊙ R)` so every output coordinate matters.
fn readout(g: &mut Graph<f64>, x: Var, rng_seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let r = g.constant(normal(&mut rng, g.shape(x), 1.0));
    let p = g.mul(x, r)?;
    Ok(g.sum(p))
}

struct Bench {
    rng: ChaCha8Rng,
    fault: Option<BackwardFault>,
}

impl Bench {
    fn build<M>(&mut self, f: impl FnOnce(&mut dyn ParamAlloc) -> Result<M>) -> Result<(M, ParamStore<f64>)> {
        let mut store = ParamStore::new();
        let seed = self.rng.random();
        let module = f(&mut Initializer::new(&mut store, ChaCha8Rng::seed_from_u64(seed)))?;
        stress(&mut store, INIT_STD, &mut self.rng);
        Ok((module, store))
    }

    fn check(
        &mut self,
        name: &str,
        store: &ParamStore<f64>,
        objective: impl Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
    ) -> Result<ComponentCheck> {
        let fault = self.fault;
        let report = grad_check_store(store, |g, s| {
            if let Some(f) = fault {
                g.inject_fault(f);
            }
            objective(g, s)
        })?;
        Ok(ComponentCheck::from_report(name, report))
    }
}

/// Checks the building blocks of `cfg` and the full model under each of
/// `strategies`. With `fault` set, the chosen backward rule is corrupted
/// in every analytic pass.
pub fn run_gradcheck(
    cfg: &ModelConfig,
    strategies: &[StrategyKind],
    fault: Option<BackwardFault>,
    seed: u64,
) -> Result<Vec<ComponentCheck>> {
    cfg.validate()?;
    let mut bench = Bench {
        rng: ChaCha8Rng::seed_from_u64(seed),
        fault,
    };
    let n = cfg.num_tokens();
    let (d_e, d_d) = (cfg.encoder_dim, cfg.decoder_dim);
    let tokens = normal(&mut bench.rng, &[n, cfg.token_dim()], 1.0);
    let f_in = normal(&mut bench.rng, &[n, d_e], 1.0);
    let y_in = normal(&mut bench.rng, &[n, d_d], 1.0);
    let mut out = Vec::new();

    let (embedding, store) = bench.build(|a| Ok(Embedding::new(a, cfg)))?;
    out.push(bench.check("embedding", &store, |g, s| {
        let t = g.constant(tokens.clone());
        let x = embedding.forward(g, s, t, true)?;
        readout(g, x, 1)
    })?);

    let (attn, store) = bench.build(|a| AttentionParams::new(a, "attn", d_e, cfg.encoder_heads))?;
    out.push(bench.check("attention", &store, |g, s| {
        let x = g.constant(f_in.clone());
        let y = multi_head_attention(g, s, &attn, x, x, x)?.output;
        readout(g, y, 2)
    })?);

    let (block, store) = bench.build(|a| EncoderBlock::new(a, "block", d_e, cfg.encoder_heads, cfg.mlp_ratio))?;
    out.push(bench.check("encoder_block", &store, |g, s| {
        let x = g.constant(f_in.clone());
        let y = block.forward(g, s, x)?;
        readout(g, y, 3)
    })?);

    let layers = cfg.decoder_layers.max(1);
    let (dec, store) = bench.build(|a| {
        DecoderParams::new(a, "dec", d_d, d_e, d_d, layers, cfg.decoder_heads, cfg.mlp_ratio)
    })?;
    out.push(bench.check("vit_decoder", &store, |g, s| {
        let (y, f) = (g.constant(y_in.clone()), g.constant(f_in.clone()));
        let z = vit_decoder_forward(g, s, &dec, y, f, None)?;
        readout(g, z, 4)
    })?);

    let (stages, store) = bench.build(|a| {
        (0..3)
            .map(|i| {
                let d_in = if i == 0 { d_e } else { d_d };
                DecoderParams::new(a, &format!("stage{i}"), d_in, d_e, d_d, layers, cfg.decoder_heads, cfg.mlp_ratio)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    out.push(bench.check("cascade", &store, |g, s| {
        let f = g.constant(f_in.clone());
        let ys = cascade_forward(g, s, &stages, f)?;
        let mut total = readout(g, ys[0], 5)?;
        for (i, &y) in ys.iter().enumerate().skip(1) {
            let r = readout(g, y, 5 + i as u64)?;
            total = g.add(total, r)?;
        }
        Ok(total)
    })?);

    for task in Task::ALL {
        let (head, store) = bench.build(|a| Ok(TaskHead::new(a, task, d_d, cfg, true)))?;
        out.push(bench.check(&format!("head.{task}"), &store, |g, s| {
            let y = g.constant(y_in.clone());
            let o = head.forward(g, s, y, cfg)?;
            readout(g, o, 10)
        })?);
    }

    let labels = MultiTaskLabels {
        boxes: normal(&mut bench.rng, &[cfg.frames, 4], 0.3).map(|v| v + 0.5),
        landmarks: normal(&mut bench.rng, &[cfg.frames, 10], 0.3).map(|v| v + 0.5),
        expression: bench.rng.random_range(0..cfg.num_classes),
    };
    let mut raw = ParamStore::new();
    let b = raw.add("boxes", normal(&mut bench.rng, &[cfg.frames, 4], 0.3).map(|v| v + 0.5));
    let l = raw.add("landmarks", normal(&mut bench.rng, &[cfg.frames, 10], 0.3).map(|v| v + 0.5));
    let e = raw.add("logits", normal(&mut bench.rng, &[1, cfg.num_classes], 2.0));
    out.push(bench.check("loss", &raw, |g, s| {
        let output = MultiTaskOutput {
            boxes: Some(g.param(s, b)),
            landmarks: Some(g.param(s, l)),
            expression: Some(g.param(s, e)),
        };
        Ok(multitask_loss(g, &output, &labels, &LossWeights::default())?.total)
    })?);

    let video = normal(&mut bench.rng, &cfg.video_shape(), 1.0);
    for &strategy in strategies {
        let model_cfg = ModelConfig {
            strategy,
            ..cfg.clone()
        };
        let (model, mut store) = Model::init::<f64>(&model_cfg)?;
        stress(&mut store, model_cfg.init_std, &mut bench.rng);
        out.push(bench.check(&format!("model.{strategy}"), &store, |g, s| {
            let pass = model.forward(g, s, &video)?;
            Ok(multitask_loss(g, &pass.output, &labels, &LossWeights::default())?.total)
        })?);
    }
    Ok(out)
}
