//! Symbolic shape and parameter accounting; needs no tensor storage, so it
//! works at full scale.

use std::fmt::Write;

use super::network::Model;
use super::strategy::{StrategyKind, Task};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::numerics::{ParamStore, Scalar, ShapeRecorder};

/// Named activation shapes in evaluation order.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeTrace {
    pub stages: Vec<(String, Vec<usize>)>,
}

impl ShapeTrace {
    pub fn get(&self, name: &str) -> Option<&[usize]> {
        self.stages
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_slice())
    }
}

pub fn activation_shapes(cfg: &ModelConfig) -> Result<ShapeTrace> {
    cfg.validate()?;
    let n = cfg.num_tokens();
    let mut stages = vec![
        ("video".to_string(), cfg.video_shape().to_vec()),
        ("patches".to_string(), vec![n, cfg.token_dim()]),
        ("embedded".to_string(), vec![n, cfg.encoder_dim]),
        ("features".to_string(), vec![n, cfg.encoder_dim]),
    ];
    let tasks: Vec<Task> = match cfg.strategy {
        StrategyKind::Stl => vec![cfg.stl_task],
        _ => Task::ALL.to_vec(),
    };
    if matches!(cfg.strategy, StrategyKind::FullySharedMlp | StrategyKind::FullySharedVit) {
        stages.push(("decoder.shared".into(), vec![n, cfg.decoder_dim]));
    }
    if cfg.strategy.is_multi_task() {
        for t in &tasks {
            stages.push((format!("decoder.{t}"), vec![n, cfg.decoder_dim]));
        }
    }
    for t in tasks {
        let shape = match t.coords_per_frame() {
            Some(k) => vec![cfg.frames, k],
            None => vec![1, cfg.num_classes],
        };
        stages.push((format!("output.{t}"), shape));
    }
    Ok(ShapeTrace { stages })
}

/// Parameter names and shapes of the model `cfg` describes.
pub fn parameter_shapes(cfg: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>> {
    let mut rec = ShapeRecorder::default();
    Model::layout(cfg, &mut rec)?;
    Ok(rec.params)
}

/// Exact scalar parameter count of the model `cfg` describes.
pub fn parameter_count(cfg: &ModelConfig) -> Result<usize> {
    let mut rec = ShapeRecorder::default();
    Model::layout(cfg, &mut rec)?;
    Ok(rec.num_scalars())
}

pub fn count_parameters<T: Scalar>(store: &ParamStore<T>) -> usize {
    store.num_scalars()
}

/// Human-readable structure report: geometry, activation shapes, every
/// parameter tensor, and totals by top-level module.
pub fn describe(cfg: &ModelConfig) -> Result<String> {
    let trace = activation_shapes(cfg)?;
    let params = parameter_shapes(cfg)?;
    let grid = cfg.grid();
    let mut out = String::new();
    let _ = writeln!(out, "strategy: {}", cfg.strategy);
    if cfg.strategy == StrategyKind::Stl {
        let _ = writeln!(out, "single task: {}", cfg.stl_task);
    }
    let _ = writeln!(
        out,
        "tokens: {} = {} temporal x {} x {} spatial, width {}",
        grid.len(),
        grid.temporal,
        grid.rows,
        grid.cols,
        cfg.token_dim()
    );
    let _ = writeln!(
        out,
        "encoder: width {}, {} layers, {} heads; decoders: width {}, {} layers, {} heads; mlp ratio {}",
        cfg.encoder_dim,
        cfg.encoder_layers,
        cfg.encoder_heads,
        cfg.decoder_dim,
        cfg.decoder_layers,
        cfg.decoder_heads,
        cfg.mlp_ratio
    );
    let _ = writeln!(out, "\nactivations:");
    for (name, shape) in &trace.stages {
        let _ = writeln!(out, "  {name:<20} {shape:?}");
    }
    let _ = writeln!(out, "\nparameters:");
    let mut groups: Vec<(String, usize)> = Vec::new();
    for (name, shape) in &params {
        let count: usize = shape.iter().product();
        let _ = writeln!(out, "  {name:<40} {shape:?}");
        let group = name.split('.').take(2).collect::<Vec<_>>().join(".");
        match groups.last_mut() {
            Some((g, c)) if *g == group => *c += count,
            _ => groups.push((group, count)),
        }
    }
    let _ = writeln!(out, "\nparameter totals:");
    for (g, c) in &groups {
        let _ = writeln!(out, "  {g:<24} {c}");
    }
    let total: usize = params.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let _ = writeln!(out, "  {:<24} {total}", "total");
    Ok(out)
}
