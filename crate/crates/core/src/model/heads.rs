use super::strategy::Task;
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamAlloc, ParamStore, Scalar, Var};
use crate::vit::{LayerNorm, Linear};

/// `FC(Pool(Norm(Y)))`. Regression heads pool each temporal slot over the
/// spatial grid and emit `t_k` frames of sigmoid coordinates per slot; the
/// expression head pools every token and emits raw logits.
#[derive(Clone, Debug)]
pub struct TaskHead {
    pub task: Task,
    pub norm: Option<LayerNorm>,
    pub fc: Linear,
}

impl TaskHead {
    pub fn new(alloc: &mut dyn ParamAlloc, task: Task, d_in: usize, cfg: &ModelConfig, with_norm: bool) -> Self {
        let name = format!("head.{task}");
        let norm = with_norm.then(|| LayerNorm::new(alloc, &format!("{name}.norm"), d_in));
        let d_out = match task.coords_per_frame() {
            Some(k) => cfg.tube_frames * k,
            None => cfg.num_classes,
        };
        TaskHead {
            task,
            norm,
            fc: Linear::new(alloc, &format!("{name}.fc"), d_in, d_out),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, y: Var, cfg: &ModelConfig) -> Result<Var> {
        let grid = cfg.grid();
        let d = self.fc.d_in;
        if g.shape(y) != [grid.len(), d] {
            return Err(Error::shape("task_head", g.shape(y), &[grid.len(), d]));
        }
        let x = match &self.norm {
            Some(n) => n.forward(g, store, y)?,
            None => y,
        };
        match self.task.coords_per_frame() {
            Some(k) => {
                let slots = g.reshape(x, &[grid.temporal, grid.spatial(), d])?;
                let pooled = g.mean_pool(slots, &[1])?;
                let coords = self.fc.forward(g, store, pooled)?;
                let frames = g.reshape(coords, &[cfg.frames, k])?;
                Ok(g.sigmoid(frames))
            }
            None => {
                let pooled = g.mean_pool(x, &[0])?;
                let pooled = g.reshape(pooled, &[1, d])?;
                self.fc.forward(g, store, pooled)
            }
        }
    }
}
