use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::heads::TaskHead;
use super::strategy::{StrategyKind, Task};
use crate::config::ModelConfig;
use crate::decoder::{cascade_forward, vit_decoder_forward, DecoderParams};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Initializer, ParamAlloc, ParamStore, Scalar, Tensor, Var};
use crate::vit::{patch, Embedding, Encoder, Mlp, INIT_STD};

/// Decoder attached to one task (or shared by all of them).
#[derive(Clone, Debug)]
pub enum TaskDecoder {
    Vit(DecoderParams),
    Mlp(Mlp),
}

impl TaskDecoder {
    fn new(
        alloc: &mut dyn ParamAlloc,
        name: &str,
        vit: bool,
        d_in: usize,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        if vit {
            Ok(TaskDecoder::Vit(DecoderParams::new(
                alloc,
                name,
                d_in,
                cfg.encoder_dim,
                cfg.decoder_dim,
                cfg.decoder_layers,
                cfg.decoder_heads,
                cfg.mlp_ratio,
            )?))
        } else {
            Ok(TaskDecoder::Mlp(Mlp::new(alloc, name, d_in, cfg.decoder_dim, cfg.decoder_dim)))
        }
    }

    /// ViT decoders attend from `query` into `features`; MLP decoders only
    /// see `query`.
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, query: Var, features: Var) -> Result<Var> {
        match self {
            TaskDecoder::Vit(p) => vit_decoder_forward(g, store, p, query, features, None),
            TaskDecoder::Mlp(m) => m.forward(g, store, query),
        }
    }
}

/// Graph handles of the three task outputs. Single-task models populate one.
#[derive(Clone, Copy, Debug, Default)]
pub struct MultiTaskOutput {
    /// `[T, 4]` per-frame `(x, y, w, h)` in `[0, 1]`.
    pub boxes: Option<Var>,
    /// `[T, 10]` per-frame five `(x, y)` points in `[0, 1]`.
    pub landmarks: Option<Var>,
    /// `[1, num_classes]` raw logits.
    pub expression: Option<Var>,
}

impl MultiTaskOutput {
    pub fn get(&self, task: Task) -> Option<Var> {
        match task {
            Task::Detect => self.boxes,
            Task::Landmark => self.landmarks,
            Task::Expression => self.expression,
        }
    }

    fn set(&mut self, task: Task, v: Var) {
        match task {
            Task::Detect => self.boxes = Some(v),
            Task::Landmark => self.landmarks = Some(v),
            Task::Expression => self.expression = Some(v),
        }
    }

    pub fn values<T: Scalar>(&self, g: &Graph<T>) -> Prediction<T> {
        Prediction {
            boxes: self.boxes.map(|v| g.value(v).clone()),
            landmarks: self.landmarks.map(|v| g.value(v).clone()),
            expression: self.expression.map(|v| g.value(v).clone()),
        }
    }
}

/// Materialized task outputs.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub boxes: Option<Tensor<T>>,
    pub landmarks: Option<Tensor<T>>,
    pub expression: Option<Tensor<T>>,
}

impl<T: Scalar> Prediction<T> {
    pub fn predicted_class(&self) -> Option<usize> {
        self.expression.as_ref().map(Tensor::argmax)
    }
}

pub struct ForwardPass {
    /// Shared encoder output `F`.
    pub features: Var,
    /// Decoder output feeding each task head, in head order.
    pub task_features: Vec<(Task, Var)>,
    pub output: MultiTaskOutput,
}

/// Encoder, decoders and heads wired according to `config.strategy`.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub embedding: Embedding,
    pub encoder: Encoder,
    /// Fully-shared strategies only.
    pub shared: Option<TaskDecoder>,
    /// One per task in cascade order; empty for STL.
    pub decoders: Vec<TaskDecoder>,
    pub heads: Vec<TaskHead>,
}

impl Model {
    /// Builds the module tree, allocating parameters through `alloc`.
    pub fn layout(config: &ModelConfig, alloc: &mut dyn ParamAlloc) -> Result<Self> {
        config.validate()?;
        let cfg = config;
        let embedding = Embedding::new(alloc, cfg);
        let encoder = Encoder::new(alloc, cfg)?;
        let (d_e, d_d) = (cfg.encoder_dim, cfg.decoder_dim);
        let vit = cfg.strategy.uses_vit_decoder();

        let mut shared = None;
        let mut decoders = Vec::new();
        match cfg.strategy {
            StrategyKind::Stl => {}
            StrategyKind::NonSharedMlp | StrategyKind::NonSharedVit => {
                for task in Task::ALL {
                    decoders.push(TaskDecoder::new(alloc, &format!("decoder.{task}"), vit, d_e, cfg)?);
                }
            }
            StrategyKind::FullySharedMlp | StrategyKind::FullySharedVit => {
                shared = Some(TaskDecoder::new(alloc, "decoder.shared", vit, d_e, cfg)?);
                for task in Task::ALL {
                    decoders.push(TaskDecoder::new(alloc, &format!("decoder.{task}"), vit, d_d, cfg)?);
                }
            }
            StrategyKind::CascadedVit => {
                for (i, task) in Task::ALL.into_iter().enumerate() {
                    let d_in = if i == 0 { d_e } else { d_d };
                    decoders.push(TaskDecoder::new(alloc, &format!("decoder.{task}"), true, d_in, cfg)?);
                }
            }
        }

        let heads = if cfg.strategy == StrategyKind::Stl {
            vec![TaskHead::new(alloc, cfg.stl_task, d_e, cfg, false)]
        } else {
            Task::ALL
                .into_iter()
                .map(|t| TaskHead::new(alloc, t, d_d, cfg, true))
                .collect()
        };

        Ok(Model {
            config: config.clone(),
            embedding,
            encoder,
            shared,
            decoders,
            heads,
        })
    }

    /// Builds the model with freshly initialized parameters drawn from
    /// `config.seed`.
    pub fn init<T: Scalar>(config: &ModelConfig) -> Result<(Self, ParamStore<T>)> {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(&mut store, ChaCha8Rng::seed_from_u64(config.seed));
        init.std_scale = config.init_std / INIT_STD;
        let model = Model::layout(config, &mut init)?;
        Ok((model, store))
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.heads.iter().map(|h| h.task).collect()
    }

    /// Runs the full model on one `[T, H, W, C]` clip.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, video: &Tensor<T>) -> Result<ForwardPass> {
        let tokens = patch(video, &self.config)?;
        let tokens = g.constant(tokens);
        let embedded = self.embedding.forward(g, store, tokens, true)?;
        let features = self.encoder.forward(g, store, embedded)?;

        let task_inputs: Vec<Var> = match self.config.strategy {
            StrategyKind::Stl => vec![features],
            StrategyKind::NonSharedMlp | StrategyKind::NonSharedVit => self
                .decoders
                .iter()
                .map(|d| d.forward(g, store, features, features))
                .collect::<Result<_>>()?,
            StrategyKind::FullySharedMlp | StrategyKind::FullySharedVit => {
                let shared = self.shared.as_ref().ok_or_else(|| {
                    Error::invalid("model_forward", "fully shared strategy without shared decoder")
                })?;
                let ys = shared.forward(g, store, features, features)?;
                self.decoders
                    .iter()
                    .map(|d| d.forward(g, store, ys, features))
                    .collect::<Result<_>>()?
            }
            StrategyKind::CascadedVit => {
                let params: Vec<DecoderParams> = self
                    .decoders
                    .iter()
                    .map(|d| match d {
                        TaskDecoder::Vit(p) => Ok(p.clone()),
                        TaskDecoder::Mlp(_) => Err(Error::invalid("model_forward", "cascade needs ViT decoders")),
                    })
                    .collect::<Result<_>>()?;
                cascade_forward(g, store, &params, features)?
            }
        };
        if task_inputs.len() != self.heads.len() {
            return Err(Error::invalid(
                "model_forward",
                format!("{} decoder outputs for {} heads", task_inputs.len(), self.heads.len()),
            ));
        }

        let mut output = MultiTaskOutput::default();
        let mut task_features = Vec::with_capacity(self.heads.len());
        for (head, &y) in self.heads.iter().zip(&task_inputs) {
            let out = head.forward(g, store, y, &self.config)?;
            output.set(head.task, out);
            task_features.push((head.task, y));
        }
        Ok(ForwardPass {
            features,
            task_features,
            output,
        })
    }

    /// Forward pass returning materialized outputs only.
    pub fn predict<T: Scalar>(&self, store: &ParamStore<T>, video: &Tensor<T>) -> Result<Prediction<T>> {
        let mut g = Graph::new();
        let pass = self.forward(&mut g, store, video)?;
        Ok(pass.output.values(&g))
    }
}
