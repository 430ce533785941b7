use crate::error::{Error, Result};
use crate::model::{StrategyKind, Task};

/// Architecture hyperparameters shared by every module.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub tube_frames: usize,
    pub tube_height: usize,
    pub tube_width: usize,
    pub encoder_dim: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub decoder_dim: usize,
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    pub mlp_ratio: usize,
    /// Standard deviation of the truncated-normal weight init.
    pub init_std: f64,
    pub num_classes: usize,
    pub strategy: StrategyKind,
    /// Task trained by the single-task strategy.
    pub stl_task: Task,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-size geometry: 16×224×224×3 clips, 2×16×16 tubes, ViT-L width
    /// encoder, 512-wide five-layer decoders. Decoder heads are 4 because
    /// 512 is not divisible by 3.
    pub fn full() -> Self {
        ModelConfig {
            frames: 16,
            height: 224,
            width: 224,
            channels: 3,
            tube_frames: 2,
            tube_height: 16,
            tube_width: 16,
            encoder_dim: 1024,
            encoder_layers: 24,
            encoder_heads: 16,
            decoder_dim: 512,
            decoder_layers: 5,
            decoder_heads: 4,
            mlp_ratio: 4,
            init_std: 0.02,
            num_classes: 7,
            strategy: StrategyKind::CascadedVit,
            stl_task: Task::Expression,
            seed: 0,
        }
    }

    /// Smallest useful model, for fast unit tests.
    pub fn micro() -> Self {
        ModelConfig {
            frames: 8,
            height: 8,
            width: 8,
            channels: 1,
            tube_frames: 2,
            tube_height: 4,
            tube_width: 4,
            encoder_dim: 8,
            encoder_layers: 1,
            encoder_heads: 2,
            decoder_dim: 8,
            decoder_layers: 2,
            decoder_heads: 2,
            mlp_ratio: 2,
            init_std: 0.2,
            num_classes: 4,
            strategy: StrategyKind::CascadedVit,
            stl_task: Task::Expression,
            seed: 0,
        }
    }

    /// Small model trained on the standard synthetic dataset. Runs on one
    /// CPU core and is cheap enough for full finite-difference checks.
    pub fn tiny() -> Self {
        ModelConfig {
            frames: 8,
            height: 16,
            width: 16,
            channels: 1,
            tube_frames: 2,
            tube_height: 4,
            tube_width: 4,
            encoder_dim: 16,
            encoder_layers: 1,
            encoder_heads: 2,
            decoder_dim: 16,
            decoder_layers: 1,
            decoder_heads: 2,
            mlp_ratio: 2,
            init_std: 0.2,
            num_classes: 4,
            strategy: StrategyKind::CascadedVit,
            stl_task: Task::Expression,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frames", self.frames),
            ("height", self.height),
            ("width", self.width),
            ("channels", self.channels),
            ("tube_frames", self.tube_frames),
            ("tube_height", self.tube_height),
            ("tube_width", self.tube_width),
            ("encoder_dim", self.encoder_dim),
            ("encoder_heads", self.encoder_heads),
            ("decoder_dim", self.decoder_dim),
            ("decoder_heads", self.decoder_heads),
            ("mlp_ratio", self.mlp_ratio),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let divisible = [
            ("frames", self.frames, "tube_frames", self.tube_frames),
            ("height", self.height, "tube_height", self.tube_height),
            ("width", self.width, "tube_width", self.tube_width),
            ("encoder_dim", self.encoder_dim, "encoder_heads", self.encoder_heads),
            ("decoder_dim", self.decoder_dim, "decoder_heads", self.decoder_heads),
        ];
        for (a, av, b, bv) in divisible {
            if av % bv != 0 {
                return Err(Error::Config(format!(
                    "{a} ({av}) must be divisible by {b} ({bv})"
                )));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config(format!("init_std must be positive, got {}", self.init_std)));
        }
        if self.strategy.uses_vit_decoder() && self.decoder_layers == 0 {
            return Err(Error::Config(format!(
                "strategy {} needs decoder_layers >= 1",
                self.strategy
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> TokenGrid {
        TokenGrid {
            temporal: self.frames / self.tube_frames,
            rows: self.height / self.tube_height,
            cols: self.width / self.tube_width,
        }
    }

    /// Length of one flattened tube.
    pub fn token_dim(&self) -> usize {
        self.tube_frames * self.tube_height * self.tube_width * self.channels
    }

    pub fn num_tokens(&self) -> usize {
        self.grid().len()
    }

    pub fn video_shape(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::tiny()
    }
}

/// Layout of tube tokens: temporal slots × rows × columns, flattened in
/// that order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenGrid {
    pub temporal: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TokenGrid {
    pub fn len(&self) -> usize {
        self.temporal * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial(&self) -> usize {
        self.rows * self.cols
    }

    /// `(temporal, row, col)` coordinates of token `index`.
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let col = index % self.cols;
        let row = (index / self.cols) % self.rows;
        let t = index / self.spatial();
        (t, row, col)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for cfg in [ModelConfig::full(), ModelConfig::micro(), ModelConfig::tiny()] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn full_token_geometry() {
        let cfg = ModelConfig::full();
        assert_eq!(cfg.num_tokens(), 1568);
        assert_eq!(cfg.token_dim(), 1536);
    }

    #[test]
    fn three_decoder_heads_at_width_512_is_rejected() {
        let cfg = ModelConfig {
            decoder_heads: 3,
            ..ModelConfig::full()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("decoder_dim"), "{msg}");
    }

    #[test]
    fn indivisible_tubes_are_rejected() {
        let cfg = ModelConfig {
            frames: 5,
            ..ModelConfig::micro()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn grid_coords_round_trip() {
        let g = ModelConfig::tiny().grid();
        let (t, r, c) = g.coords(37);
        assert_eq!((t * g.rows + r) * g.cols + c, 37);
    }
}
