//! Flat `key=value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::ModelConfig;
use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::model::StrategyKind;
use crate::objective::{AdamW, LossWeights};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            _ => Err(Error::Config(format!("precision must be f32 or f64, got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub loss: LossWeights,
    pub precision: Precision,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let adam = AdamW::default();
        TrainSettings {
            epochs: 50,
            batch_size: 4,
            lr: adam.lr,
            weight_decay: adam.weight_decay,
            loss: LossWeights::default(),
            precision: Precision::F32,
        }
    }
}

impl TrainSettings {
    pub fn optimizer(&self) -> AdamW {
        AdamW {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamW::default()
        }
    }
}

/// Everything a run needs. `model.seed` seeds initialization and batch
/// order; `data.seed` seeds the synthetic dataset and the fold shuffle.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub model: ModelConfig,
    pub train: TrainSettings,
    /// Generator settings. `num_classes` and `channels` always mirror the
    /// model.
    pub data: DatasetSpec,
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub folds: usize,
    pub fold: usize,
    pub strategies: Vec<StrategyKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::with_preset("tiny").expect("tiny preset exists")
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "preset",
    "frames",
    "height",
    "width",
    "channels",
    "tube_frames",
    "tube_height",
    "tube_width",
    "encoder_dim",
    "encoder_layers",
    "encoder_heads",
    "decoder_dim",
    "decoder_layers",
    "decoder_heads",
    "mlp_ratio",
    "init_std",
    "num_classes",
    "strategy",
    "stl_task",
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "weight_decay",
    "w_detect",
    "w_landmark",
    "w_expr",
    "precision",
    "subjects",
    "samples_per_subject",
    "raw_frames",
    "raw_height",
    "raw_width",
    "data_seed",
    "dataset",
    "out_dir",
    "folds",
    "fold",
    "strategies",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}={value:?}: {e}")))
}

impl RunConfig {
    /// `micro`, `tiny` or `full` model with the standard synthetic dataset.
    pub fn with_preset(name: &str) -> Result<Self> {
        let model = match name {
            "micro" => ModelConfig::micro(),
            "tiny" => ModelConfig::tiny(),
            "full" => ModelConfig::full(),
            _ => return Err(Error::Config(format!("unknown preset {name:?} (expected micro, tiny or full)"))),
        };
        let mut cfg = RunConfig {
            preset: name.to_string(),
            data: DatasetSpec {
                num_classes: model.num_classes,
                channels: model.channels,
                ..DatasetSpec::standard()
            },
            model,
            train: TrainSettings::default(),
            dataset: None,
            out_dir: PathBuf::from("runs"),
            folds: 5,
            fold: 0,
            strategies: StrategyKind::ALL.to_vec(),
        };
        cfg.sync();
        Ok(cfg)
    }

    fn sync(&mut self) {
        self.data.num_classes = self.model.num_classes;
        self.data.channels = self.model.channels;
    }

    /// Applies one setting. `preset` resets every model field, so callers
    /// that mix it with other keys should use [`RunConfig::from_pairs`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let m = &mut self.model;
        match key {
            "preset" => {
                let fresh = RunConfig::with_preset(value)?;
                self.preset = fresh.preset;
                self.model = fresh.model;
            }
            "frames" => m.frames = parse(key, value)?,
            "height" => m.height = parse(key, value)?,
            "width" => m.width = parse(key, value)?,
            "channels" => m.channels = parse(key, value)?,
            "tube_frames" => m.tube_frames = parse(key, value)?,
            "tube_height" => m.tube_height = parse(key, value)?,
            "tube_width" => m.tube_width = parse(key, value)?,
            "encoder_dim" => m.encoder_dim = parse(key, value)?,
            "encoder_layers" => m.encoder_layers = parse(key, value)?,
            "encoder_heads" => m.encoder_heads = parse(key, value)?,
            "decoder_dim" => m.decoder_dim = parse(key, value)?,
            "decoder_layers" => m.decoder_layers = parse(key, value)?,
            "decoder_heads" => m.decoder_heads = parse(key, value)?,
            "mlp_ratio" => m.mlp_ratio = parse(key, value)?,
            "init_std" => m.init_std = parse(key, value)?,
            "num_classes" => m.num_classes = parse(key, value)?,
            "strategy" => m.strategy = parse(key, value)?,
            "stl_task" => m.stl_task = parse(key, value)?,
            "seed" => m.seed = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "weight_decay" => self.train.weight_decay = parse(key, value)?,
            "w_detect" => self.train.loss.detect = parse(key, value)?,
            "w_landmark" => self.train.loss.landmark = parse(key, value)?,
            "w_expr" => self.train.loss.expression = parse(key, value)?,
            "precision" => self.train.precision = value.parse()?,
            "subjects" => self.data.num_subjects = parse(key, value)?,
            "samples_per_subject" => self.data.samples_per_subject = parse(key, value)?,
            "raw_frames" => self.data.raw_frames = parse(key, value)?,
            "raw_height" => self.data.raw_height = parse(key, value)?,
            "raw_width" => self.data.raw_width = parse(key, value)?,
            "data_seed" => self.data.seed = parse(key, value)?,
            "dataset" => self.dataset = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "folds" => self.folds = parse(key, value)?,
            "fold" => self.fold = parse(key, value)?,
            "strategies" => {
                self.strategies = if value == "all" {
                    StrategyKind::ALL.to_vec()
                } else {
                    value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.trim().parse())
                        .collect::<Result<_>>()?
                };
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        self.sync();
        Ok(())
    }

    /// Starts from the tiny preset (or the `preset` among `pairs`) and
    /// applies the remaining pairs in order.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let preset = pairs.iter().rev().find(|(k, _)| *k == "preset").map_or("tiny", |(_, v)| v.trim());
        let mut cfg = RunConfig::with_preset(preset)?;
        for (k, v) in pairs.iter().filter(|(k, _)| *k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.data.validate()?;
        self.train.loss.validate()?;
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) || self.train.weight_decay.is_nan() || self.train.weight_decay < 0.0 {
            return Err(Error::Config("lr must be positive and weight_decay non-negative".into()));
        }
        if self.folds == 0 || self.fold >= self.folds {
            return Err(Error::Config(format!("fold {} out of range for {} folds", self.fold, self.folds)));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies must not be empty".into()));
        }
        Ok(())
    }

    pub fn value_of(&self, key: &str) -> Option<String> {
        let m = &self.model;
        Some(match key {
            "preset" => self.preset.clone(),
            "frames" => m.frames.to_string(),
            "height" => m.height.to_string(),
            "width" => m.width.to_string(),
            "channels" => m.channels.to_string(),
            "tube_frames" => m.tube_frames.to_string(),
            "tube_height" => m.tube_height.to_string(),
            "tube_width" => m.tube_width.to_string(),
            "encoder_dim" => m.encoder_dim.to_string(),
            "encoder_layers" => m.encoder_layers.to_string(),
            "encoder_heads" => m.encoder_heads.to_string(),
            "decoder_dim" => m.decoder_dim.to_string(),
            "decoder_layers" => m.decoder_layers.to_string(),
            "decoder_heads" => m.decoder_heads.to_string(),
            "mlp_ratio" => m.mlp_ratio.to_string(),
            "init_std" => m.init_std.to_string(),
            "num_classes" => m.num_classes.to_string(),
            "strategy" => m.strategy.to_string(),
            "stl_task" => m.stl_task.to_string(),
            "seed" => m.seed.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "lr" => self.train.lr.to_string(),
            "weight_decay" => self.train.weight_decay.to_string(),
            "w_detect" => self.train.loss.detect.to_string(),
            "w_landmark" => self.train.loss.landmark.to_string(),
            "w_expr" => self.train.loss.expression.to_string(),
            "precision" => self.train.precision.to_string(),
            "subjects" => self.data.num_subjects.to_string(),
            "samples_per_subject" => self.data.samples_per_subject.to_string(),
            "raw_frames" => self.data.raw_frames.to_string(),
            "raw_height" => self.data.raw_height.to_string(),
            "raw_width" => self.data.raw_width.to_string(),
            "data_seed" => self.data.seed.to_string(),
            "dataset" => self.dataset.as_deref().map(|p| p.display().to_string()).unwrap_or_default(),
            "out_dir" => self.out_dir.display().to_string(),
            "folds" => self.folds.to_string(),
            "fold" => self.fold.to_string(),
            "strategies" => self.strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(","),
            _ => return None,
        })
    }

    /// Canonical `key=value` text; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.value_of(k).expect("known key")))
            .collect()
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        RunConfig::from_pairs(parse_pairs(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse_text(&text)
    }

    /// Reads an optional config file, then applies `--key=value` style
    /// overrides (leading dashes optional).
    pub fn from_file_and_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        let mut pairs = parse_pairs(&text)?;
        for arg in overrides {
            let stripped = arg.trim_start_matches('-');
            let (k, v) = stripped
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected --key=value, got {arg:?}")))?;
            pairs.push((k.trim(), v));
        }
        RunConfig::from_pairs(pairs)
    }
}

/// Splits `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(&str, &str)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        out.push((k.trim(), v.trim()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.train.batch_size, 4);
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.model, ModelConfig::tiny());
        assert_eq!(cfg.data.num_classes, cfg.model.num_classes);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::with_preset("micro").unwrap();
        cfg.set("strategies", "stl,cascaded_vit").unwrap();
        cfg.set("lr", "0.003").unwrap();
        cfg.set("dataset", "/tmp/x").unwrap();
        cfg.set("precision", "f64").unwrap();
        let back = RunConfig::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn preset_applies_before_other_keys() {
        let cfg = RunConfig::from_pairs([("encoder_dim", "24"), ("preset", "micro")]).unwrap();
        assert_eq!(cfg.preset, "micro");
        assert_eq!(cfg.model.encoder_dim, 24);
        assert_eq!(cfg.model.frames, ModelConfig::micro().frames);
    }

    #[test]
    fn overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nepochs = 3\nbatch_size=2\n").unwrap();
        let cfg = RunConfig::from_file_and_overrides(Some(&path), &["--epochs=7".into()]).unwrap();
        assert_eq!((cfg.train.epochs, cfg.train.batch_size), (7, 2));
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for pairs in [
            vec![("bogus", "1")],
            vec![("epochs", "many")],
            vec![("strategy", "cnn")],
            vec![("preset", "huge")],
            vec![("fold", "5")],
            vec![("batch_size", "0")],
            vec![("encoder_heads", "5")],
        ] {
            let err = RunConfig::from_pairs(pairs.clone()).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{pairs:?}: {err}");
        }
        assert!(parse_pairs("no equals sign").is_err());
        assert!(RunConfig::from_file_and_overrides(None, &["epochs".into()]).is_err());
    }
}
