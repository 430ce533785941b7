//! Versioned binary checkpoints.
//!
//! Layout: magic, `u32` version, config text, dtype name, `u64` step and
//! epoch, named parameters, then Adam moments aligned with the parameters.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::codec::{put_str, put_tensor, put_u32, put_u64, Reader};
use crate::numerics::{ParamStore, Scalar, Tensor};
use crate::objective::AdamState;

use super::config::{Precision, RunConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MTCAECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub config: RunConfig,
    /// Optimizer steps taken.
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    pub params: ParamStore<T>,
    pub adam: AdamState<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn fresh(config: RunConfig, params: ParamStore<T>) -> Self {
        let adam = AdamState::new(&params);
        Checkpoint {
            config,
            step: 0,
            epoch: 0,
            params,
            adam,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_str(&mut out, &self.config.to_text());
        put_str(&mut out, T::NAME);
        put_u64(&mut out, self.step);
        put_u64(&mut out, self.epoch);
        put_u32(&mut out, self.params.len() as u32);
        for (_, p) in self.params.iter() {
            put_str(&mut out, &p.name);
            put_tensor(&mut out, &p.tensor);
        }
        put_u64(&mut out, self.adam.step);
        for t in self.adam.m.iter().chain(&self.adam.v) {
            put_tensor(&mut out, t);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader::new(bytes);
        let (config, dtype) = read_header(&mut r)?;
        if dtype != T::NAME {
            return Err(format!("checkpoint holds {dtype} tensors, expected {}", T::NAME));
        }
        let step = r.u64()?;
        let epoch = r.u64()?;
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = r.string()?;
            if params.id(&name).is_some() {
                return Err(format!("duplicate parameter {name}"));
            }
            params.add(name, r.tensor::<T>()?);
        }
        let adam_step = r.u64()?;
        let mut read_moments = || -> std::result::Result<Vec<Tensor<T>>, String> {
            params
                .tensors()
                .map(|p| {
                    let t = r.tensor::<T>()?;
                    if t.shape() != p.shape() {
                        return Err(format!("moment shape {:?} does not match parameter {:?}", t.shape(), p.shape()));
                    }
                    Ok(t)
                })
                .collect()
        };
        let m = read_moments()?;
        let v = read_moments()?;
        r.finish()?;
        Ok(Checkpoint {
            config,
            step,
            epoch,
            params,
            adam: AdamState { step: adam_step, m, v },
        })
    }

    /// Writes to a sibling temporary file and renames it into place, so an
    /// interrupted save never clobbers the previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|msg| Error::Format {
            path: path.to_path_buf(),
            msg,
        })
    }

    /// Rebuilds the model and checks the stored parameters match its
    /// layout exactly.
    pub fn model(&self) -> Result<(Model, ParamStore<T>)> {
        let (model, mut store) = Model::init::<T>(&self.config.model)?;
        let named: Vec<(String, Tensor<T>)> = self.params.iter().map(|(_, p)| (p.name.clone(), p.tensor.clone())).collect();
        store.load_from(&named)?;
        Ok((model, store))
    }
}

fn read_header(r: &mut Reader<'_>) -> std::result::Result<(RunConfig, String), String> {
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let config = RunConfig::parse_text(&r.string()?).map_err(|e| e.to_string())?;
    Ok((config, r.string()?))
}

/// Reads only the header, to decide which precision to load with.
pub fn peek_checkpoint(path: &Path) -> Result<(RunConfig, Precision)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let (config, dtype) = read_header(&mut Reader::new(&bytes)).map_err(fail)?;
    let precision = dtype.parse().map_err(|e: Error| fail(e.to_string()))?;
    Ok((config, precision))
}
