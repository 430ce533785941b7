//! On-disk dataset layout: `manifest.json` plus one binary file per sample.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::codec::{put_tensor, put_u32, Reader};

use super::synth::{Dataset, DatasetSpec, SyntheticSample};

pub const MANIFEST: &str = "manifest.json";
const SAMPLE_MAGIC: &[u8; 4] = b"MTCS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    seed: u64,
    spec: DatasetSpec,
    samples: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    subject_id: u32,
    expression: usize,
}

fn encode_sample(s: &SyntheticSample) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.video.len() * 4 + 256);
    out.extend_from_slice(SAMPLE_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, s.subject_id);
    put_u32(&mut out, s.expression as u32);
    for t in [&s.video, &s.boxes, &s.landmarks] {
        put_tensor(&mut out, t);
    }
    out
}

fn decode_sample(bytes: &[u8]) -> std::result::Result<SyntheticSample, String> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != SAMPLE_MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let subject_id = r.u32()?;
    let expression = r.u32()? as usize;
    let sample = SyntheticSample {
        video: r.tensor()?,
        boxes: r.tensor()?,
        landmarks: r.tensor()?,
        expression,
        subject_id,
    };
    r.finish()?;
    Ok(sample)
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(dataset.samples.len());
    for (i, s) in dataset.samples.iter().enumerate() {
        let file = format!("sample_{i:05}.bin");
        let path = dir.join(&file);
        fs::write(&path, encode_sample(s)).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            file,
            subject_id: s.subject_id,
            expression: s.expression,
        });
    }
    let manifest = Manifest {
        format: "mtcae-dataset".into(),
        version: FORMAT_VERSION,
        seed: dataset.spec.seed,
        spec: dataset.spec.clone(),
        samples: entries,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    if manifest.format != "mtcae-dataset" || manifest.version != FORMAT_VERSION {
        return Err(Error::Format {
            path,
            msg: format!("unsupported dataset format {} v{}", manifest.format, manifest.version),
        });
    }
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let sample = decode_sample(&bytes).map_err(|msg| Error::Format { path: path.clone(), msg })?;
        if sample.subject_id != entry.subject_id || sample.expression != entry.expression {
            return Err(Error::Format {
                path,
                msg: "sample header disagrees with manifest".into(),
            });
        }
        samples.push(sample);
    }
    Ok(Dataset {
        spec: manifest.spec,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_dataset;

    fn spec() -> DatasetSpec {
        DatasetSpec {
            num_subjects: 2,
            samples_per_subject: 3,
            channels: 2,
            ..DatasetSpec::standard()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = generate_dataset(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.spec, ds.spec);
        assert_eq!(back.samples.len(), ds.samples.len());
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert!(a.video.bit_eq(&b.video) && a.boxes.bit_eq(&b.boxes) && a.landmarks.bit_eq(&b.landmarks));
            assert_eq!((a.subject_id, a.expression), (b.subject_id, b.expression));
        }
    }

    #[test]
    fn manifest_records_spec_and_seed() {
        let ds = generate_dataset(&DatasetSpec { seed: 17, ..spec() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(json["seed"], 17);
        assert_eq!(json["spec"]["num_subjects"], 2);
        assert_eq!(json["samples"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn corrupt_sample_is_a_format_error() {
        let ds = generate_dataset(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let victim = dir.path().join("sample_00001.bin");
        let mut bytes = fs::read(&victim).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&victim, bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Format { .. })));
        assert!(matches!(load_dataset(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
