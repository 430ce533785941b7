//! Synthetic face clips: a bright rectangle with five darker feature dots
//! moving over a textured background.
//!
//! The expression class sets the frequency at which the face pulses in size
//! and brightness; each subject carries a persistent position offset, face
//! size and brightness so subject-independent splits are meaningful.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Landmark anchors as fractions of the face box, in order left eye,
/// right eye, nose, left mouth corner, right mouth corner.
pub const LANDMARK_ANCHORS: [(f64, f64); 5] = [(0.3, 0.3), (0.7, 0.3), (0.5, 0.55), (0.3, 0.8), (0.7, 0.8)];

/// Relative size oscillation amplitude.
const SIZE_AMPLITUDE: f64 = 0.25;
/// Brightness oscillation amplitude, in 0..255 pixel units.
const BRIGHTNESS_AMPLITUDE: f64 = 55.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_subjects: usize,
    pub samples_per_subject: usize,
    pub num_classes: usize,
    pub raw_frames: usize,
    pub raw_height: usize,
    pub raw_width: usize,
    pub channels: usize,
    pub seed: u64,
}

impl DatasetSpec {
    /// Ten subjects, six clips per class each, four classes.
    pub fn standard() -> Self {
        DatasetSpec {
            num_subjects: 10,
            samples_per_subject: 24,
            num_classes: 4,
            raw_frames: 16,
            raw_height: 24,
            raw_width: 24,
            channels: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.num_subjects == 0 || self.samples_per_subject == 0 {
            return Err(Error::Config("need at least one subject and one sample per subject".into()));
        }
        if self.raw_frames < 2 || self.raw_height < 4 || self.raw_width < 4 || self.channels == 0 {
            return Err(Error::Config(format!(
                "raw clip {}x{}x{}x{} is too small",
                self.raw_frames, self.raw_height, self.raw_width, self.channels
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.num_subjects * self.samples_per_subject
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Size/brightness oscillation frequency of `class`, in cycles per
    /// clip. Kept below a quarter of the raw frame rate so the pulse
    /// survives 2x temporal downsampling.
    pub fn class_frequency(&self, class: usize) -> f64 {
        (class + 1) as f64 / (self.num_classes + 1) as f64 * self.raw_frames as f64 / 4.0
    }
}

/// One raw clip with frame-level labels. Pixels are in `0..=255`,
/// coordinates are normalized by image extent.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    /// `[T_raw, H_raw, W_raw, C]`.
    pub video: Tensor<f32>,
    /// `[T_raw, 4]` `(x, y, w, h)`, top-left corner plus extent.
    pub boxes: Tensor<f32>,
    /// `[T_raw, 10]` five `(x, y)` points.
    pub landmarks: Tensor<f32>,
    pub expression: usize,
    pub subject_id: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub samples: Vec<SyntheticSample>,
}

impl Dataset {
    pub fn subject_ids(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.subject_id).collect()
    }
}

struct Subject {
    offset: (f64, f64),
    face_width: f64,
    aspect: f64,
    brightness: f64,
    background: f64,
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(spec.len());
    for s in 0..spec.num_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, s as u64, u64::MAX));
        let subject = Subject {
            offset: (rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08)),
            face_width: rng.random_range(0.38..0.48),
            aspect: rng.random_range(1.0..1.2),
            brightness: rng.random_range(150.0..200.0),
            background: rng.random_range(30.0..80.0),
        };
        for j in 0..spec.samples_per_subject {
            let class = j % spec.num_classes;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, s as u64, j as u64));
            samples.push(render_sample(spec, &subject, s as u32, class, &mut rng));
        }
    }
    Ok(Dataset {
        spec: spec.clone(),
        samples,
    })
}

/// Fraction of the pixel interval `[i, i+1) / n` covered by `[lo, hi)`.
fn coverage(i: usize, n: usize, lo: f64, hi: f64) -> f64 {
    let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
    ((hi.min(b) - lo.max(a)).max(0.0)) * n as f64
}

fn render_sample(spec: &DatasetSpec, subject: &Subject, subject_id: u32, class: usize, rng: &mut ChaCha8Rng) -> SyntheticSample {
    let (tr, h, w, c) = (spec.raw_frames, spec.raw_height, spec.raw_width, spec.channels);
    let phase = rng.random_range(0.0..TAU);
    let velocity = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
    let freq = spec.class_frequency(class);

    let texture: Vec<f64> = (0..h * w).map(|_| rng.random_range(-15.0..15.0)).collect();
    let gradient = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));

    let mut video = Vec::with_capacity(tr * h * w * c);
    let mut boxes = Vec::with_capacity(tr * 4);
    let mut landmarks = Vec::with_capacity(tr * 10);
    for t in 0..tr {
        let wave = (TAU * freq * t as f64 / tr as f64 + phase).sin();
        let scale = 1.0 + SIZE_AMPLITUDE * wave;
        let bw = subject.face_width * scale;
        let bh = (subject.face_width * subject.aspect * scale).min(0.9);
        let progress = t as f64 / (tr - 1).max(1) as f64 - 0.5;
        let cx = 0.5 + subject.offset.0 + velocity.0 * progress;
        let cy = 0.5 + subject.offset.1 + velocity.1 * progress;
        let bx = (cx - bw / 2.0).clamp(0.0, 1.0 - bw);
        let by = (cy - bh / 2.0).clamp(0.0, 1.0 - bh);
        boxes.extend([bx, by, bw, bh].map(|v| v as f32));
        let points: Vec<(f64, f64)> = LANDMARK_ANCHORS
            .iter()
            .map(|&(ax, ay)| (bx + ax * bw, by + ay * bh))
            .collect();
        for &(px, py) in &points {
            landmarks.push(px as f32);
            landmarks.push(py as f32);
        }

        let face = subject.brightness + BRIGHTNESS_AMPLITUDE * wave;
        let dot_radius = 0.08 * bw;
        for i in 0..h {
            let ycov = coverage(i, h, by, by + bh);
            let yc = (i as f64 + 0.5) / h as f64;
            for j in 0..w {
                let xcov = coverage(j, w, bx, bx + bw);
                let xc = (j as f64 + 0.5) / w as f64;
                let bg = subject.background
                    + texture[i * w + j]
                    + gradient.0 * (yc - 0.5)
                    + gradient.1 * (xc - 0.5);
                let cov = xcov * ycov;
                let mut v = bg * (1.0 - cov) + face * cov;
                for &(px, py) in &points {
                    let d2 = (xc - px).powi(2) + (yc - py).powi(2);
                    v -= 70.0 * cov * (-d2 / (2.0 * dot_radius * dot_radius)).exp();
                }
                let v = v.clamp(0.0, 255.0);
                for ch in 0..c {
                    video.push((v * (1.0 - 0.15 * ch as f64)) as f32);
                }
            }
        }
    }
    SyntheticSample {
        video: Tensor::new([tr, h, w, c], video).expect("video size"),
        boxes: Tensor::new([tr, 4], boxes).expect("box size"),
        landmarks: Tensor::new([tr, 10], landmarks).expect("landmark size"),
        expression: class,
        subject_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetSpec {
        DatasetSpec {
            num_subjects: 3,
            samples_per_subject: 4,
            ..DatasetSpec::standard()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(&small()).unwrap();
        let b = generate_dataset(&small()).unwrap();
        assert_eq!(a.samples.len(), 12);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!(x.video.bit_eq(&y.video));
            assert!(x.boxes.bit_eq(&y.boxes) && x.landmarks.bit_eq(&y.landmarks));
        }
        let other = generate_dataset(&DatasetSpec { seed: 1, ..small() }).unwrap();
        assert!(!other.samples[0].video.bit_eq(&a.samples[0].video));
    }

    #[test]
    fn geometry_invariants_hold() {
        let ds = generate_dataset(&DatasetSpec::standard()).unwrap();
        for s in &ds.samples {
            assert!(s.expression < ds.spec.num_classes);
            assert!(s.video.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
            for t in 0..ds.spec.raw_frames {
                let (x, y, w, h) = (s.boxes.at(&[t, 0]), s.boxes.at(&[t, 1]), s.boxes.at(&[t, 2]), s.boxes.at(&[t, 3]));
                assert!(x >= 0.0 && y >= 0.0 && x + w <= 1.0 + 1e-6 && y + h <= 1.0 + 1e-6);
                for k in 0..5 {
                    let (px, py) = (s.landmarks.at(&[t, 2 * k]), s.landmarks.at(&[t, 2 * k + 1]));
                    assert!(px > x && px < x + w && py > y && py < y + h);
                }
            }
        }
    }

    #[test]
    fn classes_are_balanced_per_subject() {
        let ds = generate_dataset(&DatasetSpec::standard()).unwrap();
        let mut counts = vec![0; 4];
        for s in ds.samples.iter().filter(|s| s.subject_id == 2) {
            counts[s.expression] += 1;
        }
        assert_eq!(counts, vec![6; 4]);
    }

    /// Dominant non-DC DFT bin of each clip's box-width series.
    fn dominant_frequency(series: &[f64]) -> usize {
        let n = series.len();
        let mean = series.iter().sum::<f64>() / n as f64;
        (1..=n / 2)
            .max_by(|&a, &b| {
                let power = |k: usize| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (t, v) in series.iter().enumerate() {
                        let ang = TAU * k as f64 * t as f64 / n as f64;
                        re += (v - mean) * ang.cos();
                        im -= (v - mean) * ang.sin();
                    }
                    re * re + im * im
                };
                power(a).total_cmp(&power(b))
            })
            .unwrap()
    }

    #[test]
    fn class_ordering_is_recoverable_from_box_dynamics() {
        let spec = DatasetSpec {
            raw_frames: 32,
            ..DatasetSpec::standard()
        };
        let ds = generate_dataset(&spec).unwrap();
        let mut sums = vec![0.0; spec.num_classes];
        let mut counts = vec![0.0; spec.num_classes];
        for s in &ds.samples {
            let widths: Vec<f64> = (0..spec.raw_frames).map(|t| s.boxes.at(&[t, 2]) as f64).collect();
            sums[s.expression] += dominant_frequency(&widths) as f64;
            counts[s.expression] += 1.0;
        }
        let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
        for w in means.windows(2) {
            assert!(w[0] < w[1], "{means:?}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate_dataset(&DatasetSpec { num_classes: 1, ..small() }).is_err());
        assert!(generate_dataset(&DatasetSpec { num_subjects: 0, ..small() }).is_err());
        assert!(generate_dataset(&DatasetSpec { raw_height: 2, ..small() }).is_err());
    }
}
