//! Clip preprocessing: uniform-stride frame selection, bilinear resize and
//! scaling of pixels to `[0, 1]`.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};
use crate::objective::MultiTaskLabels;

use super::synth::SyntheticSample;

/// A model-ready clip with labels at the selected frames.
#[derive(Clone, Debug)]
pub struct PreparedSample<T> {
    /// `[T, H, W, C]` in `[0, 1]`.
    pub video: Tensor<T>,
    pub labels: MultiTaskLabels<T>,
    pub subject_id: u32,
}

/// `floor(j * raw / frames)` for `j` in `0..frames`. Strictly increasing
/// whenever `raw >= frames`.
pub fn temporal_indices(raw: usize, frames: usize) -> Result<Vec<usize>> {
    if frames == 0 || raw < frames {
        return Err(Error::invalid(
            "preprocess",
            format!("cannot select {frames} frames from a clip of {raw}"),
        ));
    }
    Ok((0..frames).map(|j| j * raw / frames).collect())
}

/// Bilinear resize of one `[h, w, c]` frame with half-pixel centers and
/// edge clamping.
pub fn resize_bilinear(frame: &[f32], (h, w, c): (usize, usize, usize), (oh, ow): (usize, usize)) -> Vec<f32> {
    let source = |o: usize, out: usize, inp: usize| {
        let pos = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(inp - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        let (y0, y1, fy) = source(i, oh, h);
        for j in 0..ow {
            let (x0, x1, fx) = source(j, ow, w);
            for ch in 0..c {
                let px = |y: usize, x: usize| frame[(y * w + x) * c + ch] as f64;
                let top = px(y0, x0) * (1.0 - fx) + px(y0, x1) * fx;
                let bottom = px(y1, x0) * (1.0 - fx) + px(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    out
}

fn gather_rows<T: Scalar>(labels: &Tensor<f32>, indices: &[usize]) -> Result<Tensor<T>> {
    let (_, width) = labels.dims2("preprocess")?;
    let mut data = Vec::with_capacity(indices.len() * width);
    for &t in indices {
        data.extend(labels.data()[t * width..(t + 1) * width].iter().map(|&v| T::cast_from(v as f64)));
    }
    Tensor::new([indices.len(), width], data)
}

pub fn preprocess<T: Scalar>(sample: &SyntheticSample, cfg: &ModelConfig) -> Result<PreparedSample<T>> {
    let &[raw, h, w, c] = sample.video.shape() else {
        return Err(Error::invalid("preprocess", format!("expected a 4-d clip, got {:?}", sample.video.shape())));
    };
    if c != cfg.channels {
        return Err(Error::invalid(
            "preprocess",
            format!("clip has {c} channels, model expects {}", cfg.channels),
        ));
    }
    let indices = temporal_indices(raw, cfg.frames)?;
    let frame_len = h * w * c;
    let mut data = Vec::with_capacity(cfg.frames * cfg.height * cfg.width * c);
    for &t in &indices {
        let frame = &sample.video.data()[t * frame_len..(t + 1) * frame_len];
        let resized = if (h, w) == (cfg.height, cfg.width) {
            frame.to_vec()
        } else {
            resize_bilinear(frame, (h, w, c), (cfg.height, cfg.width))
        };
        data.extend(resized.into_iter().map(|v| T::cast_from((v as f64 / 255.0).clamp(0.0, 1.0))));
    }
    Ok(PreparedSample {
        video: Tensor::new(cfg.video_shape(), data)?,
        labels: MultiTaskLabels {
            boxes: gather_rows(&sample.boxes, &indices)?,
            landmarks: gather_rows(&sample.landmarks, &indices)?,
            expression: sample.expression,
        },
        subject_id: sample.subject_id,
    })
}
