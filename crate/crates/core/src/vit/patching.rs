//! Lossless rearrangement of a `[T, H, W, C]` clip into tube tokens.
//!
//! Tubes are ordered temporal slot, then row, then column. Inside a tube
//! the values are laid out frame, row, column, channel.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

fn check_geometry(cfg: &ModelConfig) -> Result<()> {
    let pairs = [
        ("frames", cfg.frames, cfg.tube_frames),
        ("height", cfg.height, cfg.tube_height),
        ("width", cfg.width, cfg.tube_width),
    ];
    for (name, extent, tube) in pairs {
        if tube == 0 || extent % tube != 0 {
            return Err(Error::invalid(
                "patching",
                format!("{name} {extent} is not divisible by tube extent {tube}"),
            ));
        }
    }
    Ok(())
}

/// Visits every (token, offset-in-token, offset-in-video) triple.
fn for_each_element(cfg: &ModelConfig, mut f: impl FnMut(usize, usize, usize)) {
    let grid = cfg.grid();
    let (tk, ph, pw, c) = (cfg.tube_frames, cfg.tube_height, cfg.tube_width, cfg.channels);
    let dim = cfg.token_dim();
    for token in 0..grid.len() {
        let (gt, gr, gc) = grid.coords(token);
        let mut k = 0;
        for dt in 0..tk {
            let frame = gt * tk + dt;
            for dr in 0..ph {
                let row = gr * ph + dr;
                for dc in 0..pw {
                    let col = gc * pw + dc;
                    let base = ((frame * cfg.height + row) * cfg.width + col) * c;
                    for ch in 0..c {
                        f(token, k, base + ch);
                        k += 1;
                    }
                }
            }
        }
        debug_assert_eq!(k, dim);
    }
}

/// `[T, H, W, C]` video to `[N, t_k·p_h·p_w·C]` tokens.
pub fn patch<T: Scalar>(video: &Tensor<T>, cfg: &ModelConfig) -> Result<Tensor<T>> {
    check_geometry(cfg)?;
    let expected = cfg.video_shape();
    if video.shape() != expected {
        return Err(Error::shape("patching", video.shape(), &expected));
    }
    let dim = cfg.token_dim();
    let src = video.data();
    let mut out = vec![T::zero(); src.len()];
    for_each_element(cfg, |token, k, v| out[token * dim + k] = src[v]);
    Tensor::new([cfg.num_tokens(), dim], out)
}

/// Inverse of [`patch`].
pub fn unpatch<T: Scalar>(tokens: &Tensor<T>, cfg: &ModelConfig) -> Result<Tensor<T>> {
    check_geometry(cfg)?;
    let dim = cfg.token_dim();
    let expected = [cfg.num_tokens(), dim];
    if tokens.shape() != expected {
        return Err(Error::shape("unpatching", tokens.shape(), &expected));
    }
    let src = tokens.data();
    let mut out = vec![T::zero(); src.len()];
    for_each_element(cfg, |token, k, v| out[v] = src[token * dim + k]);
    Tensor::new(cfg.video_shape(), out)
}
