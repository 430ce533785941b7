use super::layers::Linear;
use crate::config::{ModelConfig, TokenGrid};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamAlloc, ParamStore, Scalar, Tensor, Var};

/// Learned projection from flattened tubes to encoder width.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub proj: Linear,
    pub grid: TokenGrid,
}

impl Embedding {
    pub fn new(alloc: &mut dyn ParamAlloc, cfg: &ModelConfig) -> Self {
        Embedding {
            proj: Linear::new(alloc, "embed.proj", cfg.token_dim(), cfg.encoder_dim),
            grid: cfg.grid(),
        }
    }

    /// Projects `[N, token_dim]` tokens to `[N, d_e]`, optionally adding
    /// the fixed positional table.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        tokens: Var,
        with_positions: bool,
    ) -> Result<Var> {
        let expected = [self.grid.len(), self.proj.d_in];
        if g.shape(tokens) != expected {
            return Err(Error::shape("embedding", g.shape(tokens), &expected));
        }
        let x = self.proj.forward(g, store, tokens)?;
        if !with_positions {
            return Ok(x);
        }
        let pos = g.constant(sinusoidal_positions(self.grid, self.proj.d_out));
        g.add(x, pos)
    }
}

/// Widths of the temporal, row and column bands.
fn band_widths(dim: usize) -> [usize; 3] {
    let third = dim / 3;
    [third, third, dim - 2 * third]
}

/// Fixed 3-D sinusoidal table `[N, dim]`: the temporal, row and column
/// coordinates of each tube are encoded in consecutive bands.
pub fn sinusoidal_positions<T: Scalar>(grid: TokenGrid, dim: usize) -> Tensor<T> {
    let widths = band_widths(dim);
    let mut data = Vec::with_capacity(grid.len() * dim);
    for token in 0..grid.len() {
        let (t, r, c) = grid.coords(token);
        for (&pos, &width) in [t, r, c].iter().zip(&widths) {
            for i in 0..width {
                let freq_index = (i / 2) as f64;
                let angle = pos as f64 / 10000f64.powf(2.0 * freq_index / width as f64);
                let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
                data.push(T::cast_from(v));
            }
        }
    }
    Tensor::new([grid.len(), dim], data).expect("table size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Initializer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_without_positions_is_zero() {
        let cfg = ModelConfig::micro();
        let mut store = ParamStore::<f64>::new();
        let emb = Embedding::new(
            &mut Initializer::new(&mut store, ChaCha8Rng::seed_from_u64(0)),
            &cfg,
        );
        *store.get_mut(emb.proj.weight) = Tensor::zeros([cfg.token_dim(), cfg.encoder_dim]);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full([cfg.num_tokens(), cfg.token_dim()], 0.7));
        let y = emb.forward(&mut g, &store, x, false).unwrap();
        assert_eq!(g.shape(y), &[cfg.num_tokens(), cfg.encoder_dim]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_content_at_distinct_positions_differs() {
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::<f64>::new();
        let emb = Embedding::new(
            &mut Initializer::new(&mut store, ChaCha8Rng::seed_from_u64(1)),
            &cfg,
        );
        let mut g = Graph::new();
        let x = g.constant(Tensor::full([cfg.num_tokens(), cfg.token_dim()], 0.5));
        let y = emb.forward(&mut g, &store, x, true).unwrap();
        let rows: Vec<&[f64]> = g.value(y).data().chunks(cfg.encoder_dim).collect();
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                assert_ne!(rows[i], rows[j], "tokens {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn positional_table_values() {
        let grid = TokenGrid {
            temporal: 2,
            rows: 2,
            cols: 3,
        };
        let table = sinusoidal_positions::<f64>(grid, 6);
        // Token 5 = (t=0, r=1, c=2); bands are 2 wide, first pair is (sin p, cos p).
        let row: Vec<f64> = (0..6).map(|j| table.at(&[5, j])).collect();
        let expect = [0f64.sin(), 0f64.cos(), 1f64.sin(), 1f64.cos(), 2f64.sin(), 2f64.cos()];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_wrong_token_width() {
        let cfg = ModelConfig::micro();
        let mut rec = crate::numerics::ShapeRecorder::default();
        let emb = Embedding::new(&mut rec, &cfg);
        let store = ParamStore::<f32>::new();
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros([cfg.num_tokens(), cfg.token_dim() + 1]));
        assert!(emb.forward(&mut g, &store, x, true).is_err());
    }
}
