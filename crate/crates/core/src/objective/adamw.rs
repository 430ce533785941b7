use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Scalar, Tensor};

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 1e-3,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments aligned with a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        AdamState {
            step: 0,
            m: store.zeros_like(),
            v: store.zeros_like(),
        }
    }
}

impl AdamW {
    /// One update of every parameter. Nothing is modified when a gradient
    /// is non-finite.
    pub fn step<T: Scalar>(&self, store: &mut ParamStore<T>, grads: &[Tensor<T>], state: &mut AdamState<T>) -> Result<()> {
        if grads.len() != store.len() || state.m.len() != store.len() || state.v.len() != store.len() {
            return Err(Error::invalid(
                "adamw",
                format!(
                    "{} params, {} grads, {}/{} moments",
                    store.len(),
                    grads.len(),
                    state.m.len(),
                    state.v.len()
                ),
            ));
        }
        for (id, p) in store.iter() {
            let g = &grads[id.index()];
            if g.shape() != p.tensor.shape() {
                return Err(Error::shape("adamw", p.tensor.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {}", p.name),
                });
            }
        }

        state.step += 1;
        let t = state.step as i32;
        let lr = T::cast_from(self.lr);
        let decay = T::cast_from(1.0 - self.lr * self.weight_decay);
        let (b1, b2) = (T::cast_from(self.beta1), T::cast_from(self.beta2));
        let c1 = T::cast_from(1.0 - self.beta1.powi(t));
        let c2 = T::cast_from(1.0 - self.beta2.powi(t));
        let eps = T::cast_from(self.eps);
        let one = T::one();

        for (i, param) in store.tensors_mut().enumerate() {
            let g = grads[i].data();
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for (j, p) in param.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(p: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::scalar(p));
        s
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut store = scalar_store(0.75);
        let mut state = AdamState::new(&store);
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        for _ in 0..5 {
            opt.step(&mut store, &[Tensor::scalar(0.0)], &mut state).unwrap();
        }
        assert_eq!(store.get(store.id("p").unwrap()).data()[0], 0.75);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = scalar_store(1.0);
        let mut state = AdamState::new(&store);
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        opt.step(&mut store, &[Tensor::scalar(1.0)], &mut state).unwrap();
        let p = store.tensors().next().unwrap().data()[0];
        assert!((p - (1.0 - 1e-3)).abs() < 1e-10, "{p}");
    }

    /// Plain scalar transcription of the update rule.
    fn reference_quadratic(steps: usize, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut p, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=steps {
            let g = 2.0 * (p - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn converges_on_quadratic() {
        let lr = 0.1;
        let opt = AdamW {
            lr,
            weight_decay: 0.0,
            ..AdamW::default()
        };
        let mut store = scalar_store(0.0);
        let mut state = AdamState::new(&store);
        for _ in 0..200 {
            let p = store.tensors().next().unwrap().data()[0];
            opt.step(&mut store, &[Tensor::scalar(2.0 * (p - 3.0))], &mut state).unwrap();
        }
        let p = store.tensors().next().unwrap().data()[0];
        let reference = reference_quadratic(200, lr);
        assert!((p - reference).abs() < 1e-12);
        assert!((p - 3.0).abs() < 0.05, "{p}");
    }

    #[test]
    fn decay_contracts_monotonically_toward_zero() {
        let mut store = scalar_store(-2.0);
        store.add("q", Tensor::from_f64([2], &[1.5, 0.25]).unwrap());
        let mut state = AdamState::new(&store);
        let opt = AdamW {
            weight_decay: 0.5,
            lr: 0.1,
            ..AdamW::default()
        };
        let zeros = store.zeros_like();
        let mut prev: Vec<f64> = store.tensors().flat_map(|t| t.to_f64_vec()).collect();
        for _ in 0..20 {
            opt.step(&mut store, &zeros, &mut state).unwrap();
            let now: Vec<f64> = store.tensors().flat_map(|t| t.to_f64_vec()).collect();
            for (a, b) in now.iter().zip(&prev) {
                assert!(a.abs() < b.abs() && a.signum() == b.signum());
            }
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut store = scalar_store(1.0);
        let mut state = AdamState::new(&store);
        let err = AdamW::default()
            .step(&mut store, &[Tensor::scalar(f64::NAN)], &mut state)
            .unwrap_err();
        assert!(err.is_numerical());
        assert_eq!(state.step, 0);
        assert_eq!(store.tensors().next().unwrap().data()[0], 1.0);
    }
}
