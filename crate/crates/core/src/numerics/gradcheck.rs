use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Max over coordinates of `|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients of a scalar objective against central
/// differences, perturbing every coordinate of every stored parameter.
pub fn grad_check_store<F>(store: &ParamStore<f64>, objective: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut graph = Graph::new();
    let out = objective(&mut graph, store)?;
    if graph.value(out).len() != 1 {
        return Err(Error::invalid(
            "grad_check",
            format!("objective must be scalar, got shape {:?}", graph.shape(out)),
        ));
    }
    graph.backward(out)?;
    let mut analytic = store.zeros_like();
    graph.accumulate_param_grads(&mut analytic)?;

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = objective(&mut g, s)?;
        Ok(g.value(v).data()[0])
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for id in store.ids() {
        for j in 0..store.get(id).len() {
            let orig = store.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = orig + FD_STEP;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[j] = orig - FD_STEP;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[j] = orig;

            let fd = (plus - minus) / (2.0 * FD_STEP);
            let ad = analytic[id.index()].data()[j];
            let err = (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs());
            if !err.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {}[{j}]", store.name(id)),
                });
            }
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), j));
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

/// [`grad_check_store`] over a plain list of tensors; the objective receives
/// one graph leaf per tensor.
pub fn grad_check<F>(params: &[Tensor<f64>], objective: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    for (i, p) in params.iter().enumerate() {
        store.add(format!("p{i}"), p.clone());
    }
    grad_check_store(&store, |g, s| {
        let vars: Vec<Var> = s.ids().map(|id| g.param(s, id)).collect();
        objective(g, &vars)
    })
}
