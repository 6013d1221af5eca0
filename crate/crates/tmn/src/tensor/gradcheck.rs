//! Central finite-difference checking of tape gradients.
//!
//! The checker is deliberately independent of the backward pass: it only
//! evaluates losses forward, perturbing one parameter entry at a time, so a
//! systematic backward bug cannot hide inside its own oracle.

use super::{Binding, ParamStore, Tape, Tensor, TensorError, Var};

/// Central difference gradient of `f` at `x0`, one evaluation pair per entry.
pub fn fd_gradient<F>(x0: &Tensor, eps: f64, mut f: F) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut grad = vec![0.0; x0.numel()];
    let mut probe = x0.clone();
    for i in 0..x0.numel() {
        let orig = x0.data()[i];
        probe.data_mut()[i] = orig + eps;
        let hi = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let lo = f(&probe);
        probe.data_mut()[i] = orig;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    Tensor::new(x0.shape().to_vec(), grad).expect("gradient matches input shape")
}

/// Relative error with a floor on the denominator, so finite-difference
/// noise on near-zero gradients does not dominate the ratio.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Settings for a full-parameter gradient check.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Denominator floor for [`relative_error`].
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-4, floor: 1e-3 }
    }
}

/// Outcome of checking every trainable parameter entry.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error seen across all entries.
    pub max_rel_err: f64,
    /// Parameter name and flat entry index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    /// Total entries compared.
    pub entries: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Compare the tape gradient of `build`'s loss against central finite
/// differences for every trainable entry of `store`.
///
/// `build` must construct the loss from scratch on the given tape, reading
/// parameters only through the binding, so that perturbed values are picked
/// up on every call. The store is returned with its original values.
pub fn check_params<F>(
    store: &mut ParamStore,
    config: GradCheckConfig,
    build: F,
) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(&'t Tape, &Binding<'t>) -> Result<Var<'t>, TensorError>,
{
    let ids: Vec<_> = store.ids().collect();

    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let bound = Binding::mount(&tape, store);
        let loss = build(&tape, &bound)?;
        let grads = tape.backward(loss)?;
        ids.iter()
            .map(|&id| {
                if store.trainable(id) {
                    grads.get(bound.var(id)).expect("trainable leaf gradient").clone()
                } else {
                    Tensor::zeros(store.value(id).shape().to_vec())
                }
            })
            .collect()
    };

    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let bound = Binding::mount(&tape, store);
        let loss = build(&tape, &bound)?;
        Ok(loss.value().item())
    };

    let mut report = GradCheckReport { max_rel_err: 0.0, worst: None, entries: 0 };
    for (pos, &id) in ids.iter().enumerate() {
        if !store.trainable(id) {
            continue;
        }
        for i in 0..store.value(id).numel() {
            let orig = store.value(id).data()[i];

            let mut bumped = store.value(id).clone();
            bumped.data_mut()[i] = orig + config.eps;
            store.set_value(id, bumped);
            let hi = eval(store)?;

            let mut bumped = store.value(id).clone();
            bumped.data_mut()[i] = orig - config.eps;
            store.set_value(id, bumped);
            let lo = eval(store)?;

            let mut restored = store.value(id).clone();
            restored.data_mut()[i] = orig;
            store.set_value(id, restored);

            let numeric = (hi - lo) / (2.0 * config.eps);
            let err = relative_error(analytic[pos].data()[i], numeric, config.floor);
            report.entries += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((store.name(id).to_string(), i));
            }
        }
    }
    Ok(report)
}
