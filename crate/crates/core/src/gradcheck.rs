//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it is
//! independent of the backward rules it checks.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Magnitude below which errors are measured absolutely rather than
/// relatively. Round-off in a central difference with `h = 1e-6` is about
/// `1e-10`, so this keeps near-zero gradients from dominating the metric.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// Relative error `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Label of the entry with the largest relative error.
    pub worst: String,
}

impl GradCheckReport {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let rel = relative_error(analytic, numeric);
        self.checked += 1;
        self.max_abs_error = self.max_abs_error.max((analytic - numeric).abs());
        if self.checked == 1 || rel > self.max_relative_error {
            self.max_relative_error = rel;
            self.worst = format!("{} analytic={analytic:e} numeric={numeric:e}", label());
        }
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        if other.max_relative_error >= self.max_relative_error {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst.clone();
        }
    }
}

/// Checks gradients of a scalar function of free input tensors.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
        })
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = perturbed.iter().map(|t| tape.variable(t.clone())).collect();
        Ok(f(&tape, &vars)?.value().data()[0])
    };

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for e in 0..input.len() {
            let orig = input.data()[e];
            work[ti].data_mut()[e] = orig + h;
            let plus = eval(&work)?;
            work[ti].data_mut()[e] = orig - h;
            let minus = eval(&work)?;
            work[ti].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            report.record(
                || format!("input{ti}[{e}]"),
                analytic[ti].data()[e],
                numeric,
            );
        }
    }
    Ok(report)
}

/// Checks gradients of a scalar loss with respect to every entry of every
/// parameter in `store`. `f` must be deterministic given the store.
pub fn check_params<F>(store: &ParamStore, h: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    {
        let tape = Tape::new();
        let loss = f(&tape, &analytic_store)?;
        tape.backward(loss)?.accumulate_into(&mut analytic_store);
    }

    let eval = |s: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        Ok(f(&tape, s)?.value().data()[0])
    };

    let mut report = GradCheckReport::default();
    let mut work = store.clone();
    for id in store.ids() {
        let n = store.value(id).len();
        for e in 0..n {
            let orig = store.value(id).data()[e];
            work.get_mut(id).value_mut().data_mut()[e] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(id).value_mut().data_mut()[e] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(id).value_mut().data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = analytic_store.grad(id).data()[e];
            report.record(
                || format!("{}[{e}]", store.get(id).name()),
                analytic,
                numeric,
            );
        }
    }
    Ok(report)
}
