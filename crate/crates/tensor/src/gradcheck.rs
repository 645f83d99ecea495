//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of the backward rules it is used to verify.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64, floor: f64) {
        let rel = relative_error(analytic, numeric, floor);
        self.checked += 1;
        if rel >= self.max_rel_error {
            self.max_rel_error = rel;
            self.worst = Some(Mismatch { label: label(), analytic, numeric, rel_error: rel });
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tolerance
    }
}

/// Checks the gradients stored on `store` (from a prior backward pass)
/// against central differences of `loss` at the listed `(param, index)`
/// coordinates. `store` is restored exactly afterwards.
pub fn check_params(
    store: &mut ParamStore,
    picks: &[(ParamId, usize)],
    step: f64,
    floor: f64,
    mut loss: impl FnMut(&ParamStore) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::default();
    for &(id, i) in picks {
        let analytic = store
            .get(id)
            .grad()
            .ok_or_else(|| crate::TensorError::MissingGrad(store.name(id).to_string()))?[i];
        let original = store.get(id).data()[i];
        store.get_mut(id).data_mut()[i] = original + step;
        let plus = loss(store);
        store.get_mut(id).data_mut()[i] = original - step;
        let minus = loss(store);
        store.get_mut(id).data_mut()[i] = original;
        let numeric = (plus? - minus?) / (2.0 * step);
        report.record(|| format!("{}[{i}]", store.name(id)), analytic, numeric, floor);
    }
    Ok(report)
}

/// Checks every input entry of a tape-built scalar function.
///
/// `f` receives the inputs as variables for the analytic pass and as
/// constants for each perturbed numeric evaluation.
pub fn check_op(
    inputs: &[Tensor],
    step: f64,
    floor: f64,
    f: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            Ok(tape
                .grad(v)?
                .map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        })
        .collect::<Result<_>>()?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out)?.item())
    };

    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let original = input.data()[i];
            work[k].data_mut()[i] = original + step;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = original - step;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            report.record(|| format!("input{k}[{i}]"), analytic[k][i], numeric, floor);
        }
    }
    Ok(report)
}
