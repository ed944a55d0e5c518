//! Central finite-difference gradient checking through the public
//! forward/loss path only, independent of any backward pass.

use crate::error::Result;
use crate::model::{evaluate, loss_and_grads, Recurrent};
use crate::tasks::TaskBatch;

#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub group: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Largest error as a fraction of its allowance `max(rtol·scale, atol)`;
    /// the check passes when this is at most 1.
    pub worst_ratio: f64,
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares every BPTT partial with `(L(θ+h) − L(θ−h)) / 2h`. A partial
/// passes when the error is within `rtol` relative or `atol` absolute.
pub fn check_gradients<M: Recurrent + Clone>(
    model: &M,
    batch: &TaskBatch,
    step: f64,
    rtol: f64,
    atol: f64,
) -> Result<GradCheckReport> {
    let (_, _, grads) = loss_and_grads(model, batch)?;
    let names: Vec<&'static str> = model.param_groups().iter().map(|g| g.name).collect();
    let mut report = GradCheckReport::default();
    let mut probe = model.clone();
    for (k, group) in grads.iter().enumerate() {
        for (i, &analytic) in group.iter().enumerate() {
            let original = probe.param_data_mut()[k][i];
            probe.param_data_mut()[k][i] = original + step;
            let plus = evaluate(&probe, batch)?.0;
            probe.param_data_mut()[k][i] = original - step;
            let minus = evaluate(&probe, batch)?.0;
            probe.param_data_mut()[k][i] = original;
            let numeric = (plus - minus) / (2.0 * step);

            let err = (analytic - numeric).abs();
            let scale = analytic.abs().max(numeric.abs());
            let allowed = (rtol * scale).max(atol);
            report.worst_ratio = report.worst_ratio.max(err / allowed);
            if err > allowed {
                report.failures.push(GradMismatch {
                    group: names[k],
                    index: i,
                    analytic,
                    numeric,
                });
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
