//! Pairs a cumulant-method result with a Monte Carlo run of the same case.

use serde::Serialize;

use crate::mcs::McsResult;
use crate::metrics::{MetricsError, MetricsReport, VariableMetrics};
use crate::plf::PlfResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub report: MetricsReport,
    /// Variables with a zero-variance result on either side; distances
    /// between point masses carry no information, so they are left out.
    pub skipped: Vec<String>,
}

/// Metrics for every variable present in both results. The Monte Carlo
/// curve is evaluated against the reconstructed curve's grid.
pub fn compare(plf: &PlfResult, mcs: &McsResult) -> Result<Comparison, MetricsError> {
    let mut variables = Vec::with_capacity(plf.variables.len());
    let mut skipped = Vec::new();
    for v in &plf.variables {
        let m = mcs
            .variable(&v.name)
            .ok_or_else(|| MetricsError::InvalidArgument(format!("{} missing from the Monte Carlo result", v.name)))?;
        if v.curve.is_degenerate() || m.std == 0.0 {
            skipped.push(v.name.clone());
            continue;
        }
        let reference = m.curve_on(&v.curve.x);
        variables.push(VariableMetrics::new(
            &v.name,
            v.class,
            (v.cumulants.mean(), v.cumulants.std()),
            (m.mean, m.std),
            &v.curve,
            &reference,
        )?);
    }
    Ok(Comparison {
        report: MetricsReport::new(variables, plf.timings.total, mcs.wall_seconds),
        skipped,
    })
}
