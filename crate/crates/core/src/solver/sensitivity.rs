use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::grid::ValidatedCase;

use super::flows::MonitoredVariable;
use super::layout::Unknown;
use super::{linalg, PowerFlowSolution, SolverError, SolverOptions};

/// Linearization of the operating point around the base injections:
/// `ΔX = S_0·ΔW + X_Δ` and `ΔH = T_0·ΔW + H_Δ`.
#[derive(Debug, Clone)]
pub struct SensitivityModel {
    /// State unknowns × injection columns, physical units.
    pub s0: DMatrix<f64>,
    /// Monitored variables × state unknowns.
    pub g0: DMatrix<f64>,
    /// Monitored variables × injection columns.
    pub t0: DMatrix<f64>,
    pub x_delta: DVector<f64>,
    pub h_delta: DVector<f64>,
    pub variables: Vec<MonitoredVariable>,
    /// Values of the monitored variables at the base point.
    pub base_values: Vec<f64>,
    pub index: HashMap<String, usize>,
}

impl SensitivityModel {
    pub fn row(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

pub fn sensitivity_matrices(
    vc: &ValidatedCase,
    sol: &PowerFlowSolution,
    monitored: &[MonitoredVariable],
) -> Result<SensitivityModel, SolverError> {
    sensitivity_matrices_with(vc, sol, monitored, &SolverOptions::default())
}

pub fn sensitivity_matrices_with(
    vc: &ValidatedCase,
    sol: &PowerFlowSolution,
    monitored: &[MonitoredVariable],
    opts: &SolverOptions,
) -> Result<SensitivityModel, SolverError> {
    let layout = &sol.layout;
    let n = layout.len();
    let n_w = layout.n_injections();

    // Magnitude columns are solved as ΔU/U; convert back to ΔU.
    let scale: Vec<f64> = layout
        .unknowns
        .iter()
        .map(|u| match *u {
            Unknown::Angle(_) => 1.0,
            Unknown::Magnitude(i) => sol.buses.vm[i],
            Unknown::DcVoltage(d) => sol.buses.vd[d],
        })
        .collect();

    let mut s0 = DMatrix::zeros(n, n_w);
    let mut x_delta = DVector::zeros(n);
    if n > 0 {
        let lu = linalg::factorize(n, &sol.jacobian.triplets(), opts.dense_limit)?;
        for &(r, c, v) in &sol.injection_partials {
            s0[(r, c)] -= v;
        }
        lu.solve_matrix(&mut s0)?;
        let mut p_delta: Vec<f64> = sol
            .mismatch
            .iter()
            .zip(&sol.converter_rows)
            .map(|(&f, &conv)| if conv { -f } else { 0.0 })
            .collect();
        lu.solve_in_place(&mut p_delta)?;
        for r in 0..n {
            s0.row_mut(r).scale_mut(scale[r]);
            x_delta[r] = p_delta[r] * scale[r];
        }
    }

    let m = monitored.len();
    let mut g0 = DMatrix::zeros(m, n);
    let mut base_values = Vec::with_capacity(m);
    let mut index = HashMap::new();
    for (k, var) in monitored.iter().enumerate() {
        for (c, v) in var.gradient(vc, layout, &sol.buses) {
            g0[(k, c)] += v;
        }
        base_values.push(var.value(vc, &sol.buses));
        index.insert(var.name.clone(), k);
    }
    let t0 = &g0 * &s0;
    let h_delta = &g0 * &x_delta;
    Ok(SensitivityModel {
        s0,
        g0,
        t0,
        x_delta,
        h_delta,
        variables: monitored.to_vec(),
        base_values,
        index,
    })
}
