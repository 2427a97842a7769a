//! Unified Newton-Raphson power flow for hybrid AC/DC grids.
//!
//! AC angles, AC magnitudes of PQ buses and DC voltages of buses without a
//! voltage-controlling converter are solved simultaneously. Converter stations
//! are folded into the mismatch: a station draws `P_s + jQ_s` from its PCC and
//! delivers `P_dc = P_s − ΔP` to its DC bus, with `ΔP = (P_s² + Q_s²)/U_s²·R`.

mod equations;
mod flows;
mod layout;
mod linalg;
mod sensitivity;

pub use equations::StationState;
pub use flows::{
    all_variables, branch_flows, select_variables, AcLineFlow, DcLineFlow, MonitoredVariable, VariableClass,
    VariableKind,
};
pub use layout::{BusState, Injections, StateLayout, StateVector, Unknown};
pub use sensitivity::{sensitivity_matrices, sensitivity_matrices_with, SensitivityModel};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::ValidatedCase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("structurally singular Jacobian: {0}")]
    Structural(String),
    #[error("singular Jacobian (smallest/largest pivot ratio {pivot_ratio:.3e})")]
    Singular { pivot_ratio: f64 },
    #[error("power flow diverged after {} iterations (last mismatch {:.3e})", log.len(), log.last().copied().unwrap_or(f64::NAN))]
    Diverged { log: Vec<f64> },
    #[error("converter {station} cannot deliver P_dc = {p_dc:.6} at U_s = {u_s:.6}: no real operating point")]
    ConverterOverload { station: usize, p_dc: f64, u_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the max-abs mismatch, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub flat_start: bool,
    /// Systems with more unknowns than this use sparse LU.
    pub dense_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 30,
            flat_start: true,
            dense_limit: 500,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tolerance > 0.0) {
            return Err(SolverError::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidArgument("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Labeled regions of the Jacobian. Rows are active-power, reactive-power and
/// DC balances; columns are angles, magnitudes and DC voltages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JacobianBlock {
    /// ∂P/∂δ
    H,
    /// ∂P/∂U·U, network part
    N,
    /// ∂P/∂U·U, converter part
    NV,
    /// ∂P/∂U_d·U_d
    MP,
    /// ∂Q/∂δ
    J,
    /// ∂Q/∂U·U
    L,
    /// ∂Q/∂U_d·U_d
    MQ,
    /// DC rows versus angles
    RDelta,
    /// DC rows versus AC magnitudes
    RV,
    /// DC rows versus DC voltages
    X,
}

impl JacobianBlock {
    pub const COUPLING: [JacobianBlock; 5] = [
        JacobianBlock::MP,
        JacobianBlock::MQ,
        JacobianBlock::RDelta,
        JacobianBlock::RV,
        JacobianBlock::NV,
    ];
}

/// Jacobian of the mismatch with respect to the state, split into network
/// and converter contributions (triplets may repeat).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    pub(crate) dim: usize,
    pub(crate) n_ang: usize,
    pub(crate) n_mag: usize,
    pub(crate) network: Vec<(usize, usize, f64)>,
    pub(crate) coupling: Vec<(usize, usize, f64)>,
}

impl JacobianMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Combined entries with duplicates summed, column-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let all: Vec<_> = self.network.iter().chain(&self.coupling).copied().collect();
        linalg::summed(&all)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = linalg::dense_from(self.dim, &self.network);
        m += linalg::dense_from(self.dim, &self.coupling);
        m
    }

    fn range(&self, part: usize) -> std::ops::Range<usize> {
        let a = self.n_ang;
        let b = a + self.n_mag;
        match part {
            0 => 0..a,
            1 => a..b,
            _ => b..self.dim,
        }
    }

    pub fn block(&self, block: JacobianBlock) -> DMatrix<f64> {
        use JacobianBlock::*;
        let (rp, cp) = match block {
            H => (0, 0),
            N | NV => (0, 1),
            MP => (0, 2),
            J => (1, 0),
            L => (1, 1),
            MQ => (1, 2),
            RDelta => (2, 0),
            RV => (2, 1),
            X => (2, 2),
        };
        let (rows, cols) = (self.range(rp), self.range(cp));
        let sources: Vec<&Vec<(usize, usize, f64)>> = match block {
            N => vec![&self.network],
            NV => vec![&self.coupling],
            _ => vec![&self.network, &self.coupling],
        };
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for src in sources {
            for &(r, c, v) in src {
                if rows.contains(&r) && cols.contains(&c) {
                    m[(r - rows.start, c - cols.start)] += v;
                }
            }
        }
        m
    }
}

/// Converged operating point.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub layout: StateLayout,
    pub state: StateVector,
    pub buses: BusState,
    pub injections: Injections,
    /// Net injection into the AC network at every bus.
    pub p_ac: Vec<f64>,
    pub q_ac: Vec<f64>,
    /// Net injection into the DC network at every DC bus.
    pub p_dc: Vec<f64>,
    pub stations: Vec<StationState>,
    pub ac_flows: Vec<AcLineFlow>,
    pub dc_flows: Vec<DcLineFlow>,
    pub jacobian: JacobianMatrix,
    pub(crate) injection_partials: Vec<(usize, usize, f64)>,
    pub(crate) converter_rows: Vec<bool>,
    pub mismatch: Vec<f64>,
    /// Max-abs mismatch at every evaluation.
    pub iteration_log: Vec<f64>,
    pub converged: bool,
}

impl PowerFlowSolution {
    /// Number of mismatch evaluations performed.
    pub fn iterations(&self) -> usize {
        self.iteration_log.len()
    }

    pub fn max_mismatch(&self) -> f64 {
        self.iteration_log.last().copied().unwrap_or(f64::NAN)
    }
}

/// Mismatch `scheduled − calculated` at a state, scheduled injections from the case.
pub fn mismatch_vector(vc: &ValidatedCase, state: &StateVector) -> Result<Vec<f64>, SolverError> {
    mismatch_vector_with(vc, state, &Injections::scheduled(vc))
}

pub fn mismatch_vector_with(
    vc: &ValidatedCase,
    state: &StateVector,
    inj: &Injections,
) -> Result<Vec<f64>, SolverError> {
    let layout = StateLayout::new(vc);
    let st = layout.unpack(vc, state)?;
    Ok(equations::evaluate(vc, &layout, &st, inj, false)?.f)
}

pub fn assemble_jacobian(vc: &ValidatedCase, state: &StateVector) -> Result<JacobianMatrix, SolverError> {
    assemble_jacobian_with(vc, state, &Injections::scheduled(vc))
}

pub fn assemble_jacobian_with(
    vc: &ValidatedCase,
    state: &StateVector,
    inj: &Injections,
) -> Result<JacobianMatrix, SolverError> {
    let layout = StateLayout::new(vc);
    let st = layout.unpack(vc, state)?;
    let jac = equations::evaluate(vc, &layout, &st, inj, true)?.jacobian(&layout);
    let mut rows = vec![false; jac.dim];
    for &(r, _, _) in jac.network.iter().chain(&jac.coupling) {
        rows[r] = true;
    }
    if let Some(r) = rows.iter().position(|s| !s) {
        return Err(SolverError::Structural(format!("equation row {r} has no entries")));
    }
    Ok(jac)
}

pub fn solve_power_flow(vc: &ValidatedCase, opts: &SolverOptions) -> Result<PowerFlowSolution, SolverError> {
    solve_power_flow_with(vc, &Injections::scheduled(vc), opts)
}

/// Newton iterations from the configured start with explicit injections.
pub fn solve_power_flow_with(
    vc: &ValidatedCase,
    inj: &Injections,
    opts: &SolverOptions,
) -> Result<PowerFlowSolution, SolverError> {
    opts.validate()?;
    let layout = StateLayout::new(vc);
    let st = layout.initial_state(vc, opts.flat_start);
    let (st, ev, log) = newton(vc, &layout, st, inj, opts)?;
    let (ac_flows, dc_flows) = branch_flows(vc, &st);
    let jacobian = ev.jacobian(&layout);
    let injection_partials = ev.injection_partials(&layout);
    Ok(PowerFlowSolution {
        state: layout.pack(&st),
        layout,
        buses: st,
        injections: inj.clone(),
        p_ac: ev.p_calc,
        q_ac: ev.q_calc,
        p_dc: ev.pdc_calc,
        stations: ev.stations,
        ac_flows,
        dc_flows,
        jacobian,
        injection_partials,
        converter_rows: ev.converter_rows,
        mismatch: ev.f,
        iteration_log: log,
        converged: true,
    })
}

/// Bus state only, starting from `start` (ignores `flat_start`). Returns the
/// converged state and the number of mismatch evaluations.
pub fn solve_bus_state(
    vc: &ValidatedCase,
    layout: &StateLayout,
    inj: &Injections,
    start: &BusState,
    opts: &SolverOptions,
) -> Result<(BusState, usize), SolverError> {
    let (st, _, log) = newton(vc, layout, start.clone(), inj, opts)?;
    Ok((st, log.len()))
}

fn newton(
    vc: &ValidatedCase,
    layout: &StateLayout,
    mut st: BusState,
    inj: &Injections,
    opts: &SolverOptions,
) -> Result<(BusState, equations::Evaluation, Vec<f64>), SolverError> {
    let mut log = Vec::new();
    for _ in 0..opts.max_iterations {
        let ev = equations::evaluate(vc, layout, &st, inj, true)?;
        let err = ev.max_abs();
        log.push(err);
        if !err.is_finite() {
            break;
        }
        log::trace!("iteration {}: max mismatch {err:.3e}", log.len());
        if err < opts.tolerance {
            return Ok((st, ev, log));
        }
        let jac = ev.jacobian(layout);
        let lu = linalg::factorize(jac.dim, &jac.triplets(), opts.dense_limit)?;
        let mut dx: Vec<f64> = ev.f.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut dx)?;
        for (u, d) in layout.unknowns.iter().zip(&dx) {
            match *u {
                Unknown::Angle(i) => st.va[i] += d,
                Unknown::Magnitude(i) => st.vm[i] *= 1.0 + d,
                Unknown::DcVoltage(k) => st.vd[k] *= 1.0 + d,
            }
        }
    }
    Err(SolverError::Diverged { log })
}

#[cfg(test)]
mod tests;
