//! Cumulant-based probabilistic load flow.
//!
//! The grid is solved once at the expected injections and linearized there.
//! Every stochastic input is reduced to a set of independent factors, each
//! with a loading on the injection columns; output cumulants follow from the
//! k-th powers of the factor sensitivities.

mod injections;

pub use injections::{
    column_of, draw_independent, group_factor_cumulants, injection_cumulants, source_cumulants, CorrelationGroup,
    Quantity, ResolvedGroup, ResolvedSource, ResolvedSpec, Role, StochasticSource, StochasticSpec,
};

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gram_charlier::{DistributionCurve, GramCharlierError, DEFAULT_GRID_POINTS};
use crate::grid::ValidatedCase;
use crate::solver::{
    all_variables, select_variables, sensitivity_matrices_with, solve_power_flow_with, MonitoredVariable,
    PowerFlowSolution, SolverError, SolverOptions, VariableClass,
};
use crate::stochastics::{substream_seed, CumulantSet, StochasticsError, DEFAULT_ORDER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlfError {
    #[error("invalid stochastic specification: {0}")]
    InvalidSpec(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("base power flow failed: {0}")]
    BaseSolve(#[source] SolverError),
    #[error("sensitivity extraction failed: {0}")]
    Sensitivity(#[source] SolverError),
    #[error("source cumulants: {0}")]
    Cumulants(#[source] StochasticsError),
    #[error("correlation model: {0}")]
    Correlation(#[source] StochasticsError),
    #[error("reconstruction of {variable}: {source}")]
    Reconstruction {
        variable: String,
        #[source]
        source: GramCharlierError,
    },
}

impl PlfError {
    /// Pipeline stage the error came from.
    pub fn stage(&self) -> &'static str {
        match self {
            PlfError::InvalidSpec(_) | PlfError::InvalidOption(_) => "setup",
            PlfError::BaseSolve(_) => "base-solve",
            PlfError::Cumulants(_) | PlfError::Correlation(_) => "injection-cumulants",
            PlfError::Sensitivity(_) => "sensitivity",
            PlfError::Reconstruction { .. } => "reconstruction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlfOptions {
    pub order: usize,
    pub grid_points: usize,
    /// Draws used for sources or groups without closed-form cumulants.
    pub sample_count: usize,
    pub seed: u64,
    /// Variable names or class prefixes; empty selects everything.
    pub monitor: Vec<String>,
    pub solver: SolverOptions,
}

impl Default for PlfOptions {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            grid_points: DEFAULT_GRID_POINTS,
            sample_count: 100_000,
            seed: 0,
            monitor: Vec::new(),
            solver: SolverOptions::default(),
        }
    }
}

impl PlfOptions {
    pub fn validate(&self) -> Result<(), PlfError> {
        if !(2..=DEFAULT_ORDER).contains(&self.order) {
            return Err(PlfError::InvalidOption(format!(
                "cumulant order must be between 2 and {DEFAULT_ORDER}, got {}",
                self.order
            )));
        }
        if self.grid_points < 2 {
            return Err(PlfError::InvalidOption(format!("grid needs at least 2 points, got {}", self.grid_points)));
        }
        if self.sample_count < 2 {
            return Err(PlfError::InvalidOption("sample count must be at least 2".into()));
        }
        self.solver.validate().map_err(PlfError::BaseSolve)
    }
}

/// Rewrites the columns of one correlated group in place:
/// `new[:, cols[r]] = Σ_{m≥r} old[:, cols[m]]·g[m, r]`.
pub fn rewrite_columns(mat: &mut DMatrix<f64>, cols: &[usize], g: &DMatrix<f64>) -> Result<(), PlfError> {
    let k = cols.len();
    if g.nrows() != k || g.ncols() != k {
        return Err(PlfError::InvalidSpec(format!("{k} group columns for a {}×{} factor", g.nrows(), g.ncols())));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= mat.ncols()) {
        return Err(PlfError::InvalidSpec(format!(
            "group column {c} is out of range for {} injection columns",
            mat.ncols()
        )));
    }
    let mut seen = cols.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != k {
        return Err(PlfError::InvalidSpec("group columns must be distinct".into()));
    }
    let old: Vec<_> = cols.iter().map(|&c| mat.column(c).clone_owned()).collect();
    for r in 0..k {
        let mut col = old[r].clone() * g[(r, r)];
        for m in r + 1..k {
            col += &old[m] * g[(m, r)];
        }
        mat.set_column(cols[r], &col);
    }
    Ok(())
}

/// Applies [`rewrite_columns`] for every group to both sensitivity matrices.
pub fn rewrite_correlated_injections(
    s0: &DMatrix<f64>,
    t0: &DMatrix<f64>,
    groups: &[(Vec<usize>, DMatrix<f64>)],
) -> Result<(DMatrix<f64>, DMatrix<f64>), PlfError> {
    let (mut s1, mut t1) = (s0.clone(), t0.clone());
    for (cols, g) in groups {
        rewrite_columns(&mut s1, cols, g)?;
        rewrite_columns(&mut t1, cols, g)?;
    }
    Ok((s1, t1))
}

/// γ₁ = Σ s_r·γ₁(r) + offset, γ_k = Σ s_r^k·γ_k(r) for k ≥ 2.
pub fn propagate_cumulants(row: &[f64], inputs: &[CumulantSet], offset: f64, order: usize) -> CumulantSet {
    assert_eq!(row.len(), inputs.len(), "one sensitivity per input");
    let mut g = vec![0.0; order.max(2)];
    g[0] = offset;
    for (&s, c) in row.iter().zip(inputs) {
        if s == 0.0 {
            continue;
        }
        let mut p = 1.0;
        for (k, gk) in g.iter_mut().enumerate() {
            p *= s;
            *gk += p * c.gamma(k + 1);
        }
    }
    g[1] = g[1].max(0.0);
    CumulantSet::new(g).expect("finite propagated cumulants")
}

#[derive(Debug, Clone, Serialize)]
pub struct PlfVariable {
    pub name: String,
    pub class: VariableClass,
    pub base_value: f64,
    pub cumulants: CumulantSet,
    pub curve: DistributionCurve,
}

/// Wall time of each stage, seconds.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PlfTimings {
    pub base_solve: f64,
    pub injection_cumulants: f64,
    pub sensitivity: f64,
    pub propagation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlfResult {
    pub case_name: String,
    pub variables: Vec<PlfVariable>,
    pub base_iterations: usize,
    pub factor_count: usize,
    pub nataf_repaired: bool,
    pub timings: PlfTimings,
    pub options: PlfOptions,
}

impl PlfResult {
    pub fn variable(&self, name: &str) -> Option<&PlfVariable> {
        self.variables.iter().find(|v| v.name == name)
    }
}

pub(crate) fn monitored(vc: &ValidatedCase, filter: &[String]) -> Result<Vec<MonitoredVariable>, SolverError> {
    if filter.is_empty() {
        Ok(all_variables(vc))
    } else {
        select_variables(vc, filter)
    }
}

/// Independent factors with their injection loadings and cumulants.
struct Factors {
    /// Injection columns × factors.
    loadings: DMatrix<f64>,
    cumulants: Vec<CumulantSet>,
    repaired: bool,
}

fn build_factors(spec: &ResolvedSpec, opts: &PlfOptions) -> Result<Factors, PlfError> {
    let independent = injection_cumulants(spec, opts.order, opts.sample_count, opts.seed)?;
    // center on the expected injections already in the base point
    let mut mean_at = vec![0.0; spec.n_columns];
    for (i, s) in spec.sources.iter().enumerate() {
        if spec.is_independent(i) {
            mean_at[s.column] += s.source.sign() * s.mean;
        }
    }
    let groups: Vec<_> = spec.correlated_groups().collect();
    let n_f = independent.len() + groups.iter().map(|(_, g)| g.members.len()).sum::<usize>();
    let mut loadings = DMatrix::zeros(spec.n_columns, n_f);
    let mut cumulants = Vec::with_capacity(n_f);
    for (f, (col, c)) in independent.iter().enumerate() {
        loadings[(*col, f)] = 1.0;
        cumulants.push(c.affine(1.0, -mean_at[*col]));
    }
    let mut f0 = independent.len();
    let mut repaired = false;
    for (gi, g) in groups {
        let k = g.members.len();
        let seed = substream_seed(opts.seed, (spec.sources.len() + gi) as u64);
        let (fc, rep) = group_factor_cumulants(spec, g, opts.order, opts.sample_count, seed)?;
        repaired |= rep;
        // one column per member scaled to its standardized variable, then
        // rewritten onto the decorrelated factors
        let cols: Vec<usize> = (f0..f0 + k).collect();
        for (j, &m) in g.members.iter().enumerate() {
            let s = &spec.sources[m];
            loadings[(s.column, f0 + j)] = s.source.sign() * s.std;
        }
        rewrite_columns(&mut loadings, &cols, &g.model.g)?;
        cumulants.extend(fc);
        f0 += k;
    }
    Ok(Factors {
        loadings,
        cumulants,
        repaired,
    })
}

/// Full cumulant pipeline for one case and stochastic specification.
pub fn run_plf_cm(vc: &ValidatedCase, spec: &StochasticSpec, opts: &PlfOptions) -> Result<PlfResult, PlfError> {
    opts.validate()?;
    let t_all = Instant::now();
    let mut timings = PlfTimings::default();

    let resolved = spec.resolve(vc)?;
    let vars = monitored(vc, &opts.monitor).map_err(|e| PlfError::InvalidOption(e.to_string()))?;

    let t = Instant::now();
    let base: PowerFlowSolution =
        solve_power_flow_with(vc, &resolved.expected_injections(vc), &opts.solver).map_err(PlfError::BaseSolve)?;
    timings.base_solve = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let factors = build_factors(&resolved, opts)?;
    timings.injection_cumulants = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let sens = sensitivity_matrices_with(vc, &base, &vars, &opts.solver).map_err(PlfError::Sensitivity)?;
    let t_f = &sens.t0 * &factors.loadings;
    timings.sensitivity = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let variables = vars
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let row: Vec<f64> = t_f.row(i).iter().copied().collect();
            let offset = sens.base_values[i] + sens.h_delta[i];
            let cumulants = propagate_cumulants(&row, &factors.cumulants, offset, opts.order);
            let curve = DistributionCurve::from_cumulants(&v.name, &cumulants, opts.grid_points).map_err(|source| {
                PlfError::Reconstruction {
                    variable: v.name.clone(),
                    source,
                }
            })?;
            Ok(PlfVariable {
                name: v.name.clone(),
                class: v.class(),
                base_value: sens.base_values[i],
                cumulants,
                curve,
            })
        })
        .collect::<Result<Vec<_>, PlfError>>()?;
    timings.propagation = t.elapsed().as_secs_f64();
    timings.total = t_all.elapsed().as_secs_f64();

    Ok(PlfResult {
        case_name: vc.name().to_string(),
        variables,
        base_iterations: base.iterations(),
        factor_count: factors.cumulants.len(),
        nataf_repaired: factors.repaired,
        timings,
        options: opts.clone(),
    })
}

#[cfg(test)]
mod tests;
