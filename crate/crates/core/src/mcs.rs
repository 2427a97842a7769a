//! Monte Carlo reference: one full power flow per joint injection draw.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::ValidatedCase;
use crate::metrics::CurveSource;
use crate::plf::{draw_independent, monitored, PlfError, ResolvedSpec, StochasticSpec};
use crate::solver::{
    solve_bus_state, solve_power_flow_with, Injections, MonitoredVariable, SolverError, SolverOptions, StateLayout,
    VariableClass,
};
use crate::stochastics::{substream, NatafSampler};

/// Share of failed solves above which the run is rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Spec(#[from] PlfError),
    #[error("base power flow failed: {0}")]
    BaseSolve(#[source] SolverError),
    #[error("{failed} of {total} sample solves failed (first: sample {first_index}: {first_error})")]
    OracleUnreliable {
        failed: usize,
        total: usize,
        first_index: usize,
        first_error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McsOptions {
    pub samples: usize,
    pub seed: u64,
    /// Thread count; `None` uses the global pool.
    pub workers: Option<usize>,
    pub monitor: Vec<String>,
    pub solver: SolverOptions,
}

impl Default for McsOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            workers: None,
            monitor: Vec::new(),
            solver: SolverOptions {
                tolerance: 1e-12,
                ..SolverOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McsVariable {
    pub name: String,
    pub class: VariableClass,
    pub mean: f64,
    pub std: f64,
    /// Converged samples in ascending order.
    #[serde(skip)]
    pub sorted: Vec<f64>,
}

impl McsVariable {
    fn from_samples(v: &MonitoredVariable, mut xs: Vec<f64>) -> Self {
        let n = xs.len() as f64;
        let (mean, std) = if xs.windows(2).all(|w| w[0] == w[1]) {
            (xs.first().copied().unwrap_or(f64::NAN), 0.0)
        } else {
            let m = xs.iter().sum::<f64>() / n;
            let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
            (m, (ss / (n - 1.0)).sqrt())
        };
        xs.sort_by(f64::total_cmp);
        Self {
            name: v.name.clone(),
            class: v.class(),
            mean,
            std,
            sorted: xs,
        }
    }

    /// Right-continuous empirical CDF: share of samples ≤ `x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// Histogram density and step CDF tied to `grid`.
    pub fn curve_on(&self, grid: &[f64]) -> EmpiricalCurve {
        EmpiricalCurve::new(self, grid)
    }
}

/// Frequency polygon over `(len(grid) − 1)/8` equal bins spanning the grid,
/// normalized by the total sample count.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalCurve {
    pub x: Vec<f64>,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
    #[serde(skip)]
    centers: Vec<f64>,
    #[serde(skip)]
    density: Vec<f64>,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl EmpiricalCurve {
    fn new(v: &McsVariable, grid: &[f64]) -> Self {
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        let bins = ((grid.len().saturating_sub(1)) / 8).max(1);
        let w = (hi - lo) / bins as f64;
        let n = v.sorted.len() as f64;
        let mut density = vec![0.0; bins];
        if w > 0.0 {
            for &s in &v.sorted {
                if s < lo || s > hi {
                    continue;
                }
                let b = (((s - lo) / w) as usize).min(bins - 1);
                density[b] += 1.0;
            }
            for d in density.iter_mut() {
                *d /= n * w;
            }
        }
        // zero-density anchors half a bin outside the grid
        let mut centers = Vec::with_capacity(bins + 2);
        let mut dens = Vec::with_capacity(bins + 2);
        centers.push(lo - 0.5 * w);
        dens.push(0.0);
        for (b, d) in density.iter().enumerate() {
            centers.push(lo + (b as f64 + 0.5) * w);
            dens.push(*d);
        }
        centers.push(hi + 0.5 * w);
        dens.push(0.0);
        let mut c = Self {
            x: grid.to_vec(),
            pdf: Vec::new(),
            cdf: Vec::new(),
            centers,
            density: dens,
            sorted: v.sorted.clone(),
        };
        c.pdf = grid.iter().map(|&x| c.pdf_at(x)).collect();
        c.cdf = grid.iter().map(|&x| c.cdf_at(x)).collect();
        c
    }
}

impl CurveSource for EmpiricalCurve {
    fn grid(&self) -> &[f64] {
        &self.x
    }

    fn pdf_at(&self, x: f64) -> f64 {
        crate::metrics::interpolate(&self.centers, &self.density, x).unwrap_or(0.0)
    }

    fn cdf_at(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McsResult {
    pub case_name: String,
    pub samples: usize,
    pub failed: usize,
    /// Indices and messages of failed samples.
    pub failures: Vec<(usize, String)>,
    pub seed: u64,
    pub wall_seconds: f64,
    pub variables: Vec<McsVariable>,
}

impl McsResult {
    pub fn variable(&self, name: &str) -> Option<&McsVariable> {
        self.variables.iter().find(|v| v.name == name)
    }
}

/// Draws one joint injection sample: correlated groups through their Nataf
/// samplers in group order, then each independent source by inverse CDF.
fn draw(spec: &ResolvedSpec, samplers: &[(Vec<usize>, NatafSampler)], base: &Injections, index: u64, seed: u64) -> Injections {
    let mut rng = substream(seed, index);
    let mut inj = base.clone();
    for (members, s) in samplers {
        for (&m, w) in members.iter().zip(s.sample(&mut rng)) {
            let src = &spec.sources[m];
            inj.add_at(src.column, src.source.sign() * w);
        }
    }
    for (i, src) in spec.sources.iter().enumerate() {
        if spec.is_independent(i) {
            let w = draw_independent(&src.source.marginal, &mut rng);
            inj.add_at(src.column, src.source.sign() * w);
        }
    }
    inj
}

/// Sample `s` always uses sub-stream `s` of `seed`, so results do not depend
/// on the worker count.
pub fn run_mcs(vc: &ValidatedCase, spec: &StochasticSpec, opts: &McsOptions) -> Result<McsResult, McsError> {
    if opts.samples == 0 {
        return Err(McsError::InvalidArgument("need at least one sample".into()));
    }
    if opts.workers == Some(0) {
        return Err(McsError::InvalidArgument("worker count must be positive".into()));
    }
    opts.solver.validate().map_err(McsError::BaseSolve)?;
    let t0 = Instant::now();
    let resolved = spec.resolve(vc)?;
    let vars = monitored(vc, &opts.monitor).map_err(|e| McsError::InvalidArgument(e.to_string()))?;

    let base = Injections::scheduled(vc);
    let mut samplers = Vec::new();
    for (_, g) in resolved.correlated_groups() {
        let marginals = g.members.iter().map(|&m| resolved.sources[m].source.marginal.clone()).collect();
        let s = NatafSampler::new(g.model.c.clone(), marginals).map_err(|e| McsError::Spec(PlfError::Correlation(e)))?;
        samplers.push((g.members.clone(), s));
    }

    // warm start from the expected operating point
    let start = solve_power_flow_with(vc, &resolved.expected_injections(vc), &opts.solver)
        .map_err(McsError::BaseSolve)?
        .buses;
    let layout = StateLayout::new(vc);

    let run = || {
        (0..opts.samples)
            .into_par_iter()
            .map(|s| {
                let inj = draw(&resolved, &samplers, &base, s as u64, opts.seed);
                solve_bus_state(vc, &layout, &inj, &start, &opts.solver)
                    .map(|(st, _)| vars.iter().map(|v| v.value(vc, &st)).collect::<Vec<f64>>())
                    .map_err(|e| e.to_string())
            })
            .collect::<Vec<_>>()
    };
    let outcomes = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| McsError::InvalidArgument(e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut columns = vec![Vec::with_capacity(opts.samples); vars.len()];
    let mut failures = Vec::new();
    for (s, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(vals) => {
                for (c, v) in columns.iter_mut().zip(vals) {
                    c.push(v);
                }
            }
            Err(e) => {
                log::warn!("sample {s} failed: {e}");
                failures.push((s, e));
            }
        }
    }
    let failed = failures.len();
    if failed as f64 > MAX_FAILURE_FRACTION * opts.samples as f64 || failed == opts.samples {
        let (first_index, first_error) = failures[0].clone();
        return Err(McsError::OracleUnreliable {
            failed,
            total: opts.samples,
            first_index,
            first_error,
        });
    }
    let variables = vars
        .iter()
        .zip(columns)
        .map(|(v, xs)| McsVariable::from_samples(v, xs))
        .collect();
    Ok(McsResult {
        case_name: vc.name().to_string(),
        samples: opts.samples,
        failed,
        failures,
        seed: opts.seed,
        wall_seconds: t0.elapsed().as_secs_f64(),
        variables,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::fixtures::small_mtdc;
    use crate::plf::{CorrelationGroup, Quantity, Role, StochasticSource};
    use crate::stochastics::{correlation_matrix_from_samples, Marginal};

    fn src(id: &str, bus: usize, q: Quantity, role: Role, marginal: Marginal) -> StochasticSource {
        StochasticSource {
            id: id.into(),
            bus,
            quantity: q,
            role,
            marginal,
        }
    }

    fn pv(scale: f64) -> Marginal {
        Marginal::Beta {
            alpha: 0.6799,
            beta: 1.7787,
            scale,
        }
    }

    fn spec(rho: f64) -> StochasticSpec {
        StochasticSpec {
            sources: vec![
                src("l2", 2, Quantity::ActivePower, Role::Load, Marginal::Normal { mean: 0.03, std: 0.003 }),
                src("pv4", 4, Quantity::ActivePower, Role::Generation, pv(0.06)),
                src("pv5", 5, Quantity::ActivePower, Role::Generation, pv(0.05)),
            ],
            groups: vec![CorrelationGroup {
                members: vec!["pv4".into(), "pv5".into()],
                matrix: DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
            }],
        }
    }

    fn opts(samples: usize, seed: u64) -> McsOptions {
        McsOptions {
            samples,
            seed,
            ..McsOptions::default()
        }
    }

    #[test]
    fn zero_variance_gives_point_values() {
        let vc = small_mtdc();
        let s = StochasticSpec {
            sources: vec![src("l2", 2, Quantity::ActivePower, Role::Load, Marginal::Normal { mean: 0.03, std: 0.0 })],
            groups: vec![],
        };
        let r = run_mcs(&vc, &s, &opts(50, 1)).unwrap();
        let resolved = s.resolve(&vc).unwrap();
        let sol = solve_power_flow_with(&vc, &resolved.expected_injections(&vc), &opts(2, 0).solver).unwrap();
        for v in &r.variables {
            assert_eq!(v.std, 0.0, "{}", v.name);
            let exact = crate::solver::all_variables(&vc)
                .into_iter()
                .find(|m| m.name == v.name)
                .unwrap()
                .value(&vc, &sol.buses);
            assert!((v.mean - exact).abs() < 1e-10, "{}", v.name);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let vc = small_mtdc();
        let a = run_mcs(&vc, &spec(0.5), &McsOptions { workers: Some(1), ..opts(400, 7) }).unwrap();
        let b = run_mcs(&vc, &spec(0.5), &McsOptions { workers: Some(8), ..opts(400, 7) }).unwrap();
        for (x, y) in a.variables.iter().zip(&b.variables) {
            assert_eq!(x.sorted, y.sorted);
            assert_eq!(x.mean.to_bits(), y.mean.to_bits());
            assert_eq!(x.std.to_bits(), y.std.to_bits());
        }
        let c = run_mcs(&vc, &spec(0.5), &opts(400, 8)).unwrap();
        assert_ne!(a.variables[3].sorted, c.variables[3].sorted);
    }

    #[test]
    fn mean_converges_with_sample_size() {
        let vc = small_mtdc();
        let small = run_mcs(&vc, &spec(0.5), &opts(10_000, 21)).unwrap();
        let large = run_mcs(&vc, &spec(0.5), &opts(100_000, 22)).unwrap();
        for (a, b) in small.variables.iter().zip(&large.variables) {
            if a.std == 0.0 {
                continue;
            }
            let bound = 4.0 * a.std / (10_000f64).sqrt();
            assert!((a.mean - b.mean).abs() <= bound, "{}: {} vs {}", a.name, a.mean, b.mean);
        }
    }

    #[test]
    fn sampled_pv_correlation_matches_target() {
        let resolved = spec(0.5).resolve(&small_mtdc()).unwrap();
        let samplers: Vec<_> = resolved
            .correlated_groups()
            .map(|(_, g)| {
                let m = g.members.iter().map(|&m| resolved.sources[m].source.marginal.clone()).collect();
                (g.members.clone(), NatafSampler::new(g.model.c.clone(), m).unwrap())
            })
            .collect();
        let zero = Injections {
            p_ac: vec![0.0; 6],
            q_ac: vec![0.0; 6],
            p_dc: vec![0.0; 3],
        };
        let (mut w4, mut w5) = (Vec::new(), Vec::new());
        for s in 0..10_000 {
            let inj = draw(&resolved, &samplers, &zero, s, 5);
            w4.push(inj.p_ac[3]);
            w5.push(inj.p_ac[4]);
        }
        let c = correlation_matrix_from_samples(&[w4, w5]).unwrap();
        assert!((c[(0, 1)] - 0.5).abs() <= 0.03, "{}", c[(0, 1)]);
    }

    #[test]
    fn empirical_curves() {
        let v = McsVariable::from_samples(
            &crate::solver::all_variables(&small_mtdc())[0],
            vec![0.3, 0.1, 0.2, 0.2],
        );
        assert_eq!(v.sorted, vec![0.1, 0.2, 0.2, 0.3]);
        assert_eq!(v.ecdf(0.05), 0.0);
        assert_eq!(v.ecdf(0.2), 0.75);
        assert_eq!(v.ecdf(0.3), 1.0);
        let grid: Vec<f64> = (0..=16).map(|i| i as f64 * 0.025).collect();
        let c = v.curve_on(&grid);
        assert_eq!(c.cdf[8], 0.75);
        assert!(c.cdf.windows(2).all(|w| w[0] <= w[1]));
        // polygon integrates to the in-range share of samples
        let fine: Vec<f64> = (0..=8000).map(|i| -0.2 + i as f64 * 1e-4).collect();
        let area: f64 = fine.windows(2).map(|w| 0.5 * (c.pdf_at(w[0]) + c.pdf_at(w[1])) * (w[1] - w[0])).sum();
        assert!((area - 1.0).abs() < 1e-9, "{area}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let vc = small_mtdc();
        assert!(matches!(run_mcs(&vc, &spec(0.2), &opts(0, 0)), Err(McsError::InvalidArgument(_))));
        let bad = McsOptions { workers: Some(0), ..opts(10, 0) };
        assert!(matches!(run_mcs(&vc, &spec(0.2), &bad), Err(McsError::InvalidArgument(_))));
    }

    #[test]
    fn too_many_failures_are_reported() {
        let vc = small_mtdc();
        let s = StochasticSpec {
            sources: vec![src("huge", 2, Quantity::ActivePower, Role::Load, Marginal::Normal { mean: 0.0, std: 50.0 })],
            groups: vec![],
        };
        match run_mcs(&vc, &s, &opts(40, 3)) {
            Err(McsError::OracleUnreliable { failed, total, .. }) => {
                assert_eq!(total, 40);
                assert!(failed > 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
