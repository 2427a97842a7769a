use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;
use crate::fixtures::small_mtdc;
use crate::solver::{sensitivity_matrices, solve_power_flow_with};
use crate::stochastics::{EmpiricalModel, Marginal};

fn normal(mean: f64, std: f64) -> Marginal {
    Marginal::Normal { mean, std }
}

fn pv(scale: f64) -> Marginal {
    Marginal::Beta {
        alpha: 0.6799,
        beta: 1.7787,
        scale,
    }
}

fn source(id: &str, bus: usize, quantity: Quantity, role: Role, marginal: Marginal) -> StochasticSource {
    StochasticSource {
        id: id.into(),
        bus,
        quantity,
        role,
        marginal,
    }
}

fn loads() -> Vec<StochasticSource> {
    vec![
        source("l2p", 2, Quantity::ActivePower, Role::Load, normal(0.03, 0.003)),
        source("l2q", 2, Quantity::ReactivePower, Role::Load, normal(0.01, 0.001)),
        source("l4p", 4, Quantity::ActivePower, Role::Load, normal(0.02, 0.002)),
    ]
}

fn mixed_spec() -> StochasticSpec {
    let mut sources = loads();
    sources.push(source("pv4", 4, Quantity::ActivePower, Role::Generation, pv(0.06)));
    sources.push(source("pv5", 5, Quantity::ActivePower, Role::Generation, pv(0.05)));
    sources.push(source("dc3", 3, Quantity::DcPower, Role::Load, normal(0.01, 0.002)));
    StochasticSpec { sources, groups: vec![] }
}

fn opts() -> PlfOptions {
    PlfOptions {
        sample_count: 20_000,
        seed: 3,
        ..PlfOptions::default()
    }
}

fn resolve(spec: &StochasticSpec) -> ResolvedSpec {
    spec.resolve(&small_mtdc()).unwrap()
}

#[test]
fn independent_sources_add_per_column() {
    let spec = StochasticSpec {
        sources: vec![
            source("a", 3, Quantity::ActivePower, Role::Generation, normal(1.0, 0.1)),
            source("b", 3, Quantity::ActivePower, Role::Generation, normal(2.0, 0.2)),
        ],
        groups: vec![],
    };
    let c = injection_cumulants(&resolve(&spec), 8, 100, 0).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].0, 2);
    assert!((c[0].1.gamma(1) - 3.0).abs() < 1e-15);
    assert!((c[0].1.gamma(2) - 0.05).abs() < 1e-15);
}

#[test]
fn loads_enter_negated() {
    let m = pv(0.2);
    let reference = m.analytic_cumulants(8).unwrap();
    let as_gen = StochasticSpec {
        sources: vec![source("g", 4, Quantity::ActivePower, Role::Generation, m.clone())],
        groups: vec![],
    };
    let c = injection_cumulants(&resolve(&as_gen), 8, 100, 0).unwrap();
    assert_eq!(c[0].1, reference);

    let as_load = StochasticSpec {
        sources: vec![source("l", 4, Quantity::ActivePower, Role::Load, m)],
        groups: vec![],
    };
    let c = injection_cumulants(&resolve(&as_load), 8, 100, 0).unwrap();
    for k in 1..=8 {
        let expect = if k % 2 == 1 { -reference.gamma(k) } else { reference.gamma(k) };
        assert_eq!(c[0].1.gamma(k), expect, "order {k}");
    }
}

#[test]
fn sampled_cumulants_for_empirical_sources() {
    let table = EmpiricalModel::from_cdf_table(vec![0.0, 0.1], vec![0.0, 1.0]).unwrap();
    let c = source_cumulants(&Marginal::Empirical(table), 4, 100_000, 9).unwrap();
    assert!((c.gamma(1) - 0.05).abs() < 5e-4);
    assert!((c.gamma(2) - 0.01 / 12.0).abs() < 2e-5);
    assert!(c.gamma(3).abs() < 1e-6);
}

#[test]
fn invalid_specs() {
    let vc = small_mtdc();
    let mut spec = mixed_spec();
    spec.groups = vec![
        CorrelationGroup {
            members: vec!["pv4".into(), "pv5".into()],
            matrix: DMatrix::identity(2, 2),
        },
        CorrelationGroup {
            members: vec!["pv5".into()],
            matrix: DMatrix::identity(1, 1),
        },
    ];
    assert!(matches!(spec.resolve(&vc), Err(PlfError::InvalidSpec(_))));

    let mut spec = mixed_spec();
    spec.sources[0].bus = 99;
    assert!(matches!(spec.resolve(&vc), Err(PlfError::InvalidSpec(_))));

    let mut spec = mixed_spec();
    spec.groups = vec![CorrelationGroup {
        members: vec!["nope".into()],
        matrix: DMatrix::identity(1, 1),
    }];
    assert!(matches!(spec.resolve(&vc), Err(PlfError::InvalidSpec(_))));

    let mut spec = mixed_spec();
    spec.sources[1].id = "l2p".into();
    assert!(matches!(spec.resolve(&vc), Err(PlfError::InvalidSpec(_))));
}

#[test]
fn rewrite_examples() {
    let s0 = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 + 0.5);
    let t0 = DMatrix::from_fn(2, 4, |i, j| (i as f64 - 1.3) * (j as f64 + 0.7));
    let id = vec![(vec![1, 3], DMatrix::identity(2, 2))];
    let (s1, t1) = rewrite_correlated_injections(&s0, &t0, &id).unwrap();
    assert_eq!(s1, s0);
    assert_eq!(t1, t0);

    let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.8660254]);
    let (s1, _) = rewrite_correlated_injections(&s0, &t0, &[(vec![1, 3], g)]).unwrap();
    for i in 0..3 {
        assert_eq!(s1[(i, 0)], s0[(i, 0)]);
        assert_eq!(s1[(i, 2)], s0[(i, 2)]);
        assert!((s1[(i, 1)] - (s0[(i, 1)] + 0.5 * s0[(i, 3)])).abs() < 1e-12);
        assert!((s1[(i, 3)] - 0.8660254 * s0[(i, 3)]).abs() < 1e-12);
    }

    let bad = vec![(vec![1, 4], DMatrix::identity(2, 2))];
    assert!(matches!(
        rewrite_correlated_injections(&s0, &t0, &bad),
        Err(PlfError::InvalidSpec(_))
    ));
}

#[test]
fn propagation_examples() {
    let unit = CumulantSet::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    let out = propagate_cumulants(&[2.0], std::slice::from_ref(&unit), 0.7, 4);
    assert_eq!(out.as_slice(), &[0.7, 4.0, 0.0, 0.0]);

    let zero = CumulantSet::constant(0.0, 4);
    let out = propagate_cumulants(&[2.0, -1.0], &[zero.clone(), zero], 0.7, 4);
    assert_eq!(out.as_slice(), &[0.7, 0.0, 0.0, 0.0]);

    let out = propagate_cumulants(&[3.0, 4.0], &[unit.clone(), unit], 0.0, 4);
    assert_eq!(out.gamma(2), 25.0);
}

proptest! {
    #[test]
    fn propagation_is_linear_in_cumulants(
        s in prop::collection::vec(-3.0f64..3.0, 1..5),
        c in 0.1f64..10.0,
        seedvals in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let inputs: Vec<CumulantSet> = s.iter().enumerate().map(|(i, _)| {
            let mut g: Vec<f64> = seedvals.iter().map(|v| v * (i + 1) as f64).collect();
            g[1] = g[1].abs();
            CumulantSet::new(g).unwrap()
        }).collect();
        let scaled: Vec<CumulantSet> = inputs.iter().map(|x| {
            let mut g = x.as_slice().to_vec();
            for v in g.iter_mut().skip(1) { *v *= c; }
            CumulantSet::new(g).unwrap()
        }).collect();
        let a = propagate_cumulants(&s, &inputs, 0.0, 8);
        let b = propagate_cumulants(&s, &scaled, 0.0, 8);
        prop_assert_eq!(a.gamma(1), b.gamma(1));
        for k in 2..=8 {
            prop_assert!((b.gamma(k) - c * a.gamma(k)).abs() <= 1e-9 * (1.0 + (c * a.gamma(k)).abs()));
        }
    }
}

#[test]
fn zero_variance_reproduces_deterministic_solution() {
    let vc = small_mtdc();
    let spec = StochasticSpec {
        sources: vec![
            source("l2", 2, Quantity::ActivePower, Role::Load, normal(0.02, 0.0)),
            source("g4", 4, Quantity::ReactivePower, Role::Generation, normal(0.01, 0.0)),
        ],
        groups: vec![],
    };
    let r = run_plf_cm(&vc, &spec, &opts()).unwrap();
    let mut inj = crate::solver::Injections::scheduled(&vc);
    inj.p_ac[1] -= 0.02;
    inj.q_ac[3] += 0.01;
    let sol = solve_power_flow_with(&vc, &inj, &opts().solver).unwrap();
    let sens = sensitivity_matrices(&vc, &sol, &crate::solver::all_variables(&vc)).unwrap();
    assert_eq!(r.variables.len(), sens.variables.len());
    for (v, &h) in r.variables.iter().zip(&sens.base_values) {
        assert_eq!(v.cumulants.std(), 0.0, "{}", v.name);
        assert!((v.cumulants.mean() - h).abs() < 1e-10, "{}", v.name);
        assert!(v.curve.is_degenerate());
    }
}

#[test]
fn mean_is_base_value_plus_offset() {
    let r = run_plf_cm(&small_mtdc(), &mixed_spec(), &opts()).unwrap();
    for v in &r.variables {
        assert!((v.cumulants.mean() - v.base_value).abs() < 1e-9, "{}", v.name);
    }
    assert_eq!(r.factor_count, 5);
    assert!(r.variables.iter().any(|v| v.cumulants.std() > 1e-4));
}

fn assert_same(a: &PlfResult, b: &PlfResult, tol: f64) {
    assert_eq!(a.variables.len(), b.variables.len());
    for (x, y) in a.variables.iter().zip(&b.variables) {
        assert_eq!(x.name, y.name);
        for k in 1..=8 {
            let (p, q) = (x.cumulants.gamma(k), y.cumulants.gamma(k));
            let scale = x.cumulants.std().powi(k as i32).max(1e-300);
            let scale = if k == 1 { 1.0 } else { scale };
            assert!((p - q).abs() <= tol * scale, "{} γ{k}: {p} vs {q}", x.name);
        }
    }
}

#[test]
fn source_order_does_not_matter() {
    let vc = small_mtdc();
    let spec = mixed_spec();
    let mut rev = spec.clone();
    rev.sources.reverse();
    let a = run_plf_cm(&vc, &spec, &opts()).unwrap();
    let b = run_plf_cm(&vc, &rev, &opts()).unwrap();
    assert_same(&a, &b, 1e-10);
}

#[test]
fn identity_groups_match_independent_path() {
    let vc = small_mtdc();
    let spec = mixed_spec();
    let mut grouped = spec.clone();
    grouped.groups = vec![CorrelationGroup {
        members: vec!["pv4".into(), "pv5".into(), "l4p".into()],
        matrix: DMatrix::identity(3, 3),
    }];
    let a = run_plf_cm(&vc, &spec, &opts()).unwrap();
    let b = run_plf_cm(&vc, &grouped, &opts()).unwrap();
    assert_same(&a, &b, 1e-12);
}

#[test]
fn correlated_gaussian_variance_is_exact() {
    let vc = small_mtdc();
    let rho = 0.6;
    let spec = StochasticSpec {
        sources: loads(),
        groups: vec![CorrelationGroup {
            members: vec!["l2p".into(), "l4p".into()],
            matrix: DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
        }],
    };
    let r = run_plf_cm(&vc, &spec, &opts()).unwrap();
    let resolved = resolve(&spec);
    let sol = solve_power_flow_with(&vc, &resolved.expected_injections(&vc), &opts().solver).unwrap();
    let sens = sensitivity_matrices(&vc, &sol, &crate::solver::all_variables(&vc)).unwrap();
    let (c2, c4, q2) = (vc.ac_position(2).unwrap(), vc.ac_position(4).unwrap(), vc.n_ac() + vc.ac_position(2).unwrap());
    for (i, v) in r.variables.iter().enumerate() {
        let (a, b, q) = (sens.t0[(i, c2)] * 0.003, sens.t0[(i, c4)] * 0.002, sens.t0[(i, q2)] * 0.001);
        let var = a * a + b * b + 2.0 * rho * a * b + q * q;
        assert!((v.cumulants.variance() - var).abs() <= 1e-12 * var.max(1e-20), "{}", v.name);
        assert!(v.cumulants.gamma(3).abs() <= 1e-15);
    }
}

#[test]
fn non_gaussian_group_factors_are_standardized() {
    let mut spec = mixed_spec();
    spec.groups = vec![CorrelationGroup {
        members: vec!["pv4".into(), "pv5".into()],
        matrix: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
    }];
    let resolved = resolve(&spec);
    let (f, repaired) = group_factor_cumulants(&resolved, &resolved.groups[0], 8, 50_000, 1).unwrap();
    assert!(!repaired);
    for c in &f {
        assert_eq!(c.gamma(1), 0.0);
        assert_eq!(c.gamma(2), 1.0);
    }
    // the first factor is the standardized first member
    let (alpha, beta): (f64, f64) = (0.6799, 1.7787);
    let skew = 2.0 * (beta - alpha) * (alpha + beta + 1.0).sqrt() / ((alpha + beta + 2.0) * (alpha * beta).sqrt());
    assert!((f[0].gamma(3) - skew).abs() < 0.05, "{} vs {skew}", f[0].gamma(3));
}

#[test]
fn positive_correlation_widens_nearby_voltage() {
    let vc = small_mtdc();
    let sigma = |rho: f64| {
        let mut spec = mixed_spec();
        spec.groups = vec![CorrelationGroup {
            members: vec!["pv4".into(), "pv5".into()],
            matrix: DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
        }];
        let r = run_plf_cm(&vc, &spec, &opts()).unwrap();
        let v = r.variable("U_ac[4]").unwrap();
        (v.cumulants.mean(), v.cumulants.std())
    };
    let (m2, s2) = sigma(0.2);
    let (m5, s5) = sigma(0.5);
    let (m8, s8) = sigma(0.8);
    assert!(s2 <= s5 && s5 <= s8, "{s2} {s5} {s8}");
    assert!(((m8 - m2) / m2).abs() < 0.01);
    assert!(((m5 - m2) / m2).abs() < 0.01);
}

#[test]
fn options_are_checked() {
    let vc = small_mtdc();
    let bad = PlfOptions {
        order: 9,
        ..opts()
    };
    assert!(matches!(run_plf_cm(&vc, &mixed_spec(), &bad), Err(PlfError::InvalidOption(_))));
    let bad = PlfOptions {
        monitor: vec!["U_ac[77]".into()],
        ..opts()
    };
    assert!(run_plf_cm(&vc, &mixed_spec(), &bad).is_err());
    let e = PlfError::BaseSolve(crate::solver::SolverError::InvalidArgument("x".into()));
    assert_eq!(e.stage(), "base-solve");
}
