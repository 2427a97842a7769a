//! Python bindings: deterministic flow, cumulant method, Monte Carlo and the
//! full command-line pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use acdc_plf::case_file::{load_scenario, Scenario};
use acdc_plf::cli::{run_pipeline, Method, RunConfig};
use acdc_plf::mcs::{run_mcs, McsOptions};
use acdc_plf::plf::{run_plf_cm, PlfOptions};
use acdc_plf::solver::{solve_power_flow_with, SolverOptions};

fn scenario(case: &str) -> PyResult<Scenario> {
    load_scenario(case).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn runtime<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Solve the power flow at expected injections.
///
/// Returns a dict with `iterations`, `max_mismatch`, and per-bus `vm`, `va`
/// (keyed by AC bus id) and `vd` (keyed by DC bus id).
#[pyfunction]
fn solve<'py>(py: Python<'py>, case: &str) -> PyResult<Bound<'py, PyDict>> {
    let sc = scenario(case)?;
    let vc = &sc.validated;
    let inj = sc.stochastic.resolve(vc).map_err(runtime)?.expected_injections(vc);
    let sol = solve_power_flow_with(vc, &inj, &SolverOptions::default()).map_err(runtime)?;
    let out = PyDict::new(py);
    out.set_item("iterations", sol.iterations())?;
    out.set_item("max_mismatch", sol.max_mismatch())?;
    let vm = PyDict::new(py);
    let va = PyDict::new(py);
    for i in 0..vc.n_ac() {
        vm.set_item(vc.ac_id(i), sol.buses.vm[i])?;
        va.set_item(vc.ac_id(i), sol.buses.va[i])?;
    }
    let vd = PyDict::new(py);
    for (i, v) in sol.buses.vd.iter().enumerate() {
        vd.set_item(vc.dc_id(i), v)?;
    }
    out.set_item("vm", vm)?;
    out.set_item("va", va)?;
    out.set_item("vd", vd)?;
    Ok(out)
}

/// Cumulant-method probabilistic load flow.
///
/// Returns `{name: {"class", "mean", "std", "cumulants", "x", "pdf", "cdf"}}`.
#[pyfunction]
#[pyo3(signature = (case, order = 8, grid_points = 513, seed = 0, monitor = None))]
fn cumulant_plf<'py>(
    py: Python<'py>,
    case: &str,
    order: usize,
    grid_points: usize,
    seed: u64,
    monitor: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = scenario(case)?;
    let opts = PlfOptions {
        order,
        grid_points,
        seed,
        monitor: monitor.unwrap_or_default(),
        ..PlfOptions::default()
    };
    let plf = run_plf_cm(&sc.validated, &sc.stochastic, &opts).map_err(runtime)?;
    let out = PyDict::new(py);
    for v in &plf.variables {
        let d = PyDict::new(py);
        d.set_item("class", v.class.label())?;
        d.set_item("mean", v.cumulants.mean())?;
        d.set_item("std", v.cumulants.std())?;
        d.set_item("cumulants", (1..=v.cumulants.order()).map(|k| v.cumulants.gamma(k)).collect::<Vec<_>>())?;
        d.set_item("x", &v.curve.x)?;
        d.set_item("pdf", &v.curve.pdf)?;
        d.set_item("cdf", &v.curve.cdf)?;
        out.set_item(&v.name, d)?;
    }
    Ok(out)
}

/// Monte Carlo reference run. Returns `{name: {"class", "mean", "std"}}`.
#[pyfunction]
#[pyo3(signature = (case, samples = 10_000, seed = 0, monitor = None))]
fn monte_carlo<'py>(
    py: Python<'py>,
    case: &str,
    samples: usize,
    seed: u64,
    monitor: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = scenario(case)?;
    let opts = McsOptions {
        samples,
        seed,
        monitor: monitor.unwrap_or_default(),
        ..McsOptions::default()
    };
    let mcs = py
        .allow_threads(|| run_mcs(&sc.validated, &sc.stochastic, &opts))
        .map_err(runtime)?;
    let out = PyDict::new(py);
    for v in &mcs.variables {
        let d = PyDict::new(py);
        d.set_item("class", v.class.label())?;
        d.set_item("mean", v.mean)?;
        d.set_item("std", v.std)?;
        out.set_item(&v.name, d)?;
    }
    Ok(out)
}

/// Run the command-line pipeline and return the written file paths.
#[pyfunction]
#[pyo3(signature = (case, method = "compare", out = "out", samples = 10_000, seed = 0, order = 8, grid_points = 513))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    case: &str,
    method: &str,
    out: &str,
    samples: usize,
    seed: u64,
    order: usize,
    grid_points: usize,
) -> PyResult<Vec<String>> {
    let method = match method {
        "flow" => Method::Flow,
        "cm" => Method::Cm,
        "mcs" => Method::Mcs,
        "compare" => Method::Compare,
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    };
    let mut cfg = RunConfig::new(case, method, PathBuf::from(out));
    cfg.samples = samples;
    cfg.seed = seed;
    cfg.order = order;
    cfg.grid_points = grid_points;
    let summary = py.allow_threads(|| run_pipeline(&cfg)).map_err(|e| match e.exit_code() {
        2..=4 => PyValueError::new_err(e.to_string()),
        _ => runtime(e),
    })?;
    Ok(summary.files.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn acdcplf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(cumulant_plf, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
