//! Batch front end: load a case, run one analysis, write the artifacts.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::case_file::{load_scenario, CaseFileError, Scenario};
use crate::comparison::{compare, Comparison};
use crate::mcs::{run_mcs, McsError, McsOptions, McsResult};
use crate::metrics::BandThresholds;
use crate::plf::{monitored, run_plf_cm, PlfError, PlfOptions, PlfResult, PlfTimings};
use crate::report::{
    mcs_curves_csv, mcs_summary, metrics_csv, metrics_variables_csv, plf_curves_csv, plf_summary, solution_csv,
    summary_csv, Header, ReportError, ReportWriter, SolutionTable, TOOL, VERSION,
};
use crate::solver::{solve_power_flow_with, SolverError, SolverOptions};
use crate::stochastics::CumulantSet;

pub const MIN_GRID_POINTS: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Deterministic power flow at the expected injections.
    Flow,
    /// Cumulant method with Gram-Charlier reconstruction.
    Cm,
    /// Monte Carlo simulation.
    Mcs,
    /// Both, plus accuracy metrics.
    Compare,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Flow => "flow",
            Method::Cm => "cm",
            Method::Mcs => "mcs",
            Method::Compare => "compare",
        }
    }
}

/// Probabilistic load flow for hybrid AC/VSC-MTDC grids.
#[derive(Debug, Clone, Parser)]
#[command(name = "acdc-plf", version)]
pub struct RunConfig {
    /// Case file path or `bundled:<name>`, optionally followed by `#<scenario>`.
    #[arg(long)]
    pub case: String,
    #[arg(long, value_enum, default_value_t = Method::Compare)]
    pub method: Method,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Highest cumulant order used in the expansion.
    #[arg(long, default_value_t = 8)]
    pub order: usize,
    #[arg(long, default_value_t = 513)]
    pub grid_points: usize,
    /// Variable names (`U_ac[7]`) or class prefixes (`U_ac`, `P_dc`); all when empty.
    #[arg(long, value_delimiter = ',')]
    pub monitor: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(case: &str, method: Method, out: impl Into<PathBuf>) -> Self {
        Self {
            case: case.to_string(),
            method,
            samples: 10_000,
            seed: 0,
            order: 8,
            grid_points: 513,
            monitor: Vec::new(),
            out: out.into(),
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(2..=8).contains(&self.order) {
            return Err(CliError::Usage(format!("--order must be between 2 and 8, got {}", self.order)));
        }
        if self.grid_points < MIN_GRID_POINTS {
            return Err(CliError::Usage(format!(
                "--grid-points must be at least {MIN_GRID_POINTS}, got {}",
                self.grid_points
            )));
        }
        if matches!(self.method, Method::Mcs | Method::Compare) && self.samples == 0 {
            return Err(CliError::Usage("--samples must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Options embedded in report headers. The worker count is left out so
    /// the reports do not depend on it.
    fn header(&self, label: &str) -> Header {
        let mut options = json!({
            "order": self.order,
            "grid_points": self.grid_points,
            "monitor": self.monitor,
        });
        if matches!(self.method, Method::Mcs | Method::Compare) {
            options["samples"] = json!(self.samples);
        }
        Header {
            tool: TOOL,
            version: VERSION,
            case: label.to_string(),
            method: self.method.name().to_string(),
            seed: self.seed,
            options,
        }
    }

    fn plf_options(&self) -> PlfOptions {
        PlfOptions {
            order: self.order,
            grid_points: self.grid_points,
            seed: self.seed,
            monitor: self.monitor.clone(),
            ..PlfOptions::default()
        }
    }

    fn mcs_options(&self) -> McsOptions {
        McsOptions {
            samples: self.samples,
            seed: self.seed,
            monitor: self.monitor.clone(),
            ..McsOptions::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Parse(CaseFileError),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    OracleUnreliable(String),
    #[error("{stage}: {message}")]
    Analysis { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Divergence(_) => 5,
            CliError::OracleUnreliable(_) => 6,
            CliError::Analysis { .. } => 7,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Usage(_) => "usage",
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Divergence(_) => "divergence",
            CliError::OracleUnreliable(_) => "oracle-unreliable",
            CliError::Analysis { .. } => "analysis",
        }
    }

    /// One-line JSON object for stderr.
    pub fn diagnostic(&self) -> String {
        let mut d = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Parse(CaseFileError::Parse {
                origin,
                line,
                column,
                field,
                ..
            }) => {
                d["origin"] = json!(origin);
                d["line"] = json!(line);
                d["column"] = json!(column);
                d["field"] = json!(field);
            }
            CliError::Analysis { stage, .. } => d["stage"] = json!(stage),
            _ => {}
        }
        d.to_string()
    }
}

impl From<CaseFileError> for CliError {
    fn from(e: CaseFileError) -> Self {
        match e {
            CaseFileError::Io { .. } => CliError::Io(e.to_string()),
            CaseFileError::Parse { .. } => CliError::Parse(e),
            CaseFileError::Invalid(_) | CaseFileError::Validation(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::Divergence(other.to_string()),
    }
}

impl From<PlfError> for CliError {
    fn from(e: PlfError) -> Self {
        match e {
            PlfError::InvalidOption(m) => CliError::Usage(m),
            PlfError::InvalidSpec(_) => CliError::Validation(e.to_string()),
            PlfError::BaseSolve(s) => solver_error(s),
            other => CliError::Analysis {
                stage: other.stage(),
                message: other.to_string(),
            },
        }
    }
}

impl From<McsError> for CliError {
    fn from(e: McsError) -> Self {
        match e {
            McsError::InvalidArgument(m) => CliError::Usage(m),
            McsError::Spec(p) => p.into(),
            McsError::BaseSolve(s) => solver_error(s),
            McsError::OracleUnreliable { .. } => CliError::OracleUnreliable(e.to_string()),
        }
    }
}

/// Everything a run produced, for callers that want more than the files.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub solution: Option<SolutionTable>,
    pub plf: Option<PlfResult>,
    pub mcs: Option<McsResult>,
    pub comparison: Option<Comparison>,
}

#[derive(Serialize)]
struct PlfVariableReport<'a> {
    name: &'a str,
    class: &'static str,
    base_value: f64,
    cumulants: &'a CumulantSet,
    degenerate: bool,
    quality_warning: bool,
}

#[derive(Serialize)]
struct McsVariableReport<'a> {
    name: &'a str,
    class: &'static str,
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct Timing<'a> {
    workers: Option<usize>,
    plf: Option<&'a PlfTimings>,
    mcs_seconds: Option<f64>,
    /// Cumulant-method time over Monte Carlo time.
    ratio: Option<f64>,
}

fn write_plf(w: &mut ReportWriter, plf: &PlfResult) -> Result<(), CliError> {
    let flagged = plf.variables.iter().filter(|v| v.curve.diagnostics.quality_warning).count();
    if flagged > 0 {
        warn!("{flagged} of {} variables have normalized cumulants above 2; see quality_warning in cm_report.json", plf.variables.len());
    }
    w.write_text("cm_curves.csv", &plf_curves_csv(plf))?;
    w.write_text("cm_summary.csv", &summary_csv(&plf_summary(plf, BandThresholds::default())))?;
    let vars: Vec<_> = plf
        .variables
        .iter()
        .map(|v| PlfVariableReport {
            name: &v.name,
            class: v.class.label(),
            base_value: v.base_value,
            cumulants: &v.cumulants,
            degenerate: v.curve.is_degenerate(),
            quality_warning: v.curve.diagnostics.quality_warning,
        })
        .collect();
    let body = json!({
        "base_iterations": plf.base_iterations,
        "factor_count": plf.factor_count,
        "nataf_repaired": plf.nataf_repaired,
        "variables": vars,
    });
    w.write_json("cm_report.json", "cm", &body)?;
    Ok(())
}

fn write_mcs(w: &mut ReportWriter, mcs: &McsResult, plf: Option<&PlfResult>, points: usize) -> Result<(), CliError> {
    w.write_text("mcs_curves.csv", &mcs_curves_csv(mcs, plf, points))?;
    w.write_text("mcs_summary.csv", &summary_csv(&mcs_summary(mcs, BandThresholds::default())))?;
    let vars: Vec<_> = mcs
        .variables
        .iter()
        .map(|v| McsVariableReport {
            name: &v.name,
            class: v.class.label(),
            mean: v.mean,
            std: v.std,
        })
        .collect();
    let body = json!({
        "samples": mcs.samples,
        "failed": mcs.failed,
        "failures": mcs.failures,
        "variables": vars,
    });
    w.write_json("mcs_report.json", "mcs", &body)?;
    Ok(())
}

fn write_metrics(w: &mut ReportWriter, cmp: &Comparison) -> Result<(), CliError> {
    w.write_text("metrics.csv", &metrics_csv(cmp))?;
    w.write_text("metrics_variables.csv", &metrics_variables_csv(cmp))?;
    let body = json!({
        "classes": cmp.report.classes,
        "variables": cmp.report.variables,
        "skipped": cmp.skipped,
    });
    w.write_json("metrics.json", "metrics", &body)?;
    Ok(())
}

fn run_flow(cfg: &RunConfig, sc: &Scenario, w: &mut ReportWriter, out: &mut RunSummary) -> Result<(), CliError> {
    let vc = &sc.validated;
    let spec = sc.stochastic.resolve(vc)?;
    let vars = monitored(vc, &cfg.monitor).map_err(|e| CliError::Usage(e.to_string()))?;
    let t = Instant::now();
    let sol = solve_power_flow_with(vc, &spec.expected_injections(vc), &SolverOptions::default()).map_err(solver_error)?;
    let seconds = t.elapsed().as_secs_f64();
    info!(
        "{}: converged in {} iterations, max mismatch {:.3e} p.u., {:.4} s",
        sc.label(),
        sol.iterations(),
        sol.max_mismatch(),
        seconds
    );
    let table = SolutionTable::new(vc, &sol);
    w.write_json("solution.json", "solution", &table)?;
    w.write_text("solution.csv", &solution_csv(vc, &sol, &vars))?;
    w.write_plain_json("timing.json", &json!({ "solve_seconds": seconds }))?;
    out.solution = Some(table);
    Ok(())
}

fn run_method(cfg: &RunConfig, sc: &Scenario, w: &mut ReportWriter) -> Result<RunSummary, CliError> {
    let mut out = RunSummary::default();
    let vc = &sc.validated;
    match cfg.method {
        Method::Flow => run_flow(cfg, sc, w, &mut out)?,
        Method::Cm => {
            let plf = run_plf_cm(vc, &sc.stochastic, &cfg.plf_options())?;
            info!("{}: cumulant method over {} variables in {:.4} s", sc.label(), plf.variables.len(), plf.timings.total);
            write_plf(w, &plf)?;
            w.write_plain_json(
                "timing.json",
                &Timing {
                    workers: cfg.workers,
                    plf: Some(&plf.timings),
                    mcs_seconds: None,
                    ratio: None,
                },
            )?;
            out.plf = Some(plf);
        }
        Method::Mcs => {
            let mcs = run_mcs(vc, &sc.stochastic, &cfg.mcs_options())?;
            info!("{}: {} samples in {:.3} s", sc.label(), mcs.samples, mcs.wall_seconds);
            write_mcs(w, &mcs, None, cfg.grid_points)?;
            w.write_plain_json(
                "timing.json",
                &Timing {
                    workers: cfg.workers,
                    plf: None,
                    mcs_seconds: Some(mcs.wall_seconds),
                    ratio: None,
                },
            )?;
            out.mcs = Some(mcs);
        }
        Method::Compare => {
            let plf = run_plf_cm(vc, &sc.stochastic, &cfg.plf_options())?;
            let mcs = run_mcs(vc, &sc.stochastic, &cfg.mcs_options())?;
            let cmp = compare(&plf, &mcs).map_err(|e| CliError::Analysis {
                stage: "metrics",
                message: e.to_string(),
            })?;
            info!(
                "{}: cumulant method {:.4} s, Monte Carlo {:.3} s ({} samples)",
                sc.label(),
                plf.timings.total,
                mcs.wall_seconds,
                mcs.samples
            );
            write_plf(w, &plf)?;
            write_mcs(w, &mcs, Some(&plf), cfg.grid_points)?;
            write_metrics(w, &cmp)?;
            w.write_plain_json(
                "timing.json",
                &Timing {
                    workers: cfg.workers,
                    plf: Some(&plf.timings),
                    mcs_seconds: Some(mcs.wall_seconds),
                    ratio: Some(cmp.report.timing_ratio),
                },
            )?;
            out.plf = Some(plf);
            out.mcs = Some(mcs);
            out.comparison = Some(cmp);
        }
    }
    Ok(out)
}

/// Runs the configured analysis and writes its artifacts into `cfg.out`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let sc = load_scenario(&cfg.case)?;
    let mut w = ReportWriter::new(&cfg.out, cfg.header(&sc.label()))?;
    let mut out = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(|| run_method(cfg, &sc, &mut w))?,
        None => run_method(cfg, &sc, &mut w)?,
    };
    out.files = w.written().to_vec();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_limits() {
        let ok = RunConfig::new("bundled:three-terminal", Method::Compare, "x");
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.order = 9;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = ok.clone();
        c.grid_points = 32;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.samples = 0;
        assert!(c.validate().is_err());
        c.method = Method::Cm;
        assert!(c.validate().is_ok());
        let mut c = ok;
        c.workers = Some(0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn flags_parse() {
        let c = RunConfig::try_parse_from([
            "acdc-plf",
            "--case",
            "bundled:three-terminal#s2",
            "--method",
            "mcs",
            "--monitor",
            "U_ac,P_dc[1-2]",
            "--workers",
            "3",
        ])
        .unwrap();
        assert_eq!(c.method, Method::Mcs);
        assert_eq!(c.monitor, ["U_ac", "P_dc[1-2]"]);
        assert_eq!(c.workers, Some(3));
        assert_eq!(c.samples, 10_000);
        assert!(RunConfig::try_parse_from(["acdc-plf", "--method", "cm"]).is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let errs = [
            CliError::Io(String::new()),
            CliError::Usage(String::new()),
            CliError::Parse(CaseFileError::Invalid(String::new())),
            CliError::Validation(String::new()),
            CliError::Divergence(String::new()),
            CliError::OracleUnreliable(String::new()),
            CliError::Analysis {
                stage: "x",
                message: String::new(),
            },
        ];
        let mut codes: Vec<i32> = errs.iter().map(CliError::exit_code).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), errs.len());
        assert!(!codes.contains(&0));
    }
}
