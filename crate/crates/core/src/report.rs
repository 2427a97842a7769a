//! CSV and JSON artifacts written by the command-line front end.
//!
//! Numbers in CSV files use nine significant digits in lowercase scientific
//! notation; an undefined value is an empty field.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::comparison::Comparison;
use crate::gram_charlier::{linspace, standard_grid};
use crate::grid::ValidatedCase;
use crate::mcs::{McsResult, McsVariable};
use crate::metrics::{curve_band_probabilities, BandProbabilities, BandThresholds};
use crate::plf::PlfResult;
use crate::solver::{MonitoredVariable, PowerFlowSolution, VariableClass};
use crate::stochastics::sample_cumulants;

pub const TOOL: &str = "acdc-plf";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize {what}: {source}")]
    Serialize {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
}

/// Nine significant digits, lowercase exponent.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.8e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Embedded in every JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub case: String,
    pub method: String,
    pub seed: u64,
    pub options: serde_json::Value,
}

/// Writes artifacts into one directory.
pub struct ReportWriter {
    dir: PathBuf,
    header: Header,
    written: Vec<PathBuf>,
}

impl ReportWriter {
    pub fn new(dir: &Path, header: Header) -> Result<Self, ReportError> {
        fs::create_dir_all(dir).map_err(|source| ReportError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header,
            written: Vec::new(),
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), ReportError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    /// `{"header": …, "<key>": body}`, pretty-printed.
    pub fn write_json<T: Serialize>(&mut self, name: &str, key: &'static str, body: &T) -> Result<(), ReportError> {
        let mut obj = serde_json::Map::new();
        let header =
            serde_json::to_value(&self.header).map_err(|source| ReportError::Serialize { what: "header", source })?;
        let body = serde_json::to_value(body).map_err(|source| ReportError::Serialize { what: key, source })?;
        obj.insert("header".into(), header);
        obj.insert(key.into(), body);
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(obj))
            .map_err(|source| ReportError::Serialize { what: key, source })?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Raw JSON without the header, for run-dependent data such as timings.
    pub fn write_plain_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), ReportError> {
        let mut text =
            serde_json::to_string_pretty(body).map_err(|source| ReportError::Serialize { what: "timing", source })?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

/// One row of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variable: String,
    pub mean: f64,
    pub std: f64,
    /// Normalized third and fourth cumulants.
    pub g3: Option<f64>,
    pub g4: Option<f64>,
    /// Voltage variables only.
    pub bands: Option<BandProbabilities>,
}

fn is_voltage(class: VariableClass) -> bool {
    matches!(class, VariableClass::U | VariableClass::Udc)
}

pub fn plf_summary(plf: &PlfResult, t: BandThresholds) -> Vec<SummaryRow> {
    plf.variables
        .iter()
        .map(|v| SummaryRow {
            variable: v.name.clone(),
            mean: v.cumulants.mean(),
            std: v.cumulants.std(),
            g3: v.curve.g.first().copied(),
            g4: v.curve.g.get(1).copied(),
            bands: is_voltage(v.class).then(|| curve_band_probabilities(&v.curve, t)),
        })
        .collect()
}

fn sample_shape(v: &McsVariable) -> (Option<f64>, Option<f64>) {
    if v.std == 0.0 || v.sorted.len() < 2 {
        return (Some(0.0), Some(0.0));
    }
    match sample_cumulants(&v.sorted, 4) {
        Ok(c) => {
            let s = c.std();
            if s > 0.0 {
                (Some(c.gamma(3) / s.powi(3)), Some(c.gamma(4) / s.powi(4)))
            } else {
                (Some(0.0), Some(0.0))
            }
        }
        Err(_) => (None, None),
    }
}

pub fn mcs_summary(mcs: &McsResult, t: BandThresholds) -> Vec<SummaryRow> {
    mcs.variables
        .iter()
        .map(|v| {
            let (g3, g4) = sample_shape(v);
            SummaryRow {
                variable: v.name.clone(),
                mean: v.mean,
                std: v.std,
                g3,
                g4,
                bands: is_voltage(v.class).then(|| BandProbabilities {
                    ovp: 1.0 - v.ecdf(t.ov),
                    ovp_hi: 1.0 - v.ecdf(t.hi),
                    lvp: v.ecdf(t.lv),
                }),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("variable,mean,std,g3,g4,ovp,lvp_hi,lvp_lo\n");
    for r in rows {
        let b = r.bands;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.variable,
            fmt_num(r.mean),
            fmt_num(r.std),
            fmt_opt(r.g3),
            fmt_opt(r.g4),
            fmt_opt(b.map(|b| b.ovp)),
            fmt_opt(b.map(|b| b.ovp_hi)),
            fmt_opt(b.map(|b| b.lvp)),
        );
    }
    s
}

fn push_curve(s: &mut String, name: &str, x: &[f64], pdf: &[f64], cdf: &[f64]) {
    for ((x, p), c) in x.iter().zip(pdf).zip(cdf) {
        let _ = writeln!(s, "{name},{},{},{}", fmt_num(*x), fmt_num(*p), fmt_num(*c));
    }
}

pub fn plf_curves_csv(plf: &PlfResult) -> String {
    let mut s = String::from("variable,x,pdf,cdf\n");
    for v in &plf.variables {
        push_curve(&mut s, &v.name, &v.curve.x, &v.curve.pdf, &v.curve.cdf);
    }
    s
}

/// Grid for a Monte Carlo curve without a reconstructed counterpart.
pub fn mcs_grid(v: &McsVariable, points: usize) -> Vec<f64> {
    if v.std > 0.0 {
        standard_grid(v.mean, v.std, points)
    } else {
        let h = 1e-6 * v.mean.abs().max(1.0);
        linspace(v.mean - h, v.mean + h, points)
    }
}

/// Monte Carlo curves, on the reconstructed grids when `plf` is given.
pub fn mcs_curves_csv(mcs: &McsResult, plf: Option<&PlfResult>, points: usize) -> String {
    let mut s = String::from("variable,x,pdf,cdf\n");
    for v in &mcs.variables {
        let grid = plf
            .and_then(|p| p.variable(&v.name))
            .map(|p| p.curve.x.clone())
            .unwrap_or_else(|| mcs_grid(v, points));
        let c = v.curve_on(&grid);
        push_curve(&mut s, &v.name, &c.x, &c.pdf, &c.cdf);
    }
    s
}

/// Per-class table with the accuracy columns.
pub fn metrics_csv(cmp: &Comparison) -> String {
    let mut s = String::from("class,count,eps_mu_mean,eps_mu_max,eps_sigma_mean,eps_sigma_max,arms_mean,arms_max,tic\n");
    for c in &cmp.report.classes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.class.label(),
            c.count,
            fmt_opt(c.eps_mu_mean),
            fmt_opt(c.eps_mu_max),
            fmt_opt(c.eps_sigma_mean),
            fmt_opt(c.eps_sigma_max),
            fmt_opt(c.arms_mean),
            fmt_opt(c.arms_max),
            fmt_opt(c.tic),
        );
    }
    s
}

pub fn metrics_variables_csv(cmp: &Comparison) -> String {
    let mut s = String::from("variable,class,eps_mu,eps_sigma,arms,tic\n");
    for v in &cmp.report.variables {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            v.variable,
            v.class.label(),
            fmt_opt(v.eps_mu),
            fmt_opt(v.eps_sigma),
            fmt_num(v.arms),
            fmt_num(v.tic),
        );
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct BusRow {
    pub id: usize,
    pub vm: f64,
    pub va: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DcBusRow {
    pub id: usize,
    pub u: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationRow {
    pub converter: usize,
    pub mode: &'static str,
    pub p_s: f64,
    pub q_s: f64,
    pub p_dc: f64,
    pub loss: f64,
}

/// Deterministic operating point in tabular form.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionTable {
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
    pub iteration_log: Vec<f64>,
    pub ac_buses: Vec<BusRow>,
    pub dc_buses: Vec<DcBusRow>,
    pub ac_lines: Vec<crate::solver::AcLineFlow>,
    pub dc_lines: Vec<crate::solver::DcLineFlow>,
    pub stations: Vec<StationRow>,
}

impl SolutionTable {
    pub fn new(vc: &ValidatedCase, sol: &PowerFlowSolution) -> Self {
        let case = vc.case();
        Self {
            converged: sol.converged,
            iterations: sol.iterations(),
            max_mismatch: sol.max_mismatch(),
            iteration_log: sol.iteration_log.clone(),
            ac_buses: (0..vc.n_ac())
                .map(|i| BusRow {
                    id: vc.ac_id(i),
                    vm: sol.buses.vm[i],
                    va: sol.buses.va[i],
                    p: sol.p_ac[i],
                    q: sol.q_ac[i],
                })
                .collect(),
            dc_buses: (0..vc.n_dc())
                .map(|i| DcBusRow {
                    id: vc.dc_id(i),
                    u: sol.buses.vd[i],
                    p: sol.p_dc[i],
                })
                .collect(),
            ac_lines: sol.ac_flows.clone(),
            dc_lines: sol.dc_flows.clone(),
            stations: sol
                .stations
                .iter()
                .zip(&case.converters)
                .enumerate()
                .map(|(k, (s, c))| StationRow {
                    converter: k + 1,
                    mode: c.control.label(),
                    p_s: s.p_s,
                    q_s: s.q_s,
                    p_dc: s.p_dc,
                    loss: s.loss,
                })
                .collect(),
        }
    }
}

/// `variable,value` for the monitored variables and every station.
pub fn solution_csv(vc: &ValidatedCase, sol: &PowerFlowSolution, vars: &[MonitoredVariable]) -> String {
    let mut s = String::from("variable,value\n");
    for v in vars {
        let _ = writeln!(s, "{},{}", v.name, fmt_num(v.value(vc, &sol.buses)));
    }
    for (k, st) in sol.stations.iter().enumerate() {
        let k = k + 1;
        let _ = writeln!(s, "P_s[{k}],{}", fmt_num(st.p_s));
        let _ = writeln!(s, "Q_s[{k}],{}", fmt_num(st.q_s));
        let _ = writeln!(s, "P_dcs[{k}],{}", fmt_num(st.p_dc));
    }
    s
}
