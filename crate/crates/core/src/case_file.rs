//! JSON case files: network data, stochastic sources and named scenarios.
//!
//! A case reference is a file path or `bundled:<name>`, optionally followed
//! by `#<scenario>`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    per_unit_bases, validate_case, AcBus, AcBusKind, AcLine, ControlMode, Converter, DcBus, DcBusKind, DcLine,
    Diagnostics, NetworkCase, Setpoints, ValidatedCase,
};
use crate::plf::{CorrelationGroup, Quantity, Role, StochasticSource, StochasticSpec};
use crate::stochastics::{pv_max_power, EmpiricalModel, Marginal};

const BUNDLED: &[(&str, &str)] = &[
    ("three-terminal", include_str!("../cases/three_terminal.json")),
    ("five-terminal", include_str!("../cases/five_terminal.json")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Error)]
pub enum CaseFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: field `{field}`: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("case validation failed: {0}")]
    Validation(Diagnostics),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseEntry {
    pub s_mva: f64,
    pub u_kv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcBusEntry {
    pub id: usize,
    pub kind: AcBusKind,
    #[serde(default = "one")]
    pub vm: f64,
    /// radians
    #[serde(default)]
    pub va: f64,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcLineEntry {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcBusEntry {
    pub id: usize,
    #[serde(default = "one")]
    pub voltage: f64,
    #[serde(default)]
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcLineEntry {
    pub from: usize,
    pub to: usize,
    pub r: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlEntry {
    /// Converter id; ignored inside a converter entry.
    #[serde(default)]
    pub converter: usize,
    /// Number 1-6 or a name such as `u-Q`, `P-U`, `droop-Q`.
    pub mode: String,
    pub u_dc: Option<f64>,
    pub u_s: Option<f64>,
    pub p_s: Option<f64>,
    pub q_s: Option<f64>,
    pub k_droop: Option<f64>,
    pub p_dc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterEntry {
    pub id: usize,
    pub pcc: usize,
    pub dc: usize,
    /// `[r, x]`
    pub z_tr: [f64; 2],
    #[serde(default)]
    pub b_f: f64,
    pub z_c: [f64; 2],
    #[serde(default)]
    pub r_loss: f64,
    /// Default control when a scenario does not assign one.
    pub control: Option<ControlEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleEntry {
    /// Irradiance at full output, kW/m² for a rating in MW.
    pub r_max: f64,
    pub areas: Vec<f64>,
    pub efficiencies: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvEntry {
    pub id: String,
    pub bus: usize,
    /// Connected to a DC bus instead of an AC bus.
    #[serde(default)]
    pub dc: bool,
    pub alpha: f64,
    pub beta: f64,
    /// Rated output, p.u.
    pub rated_power: Option<f64>,
    /// Rated output from module data, converted with the case power base.
    pub modules: Option<ModuleEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEntry {
    pub id: String,
    pub bus: usize,
    #[serde(default)]
    pub dc: bool,
    pub mu_p: f64,
    #[serde(default)]
    pub sigma_p: f64,
    #[serde(default)]
    pub mu_q: f64,
    #[serde(default)]
    pub sigma_q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdfEntry {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    P,
    Q,
    Dc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalEntry {
    pub id: String,
    pub bus: usize,
    pub target: Target,
    pub role: Role,
    pub samples: Option<Vec<f64>>,
    pub cdf: Option<CdfEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupEntry {
    /// Source ids: a PV or empirical id, or `<load>.p` / `<load>.q`.
    pub members: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticEntry {
    #[serde(default)]
    pub pv: Vec<PvEntry>,
    #[serde(default)]
    pub loads: Vec<LoadEntry>,
    #[serde(default)]
    pub empirical: Vec<EmpiricalEntry>,
    #[serde(default)]
    pub correlation_groups: Vec<GroupEntry>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub control: Vec<ControlEntry>,
    /// Active PV, load and empirical entry ids; all when absent.
    pub sources: Option<Vec<String>>,
    /// Replaces the case-level correlation groups.
    pub correlation_groups: Option<Vec<GroupEntry>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Set when the network data are made up rather than taken from a
    /// published system.
    #[serde(default)]
    pub synthetic: bool,
    pub base: BaseEntry,
    pub ac_buses: Vec<AcBusEntry>,
    pub ac_lines: Vec<AcLineEntry>,
    #[serde(default)]
    pub dc_buses: Vec<DcBusEntry>,
    #[serde(default)]
    pub dc_lines: Vec<DcLineEntry>,
    #[serde(default)]
    pub converters: Vec<ConverterEntry>,
    #[serde(default)]
    pub stochastic: StochasticEntry,
    #[serde(default)]
    pub scenarios: BTreeMap<String, ScenarioEntry>,
    /// Scenario used when the reference names none; defaults to the first.
    pub default_scenario: Option<String>,
}

/// A network with one control assignment and its stochastic sources.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub case_name: String,
    pub scenario: Option<String>,
    pub network: NetworkCase,
    pub validated: ValidatedCase,
    pub stochastic: StochasticSpec,
}

impl Scenario {
    /// `case` or `case#scenario`.
    pub fn label(&self) -> String {
        match &self.scenario {
            Some(s) => format!("{}#{s}", self.case_name),
            None => self.case_name.clone(),
        }
    }
}

pub fn parse_case(text: &str, origin: &str) -> Result<CaseFile, CaseFileError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        CaseFileError::Parse {
            origin: origin.to_string(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })
}

/// Splits `path#scenario`.
pub fn split_reference(reference: &str) -> (&str, Option<&str>) {
    match reference.rsplit_once('#') {
        Some((p, s)) if !s.is_empty() => (p, Some(s)),
        _ => (reference, None),
    }
}

/// Reads a case file or bundled case without building a scenario.
pub fn read_case(source: &str) -> Result<CaseFile, CaseFileError> {
    if let Some(name) = source.strip_prefix("bundled:") {
        let text = bundled_text(name).ok_or_else(|| {
            CaseFileError::Invalid(format!(
                "no bundled case '{name}' (available: {})",
                bundled_names().join(", ")
            ))
        })?;
        return parse_case(text, source);
    }
    let text = std::fs::read_to_string(Path::new(source)).map_err(|e| CaseFileError::Io {
        path: source.to_string(),
        source: e,
    })?;
    parse_case(&text, source)
}

/// Loads and builds the scenario named by a case reference.
pub fn load_scenario(reference: &str) -> Result<Scenario, CaseFileError> {
    let (source, scenario) = split_reference(reference);
    read_case(source)?.build(scenario)
}

fn control_mode(s: &str) -> Result<ControlMode, CaseFileError> {
    if let Ok(n) = s.parse::<u8>() {
        return ControlMode::from_number(n).map_err(|e| CaseFileError::Invalid(e.to_string()));
    }
    ControlMode::parse(s).map_err(|e| CaseFileError::Invalid(e.to_string()))
}

fn apply_control(conv: &mut Converter, c: &ControlEntry) -> Result<(), CaseFileError> {
    conv.control = control_mode(&c.mode)?;
    conv.setpoints = Setpoints {
        u_dc_ref: c.u_dc,
        u_s_ref: c.u_s,
        p_s_ref: c.p_s,
        q_s_ref: c.q_s,
        k_droop: c.k_droop,
        p_dc_ref: c.p_dc,
    };
    Ok(())
}

fn matrix(g: &GroupEntry) -> Result<DMatrix<f64>, CaseFileError> {
    let n = g.members.len();
    if g.matrix.len() != n || g.matrix.iter().any(|r| r.len() != n) {
        return Err(CaseFileError::Invalid(format!(
            "correlation matrix for {:?} must be {n}×{n}",
            g.members
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| g.matrix[i][j]))
}

impl CaseFile {
    pub fn scenario_names(&self) -> Vec<&str> {
        self.scenarios.keys().map(String::as_str).collect()
    }

    pub fn network(&self, scenario: Option<&ScenarioEntry>) -> Result<NetworkCase, CaseFileError> {
        let base = per_unit_bases(self.base.s_mva, self.base.u_kv).map_err(|e| CaseFileError::Invalid(e.to_string()))?;
        let ac_buses = self
            .ac_buses
            .iter()
            .map(|b| AcBus {
                id: b.id,
                kind: b.kind,
                voltage_mag: b.vm,
                voltage_ang: b.va,
                p_inject: b.p,
                q_inject: b.q,
            })
            .collect();
        let ac_lines = self
            .ac_lines
            .iter()
            .map(|l| AcLine::from_impedance(l.from, l.to, l.r, l.x, l.b))
            .collect();
        let dc_buses = self
            .dc_buses
            .iter()
            .map(|b| DcBus {
                id: b.id,
                kind: DcBusKind::Pure,
                voltage: b.voltage,
                p_inject: b.p,
            })
            .collect();
        let dc_lines = self
            .dc_lines
            .iter()
            .map(|l| DcLine {
                from: l.from,
                to: l.to,
                resistance: l.r,
            })
            .collect();
        let overrides: Vec<&ControlEntry> = scenario.map(|s| s.control.iter().collect()).unwrap_or_default();
        let mut seen = HashSet::new();
        for c in &overrides {
            if !self.converters.iter().any(|k| k.id == c.converter) {
                return Err(CaseFileError::Invalid(format!("control assigned to unknown converter {}", c.converter)));
            }
            if !seen.insert(c.converter) {
                return Err(CaseFileError::Invalid(format!("converter {} controlled twice", c.converter)));
            }
        }
        let mut converters = Vec::with_capacity(self.converters.len());
        for k in &self.converters {
            let mut conv = Converter {
                pcc_bus: k.pcc,
                dc_bus: k.dc,
                transformer_impedance: Complex64::new(k.z_tr[0], k.z_tr[1]),
                filter_susceptance: k.b_f,
                reactor_impedance: Complex64::new(k.z_c[0], k.z_c[1]),
                loss_resistance: k.r_loss,
                control: ControlMode::PQ,
                setpoints: Setpoints::default(),
            };
            match overrides.iter().find(|c| c.converter == k.id).copied().or(k.control.as_ref()) {
                Some(c) => apply_control(&mut conv, c)?,
                None => {
                    return Err(CaseFileError::Invalid(format!("converter {} has no control assignment", k.id)));
                }
            }
            converters.push(conv);
        }
        Ok(NetworkCase {
            name: self.name.clone(),
            base,
            ac_buses,
            ac_lines,
            dc_buses,
            dc_lines,
            converters,
        })
    }

    pub fn stochastic_spec(&self, scenario: Option<&ScenarioEntry>) -> Result<StochasticSpec, CaseFileError> {
        let st = &self.stochastic;
        let active: Option<HashSet<&str>> = scenario
            .and_then(|s| s.sources.as_ref())
            .map(|v| v.iter().map(String::as_str).collect());
        if let Some(a) = &active {
            let known: HashSet<&str> = st
                .pv
                .iter()
                .map(|p| p.id.as_str())
                .chain(st.loads.iter().map(|l| l.id.as_str()))
                .chain(st.empirical.iter().map(|e| e.id.as_str()))
                .collect();
            if let Some(bad) = a.iter().find(|id| !known.contains(*id)) {
                return Err(CaseFileError::Invalid(format!("scenario names unknown source '{bad}'")));
            }
        }
        let on = |id: &str| active.as_ref().is_none_or(|a| a.contains(id));
        let mut sources = Vec::new();
        for p in st.pv.iter().filter(|p| on(&p.id)) {
            let rated = match (p.rated_power, &p.modules) {
                (Some(r), None) => r,
                (None, Some(m)) => {
                    pv_max_power(m.r_max, &m.areas, &m.efficiencies).map_err(|e| CaseFileError::Invalid(e.to_string()))?
                        / self.base.s_mva
                }
                _ => {
                    return Err(CaseFileError::Invalid(format!(
                        "pv '{}' needs exactly one of rated_power and modules",
                        p.id
                    )))
                }
            };
            if !(p.alpha > 0.0 && p.beta > 0.0 && rated > 0.0) {
                return Err(CaseFileError::Invalid(format!(
                    "pv '{}' needs positive shape parameters and rating",
                    p.id
                )));
            }
            sources.push(StochasticSource {
                id: p.id.clone(),
                bus: p.bus,
                quantity: if p.dc { Quantity::DcPower } else { Quantity::ActivePower },
                role: Role::Generation,
                marginal: Marginal::Beta {
                    alpha: p.alpha,
                    beta: p.beta,
                    scale: rated,
                },
            });
        }
        for l in st.loads.iter().filter(|l| on(&l.id)) {
            if l.sigma_p < 0.0 || l.sigma_q < 0.0 {
                return Err(CaseFileError::Invalid(format!("load '{}' has a negative std", l.id)));
            }
            sources.push(StochasticSource {
                id: format!("{}.p", l.id),
                bus: l.bus,
                quantity: if l.dc { Quantity::DcPower } else { Quantity::ActivePower },
                role: Role::Load,
                marginal: Marginal::Normal {
                    mean: l.mu_p,
                    std: l.sigma_p,
                },
            });
            if l.dc {
                if l.mu_q != 0.0 || l.sigma_q != 0.0 {
                    return Err(CaseFileError::Invalid(format!("DC load '{}' cannot have reactive power", l.id)));
                }
            } else if l.mu_q != 0.0 || l.sigma_q != 0.0 {
                sources.push(StochasticSource {
                    id: format!("{}.q", l.id),
                    bus: l.bus,
                    quantity: Quantity::ReactivePower,
                    role: Role::Load,
                    marginal: Marginal::Normal {
                        mean: l.mu_q,
                        std: l.sigma_q,
                    },
                });
            }
        }
        for e in st.empirical.iter().filter(|e| on(&e.id)) {
            let model = match (&e.samples, &e.cdf) {
                (Some(s), None) => EmpiricalModel::from_samples(s.clone()),
                (None, Some(c)) => EmpiricalModel::from_cdf_table(c.x.clone(), c.p.clone()),
                _ => {
                    return Err(CaseFileError::Invalid(format!(
                        "empirical source '{}' needs exactly one of samples and cdf",
                        e.id
                    )))
                }
            }
            .map_err(|err| CaseFileError::Invalid(format!("empirical source '{}': {err}", e.id)))?;
            sources.push(StochasticSource {
                id: e.id.clone(),
                bus: e.bus,
                quantity: match e.target {
                    Target::P => Quantity::ActivePower,
                    Target::Q => Quantity::ReactivePower,
                    Target::Dc => Quantity::DcPower,
                },
                role: e.role,
                marginal: Marginal::Empirical(model),
            });
        }
        let groups = scenario
            .and_then(|s| s.correlation_groups.as_ref())
            .unwrap_or(&st.correlation_groups);
        let groups = groups
            .iter()
            .map(|g| {
                Ok(CorrelationGroup {
                    members: g.members.clone(),
                    matrix: matrix(g)?,
                })
            })
            .collect::<Result<Vec<_>, CaseFileError>>()?;
        Ok(StochasticSpec { sources, groups })
    }

    /// Network and sources for `scenario`, or the default one.
    pub fn build(&self, scenario: Option<&str>) -> Result<Scenario, CaseFileError> {
        let name = match scenario {
            Some(s) => Some(s.to_string()),
            None => self
                .default_scenario
                .clone()
                .or_else(|| self.scenarios.keys().next().cloned()),
        };
        let entry = match &name {
            Some(n) => Some(self.scenarios.get(n).ok_or_else(|| {
                CaseFileError::Invalid(format!(
                    "case '{}' has no scenario '{n}' (available: {})",
                    self.name,
                    self.scenario_names().join(", ")
                ))
            })?),
            None => None,
        };
        let network = self.network(entry)?;
        let validated = validate_case(&network).map_err(CaseFileError::Validation)?;
        let stochastic = self.stochastic_spec(entry)?;
        Ok(Scenario {
            case_name: self.name.clone(),
            scenario: name,
            network,
            validated,
            stochastic,
        })
    }
}
