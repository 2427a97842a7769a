//! Network description for hybrid AC / multi-terminal VSC-DC grids.
//!
//! All electrical quantities are per-unit on the bases carried by
//! [`PerUnitBase`]; angles are radians. Buses and lines reference each other
//! through user-facing bus ids, which [`validate_case`] resolves into dense
//! positions once.

mod converter;
mod per_unit;
mod validate;

pub use converter::{
    classify_nodes, converter_injections, converter_loss, dc_line_conductances, droop_power,
    loss_equivalent_resistance, lump_converter_branch, pcc_power_balance_residual,
    ConverterInjections, ConverterLoss, StationClass,
};
pub use per_unit::{per_unit_bases, PerUnitBase, DC_VOLTAGE_BASE_RATIO};
pub use validate::{validate_case, Diagnostic, Diagnostics, ValidatedCase};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular converter branch: total impedance is zero")]
    SingularBranch,
    #[error("division by zero: {0}")]
    DivideByZero(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AcBusKind {
    #[serde(alias = "slack", alias = "SLACK")]
    Slack,
    #[serde(alias = "pv")]
    PV,
    #[serde(alias = "pq")]
    PQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcBusKind {
    ConstV,
    ConstP,
    Droop,
    Pure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcBus {
    pub id: usize,
    pub kind: AcBusKind,
    /// Magnitude setpoint for slack/PV buses, initial guess otherwise.
    pub voltage_mag: f64,
    pub voltage_ang: f64,
    /// Net scheduled injection (generation minus demand).
    pub p_inject: f64,
    pub q_inject: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcBus {
    pub id: usize,
    /// Derived from the attached converter during validation.
    pub kind: DcBusKind,
    pub voltage: f64,
    pub p_inject: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcLine {
    pub from: usize,
    pub to: usize,
    pub series_admittance: Complex64,
    /// Total line charging; half is placed at each end.
    pub shunt_susceptance: f64,
}

impl AcLine {
    pub fn from_impedance(from: usize, to: usize, r: f64, x: f64, b_shunt: f64) -> Self {
        Self {
            from,
            to,
            series_admittance: Complex64::new(1.0, 0.0) / Complex64::new(r, x),
            shunt_susceptance: b_shunt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcLine {
    pub from: usize,
    pub to: usize,
    pub resistance: f64,
}

/// The six converter control modes of a VSC station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlMode {
    /// 1: constant P_s and Q_s.
    PQ,
    /// 2: constant P_s and AC voltage.
    PUs,
    /// 3: constant DC voltage and Q_s.
    UdcQ,
    /// 4: constant DC voltage and AC voltage.
    UdcUs,
    /// 5: DC voltage droop with constant Q_s.
    DroopQ,
    /// 6: DC voltage droop with constant AC voltage.
    DroopUs,
}

impl ControlMode {
    pub const ALL: [ControlMode; 6] = [
        ControlMode::PQ,
        ControlMode::PUs,
        ControlMode::UdcQ,
        ControlMode::UdcUs,
        ControlMode::DroopQ,
        ControlMode::DroopUs,
    ];

    pub fn number(self) -> u8 {
        match self {
            ControlMode::PQ => 1,
            ControlMode::PUs => 2,
            ControlMode::UdcQ => 3,
            ControlMode::UdcUs => 4,
            ControlMode::DroopQ => 5,
            ControlMode::DroopUs => 6,
        }
    }

    pub fn from_number(n: u8) -> Result<Self, GridError> {
        Self::ALL
            .into_iter()
            .find(|m| m.number() == n)
            .ok_or_else(|| GridError::InvalidArgument(format!("unknown control mode {n}")))
    }

    /// Parses the names used in converter control tables
    /// (`P-Q`, `P-U`, `u-Q`, `u-U`, `droop-Q`, `droop-U`, or the mode number).
    pub fn parse(name: &str) -> Result<Self, GridError> {
        let key: String = name
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| c.to_ascii_lowercase())
            .collect::<String>()
            .replace('–', "-");
        let mode = match key.as_str() {
            "1" | "p-q" | "pq" => ControlMode::PQ,
            "2" | "p-u" | "p-us" | "pus" => ControlMode::PUs,
            "3" | "u-q" | "udc-q" | "udcq" => ControlMode::UdcQ,
            "4" | "u-u" | "udc-us" | "udc-u" | "udcus" => ControlMode::UdcUs,
            "5" | "droop-q" | "udcdroop-q" | "droopq" => ControlMode::DroopQ,
            "6" | "droop-u" | "droop-us" | "udcdroop-us" | "droopus" => ControlMode::DroopUs,
            _ => {
                return Err(GridError::InvalidArgument(format!(
                    "unknown control mode '{name}'"
                )))
            }
        };
        Ok(mode)
    }

    pub fn label(self) -> &'static str {
        match self {
            ControlMode::PQ => "P-Q",
            ControlMode::PUs => "P-Us",
            ControlMode::UdcQ => "Udc-Q",
            ControlMode::UdcUs => "Udc-Us",
            ControlMode::DroopQ => "droop-Q",
            ControlMode::DroopUs => "droop-Us",
        }
    }

    /// True when the station regulates the PCC voltage magnitude, leaving its
    /// reactive output free.
    pub fn controls_ac_voltage(self) -> bool {
        matches!(
            self,
            ControlMode::PUs | ControlMode::UdcUs | ControlMode::DroopUs
        )
    }

    pub fn is_droop(self) -> bool {
        matches!(self, ControlMode::DroopQ | ControlMode::DroopUs)
    }

    pub fn fixes_dc_voltage(self) -> bool {
        matches!(self, ControlMode::UdcQ | ControlMode::UdcUs)
    }

    pub fn fixes_active_power(self) -> bool {
        matches!(self, ControlMode::PQ | ControlMode::PUs)
    }
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Converter setpoints; which ones are required depends on the control mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub u_dc_ref: Option<f64>,
    pub u_s_ref: Option<f64>,
    pub p_s_ref: Option<f64>,
    pub q_s_ref: Option<f64>,
    pub k_droop: Option<f64>,
    pub p_dc_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Converter {
    pub pcc_bus: usize,
    pub dc_bus: usize,
    pub transformer_impedance: Complex64,
    /// Recorded for completeness; not part of the lumped branch.
    pub filter_susceptance: f64,
    pub reactor_impedance: Complex64,
    pub loss_resistance: f64,
    pub control: ControlMode,
    pub setpoints: Setpoints,
}

impl Converter {
    /// Lumped series impedance Z_tr + Z_c + r_loss.
    pub fn branch_impedance(&self) -> Complex64 {
        self.transformer_impedance + self.reactor_impedance + Complex64::new(self.loss_resistance, 0.0)
    }

    pub fn branch_admittance(&self) -> Result<Complex64, GridError> {
        lump_converter_branch(
            self.transformer_impedance,
            self.reactor_impedance,
            self.loss_resistance,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base: PerUnitBase,
    pub ac_buses: Vec<AcBus>,
    pub ac_lines: Vec<AcLine>,
    pub dc_buses: Vec<DcBus>,
    pub dc_lines: Vec<DcLine>,
    pub converters: Vec<Converter>,
}
