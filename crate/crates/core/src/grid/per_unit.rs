use serde::{Deserialize, Serialize};

use super::GridError;

/// Coupled AC and DC per-unit bases.
///
/// The DC power base equals the AC one and the DC voltage base is
/// `2√2/√3` times the AC line voltage base. With this choice the converter
/// coupling reduces to `u_c = M·u_d` and `i_c = 2/(M cos φ)·i_d` in per-unit,
/// where `M` is the modulation ratio and `φ` the current lag angle; the
/// unified solver eliminates both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    /// MVA
    pub s_ac_base: f64,
    /// kV (line-to-line)
    pub u_ac_base: f64,
    /// MW
    pub s_dc_base: f64,
    /// kV
    pub u_dc_base: f64,
}

/// `2√2/√3`
pub const DC_VOLTAGE_BASE_RATIO: f64 = 1.632_993_161_855_452_3;

pub fn per_unit_bases(s_ac: f64, u_ac: f64) -> Result<PerUnitBase, GridError> {
    if !(s_ac > 0.0 && s_ac.is_finite()) {
        return Err(GridError::InvalidArgument(format!(
            "base power must be positive, got {s_ac}"
        )));
    }
    if !(u_ac > 0.0 && u_ac.is_finite()) {
        return Err(GridError::InvalidArgument(format!(
            "base voltage must be positive, got {u_ac}"
        )));
    }
    Ok(PerUnitBase {
        s_ac_base: s_ac,
        u_ac_base: u_ac,
        s_dc_base: s_ac,
        u_dc_base: DC_VOLTAGE_BASE_RATIO * u_ac,
    })
}

impl PerUnitBase {
    /// kA
    pub fn ac_current_base(&self) -> f64 {
        self.s_ac_base / (3f64.sqrt() * self.u_ac_base)
    }

    /// Ω
    pub fn ac_impedance_base(&self) -> f64 {
        self.u_ac_base * self.u_ac_base / self.s_ac_base
    }

    /// kA
    pub fn dc_current_base(&self) -> f64 {
        self.s_dc_base / self.u_dc_base
    }

    /// Ω
    pub fn dc_resistance_base(&self) -> f64 {
        self.u_dc_base * self.u_dc_base / self.s_dc_base
    }

    pub fn ac_voltage_to_pu(&self, kv: f64) -> f64 {
        kv / self.u_ac_base
    }

    pub fn ac_voltage_to_physical(&self, pu: f64) -> f64 {
        pu * self.u_ac_base
    }

    pub fn dc_voltage_to_pu(&self, kv: f64) -> f64 {
        kv / self.u_dc_base
    }

    pub fn dc_voltage_to_physical(&self, pu: f64) -> f64 {
        pu * self.u_dc_base
    }

    pub fn ac_power_to_pu(&self, mva: f64) -> f64 {
        mva / self.s_ac_base
    }

    pub fn ac_power_to_physical(&self, pu: f64) -> f64 {
        pu * self.s_ac_base
    }

    pub fn dc_power_to_pu(&self, mw: f64) -> f64 {
        mw / self.s_dc_base
    }

    pub fn dc_power_to_physical(&self, pu: f64) -> f64 {
        pu * self.s_dc_base
    }

    pub fn ac_impedance_to_pu(&self, ohm: f64) -> f64 {
        ohm / self.ac_impedance_base()
    }

    pub fn ac_impedance_to_physical(&self, pu: f64) -> f64 {
        pu * self.ac_impedance_base()
    }

    pub fn dc_resistance_to_pu(&self, ohm: f64) -> f64 {
        ohm / self.dc_resistance_base()
    }

    pub fn dc_resistance_to_physical(&self, pu: f64) -> f64 {
        pu * self.dc_resistance_base()
    }

    pub fn ac_current_to_pu(&self, ka: f64) -> f64 {
        ka / self.ac_current_base()
    }

    pub fn ac_current_to_physical(&self, pu: f64) -> f64 {
        pu * self.ac_current_base()
    }

    pub fn dc_current_to_pu(&self, ka: f64) -> f64 {
        ka / self.dc_current_base()
    }

    pub fn dc_current_to_physical(&self, pu: f64) -> f64 {
        pu * self.dc_current_base()
    }
}
