use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{AcBusKind, ControlMode, DcBusKind, GridError, NetworkCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StationClass {
    Power,
    Voltage,
}

/// Y_ck = 1 / (Z_tr + Z_c + r_loss). The filter branch is left out.
pub fn lump_converter_branch(
    z_tr: Complex64,
    z_c: Complex64,
    r_loss: f64,
) -> Result<Complex64, GridError> {
    let z = z_tr + z_c + Complex64::new(r_loss, 0.0);
    if z.norm() == 0.0 {
        return Err(GridError::SingularBranch);
    }
    let y = Complex64::new(1.0, 0.0) / z;
    if !(y.re.is_finite() && y.im.is_finite()) {
        return Err(GridError::SingularBranch);
    }
    Ok(y)
}

/// Powers at both ends of the lumped converter branch.
///
/// `p_s`/`q_s` flow from the PCC into the branch, `p_c`/`q_c` arrive at the
/// valve; `p_c` is the power handed to the DC grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterInjections {
    pub p_s: f64,
    pub q_s: f64,
    pub p_c: f64,
    pub q_c: f64,
}

pub fn converter_injections(
    u_s: f64,
    delta_s: f64,
    u_c: f64,
    delta_c: f64,
    y_ck: Complex64,
) -> Result<ConverterInjections, GridError> {
    if u_s <= 0.0 || u_c < 0.0 {
        return Err(GridError::InvalidArgument(format!(
            "converter voltages must be positive (u_s = {u_s}, u_c = {u_c})"
        )));
    }
    let (g, b) = (y_ck.re, y_ck.im);
    let (sin, cos) = (delta_s - delta_c).sin_cos();
    let usc = u_s * u_c;
    Ok(ConverterInjections {
        p_s: u_s * u_s * g - usc * (g * cos + b * sin),
        q_s: -u_s * u_s * b - usc * (g * sin - b * cos),
        p_c: -u_c * u_c * g + usc * (g * cos - b * sin),
        q_c: u_c * u_c * b - usc * (g * sin + b * cos),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterLoss {
    pub dp: f64,
    pub dq: f64,
}

/// Active and reactive power consumed inside the station.
pub fn converter_loss(
    p_s: f64,
    q_s: f64,
    u_s: f64,
    r_ck: f64,
    x_ck: f64,
) -> Result<ConverterLoss, GridError> {
    if u_s == 0.0 {
        return Err(GridError::DivideByZero("PCC voltage is zero".into()));
    }
    let i2 = (p_s * p_s + q_s * q_s) / (u_s * u_s);
    Ok(ConverterLoss {
        dp: i2 * r_ck,
        dq: i2 * x_ck,
    })
}

/// PCC active balance `p_s - ΔP - p_dc`; zero at a consistent operating point.
pub fn pcc_power_balance_residual(
    p_s: f64,
    q_s: f64,
    u_s: f64,
    r_ck: f64,
    p_dc: f64,
) -> Result<f64, GridError> {
    let loss = converter_loss(p_s, q_s, u_s, r_ck, 0.0)?;
    Ok(p_s - loss.dp - p_dc)
}

/// DC-side power of a droop station at DC voltage `u_dk`.
pub fn droop_power(u_dk: f64, u_ref: f64, p_ref: f64, k_droop: f64) -> Result<f64, GridError> {
    if !(k_droop > 0.0) {
        return Err(GridError::InvalidArgument(format!(
            "droop slope must be positive, got {k_droop}"
        )));
    }
    Ok(-(u_dk - u_ref) / k_droop + p_ref)
}

/// Equivalent series resistance that reproduces the station loss
/// `p_ac - p_dc` at the given operating point (unity power factor, rated
/// AC voltage).
pub fn loss_equivalent_resistance(p_ac_pu: f64, p_dc_pu: f64) -> Result<f64, GridError> {
    if p_ac_pu == 0.0 || !p_ac_pu.is_finite() {
        return Err(GridError::InvalidArgument(
            "AC-side power must be non-zero".into(),
        ));
    }
    let loss = p_ac_pu - p_dc_pu;
    if loss < 0.0 {
        log::warn!(
            "negative converter loss: p_ac = {p_ac_pu}, p_dc = {p_dc_pu} gives r = {}",
            loss / (2.0 / 3.0 * p_ac_pu).powi(2)
        );
    }
    Ok(loss / (2.0 / 3.0 * p_ac_pu).powi(2))
}

/// Equivalent AC node, DC node handling and station class of a control mode.
///
/// Droop stations are reported as [`DcBusKind::Droop`]: their DC voltage is
/// solved for, governed by the droop characteristic.
pub fn classify_nodes(mode: ControlMode) -> (AcBusKind, DcBusKind, StationClass) {
    match mode {
        ControlMode::PQ => (AcBusKind::PQ, DcBusKind::ConstP, StationClass::Power),
        ControlMode::PUs => (AcBusKind::PV, DcBusKind::ConstP, StationClass::Power),
        ControlMode::UdcQ => (AcBusKind::PQ, DcBusKind::ConstV, StationClass::Voltage),
        ControlMode::UdcUs => (AcBusKind::PV, DcBusKind::ConstV, StationClass::Voltage),
        ControlMode::DroopQ => (AcBusKind::PQ, DcBusKind::Droop, StationClass::Voltage),
        ControlMode::DroopUs => (AcBusKind::PV, DcBusKind::Droop, StationClass::Voltage),
    }
}

/// Conductance of every DC line, in case order (parallel lines kept apart).
pub fn dc_line_conductances(case: &NetworkCase) -> Result<Vec<f64>, GridError> {
    case.dc_lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            if line.resistance > 0.0 && line.resistance.is_finite() {
                Ok(1.0 / line.resistance)
            } else {
                Err(GridError::InvalidCase(format!(
                    "dc line {i} ({}-{}): non-positive resistance {}",
                    line.from, line.to, line.resistance
                )))
            }
        })
        .collect()
}
