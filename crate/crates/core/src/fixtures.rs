//! Small networks shared by unit tests.

use num_complex::Complex64;

use crate::grid::{
    per_unit_bases, validate_case, AcBus, AcBusKind, AcLine, ControlMode, Converter, DcBus, DcBusKind, DcLine,
    NetworkCase, Setpoints, ValidatedCase,
};

fn ac_bus(id: usize, kind: AcBusKind, p: f64, q: f64) -> AcBus {
    AcBus {
        id,
        kind,
        voltage_mag: 1.0,
        voltage_ang: 0.0,
        p_inject: p,
        q_inject: q,
    }
}

fn station(pcc: usize, dc: usize, mode: ControlMode) -> Converter {
    Converter {
        pcc_bus: pcc,
        dc_bus: dc,
        transformer_impedance: Complex64::new(0.00272, 0.0203),
        filter_susceptance: 0.04899,
        reactor_impedance: Complex64::new(0.0181, 0.0297),
        loss_resistance: 0.0,
        control: mode,
        setpoints: Setpoints {
            u_dc_ref: Some(1.0),
            u_s_ref: Some(1.0),
            p_s_ref: Some(0.1),
            q_s_ref: Some(0.02),
            k_droop: Some(0.05),
            p_dc_ref: Some(0.05),
        },
    }
}

/// Six AC buses, three stations (U_dc-Q, P-Q, P-Q) on a three-bus DC ring.
pub fn small_mtdc() -> ValidatedCase {
    let dc = |id| DcBus {
        id,
        kind: DcBusKind::Pure,
        voltage: 1.0,
        p_inject: 0.0,
    };
    let case = NetworkCase {
        name: "small-mtdc".into(),
        base: per_unit_bases(1.0, 25.64).unwrap(),
        ac_buses: vec![
            ac_bus(1, AcBusKind::Slack, 0.0, 0.0),
            ac_bus(2, AcBusKind::PQ, -0.08, -0.03),
            ac_bus(3, AcBusKind::PQ, -0.05, -0.02),
            ac_bus(4, AcBusKind::PQ, -0.06, -0.01),
            ac_bus(5, AcBusKind::PQ, -0.04, -0.02),
            ac_bus(6, AcBusKind::PQ, 0.0, 0.0),
        ],
        ac_lines: vec![
            AcLine::from_impedance(1, 2, 0.02, 0.06, 0.02),
            AcLine::from_impedance(2, 3, 0.03, 0.05, 0.01),
            AcLine::from_impedance(3, 4, 0.02, 0.04, 0.0),
            AcLine::from_impedance(4, 5, 0.025, 0.05, 0.01),
            AcLine::from_impedance(2, 6, 0.03, 0.07, 0.0),
            AcLine::from_impedance(5, 6, 0.02, 0.05, 0.0),
        ],
        dc_buses: vec![dc(1), dc(2), dc(3)],
        dc_lines: vec![
            DcLine { from: 1, to: 2, resistance: 0.05 },
            DcLine { from: 2, to: 3, resistance: 0.04 },
            DcLine { from: 1, to: 3, resistance: 0.06 },
        ],
        converters: vec![
            station(3, 1, ControlMode::UdcQ),
            station(5, 2, ControlMode::PQ),
            station(6, 3, ControlMode::PQ),
        ],
    };
    validate_case(&case).unwrap()
}
