use crate::grid::{AcBusKind, DcBusKind, ValidatedCase};

use super::SolverError;

/// One column of the Newton state (and the matching mismatch row).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unknown {
    /// Voltage angle of a non-slack AC bus; row is its active-power balance.
    Angle(usize),
    /// Voltage magnitude of a PQ bus; row is its reactive-power balance.
    Magnitude(usize),
    /// Voltage of a DC bus without fixed voltage; row is its power balance.
    DcVoltage(usize),
}

/// Column layout shared by the state vector, the mismatch rows and the
/// Jacobian. Magnitude columns use the `ΔU/U` convention.
///
/// Extended columns append the injection variables after the state:
/// AC active injections of every bus, then AC reactive, then DC.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub(crate) ang_col: Vec<Option<usize>>,
    pub(crate) mag_col: Vec<Option<usize>>,
    pub(crate) dc_col: Vec<Option<usize>>,
    pub(crate) unknowns: Vec<Unknown>,
    pub(crate) n_ang: usize,
    pub(crate) n_mag: usize,
    n_ac: usize,
    n_dc: usize,
}

impl StateLayout {
    pub fn new(vc: &ValidatedCase) -> Self {
        let n_ac = vc.n_ac();
        let n_dc = vc.n_dc();
        let mut unknowns = Vec::new();
        let mut ang_col = vec![None; n_ac];
        let mut mag_col = vec![None; n_ac];
        let mut dc_col = vec![None; n_dc];
        for i in 0..n_ac {
            if vc.ac_kind[i] != AcBusKind::Slack {
                ang_col[i] = Some(unknowns.len());
                unknowns.push(Unknown::Angle(i));
            }
        }
        let n_ang = unknowns.len();
        for i in 0..n_ac {
            if vc.ac_kind[i] == AcBusKind::PQ {
                mag_col[i] = Some(unknowns.len());
                unknowns.push(Unknown::Magnitude(i));
            }
        }
        let n_mag = unknowns.len() - n_ang;
        for d in 0..n_dc {
            if vc.dc_kind[d] != DcBusKind::ConstV {
                dc_col[d] = Some(unknowns.len());
                unknowns.push(Unknown::DcVoltage(d));
            }
        }
        Self {
            ang_col,
            mag_col,
            dc_col,
            unknowns,
            n_ang,
            n_mag,
            n_ac,
            n_dc,
        }
    }

    pub fn len(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unknowns.is_empty()
    }

    pub fn unknowns(&self) -> &[Unknown] {
        &self.unknowns
    }

    pub fn n_angles(&self) -> usize {
        self.n_ang
    }

    pub fn n_magnitudes(&self) -> usize {
        self.n_mag
    }

    pub fn n_dc_voltages(&self) -> usize {
        self.len() - self.n_ang - self.n_mag
    }

    pub fn angle_column(&self, bus: usize) -> Option<usize> {
        self.ang_col[bus]
    }

    pub fn magnitude_column(&self, bus: usize) -> Option<usize> {
        self.mag_col[bus]
    }

    pub fn dc_column(&self, bus: usize) -> Option<usize> {
        self.dc_col[bus]
    }

    /// Number of injection variables `ΔW`: P and Q of every AC bus, P of every DC bus.
    pub fn n_injections(&self) -> usize {
        2 * self.n_ac + self.n_dc
    }

    pub fn injection_p(&self, bus: usize) -> usize {
        bus
    }

    pub fn injection_q(&self, bus: usize) -> usize {
        self.n_ac + bus
    }

    pub fn injection_dc(&self, bus: usize) -> usize {
        2 * self.n_ac + bus
    }

    pub(crate) fn ext_p(&self, bus: usize) -> usize {
        self.len() + self.injection_p(bus)
    }

    pub(crate) fn ext_q(&self, bus: usize) -> usize {
        self.len() + self.injection_q(bus)
    }

    pub(crate) fn ext_dc(&self, bus: usize) -> usize {
        self.len() + self.injection_dc(bus)
    }

    /// Starting point: flat (1.0 p.u., 0 rad) or the values stored in the case.
    /// Setpoint magnitudes of slack/PV buses and fixed DC voltages always apply.
    pub fn initial_state(&self, vc: &ValidatedCase, flat_start: bool) -> BusState {
        let case = vc.case();
        let mut va = vec![0.0; self.n_ac];
        let mut vm = vec![1.0; self.n_ac];
        let mut vd = vec![1.0; self.n_dc];
        for (i, bus) in case.ac_buses.iter().enumerate() {
            if !flat_start || vc.ac_kind[i] == AcBusKind::Slack {
                va[i] = bus.voltage_ang;
            }
            if !flat_start || vc.ac_kind[i] != AcBusKind::PQ {
                vm[i] = vc.ac_vset[i];
            }
        }
        for (d, bus) in case.dc_buses.iter().enumerate() {
            if vc.dc_kind[d] == DcBusKind::ConstV {
                vd[d] = vc.dc_vset[d];
            } else if !flat_start {
                vd[d] = bus.voltage;
            }
        }
        BusState { va, vm, vd }
    }

    pub fn pack(&self, st: &BusState) -> StateVector {
        StateVector(
            self.unknowns
                .iter()
                .map(|u| match *u {
                    Unknown::Angle(i) => st.va[i],
                    Unknown::Magnitude(i) => st.vm[i],
                    Unknown::DcVoltage(d) => st.vd[d],
                })
                .collect(),
        )
    }

    /// Expands a state vector to every bus, filling fixed quantities from setpoints.
    pub fn unpack(&self, vc: &ValidatedCase, x: &StateVector) -> Result<BusState, SolverError> {
        if x.0.len() != self.len() {
            return Err(SolverError::InvalidArgument(format!(
                "state vector has {} entries, layout expects {}",
                x.0.len(),
                self.len()
            )));
        }
        let mut st = self.initial_state(vc, true);
        for (u, &v) in self.unknowns.iter().zip(&x.0) {
            match *u {
                Unknown::Angle(i) => st.va[i] = v,
                Unknown::Magnitude(i) => st.vm[i] = v,
                Unknown::DcVoltage(d) => st.vd[d] = v,
            }
        }
        Ok(st)
    }
}

/// Voltages at every bus.
#[derive(Debug, Clone, PartialEq)]
pub struct BusState {
    /// AC angles, rad
    pub va: Vec<f64>,
    /// AC magnitudes, p.u.
    pub vm: Vec<f64>,
    /// DC voltages, p.u.
    pub vd: Vec<f64>,
}

/// Values of the unknowns in layout order, physical (unscaled) units.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Net scheduled injections by bus position (generation positive).
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    pub p_ac: Vec<f64>,
    pub q_ac: Vec<f64>,
    pub p_dc: Vec<f64>,
}

impl Injections {
    pub fn scheduled(vc: &ValidatedCase) -> Self {
        let (p_ac, q_ac, p_dc) = vc.scheduled_injections();
        Self { p_ac, q_ac, p_dc }
    }

    /// Flattened in injection-column order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut w = self.p_ac.clone();
        w.extend_from_slice(&self.q_ac);
        w.extend_from_slice(&self.p_dc);
        w
    }

    pub fn from_slice(w: &[f64], n_ac: usize, n_dc: usize) -> Result<Self, SolverError> {
        if w.len() != 2 * n_ac + n_dc {
            return Err(SolverError::InvalidArgument(format!(
                "injection vector has {} entries, expected {}",
                w.len(),
                2 * n_ac + n_dc
            )));
        }
        Ok(Self {
            p_ac: w[..n_ac].to_vec(),
            q_ac: w[n_ac..2 * n_ac].to_vec(),
            p_dc: w[2 * n_ac..].to_vec(),
        })
    }

    pub fn add_at(&mut self, column: usize, delta: f64) {
        let n_ac = self.p_ac.len();
        if column < n_ac {
            self.p_ac[column] += delta;
        } else if column < 2 * n_ac {
            self.q_ac[column - n_ac] += delta;
        } else {
            self.p_dc[column - 2 * n_ac] += delta;
        }
    }
}
