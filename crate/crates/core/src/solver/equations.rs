//! Mismatch vector and its exact derivatives.
//!
//! Every quantity that feeds a mismatch row carries a sparse gradient over the
//! extended columns (state then injections). Magnitude and DC voltage columns
//! hold `U·∂/∂U`. Converter terms are tracked separately from the network
//! terms so the coupling blocks of the Jacobian can be reported on their own.

use crate::grid::{ControlMode, ValidatedCase};

use super::layout::{BusState, Injections, StateLayout, Unknown};
use super::{JacobianMatrix, SolverError};

/// Sparse gradient; duplicate columns are summed by consumers.
#[derive(Debug, Clone, Default)]
pub(crate) struct Lin(pub Vec<(usize, f64)>);

impl Lin {
    fn unit(col: usize) -> Self {
        Lin(vec![(col, 1.0)])
    }

    fn push(&mut self, col: Option<usize>, v: f64) {
        if let Some(c) = col {
            self.0.push((c, v));
        }
    }

    fn axpy(&mut self, a: f64, other: &Lin) {
        if a != 0.0 {
            self.0.extend(other.0.iter().map(|&(c, v)| (c, a * v)));
        }
    }

    fn scaled(&self, a: f64) -> Lin {
        Lin(self.0.iter().map(|&(c, v)| (c, a * v)).collect())
    }
}

/// Operating point of one converter station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationState {
    /// Active power drawn from the PCC.
    pub p_s: f64,
    /// Reactive power drawn from the PCC.
    pub q_s: f64,
    /// Active power delivered to the DC bus.
    pub p_dc: f64,
    /// Converter loss `P_s − P_dc`.
    pub loss: f64,
}

struct StationEval {
    state: StationState,
    g_ps: Lin,
    g_qs: Lin,
    g_pdc: Lin,
}

pub(crate) struct Evaluation {
    pub f: Vec<f64>,
    pub p_calc: Vec<f64>,
    pub q_calc: Vec<f64>,
    pub pdc_calc: Vec<f64>,
    pub stations: Vec<StationState>,
    /// (row, extended column, value)
    pub network: Vec<(usize, usize, f64)>,
    pub coupling: Vec<(usize, usize, f64)>,
    /// Rows receiving any converter term.
    pub converter_rows: Vec<bool>,
}

impl Evaluation {
    pub fn max_abs(&self) -> f64 {
        self.f.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn jacobian(&self, layout: &StateLayout) -> JacobianMatrix {
        let n = layout.len();
        let keep = |t: &&(usize, usize, f64)| t.1 < n;
        JacobianMatrix {
            dim: n,
            n_ang: layout.n_ang,
            n_mag: layout.n_mag,
            network: self.network.iter().filter(keep).copied().collect(),
            coupling: self.coupling.iter().filter(keep).copied().collect(),
        }
    }

    /// `∂F/∂W` as (row, injection column, value).
    pub fn injection_partials(&self, layout: &StateLayout) -> Vec<(usize, usize, f64)> {
        let n = layout.len();
        self.network
            .iter()
            .chain(&self.coupling)
            .filter(|t| t.1 >= n)
            .map(|&(r, c, v)| (r, c - n, v))
            .collect()
    }
}

/// Network injection at AC bus `i` and its gradient over state columns.
fn ac_injection(vc: &ValidatedCase, layout: &StateLayout, st: &BusState, i: usize, grad: bool) -> (f64, f64, Lin, Lin) {
    let (mut p, mut q) = (0.0, 0.0);
    let (mut gp, mut gq) = (Lin::default(), Lin::default());
    let (mut dp_di, mut dq_di, mut up_i, mut uq_i) = (0.0, 0.0, 0.0, 0.0);
    for &(j, y) in &vc.ybus[i] {
        let (s, c) = (st.va[i] - st.va[j]).sin_cos();
        let uu = st.vm[i] * st.vm[j];
        let tp = uu * (y.re * c + y.im * s);
        let tq = uu * (y.re * s - y.im * c);
        p += tp;
        q += tq;
        if !grad {
            continue;
        }
        if j == i {
            up_i += 2.0 * tp;
            uq_i += 2.0 * tq;
        } else {
            dp_di -= tq;
            dq_di += tp;
            up_i += tp;
            uq_i += tq;
            gp.push(layout.ang_col[j], tq);
            gq.push(layout.ang_col[j], -tp);
            gp.push(layout.mag_col[j], tp);
            gq.push(layout.mag_col[j], tq);
        }
    }
    if grad {
        gp.push(layout.ang_col[i], dp_di);
        gq.push(layout.ang_col[i], dq_di);
        gp.push(layout.mag_col[i], up_i);
        gq.push(layout.mag_col[i], uq_i);
    }
    (p, q, gp, gq)
}

fn dc_injection(vc: &ValidatedCase, layout: &StateLayout, st: &BusState, d: usize, grad: bool) -> (f64, Lin) {
    let mut p = 0.0;
    let mut g = Lin::default();
    let mut u_d = 0.0;
    for &(j, gij) in &vc.gdc[d] {
        let t = st.vd[d] * gij * st.vd[j];
        p += t;
        if !grad {
            continue;
        }
        if j == d {
            u_d += 2.0 * t;
        } else {
            u_d += t;
            g.push(layout.dc_col[j], t);
        }
    }
    if grad {
        g.push(layout.dc_col[d], u_d);
    }
    (p, g)
}

/// Evaluates the mismatch `scheduled − calculated` and, when `grad` is set,
/// the full extended Jacobian.
pub(crate) fn evaluate(
    vc: &ValidatedCase,
    layout: &StateLayout,
    st: &BusState,
    inj: &Injections,
    grad: bool,
) -> Result<Evaluation, SolverError> {
    let n_ac = vc.n_ac();
    let n_dc = vc.n_dc();
    if inj.p_ac.len() != n_ac || inj.q_ac.len() != n_ac || inj.p_dc.len() != n_dc {
        return Err(SolverError::InvalidArgument("injection dimensions do not match the case".into()));
    }

    let mut p_calc = vec![0.0; n_ac];
    let mut q_calc = vec![0.0; n_ac];
    let mut gp_calc = vec![Lin::default(); n_ac];
    let mut gq_calc = vec![Lin::default(); n_ac];
    for i in 0..n_ac {
        let (p, q, gp, gq) = ac_injection(vc, layout, st, i, grad);
        p_calc[i] = p;
        q_calc[i] = q;
        gp_calc[i] = gp;
        gq_calc[i] = gq;
    }
    let mut pdc_calc = vec![0.0; n_dc];
    let mut gpdc_calc = vec![Lin::default(); n_dc];
    for d in 0..n_dc {
        let (p, g) = dc_injection(vc, layout, st, d, grad);
        pdc_calc[d] = p;
        gpdc_calc[d] = g;
    }

    let mut stations = Vec::with_capacity(vc.stations.len());
    for (k, s) in vc.stations.iter().enumerate() {
        let u_s = st.vm[s.pcc];
        let a = s.r / (u_s * u_s);
        let mut g_a = Lin::default();
        g_a.push(layout.mag_col[s.pcc], -2.0 * a);

        let (q, g_q) = if s.mode.controls_ac_voltage() {
            let others: f64 = vc.stations_at_ac[s.pcc]
                .iter()
                .filter(|&&o| o != k)
                .map(|&o| vc.stations[o].q_s_ref)
                .sum();
            let mut g = Lin::unit(layout.ext_q(s.pcc));
            g.axpy(-1.0, &gq_calc[s.pcc]);
            (inj.q_ac[s.pcc] - others - q_calc[s.pcc], g)
        } else {
            (s.q_s_ref, Lin::default())
        };

        let (p_s, p_dc, g_ps, g_pdc) = if s.mode.fixes_active_power() {
            let p_s = s.p_s_ref;
            let w = p_s * p_s + q * q;
            let mut g = g_a.scaled(-w);
            g.axpy(-2.0 * a * q, &g_q);
            (p_s, p_s - a * w, Lin::default(), g)
        } else {
            let (p_dc, g_pdc) = match s.mode {
                ControlMode::UdcQ | ControlMode::UdcUs => {
                    let mut g = gpdc_calc[s.dc].clone();
                    g.0.push((layout.ext_dc(s.dc), -1.0));
                    (pdc_calc[s.dc] - inj.p_dc[s.dc], g)
                }
                _ => {
                    let mut g = Lin::default();
                    g.push(layout.dc_col[s.dc], -st.vd[s.dc] / s.k_droop);
                    (s.p_dc_ref - (st.vd[s.dc] - s.u_dc_ref) / s.k_droop, g)
                }
            };
            let c = p_dc + a * q * q;
            let disc = 1.0 - 4.0 * a * c;
            if !(disc >= 0.0) {
                return Err(SolverError::ConverterOverload {
                    station: k,
                    p_dc,
                    u_s,
                });
            }
            let p_s = 2.0 * c / (1.0 + disc.sqrt());
            let denom = 1.0 - 2.0 * a * p_s;
            let mut g = g_pdc.clone();
            g.axpy(2.0 * a * q, &g_q);
            g.axpy(p_s * p_s + q * q, &g_a);
            (p_s, p_dc, g.scaled(1.0 / denom), g_pdc)
        };
        stations.push(StationEval {
            state: StationState {
                p_s,
                q_s: q,
                p_dc,
                loss: p_s - p_dc,
            },
            g_ps,
            g_qs: g_q,
            g_pdc,
        });
    }

    let n = layout.len();
    let mut f = vec![0.0; n];
    let mut network = Vec::new();
    let mut coupling = Vec::new();
    let mut converter_rows = vec![false; n];
    let emit = |out: &mut Vec<(usize, usize, f64)>, row: usize, a: f64, g: &Lin| {
        out.extend(g.0.iter().map(|&(c, v)| (row, c, a * v)));
    };
    for (row, u) in layout.unknowns.iter().enumerate() {
        match *u {
            Unknown::Angle(i) => {
                let mut r = inj.p_ac[i] - p_calc[i];
                for &k in &vc.stations_at_ac[i] {
                    r -= stations[k].state.p_s;
                    converter_rows[row] = true;
                    if grad {
                        emit(&mut coupling, row, -1.0, &stations[k].g_ps);
                    }
                }
                f[row] = r;
                if grad {
                    network.push((row, layout.ext_p(i), 1.0));
                    emit(&mut network, row, -1.0, &gp_calc[i]);
                }
            }
            Unknown::Magnitude(i) => {
                let mut r = inj.q_ac[i] - q_calc[i];
                for &k in &vc.stations_at_ac[i] {
                    r -= stations[k].state.q_s;
                    converter_rows[row] = true;
                    if grad {
                        emit(&mut coupling, row, -1.0, &stations[k].g_qs);
                    }
                }
                f[row] = r;
                if grad {
                    network.push((row, layout.ext_q(i), 1.0));
                    emit(&mut network, row, -1.0, &gq_calc[i]);
                }
            }
            Unknown::DcVoltage(d) => {
                let mut r = inj.p_dc[d] - pdc_calc[d];
                if let Some(k) = vc.station_at_dc[d] {
                    r += stations[k].state.p_dc;
                    converter_rows[row] = true;
                    if grad {
                        emit(&mut coupling, row, 1.0, &stations[k].g_pdc);
                    }
                }
                f[row] = r;
                if grad {
                    network.push((row, layout.ext_dc(d), 1.0));
                    emit(&mut network, row, -1.0, &gpdc_calc[d]);
                }
            }
        }
    }

    Ok(Evaluation {
        f,
        p_calc,
        q_calc,
        pdc_calc,
        stations: stations.into_iter().map(|s| s.state).collect(),
        network,
        coupling,
        converter_rows,
    })
}
