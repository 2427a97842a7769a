use std::collections::HashMap;

use serde::Serialize;

use crate::grid::ValidatedCase;

use super::layout::{BusState, StateLayout};
use super::SolverError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcLineFlow {
    pub from: usize,
    pub to: usize,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub p_loss: f64,
    pub q_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcLineFlow {
    pub from: usize,
    pub to: usize,
    pub p_from: f64,
    pub p_to: f64,
    pub loss: f64,
}

fn ac_end(vc: &ValidatedCase, st: &BusState, line: usize, reverse: bool) -> (f64, f64) {
    let l = &vc.case.ac_lines[line];
    let (mut i, mut j) = vc.ac_lines[line];
    if reverse {
        std::mem::swap(&mut i, &mut j);
    }
    let (g, b) = (l.series_admittance.re, l.series_admittance.im);
    let (s, c) = (st.va[i] - st.va[j]).sin_cos();
    let (ui, uj) = (st.vm[i], st.vm[j]);
    let p = ui * ui * g - ui * uj * (g * c + b * s);
    let q = -ui * ui * (b + l.shunt_susceptance / 2.0) - ui * uj * (g * s - b * c);
    (p, q)
}

fn dc_end(vc: &ValidatedCase, st: &BusState, line: usize, reverse: bool) -> f64 {
    let (mut i, mut j) = vc.dc_lines[line];
    if reverse {
        std::mem::swap(&mut i, &mut j);
    }
    st.vd[i] * (st.vd[i] - st.vd[j]) / vc.case.dc_lines[line].resistance
}

/// Line flows at both ends from the bus voltages.
pub fn branch_flows(vc: &ValidatedCase, st: &BusState) -> (Vec<AcLineFlow>, Vec<DcLineFlow>) {
    let ac = (0..vc.ac_lines.len())
        .map(|k| {
            let (pf, qf) = ac_end(vc, st, k, false);
            let (pt, qt) = ac_end(vc, st, k, true);
            let l = &vc.case.ac_lines[k];
            AcLineFlow {
                from: l.from,
                to: l.to,
                p_from: pf,
                q_from: qf,
                p_to: pt,
                q_to: qt,
                p_loss: pf + pt,
                q_loss: qf + qt,
            }
        })
        .collect();
    let dc = (0..vc.dc_lines.len())
        .map(|k| {
            let pf = dc_end(vc, st, k, false);
            let pt = dc_end(vc, st, k, true);
            let l = &vc.case.dc_lines[k];
            DcLineFlow {
                from: l.from,
                to: l.to,
                p_from: pf,
                p_to: pt,
                loss: pf + pt,
            }
        })
        .collect();
    (ac, dc)
}

/// Quantity reported by the probabilistic analyses. Line flows are taken at
/// the sending (`from`) end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VariableKind {
    AcVoltage { bus: usize },
    DcVoltage { bus: usize },
    AcActiveFlow { line: usize },
    AcReactiveFlow { line: usize },
    DcFlow { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VariableClass {
    U,
    P,
    Q,
    Udc,
    Pdc,
}

impl VariableClass {
    pub const ALL: [VariableClass; 5] = [
        VariableClass::U,
        VariableClass::P,
        VariableClass::Q,
        VariableClass::Udc,
        VariableClass::Pdc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VariableClass::U => "U",
            VariableClass::P => "P",
            VariableClass::Q => "Q",
            VariableClass::Udc => "u_dc",
            VariableClass::Pdc => "P_dc",
        }
    }

    /// Name prefix used in variable names.
    pub fn prefix(self) -> &'static str {
        match self {
            VariableClass::U => "U_ac",
            VariableClass::P => "P_ac",
            VariableClass::Q => "Q_ac",
            VariableClass::Udc => "U_dc",
            VariableClass::Pdc => "P_dc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MonitoredVariable {
    pub name: String,
    pub kind: VariableKind,
}

impl MonitoredVariable {
    pub fn class(&self) -> VariableClass {
        match self.kind {
            VariableKind::AcVoltage { .. } => VariableClass::U,
            VariableKind::DcVoltage { .. } => VariableClass::Udc,
            VariableKind::AcActiveFlow { .. } => VariableClass::P,
            VariableKind::AcReactiveFlow { .. } => VariableClass::Q,
            VariableKind::DcFlow { .. } => VariableClass::Pdc,
        }
    }

    /// Value at the given bus state.
    pub fn value(&self, vc: &ValidatedCase, st: &BusState) -> f64 {
        match self.kind {
            VariableKind::AcVoltage { bus } => st.vm[bus],
            VariableKind::DcVoltage { bus } => st.vd[bus],
            VariableKind::AcActiveFlow { line } => ac_end(vc, st, line, false).0,
            VariableKind::AcReactiveFlow { line } => ac_end(vc, st, line, false).1,
            VariableKind::DcFlow { line } => dc_end(vc, st, line, false),
        }
    }

    /// Partial derivatives with respect to the state unknowns, physical units.
    pub(crate) fn gradient(&self, vc: &ValidatedCase, layout: &StateLayout, st: &BusState) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut push = |col: Option<usize>, v: f64| {
            if let Some(c) = col {
                out.push((c, v));
            }
        };
        match self.kind {
            VariableKind::AcVoltage { bus } => push(layout.mag_col[bus], 1.0),
            VariableKind::DcVoltage { bus } => push(layout.dc_col[bus], 1.0),
            VariableKind::AcActiveFlow { line } | VariableKind::AcReactiveFlow { line } => {
                let l = &vc.case.ac_lines[line];
                let (i, j) = vc.ac_lines[line];
                let (g, b) = (l.series_admittance.re, l.series_admittance.im);
                let (s, c) = (st.va[i] - st.va[j]).sin_cos();
                let (ui, uj) = (st.vm[i], st.vm[j]);
                let gc_bs = g * c + b * s;
                let gs_bc = g * s - b * c;
                if matches!(self.kind, VariableKind::AcActiveFlow { .. }) {
                    push(layout.ang_col[i], ui * uj * gs_bc);
                    push(layout.ang_col[j], -ui * uj * gs_bc);
                    push(layout.mag_col[i], 2.0 * ui * g - uj * gc_bs);
                    push(layout.mag_col[j], -ui * gc_bs);
                } else {
                    push(layout.ang_col[i], -ui * uj * gc_bs);
                    push(layout.ang_col[j], ui * uj * gc_bs);
                    push(
                        layout.mag_col[i],
                        -2.0 * ui * (b + l.shunt_susceptance / 2.0) - uj * gs_bc,
                    );
                    push(layout.mag_col[j], -ui * gs_bc);
                }
            }
            VariableKind::DcFlow { line } => {
                let (i, j) = vc.dc_lines[line];
                let g = 1.0 / vc.case.dc_lines[line].resistance;
                push(layout.dc_col[i], g * (2.0 * st.vd[i] - st.vd[j]));
                push(layout.dc_col[j], -g * st.vd[i]);
            }
        }
        out
    }
}

fn line_names(ends: impl Iterator<Item = (usize, usize)>) -> Vec<String> {
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    ends.map(|(f, t)| {
        let n = seen.entry((f, t)).or_insert(0);
        *n += 1;
        if *n == 1 {
            format!("{f}-{t}")
        } else {
            format!("{f}-{t}#{n}")
        }
    })
    .collect()
}

/// Every bus voltage and every line flow, in a fixed order.
pub fn all_variables(vc: &ValidatedCase) -> Vec<MonitoredVariable> {
    let case = vc.case();
    let mut out = Vec::new();
    for (bus, b) in case.ac_buses.iter().enumerate() {
        out.push(MonitoredVariable {
            name: format!("U_ac[{}]", b.id),
            kind: VariableKind::AcVoltage { bus },
        });
    }
    for (bus, b) in case.dc_buses.iter().enumerate() {
        out.push(MonitoredVariable {
            name: format!("U_dc[{}]", b.id),
            kind: VariableKind::DcVoltage { bus },
        });
    }
    let ac_names = line_names(case.ac_lines.iter().map(|l| (l.from, l.to)));
    for (line, n) in ac_names.iter().enumerate() {
        out.push(MonitoredVariable {
            name: format!("P_ac[{n}]"),
            kind: VariableKind::AcActiveFlow { line },
        });
    }
    for (line, n) in ac_names.iter().enumerate() {
        out.push(MonitoredVariable {
            name: format!("Q_ac[{n}]"),
            kind: VariableKind::AcReactiveFlow { line },
        });
    }
    let dc_names = line_names(case.dc_lines.iter().map(|l| (l.from, l.to)));
    for (line, n) in dc_names.iter().enumerate() {
        out.push(MonitoredVariable {
            name: format!("P_dc[{n}]"),
            kind: VariableKind::DcFlow { line },
        });
    }
    out
}

/// Restricts [`all_variables`] to entries matching a filter item, either an
/// exact name (`U_ac[7]`) or a class prefix (`U_ac`, `P_dc`). An empty filter
/// selects everything.
pub fn select_variables(vc: &ValidatedCase, filter: &[String]) -> Result<Vec<MonitoredVariable>, SolverError> {
    let all = all_variables(vc);
    if filter.is_empty() {
        return Ok(all);
    }
    for item in filter {
        let known = all
            .iter()
            .any(|v| &v.name == item || v.class().prefix() == item);
        if !known {
            return Err(SolverError::InvalidArgument(format!("unknown monitored variable '{item}'")));
        }
    }
    Ok(all
        .into_iter()
        .filter(|v| filter.iter().any(|f| *f == v.name || f == v.class().prefix()))
        .collect())
}
