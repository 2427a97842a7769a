use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use super::{classify_nodes, AcBusKind, ControlMode, DcBusKind, NetworkCase};

/// One rule violation found by [`validate_case`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub rule: &'static str,
    /// e.g. `ac_bus 4`, `dc_line 2`, `converter 0`
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.rule, self.subject, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn has_rule(&self, rule: &str) -> bool {
        self.0.iter().any(|d| d.rule == rule)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} case violation(s)", self.0.len())?;
        for d in &self.0 {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

/// Converter data resolved against bus positions and its control mode.
#[derive(Debug, Clone, PartialEq)]
pub struct StationData {
    pub pcc: usize,
    pub dc: usize,
    pub mode: ControlMode,
    pub y: Complex64,
    /// Lumped series resistance and reactance.
    pub r: f64,
    pub x: f64,
    pub p_s_ref: f64,
    pub q_s_ref: f64,
    pub u_s_ref: f64,
    pub u_dc_ref: f64,
    pub k_droop: f64,
    pub p_dc_ref: f64,
}

/// A case that passed every rule, with bus ids resolved to positions and the
/// effective bus kinds implied by converter control modes.
#[derive(Debug, Clone)]
pub struct ValidatedCase {
    pub(crate) case: NetworkCase,
    pub(crate) ac_pos: HashMap<usize, usize>,
    pub(crate) dc_pos: HashMap<usize, usize>,
    pub(crate) ac_kind: Vec<AcBusKind>,
    /// Magnitude setpoint for slack/PV buses, initial value otherwise.
    pub(crate) ac_vset: Vec<f64>,
    pub(crate) dc_kind: Vec<DcBusKind>,
    pub(crate) dc_vset: Vec<f64>,
    pub(crate) ac_lines: Vec<(usize, usize)>,
    pub(crate) dc_lines: Vec<(usize, usize)>,
    /// Bus admittance rows, diagonal included, sorted by column.
    pub(crate) ybus: Vec<Vec<(usize, Complex64)>>,
    /// DC conductance (Laplacian) rows, diagonal included.
    pub(crate) gdc: Vec<Vec<(usize, f64)>>,
    pub(crate) stations: Vec<StationData>,
    pub(crate) stations_at_ac: Vec<Vec<usize>>,
    pub(crate) station_at_dc: Vec<Option<usize>>,
    /// Station whose reactive output balances the PCC (voltage-controlling).
    pub(crate) q_free_station: Vec<Option<usize>>,
}

impl ValidatedCase {
    pub fn case(&self) -> &NetworkCase {
        &self.case
    }

    pub fn name(&self) -> &str {
        &self.case.name
    }

    /// Station whose reactive output closes the balance at AC bus `i`.
    pub fn voltage_controlling_station(&self, i: usize) -> Option<usize> {
        self.q_free_station.get(i).copied().flatten()
    }

    pub fn n_ac(&self) -> usize {
        self.case.ac_buses.len()
    }

    pub fn n_dc(&self) -> usize {
        self.case.dc_buses.len()
    }

    pub fn ac_position(&self, id: usize) -> Option<usize> {
        self.ac_pos.get(&id).copied()
    }

    pub fn dc_position(&self, id: usize) -> Option<usize> {
        self.dc_pos.get(&id).copied()
    }

    pub fn ac_id(&self, pos: usize) -> usize {
        self.case.ac_buses[pos].id
    }

    pub fn dc_id(&self, pos: usize) -> usize {
        self.case.dc_buses[pos].id
    }

    pub fn effective_ac_kind(&self, pos: usize) -> AcBusKind {
        self.ac_kind[pos]
    }

    pub fn dc_kind(&self, pos: usize) -> DcBusKind {
        self.dc_kind[pos]
    }

    pub fn stations(&self) -> &[StationData] {
        &self.stations
    }

    pub fn ac_line_ends(&self) -> &[(usize, usize)] {
        &self.ac_lines
    }

    pub fn dc_line_ends(&self) -> &[(usize, usize)] {
        &self.dc_lines
    }

    /// Scheduled injections as given in the case, by bus position.
    pub fn scheduled_injections(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            self.case.ac_buses.iter().map(|b| b.p_inject).collect(),
            self.case.ac_buses.iter().map(|b| b.q_inject).collect(),
            self.case.dc_buses.iter().map(|b| b.p_inject).collect(),
        )
    }
}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn push(&mut self, rule: &'static str, subject: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            rule,
            subject: subject.into(),
            message: message.into(),
        });
    }
}

fn components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Checks every structural and physical rule of a case and resolves it for
/// the solver. All violations are reported at once.
pub fn validate_case(case: &NetworkCase) -> Result<ValidatedCase, Diagnostics> {
    let mut diag = Collector(Vec::new());

    let mut ac_pos = HashMap::new();
    for (i, bus) in case.ac_buses.iter().enumerate() {
        if ac_pos.insert(bus.id, i).is_some() {
            diag.push("duplicate bus id", format!("ac_bus {}", bus.id), "id used twice");
        }
        if !(bus.voltage_mag > 0.0 && bus.voltage_mag.is_finite()) {
            diag.push(
                "non-positive voltage",
                format!("ac_bus {}", bus.id),
                format!("voltage magnitude {} must be positive", bus.voltage_mag),
            );
        }
        if !(bus.p_inject.is_finite() && bus.q_inject.is_finite() && bus.voltage_ang.is_finite()) {
            diag.push("non-finite value", format!("ac_bus {}", bus.id), "injection or angle is not finite");
        }
    }
    let mut dc_pos = HashMap::new();
    for (i, bus) in case.dc_buses.iter().enumerate() {
        if dc_pos.insert(bus.id, i).is_some() {
            diag.push("duplicate bus id", format!("dc_bus {}", bus.id), "id used twice");
        }
        if !(bus.voltage > 0.0 && bus.voltage.is_finite()) {
            diag.push(
                "non-positive voltage",
                format!("dc_bus {}", bus.id),
                format!("voltage {} must be positive", bus.voltage),
            );
        }
        if !bus.p_inject.is_finite() {
            diag.push("non-finite value", format!("dc_bus {}", bus.id), "injection is not finite");
        }
    }

    let mut ac_lines = Vec::new();
    for (i, line) in case.ac_lines.iter().enumerate() {
        let subject = format!("ac_line {i}");
        match (ac_pos.get(&line.from), ac_pos.get(&line.to)) {
            (Some(&a), Some(&b)) if a != b => ac_lines.push((a, b)),
            (Some(_), Some(_)) => diag.push("self loop", subject.clone(), "endpoints must differ"),
            _ => diag.push(
                "unknown bus",
                subject.clone(),
                format!("endpoint {} or {} does not exist", line.from, line.to),
            ),
        }
        let y = line.series_admittance;
        if !(y.re.is_finite() && y.im.is_finite()) || y.norm() == 0.0 || !line.shunt_susceptance.is_finite() {
            diag.push("non-finite admittance", subject, "series admittance must be finite and non-zero");
        }
    }

    let mut dc_lines = Vec::new();
    for (i, line) in case.dc_lines.iter().enumerate() {
        let subject = format!("dc_line {i}");
        match (dc_pos.get(&line.from), dc_pos.get(&line.to)) {
            (Some(&a), Some(&b)) if a != b => dc_lines.push((a, b)),
            (Some(_), Some(_)) => diag.push("self loop", subject.clone(), "endpoints must differ"),
            _ => diag.push(
                "unknown bus",
                subject.clone(),
                format!("endpoint {} or {} does not exist", line.from, line.to),
            ),
        }
        if !(line.resistance > 0.0 && line.resistance.is_finite()) {
            diag.push(
                "non-positive resistance",
                subject,
                format!("resistance {} must be positive", line.resistance),
            );
        }
    }

    let n_ac = case.ac_buses.len();
    let n_dc = case.dc_buses.len();
    let mut ac_kind: Vec<AcBusKind> = case.ac_buses.iter().map(|b| b.kind).collect();
    let mut ac_vset: Vec<f64> = case.ac_buses.iter().map(|b| b.voltage_mag).collect();
    let mut dc_kind = vec![DcBusKind::Pure; n_dc];
    let mut dc_vset: Vec<f64> = case.dc_buses.iter().map(|b| b.voltage).collect();
    let mut stations = Vec::new();
    let mut stations_at_ac = vec![Vec::new(); n_ac];
    let mut station_at_dc: Vec<Option<usize>> = vec![None; n_dc];
    let mut q_free_station: Vec<Option<usize>> = vec![None; n_ac];

    for (ci, conv) in case.converters.iter().enumerate() {
        let subject = format!("converter {ci}");
        let pcc = ac_pos.get(&conv.pcc_bus).copied();
        let dc = dc_pos.get(&conv.dc_bus).copied();
        if pcc.is_none() {
            diag.push("unknown bus", subject.clone(), format!("PCC bus {} does not exist", conv.pcc_bus));
        }
        if dc.is_none() {
            diag.push("unknown bus", subject.clone(), format!("DC bus {} does not exist", conv.dc_bus));
        }
        let y = match conv.branch_admittance() {
            Ok(y) => y,
            Err(e) => {
                diag.push("singular converter branch", subject.clone(), e.to_string());
                continue;
            }
        };
        let sp = &conv.setpoints;
        let mode = conv.control;
        let mut require = |name: &str, v: Option<f64>| -> f64 {
            match v {
                Some(x) if x.is_finite() => x,
                _ => {
                    diag.push(
                        "missing setpoint",
                        subject.clone(),
                        format!("mode {mode} requires {name}"),
                    );
                    f64::NAN
                }
            }
        };
        let p_s_ref = if mode.fixes_active_power() { require("p_s_ref", sp.p_s_ref) } else { 0.0 };
        let q_s_ref = if mode.controls_ac_voltage() { 0.0 } else { require("q_s_ref", sp.q_s_ref) };
        let u_s_ref = if mode.controls_ac_voltage() { require("u_s_ref", sp.u_s_ref) } else { 0.0 };
        let u_dc_ref = if mode.fixes_dc_voltage() || mode.is_droop() {
            require("u_dc_ref", sp.u_dc_ref)
        } else {
            0.0
        };
        let (k_droop, p_dc_ref) = if mode.is_droop() {
            (require("k_droop", sp.k_droop), require("p_dc_ref", sp.p_dc_ref))
        } else {
            (0.0, 0.0)
        };
        if mode.is_droop() && !(k_droop > 0.0) && !k_droop.is_nan() {
            diag.push("non-positive droop slope", subject.clone(), format!("k_droop = {k_droop}"));
        }
        if mode.controls_ac_voltage() && !(u_s_ref > 0.0) && !u_s_ref.is_nan() {
            diag.push("non-positive voltage", subject.clone(), format!("u_s_ref = {u_s_ref}"));
        }
        if (mode.fixes_dc_voltage() || mode.is_droop()) && !(u_dc_ref > 0.0) && !u_dc_ref.is_nan() {
            diag.push("non-positive voltage", subject.clone(), format!("u_dc_ref = {u_dc_ref}"));
        }
        let (Some(pcc), Some(dc)) = (pcc, dc) else { continue };

        let (ac_eq, dc_eq, _) = classify_nodes(mode);
        match case.ac_buses[pcc].kind {
            AcBusKind::Slack => diag.push(
                "converter on slack bus",
                subject.clone(),
                format!("PCC bus {} is the AC slack", conv.pcc_bus),
            ),
            AcBusKind::PV if ac_eq == AcBusKind::PV => diag.push(
                "conflicting voltage control",
                subject.clone(),
                format!("PCC bus {} is already voltage-controlled", conv.pcc_bus),
            ),
            _ => {}
        }
        if ac_eq == AcBusKind::PV {
            if let Some(other) = q_free_station[pcc] {
                diag.push(
                    "conflicting voltage control",
                    subject.clone(),
                    format!("PCC bus {} already regulated by converter {other}", conv.pcc_bus),
                );
            } else {
                q_free_station[pcc] = Some(stations.len());
                ac_kind[pcc] = AcBusKind::PV;
                ac_vset[pcc] = u_s_ref;
            }
        }
        if let Some(other) = station_at_dc[dc] {
            diag.push(
                "multiple converters on dc bus",
                subject.clone(),
                format!("DC bus {} already hosts converter {other}", conv.dc_bus),
            );
            continue;
        }
        station_at_dc[dc] = Some(stations.len());
        dc_kind[dc] = dc_eq;
        if dc_eq == DcBusKind::ConstV {
            dc_vset[dc] = u_dc_ref;
        }
        stations_at_ac[pcc].push(stations.len());
        let z = conv.branch_impedance();
        stations.push(StationData {
            pcc,
            dc,
            mode,
            y,
            r: z.re,
            x: z.im,
            p_s_ref,
            q_s_ref,
            u_s_ref,
            u_dc_ref,
            k_droop,
            p_dc_ref,
        });
    }

    // one slack per AC island
    let ac_comp = components(n_ac, &ac_lines);
    let mut slack_count: HashMap<usize, usize> = HashMap::new();
    for (i, bus) in case.ac_buses.iter().enumerate() {
        let e = slack_count.entry(ac_comp[i]).or_insert(0);
        if bus.kind == AcBusKind::Slack {
            *e += 1;
        }
    }
    let mut roots: Vec<_> = slack_count.into_iter().collect();
    roots.sort();
    for (root, count) in roots {
        if count != 1 {
            diag.push(
                if count == 0 { "no slack bus" } else { "multiple slack buses" },
                format!("ac_bus {}", case.ac_buses[root].id),
                format!("AC island containing bus {} has {count} slack buses", case.ac_buses[root].id),
            );
        }
    }

    // a voltage reference per DC island
    let dc_comp = components(n_dc, &dc_lines);
    let mut has_ref: HashMap<usize, bool> = HashMap::new();
    for i in 0..n_dc {
        let e = has_ref.entry(dc_comp[i]).or_insert(false);
        if matches!(dc_kind[i], DcBusKind::ConstV | DcBusKind::Droop) {
            *e = true;
        }
    }
    let mut roots: Vec<_> = has_ref.into_iter().collect();
    roots.sort();
    for (root, ok) in roots {
        if !ok {
            diag.push(
                "no DC voltage reference",
                format!("dc_bus {}", case.dc_buses[root].id),
                format!(
                    "DC island containing bus {} has no constant-voltage or droop station",
                    case.dc_buses[root].id
                ),
            );
        }
    }

    if !diag.0.is_empty() {
        return Err(Diagnostics(diag.0));
    }

    let mut ybus: Vec<HashMap<usize, Complex64>> = vec![HashMap::new(); n_ac];
    for (line, &(a, b)) in case.ac_lines.iter().zip(&ac_lines) {
        let y = line.series_admittance;
        let half = Complex64::new(0.0, line.shunt_susceptance / 2.0);
        *ybus[a].entry(a).or_default() += y + half;
        *ybus[b].entry(b).or_default() += y + half;
        *ybus[a].entry(b).or_default() -= y;
        *ybus[b].entry(a).or_default() -= y;
    }
    let mut gdc: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n_dc];
    for (line, &(a, b)) in case.dc_lines.iter().zip(&dc_lines) {
        let g = 1.0 / line.resistance;
        *gdc[a].entry(a).or_default() += g;
        *gdc[b].entry(b).or_default() += g;
        *gdc[a].entry(b).or_default() -= g;
        *gdc[b].entry(a).or_default() -= g;
    }
    fn sorted<T: Copy>(rows: Vec<HashMap<usize, T>>) -> Vec<Vec<(usize, T)>> {
        rows.into_iter()
            .map(|r| {
                let mut v: Vec<_> = r.into_iter().collect();
                v.sort_by_key(|e| e.0);
                v
            })
            .collect()
    }

    let mut resolved = case.clone();
    for (bus, kind) in resolved.dc_buses.iter_mut().zip(&dc_kind) {
        bus.kind = *kind;
    }

    Ok(ValidatedCase {
        case: resolved,
        ac_pos,
        dc_pos,
        ac_kind,
        ac_vset,
        dc_kind,
        dc_vset,
        ac_lines,
        dc_lines,
        ybus: sorted(ybus),
        gdc: sorted(gdc),
        stations,
        stations_at_ac,
        station_at_dc,
        q_free_station,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{per_unit_bases, AcBus, AcLine, Converter, DcBus, DcLine, Setpoints};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_case() -> NetworkCase {
        let bus = |id, kind| AcBus {
            id,
            kind,
            voltage_mag: 1.0,
            voltage_ang: 0.0,
            p_inject: 0.0,
            q_inject: 0.0,
        };
        let conv = |pcc, dc, control, setpoints| Converter {
            pcc_bus: pcc,
            dc_bus: dc,
            transformer_impedance: c(0.00272, 0.203),
            filter_susceptance: 0.04899,
            reactor_impedance: c(0.000181, 0.29743),
            loss_resistance: 0.0,
            control,
            setpoints,
        };
        NetworkCase {
            name: "small".into(),
            base: per_unit_bases(1.0, 25.64).unwrap(),
            ac_buses: vec![bus(1, AcBusKind::Slack), bus(2, AcBusKind::PQ), bus(3, AcBusKind::PQ)],
            ac_lines: vec![
                AcLine::from_impedance(1, 2, 0.01, 0.02, 0.0),
                AcLine::from_impedance(2, 3, 0.01, 0.02, 0.0),
            ],
            dc_buses: (1..=2)
                .map(|id| DcBus { id, kind: DcBusKind::Pure, voltage: 1.0, p_inject: 0.0 })
                .collect(),
            dc_lines: vec![DcLine { from: 1, to: 2, resistance: 0.0304 }],
            converters: vec![
                conv(2, 1, ControlMode::UdcQ, Setpoints { u_dc_ref: Some(1.0), q_s_ref: Some(0.0), ..Default::default() }),
                conv(3, 2, ControlMode::PUs, Setpoints { p_s_ref: Some(0.1), u_s_ref: Some(1.01), ..Default::default() }),
            ],
        }
    }

    #[test]
    fn accepts_well_formed_case() {
        let v = validate_case(&small_case()).unwrap();
        assert_eq!(v.dc_kind, vec![DcBusKind::ConstV, DcBusKind::ConstP]);
        assert_eq!(v.ac_kind[2], AcBusKind::PV);
        assert_eq!(v.ac_vset[2], 1.01);
        assert_eq!(v.q_free_station[2], Some(1));
        assert_eq!(v.case().dc_buses[0].kind, DcBusKind::ConstV);
    }

    #[test]
    fn missing_dc_reference() {
        let mut case = small_case();
        case.converters[0].control = ControlMode::PQ;
        case.converters[0].setpoints.p_s_ref = Some(0.0);
        let err = validate_case(&case).unwrap_err();
        assert!(err.has_rule("no DC voltage reference"), "{err}");
    }

    #[test]
    fn zero_dc_resistance() {
        let mut case = small_case();
        case.dc_lines[0].resistance = 0.0;
        let err = validate_case(&case).unwrap_err();
        assert!(err.has_rule("non-positive resistance"));
        assert_eq!(err.0[0].subject, "dc_line 0");
    }

    #[test]
    fn reports_every_violation() {
        let mut case = small_case();
        case.converters[1].pcc_bus = 1;
        case.converters[1].setpoints.p_s_ref = None;
        case.ac_lines[0].to = 9;
        let err = validate_case(&case).unwrap_err();
        assert!(err.has_rule("converter on slack bus"));
        assert!(err.has_rule("missing setpoint"));
        assert!(err.has_rule("unknown bus"));
    }

    #[test]
    fn droop_requires_positive_slope() {
        let mut case = small_case();
        case.converters[0].control = ControlMode::DroopQ;
        case.converters[0].setpoints.k_droop = Some(0.0);
        case.converters[0].setpoints.p_dc_ref = Some(0.0);
        let err = validate_case(&case).unwrap_err();
        assert!(err.has_rule("non-positive droop slope"));
    }

    #[test]
    fn island_without_slack() {
        let mut case = small_case();
        case.ac_lines.pop();
        let err = validate_case(&case).unwrap_err();
        assert!(err.has_rule("no slack bus"));
    }
}
