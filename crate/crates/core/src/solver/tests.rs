use num_complex::Complex64;

use super::*;
use crate::grid::{
    per_unit_bases, validate_case, AcBus, AcBusKind, AcLine, ControlMode, Converter, DcBus, DcBusKind, DcLine,
    NetworkCase, Setpoints,
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

fn dc_bus(id: usize, p: f64) -> DcBus {
    DcBus {
        id,
        kind: DcBusKind::Pure,
        voltage: 1.0,
        p_inject: p,
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

/// Six AC buses in a loop, three stations, a meshed DC grid plus one pure DC bus.
fn mtdc(modes: [ControlMode; 3]) -> NetworkCase {
    NetworkCase {
        name: format!("{modes:?}"),
        base: per_unit_bases(1.0, 25.64).unwrap(),
        ac_buses: vec![
            ac_bus(1, AcBusKind::Slack, 0.0, 0.0),
            ac_bus(2, AcBusKind::PQ, -0.08, -0.03),
            ac_bus(3, AcBusKind::PQ, -0.05, -0.02),
            ac_bus(4, AcBusKind::PQ, -0.06, -0.01),
            ac_bus(5, AcBusKind::PQ, -0.04, -0.02),
            ac_bus(6, AcBusKind::PQ, 0.02, 0.0),
        ],
        ac_lines: vec![
            AcLine::from_impedance(1, 2, 0.02, 0.06, 0.02),
            AcLine::from_impedance(2, 3, 0.03, 0.05, 0.01),
            AcLine::from_impedance(3, 4, 0.02, 0.04, 0.0),
            AcLine::from_impedance(4, 5, 0.025, 0.05, 0.01),
            AcLine::from_impedance(2, 6, 0.03, 0.07, 0.0),
            AcLine::from_impedance(5, 6, 0.02, 0.05, 0.0),
        ],
        dc_buses: vec![dc_bus(1, 0.0), dc_bus(2, 0.0), dc_bus(3, 0.0), dc_bus(4, 0.04)],
        dc_lines: vec![
            DcLine { from: 1, to: 2, resistance: 0.05 },
            DcLine { from: 2, to: 3, resistance: 0.04 },
            DcLine { from: 1, to: 3, resistance: 0.06 },
            DcLine { from: 4, to: 1, resistance: 0.03 },
        ],
        converters: vec![station(3, 1, modes[0]), station(5, 2, modes[1]), station(6, 3, modes[2])],
    }
}

fn scenarios() -> Vec<[ControlMode; 3]> {
    use ControlMode::*;
    vec![
        [UdcQ, PQ, PQ],
        [UdcUs, PUs, PQ],
        [DroopQ, DroopUs, PQ],
        [DroopQ, PQ, UdcQ],
        [UdcQ, PUs, DroopUs],
        [PQ, UdcUs, DroopQ],
    ]
}

fn pure_ac() -> NetworkCase {
    let mut c = mtdc([ControlMode::UdcQ, ControlMode::PQ, ControlMode::PQ]);
    c.converters.clear();
    c.dc_buses.clear();
    c.dc_lines.clear();
    c
}

/// DC line with G = 20 between a fixed-voltage station and a 0.1 p.u. load.
fn dc_pair() -> NetworkCase {
    let mut conv = station(2, 1, ControlMode::UdcQ);
    conv.setpoints.q_s_ref = Some(0.0);
    NetworkCase {
        name: "dc-pair".into(),
        base: per_unit_bases(1.0, 25.64).unwrap(),
        ac_buses: vec![ac_bus(1, AcBusKind::Slack, 0.0, 0.0), ac_bus(2, AcBusKind::PQ, 0.0, 0.0)],
        ac_lines: vec![AcLine::from_impedance(1, 2, 0.01, 0.03, 0.0)],
        dc_buses: vec![dc_bus(1, 0.0), dc_bus(2, -0.1)],
        dc_lines: vec![DcLine { from: 1, to: 2, resistance: 0.05 }],
        converters: vec![conv],
    }
}

/// Central differences; magnitude columns perturbed multiplicatively.
fn fd_jacobian(vc: &ValidatedCase, x: &StateVector, h: f64) -> DMatrix<f64> {
    let layout = StateLayout::new(vc);
    let n = layout.len();
    let mut m = DMatrix::zeros(n, n);
    for (c, u) in layout.unknowns().iter().enumerate() {
        let step = |sign: f64| {
            let mut y = x.clone();
            match u {
                Unknown::Angle(_) => y.0[c] += sign * h,
                _ => y.0[c] *= (sign * h).exp(),
            }
            mismatch_vector(vc, &y).unwrap()
        };
        let (fp, fm) = (step(1.0), step(-1.0));
        for r in 0..n {
            m[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    m
}

fn assert_fd_match(vc: &ValidatedCase, x: &StateVector) {
    let a = assemble_jacobian(vc, x).unwrap().to_dense();
    let f = fd_jacobian(vc, x, 1e-6);
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            let (av, fv) = (a[(r, c)], f[(r, c)]);
            let rel = (av - fv).abs() / av.abs().max(fv.abs()).max(1e-6);
            assert!(rel <= 1e-5, "{}: J[{r},{c}] analytic {av} fd {fv}", vc.name());
        }
    }
}

#[test]
fn dc_pair_high_root() {
    let vc = validate_case(&dc_pair()).unwrap();
    let sol = solve_power_flow(&vc, &SolverOptions::default()).unwrap();
    let u2 = sol.buses.vd[1];
    // (20 + sqrt(400 - 8)) / 40
    assert!((u2 - 0.994_974_746_830_583).abs() < 1e-9, "{u2}");
    let flow = &sol.dc_flows[0];
    assert!((flow.p_from - 0.100_505_063).abs() < 1e-8);
    assert!((flow.p_to + 0.1).abs() < 1e-9);
    assert!((flow.loss - 5.050_63e-4).abs() < 1e-8);
}

#[test]
fn dc_pair_residual_and_derivative() {
    let vc = validate_case(&dc_pair()).unwrap();
    let layout = StateLayout::new(&vc);
    let mut st = layout.initial_state(&vc, true);
    let u2 = 0.994_974_746_830_583;
    st.vd[1] = u2;
    let x = layout.pack(&st);
    let f = mismatch_vector(&vc, &x).unwrap();
    let row = layout.dc_column(1).unwrap();
    assert!(f[row].abs() < 1e-12);
    let j = assemble_jacobian(&vc, &x).unwrap().to_dense();
    assert!((j[(row, row)] + u2 * (40.0 * u2 - 20.0)).abs() < 1e-12);
    assert_fd_match(&vc, &x);
}

#[test]
fn zero_injection_is_flat() {
    let mut case = pure_ac();
    for b in &mut case.ac_buses {
        b.p_inject = 0.0;
        b.q_inject = 0.0;
    }
    for l in &mut case.ac_lines {
        l.shunt_susceptance = 0.0;
    }
    let vc = validate_case(&case).unwrap();
    let sol = solve_power_flow(&vc, &SolverOptions::default()).unwrap();
    assert_eq!(sol.iterations(), 1);
    assert!(sol.ac_flows.iter().all(|f| f.p_from == 0.0 && f.q_from == 0.0 && f.p_to == 0.0));
}

#[test]
fn flat_start_residual_equals_schedule() {
    let mut case = pure_ac();
    for l in &mut case.ac_lines {
        l.shunt_susceptance = 0.0;
    }
    let vc = validate_case(&case).unwrap();
    let layout = StateLayout::new(&vc);
    let x = layout.pack(&layout.initial_state(&vc, true));
    let f = mismatch_vector(&vc, &x).unwrap();
    // zero network flow at flat voltages, so the residual is the schedule itself
    for (r, u) in layout.unknowns().iter().enumerate() {
        let expected = match *u {
            Unknown::Angle(i) => case.ac_buses[i].p_inject,
            Unknown::Magnitude(i) => case.ac_buses[i].q_inject,
            Unknown::DcVoltage(_) => unreachable!(),
        };
        assert!((f[r] - expected).abs() < 1e-14);
    }
}

#[test]
fn state_dimension_and_row_checks() {
    let vc = validate_case(&mtdc([ControlMode::UdcQ, ControlMode::PUs, ControlMode::PQ])).unwrap();
    let layout = StateLayout::new(&vc);
    // 2·6 + 4 − 1 (PV) − 2 − 1 (const-V)
    assert_eq!(layout.len(), 12);
    assert!(matches!(
        mismatch_vector(&vc, &StateVector(vec![0.0; 3])),
        Err(SolverError::InvalidArgument(_))
    ));
}

#[test]
fn pure_ac_has_no_coupling() {
    let vc = validate_case(&pure_ac()).unwrap();
    let sol = solve_power_flow(&vc, &SolverOptions::default()).unwrap();
    for b in JacobianBlock::COUPLING {
        assert!(sol.jacobian.block(b).iter().all(|v| *v == 0.0), "{b:?}");
    }
    let sens = sensitivity_matrices(&vc, &sol, &all_variables(&vc)).unwrap();
    assert!(sens.x_delta.iter().all(|v| *v == 0.0));
    assert!(sens.h_delta.iter().all(|v| *v == 0.0));
}

#[test]
fn jacobian_matches_finite_differences() {
    for modes in scenarios() {
        let vc = validate_case(&mtdc(modes)).unwrap();
        let layout = StateLayout::new(&vc);
        assert_fd_match(&vc, &layout.pack(&layout.initial_state(&vc, true)));
        let sol = solve_power_flow(&vc, &SolverOptions::default()).unwrap();
        assert_fd_match(&vc, &sol.state);
        // a perturbed, non-flat point
        let mut x = sol.state.clone();
        for (k, v) in x.0.iter_mut().enumerate() {
            *v += 0.01 * ((k as f64) * 1.7).sin();
        }
        assert_fd_match(&vc, &x);
    }
}

#[test]
fn coupling_blocks_are_populated() {
    let vc = validate_case(&mtdc([ControlMode::UdcQ, ControlMode::PUs, ControlMode::DroopUs])).unwrap();
    let sol = solve_power_flow(&vc, &SolverOptions::default()).unwrap();
    let j = &sol.jacobian;
    assert!(j.block(JacobianBlock::MP).iter().any(|v| *v != 0.0));
    assert!(j.block(JacobianBlock::RDelta).iter().any(|v| *v != 0.0));
    // droop diagonal includes −U/k
    let layout = &sol.layout;
    let d = layout.dc_column(2).unwrap();
    let net: f64 = j.network.iter().filter(|t| t.0 == d && t.1 == d).map(|t| t.2).sum();
    let conv: f64 = j.coupling.iter().filter(|t| t.0 == d && t.1 == d).map(|t| t.2).sum();
    assert!((conv + sol.buses.vd[2] / 0.05).abs() < 1e-12);
    assert!(net < 0.0);
}

#[test]
fn converges_quadratically_with_balance() {
    for modes in scenarios() {
        let vc = validate_case(&mtdc(modes)).unwrap();
        let sol = solve_power_flow(&vc, &SolverOptions::default()).unwrap();
        assert!(sol.converged && sol.max_mismatch() < 1e-8);
        assert!(sol.iterations() <= 10, "{modes:?}: {:?}", sol.iteration_log);
        let log = &sol.iteration_log;
        for w in log.windows(2) {
            if w[0] < 1e-3 && w[1] > 1e-13 {
                assert!(w[1] / (w[0] * w[0]) < 10.0, "{modes:?}: {log:?}");
            }
        }

        // generation = load + losses
        let inj = &sol.injections;
        let slack = vc.ac_position(1).unwrap();
        let mut net = 0.0;
        for i in 0..vc.n_ac() {
            net += if i == slack { sol.p_ac[i] } else { inj.p_ac[i] };
        }
        net += inj.p_dc.iter().sum::<f64>();
        let ac_loss: f64 = sol.ac_flows.iter().map(|f| f.p_loss).sum();
        let dc_loss: f64 = sol.dc_flows.iter().map(|f| f.loss).sum();
        let conv_loss: f64 = sol.stations.iter().map(|s| s.loss).sum();
        assert!((net - ac_loss - dc_loss - conv_loss).abs() < 1e-8, "{modes:?}");

        for (k, s) in vc.stations().iter().enumerate() {
            if s.mode.is_droop() {
                let u = sol.buses.vd[s.dc];
                let resid = crate::grid::droop_power(u, s.u_dc_ref, s.p_dc_ref, s.k_droop).unwrap()
                    - sol.stations[k].p_dc;
                assert!(resid.abs() < 1e-12);
                let dc_row = sol.layout.dc_column(s.dc).unwrap();
                assert!(sol.mismatch[dc_row].abs() < 1e-9);
            }
            if s.mode.controls_ac_voltage() {
                assert_eq!(sol.buses.vm[s.pcc], s.u_s_ref);
            }
            if s.mode.fixes_dc_voltage() {
                assert_eq!(sol.buses.vd[s.dc], s.u_dc_ref);
            }
            let st = sol.stations[k];
            let loss = crate::grid::converter_loss(st.p_s, st.q_s, sol.buses.vm[s.pcc], s.r, s.x).unwrap();
            assert!((st.loss - loss.dp).abs() < 1e-12);
        }
    }
}

#[test]
fn dense_and_sparse_paths_agree() {
    for modes in scenarios() {
        let vc = validate_case(&mtdc(modes)).unwrap();
        let dense = solve_power_flow(&vc, &SolverOptions::default()).unwrap();
        let opts = SolverOptions {
            dense_limit: 0,
            ..Default::default()
        };
        let sparse = solve_power_flow(&vc, &opts).unwrap();
        for (a, b) in dense.state.0.iter().zip(&sparse.state.0) {
            assert!((a - b).abs() < 1e-10);
        }
        let vars = all_variables(&vc);
        let sd = sensitivity_matrices(&vc, &dense, &vars).unwrap();
        let ss = sensitivity_matrices_with(&vc, &dense, &vars, &opts).unwrap();
        assert!((&sd.t0 - &ss.t0).amax() < 1e-10);
    }
}

#[test]
fn bus_order_does_not_matter() {
    for modes in scenarios() {
        let case = mtdc(modes);
        let mut shuffled = case.clone();
        shuffled.ac_buses.reverse();
        shuffled.ac_buses.swap(0, 2);
        shuffled.dc_buses.reverse();
        shuffled.ac_lines.reverse();
        shuffled.converters.reverse();
        let a = validate_case(&case).unwrap();
        let b = validate_case(&shuffled).unwrap();
        let sa = solve_power_flow(&a, &SolverOptions::default()).unwrap();
        let sb = solve_power_flow(&b, &SolverOptions::default()).unwrap();
        for bus in &case.ac_buses {
            let (i, j) = (a.ac_position(bus.id).unwrap(), b.ac_position(bus.id).unwrap());
            assert!((sa.buses.vm[i] - sb.buses.vm[j]).abs() < 1e-10);
            assert!((sa.buses.va[i] - sb.buses.va[j]).abs() < 1e-10);
        }
        for bus in &case.dc_buses {
            let (i, j) = (a.dc_position(bus.id).unwrap(), b.dc_position(bus.id).unwrap());
            assert!((sa.buses.vd[i] - sb.buses.vd[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn linearization_matches_resolve() {
    for modes in scenarios() {
        let vc = validate_case(&mtdc(modes)).unwrap();
        let opts = SolverOptions {
            tolerance: 1e-12,
            ..Default::default()
        };
        let base = solve_power_flow(&vc, &opts).unwrap();
        let vars = all_variables(&vc);
        let sens = sensitivity_matrices(&vc, &base, &vars).unwrap();
        for col in 0..base.layout.n_injections() {
            let mut inj = base.injections.clone();
            inj.add_at(col, 1e-4);
            let re = solve_power_flow_with(&vc, &inj, &opts).unwrap();
            for r in 0..base.layout.len() {
                let lin = sens.s0[(r, col)] * 1e-4;
                let actual = re.state.0[r] - base.state.0[r];
                assert!((lin - actual).abs() < 1e-6, "{modes:?} col {col} row {r}");
            }
            for (k, v) in vars.iter().enumerate() {
                let lin = sens.t0[(k, col)] * 1e-4;
                let actual = v.value(&vc, &re.buses) - sens.base_values[k];
                assert!((lin - actual).abs() < 1e-6, "{}", v.name);
            }
        }
    }
}

#[test]
fn state_variable_rows_select_s0() {
    let vc = validate_case(&mtdc([ControlMode::DroopQ, ControlMode::PQ, ControlMode::UdcQ])).unwrap();
    let sol = solve_power_flow(&vc, &SolverOptions::default()).unwrap();
    let vars = all_variables(&vc);
    let sens = sensitivity_matrices(&vc, &sol, &vars).unwrap();
    let k = sens.row("U_ac[4]").unwrap();
    let col = sol.layout.magnitude_column(vc.ac_position(4).unwrap()).unwrap();
    assert_eq!(sens.t0.row(k), sens.s0.row(col));
    let k = sens.row("U_dc[2]").unwrap();
    let col = sol.layout.dc_column(vc.dc_position(2).unwrap()).unwrap();
    assert_eq!(sens.t0.row(k), sens.s0.row(col));
}

#[test]
fn reversed_line_swaps_ends() {
    let case = mtdc([ControlMode::UdcQ, ControlMode::PQ, ControlMode::PQ]);
    let mut rev = case.clone();
    let l = &mut rev.ac_lines[1];
    std::mem::swap(&mut l.from, &mut l.to);
    let d = &mut rev.dc_lines[0];
    std::mem::swap(&mut d.from, &mut d.to);
    let (a, b) = (validate_case(&case).unwrap(), validate_case(&rev).unwrap());
    let sa = solve_power_flow(&a, &SolverOptions::default()).unwrap();
    let sb = solve_power_flow(&b, &SolverOptions::default()).unwrap();
    let (fa, fb) = (&sa.ac_flows[1], &sb.ac_flows[1]);
    assert!((fa.p_from - fb.p_to).abs() < 1e-12 && (fa.q_to - fb.q_from).abs() < 1e-12);
    assert!((fa.p_loss - fb.p_loss).abs() < 1e-12);
    assert!((sa.dc_flows[0].p_from - sb.dc_flows[0].p_to).abs() < 1e-12);
}

#[test]
fn divergence_reports_log() {
    let mut case = pure_ac();
    for b in &mut case.ac_buses[1..] {
        b.p_inject *= 60.0;
    }
    let vc = validate_case(&case).unwrap();
    let opts = SolverOptions {
        max_iterations: 8,
        ..Default::default()
    };
    match solve_power_flow(&vc, &opts) {
        Err(SolverError::Diverged { log }) => assert!(!log.is_empty() && log.len() <= 8),
        Err(SolverError::Singular { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|s| s.iteration_log)),
    }
    assert!(SolverOptions { tolerance: 0.0, ..Default::default() }.validate().is_err());
}

#[test]
fn variable_filter() {
    let vc = validate_case(&mtdc([ControlMode::UdcQ, ControlMode::PQ, ControlMode::PQ])).unwrap();
    let all = all_variables(&vc);
    assert_eq!(all.len(), 6 + 4 + 6 + 6 + 4);
    let u = select_variables(&vc, &["U_ac".into(), "P_dc[1-2]".into()]).unwrap();
    assert_eq!(u.len(), 7);
    assert!(select_variables(&vc, &["nope".into()]).is_err());
}
