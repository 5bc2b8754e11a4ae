mod common;

use std::path::Path;

use nalgebra::DVector;
use serde_json::{json, Value};

use wavebct::config::ModelConfig;
use wavebct::numerics::{matrix_exponential, DenseMatrix};
use wavebct::sim::{
    audit_energy_balance, simulate, simulate_from, sweep, InitialState, InputSignal, InputSpec, MidpointStepper,
    SimulationConfig, SimulationTrace, Variation,
};
use wavebct::triplet::{build_staggered_1d, build_staggered_2d, BoundaryLabel::*, Partition};
use wavebct::wave::{
    assemble_impedance_system, assemble_scattering_system, reconstruct_displacement, DampingSpec, MaterialField,
    Representation, WaveBoundarySystem,
};
use wavebct::Error;

fn string(left: wavebct::triplet::BoundaryLabel, right: wavebct::triplet::BoundaryLabel, qb: Option<f64>) -> WaveBoundarySystem {
    let t = build_staggered_1d(24, 1.0, &Partition::ends(left, right)).unwrap();
    let rho = (0..t.n_cells()).map(|i| 1.0 + 0.3 * (i as f64).sin()).collect();
    let tc = (0..t.n_faces()).map(|i| 1.0 + 0.2 * (i as f64).cos()).collect();
    let mat = MaterialField::new(rho, tc, 0.5).unwrap();
    let damping = match qb {
        Some(q) => DampingSpec::boundary(DenseMatrix::from_element(1, 1, q)),
        None => DampingSpec::none(),
    };
    assemble_impedance_system(&t, &mat, &damping).unwrap()
}

fn smooth(n: usize) -> Vec<f64> {
    (0..n).map(|i| (std::f64::consts::FRAC_PI_2 * (i as f64 + 0.5) / n as f64).sin()).collect()
}

fn random_start(dt: f64, t_end: f64, seed: u64) -> SimulationConfig {
    let mut cfg = SimulationConfig::new(dt, t_end);
    cfg.initial_state = InitialState::Random { seed, energy: 1.0 };
    cfg
}

#[test]
fn closed_membrane_conserves_energy_and_reverses() {
    let t = build_staggered_2d(6, 5, 1.2, 1.0, &Partition::edges(Gamma0, Gamma1, Gamma1, Gamma0)).unwrap();
    let mat = MaterialField::uniform(&t, 1.3, 0.8).unwrap();
    let sys = assemble_impedance_system(&t, &mat, &DampingSpec::none()).unwrap();
    let mut cfg = random_start(0.02, 4.0, 1);
    cfg.snapshot_every = 50;
    let trace = simulate(&sys, &cfg).unwrap();
    let e0 = trace.energy[0];
    for e in &trace.energy {
        assert!((e - e0).abs() <= 1e-12 * e0);
    }
    let back = MidpointStepper::new(&sys.a, &sys.b_in, -cfg.dt, cfg.linear_solver_tol).unwrap();
    let mut x = trace.final_state().unwrap().clone();
    for _ in 0..trace.steps() {
        x = back.step(&x, &DVector::zeros(0)).unwrap();
    }
    let x0 = &trace.snapshots[0].state;
    assert!((&x - x0).norm() <= 1e-10 * x0.norm());
}

#[test]
fn undriven_gamma2_matches_free_gamma1() {
    let driven = string(Gamma0, Gamma2, None);
    let free = string(Gamma0, Gamma1, Some(0.0));
    let mut cfg = random_start(0.01, 2.0, 7);
    cfg.snapshot_every = 1;
    let a = simulate(&driven, &cfg).unwrap();
    let b = simulate(&free, &cfg).unwrap();
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        assert!((&sa.state - &sb.state).amax() <= 1e-13);
    }
    for (ea, eb) in a.energy.iter().zip(&b.energy) {
        assert!((ea - eb).abs() <= 1e-13);
    }
}

#[test]
fn second_order_in_time() {
    let sys = string(Gamma0, Gamma1, Some(0.7));
    let n = sys.n_cells;
    let mut cfg = SimulationConfig::new(0.02, 1.0);
    cfg.initial_state = InitialState::Displacement { z0: smooth(n), w0: vec![0.0; n] };
    cfg.snapshot_every = 1000;
    let x0 = simulate(&sys, &cfg).unwrap().snapshots[0].state.clone();
    let exact = matrix_exponential(&sys.a, 1.0).unwrap() * &x0;
    let err = |dt: f64| {
        let mut c = cfg.clone();
        c.dt = dt;
        (simulate_from(&sys, &c, x0.clone()).unwrap().final_state().unwrap() - &exact).norm()
    };
    let (e1, e2, e3) = (err(0.005), err(0.0025), err(0.00125));
    assert!((e1 / e2 - 4.0).abs() < 0.2, "{}", e1 / e2);
    assert!((e2 / e3 - 4.0).abs() < 0.2, "{}", e2 / e3);
}

#[test]
fn driven_impedance_run_balances() {
    let sys = string(Gamma2, Gamma1, Some(0.4));
    let mut cfg = random_start(0.01, 3.0, 11);
    cfg.inputs = InputSpec::broadcast(vec![
        InputSignal::Sinusoid { amplitude: 0.5, frequency: 1.3, phase: 0.0 },
        InputSignal::GaussianPulse { amplitude: 1.0, center: 1.0, width: 0.2 },
    ]);
    let trace = simulate(&sys, &cfg).unwrap();
    let audit = audit_energy_balance(&trace, &sys).unwrap();
    assert!(audit.pass, "{audit:?}");
    assert_eq!(audit.passivity_violations, 0);
    assert!(audit.total_dissipated > 0.0);
    let gap = audit.energy_change - (audit.total_supply - audit.total_dissipated);
    assert!(gap.abs() <= audit.cumulative_residual + 1e-12);
}

#[test]
fn scattering_run_is_passive_and_round_trips() {
    let imp = string(Gamma2, Gamma1, Some(1.0));
    let sys = assemble_scattering_system(&imp).unwrap();
    let mut cfg = random_start(0.01, 2.0, 13);
    cfg.inputs = InputSpec::broadcast(vec![InputSignal::Sinusoid { amplitude: 1.0, frequency: 2.0, phase: 0.1 }]);
    let trace = simulate(&sys, &cfg).unwrap();
    assert_eq!(trace.representation, Representation::Scattering);
    let audit = audit_energy_balance(&trace, &sys).unwrap();
    assert!(audit.pass);
    assert!(audit.supply_gap > 0.0);

    let twice = trace.cayley().unwrap().cayley().unwrap();
    for (a, b) in twice.u.iter().zip(&trace.u) {
        assert!((a - b).amax() <= 1e-14);
    }
    for (a, b) in twice.y.iter().zip(&trace.y) {
        assert!((a - b).amax() <= 1e-14);
    }
    assert!(assemble_scattering_system(&sys).is_err());
}

#[test]
fn audit_rejects_mismatched_representation() {
    let imp = string(Gamma2, Gamma1, None);
    let trace = simulate(&imp, &random_start(0.01, 0.1, 1)).unwrap();
    let sc = assemble_scattering_system(&imp).unwrap();
    assert!(matches!(audit_energy_balance(&trace, &sc), Err(Error::Representation(_))));
}

#[test]
fn reconstruction_of_rest_state_is_initial_displacement() {
    let t = build_staggered_1d(10, 1.0, &Partition::uniform(1, Gamma0)).unwrap();
    let mat = MaterialField::uniform(&t, 1.0, 1.0).unwrap();
    let sys = assemble_impedance_system(&t, &mat, &DampingSpec::none()).unwrap();
    let mut cfg = SimulationConfig::new(0.05, 1.0);
    cfg.snapshot_every = 1;
    let trace = simulate(&sys, &cfg).unwrap();
    let z0 = DVector::from_fn(10, |i, _| i as f64 * 0.1);
    let z = reconstruct_displacement(&trace, &z0, &mat).unwrap();
    assert_eq!(z.len(), trace.steps() + 1);
    for zi in &z {
        assert_eq!(zi, &z0);
    }
}

#[test]
fn rigid_translation_of_a_free_string() {
    let t = build_staggered_1d(8, 2.0, &Partition::uniform(1, Gamma1)).unwrap();
    let mat = MaterialField::uniform(&t, 2.0, 1.0).unwrap();
    let sys = assemble_impedance_system(&t, &mat, &DampingSpec::boundary(DenseMatrix::zeros(2, 2))).unwrap();
    let mut cfg = SimulationConfig::new(0.1, 2.0);
    cfg.initial_state = InitialState::Displacement { z0: vec![0.5; 8], w0: vec![0.25; 8] };
    cfg.snapshot_every = 1;
    let trace = simulate(&sys, &cfg).unwrap();
    let z0 = DVector::from_element(8, 0.5);
    let z = reconstruct_displacement(&trace, &z0, &mat).unwrap();
    for (zi, &time) in z.iter().zip(&trace.times) {
        for v in zi.iter() {
            assert!((v - (0.5 + 0.25 * time)).abs() <= 1e-13);
        }
    }
}

#[test]
fn reconstruction_needs_every_snapshot() {
    let t = build_staggered_1d(4, 1.0, &Partition::uniform(1, Gamma0)).unwrap();
    let mat = MaterialField::uniform(&t, 1.0, 1.0).unwrap();
    let sys = assemble_impedance_system(&t, &mat, &DampingSpec::none()).unwrap();
    let mut cfg = random_start(0.1, 1.0, 2);
    cfg.snapshot_every = 2;
    let trace = simulate(&sys, &cfg).unwrap();
    assert!(reconstruct_displacement(&trace, &DVector::zeros(4), &mat).is_err());
}

fn base_config() -> Value {
    json!({
        "geometry": { "dim": 1, "cells": [32] },
        "partition": { "gamma0": ["left"], "gamma1": ["right"] },
        "damping": { "qb": "zero" },
        "simulation": {
            "dt": 0.01,
            "t_end": 1.5,
            "initial_state": { "random": { "seed": 42 } }
        }
    })
}

#[test]
fn empty_sweep_runs_nothing() {
    assert!(Variation::grid(&[]).is_empty());
    assert!(sweep(&base_config(), Path::new("."), &[]).is_empty());
}

#[test]
fn boundary_damping_sweep_is_monotone() {
    let grid = Variation::grid(&[("damping.qb".into(), vec![json!("zero"), json!({"scalar": 0.5}), json!({"scalar": 1.0})])]);
    let runs = sweep(&base_config(), Path::new("."), &grid);
    assert_eq!(runs.len(), 3);
    let dissipated: Vec<f64> = runs
        .iter()
        .map(|r| {
            let (_, _, audit) = r.result.as_ref().unwrap();
            assert!(audit.pass);
            audit.total_dissipated
        })
        .collect();
    assert_eq!(dissipated[0], 0.0);
    assert!(dissipated[0] < dissipated[1] && dissipated[1] < dissipated[2], "{dissipated:?}");
}

#[test]
fn sweep_over_time_step_shows_second_order() {
    let mut base = base_config();
    base["damping"]["qb"] = json!({"scalar": 0.5});
    base["simulation"]["snapshot_every"] = json!(1000);
    base["simulation"]["initial_state"] = json!({"displacement": {"z0": smooth(32), "w0": vec![0.0; 32]}});
    let grid = Variation::grid(&[("simulation.dt".into(), vec![json!(0.004), json!(0.002), json!(0.001)])]);
    let runs = sweep(&base, Path::new("."), &grid);
    let (cfg, trace, _) = runs[0].result.as_ref().unwrap();
    let model = cfg.build().unwrap();
    let x0 = &trace.snapshots[0].state;
    let exact = matrix_exponential(&model.system.a, 1.5).unwrap() * x0;
    let errs: Vec<f64> = runs
        .iter()
        .map(|r| (r.result.as_ref().unwrap().1.final_state().unwrap() - &exact).norm())
        .collect();
    assert!((errs[0] / errs[1] - 4.0).abs() < 0.3, "{errs:?}");
    assert!((errs[1] / errs[2] - 4.0).abs() < 0.3, "{errs:?}");
}

#[test]
fn sweep_reports_failures_per_run() {
    let grid = Variation::grid(&[("material.rho".into(), vec![json!(1.0), json!(-1.0)])]);
    let runs = sweep(&base_config(), Path::new("."), &grid);
    assert!(runs[0].result.is_ok());
    assert!(runs[1].result.is_err());
}

#[test]
fn trace_csv_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::from_value(base_config(), dir.path()).unwrap();
    let model = cfg.build().unwrap();
    let a = simulate(&model.system, &model.simulation).unwrap();
    let b = simulate(&model.system, &model.simulation).unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    a.write_csv(&pa).unwrap();
    b.write_csv(&pb).unwrap();
    let text = std::fs::read(&pa).unwrap();
    assert_eq!(text, std::fs::read(&pb).unwrap());

    let back = SimulationTrace::read_csv(&pa, Representation::Impedance).unwrap();
    assert_eq!(back.times, a.times);
    assert_eq!(back.energy, a.energy);
    assert_eq!(back.u, a.u);
    assert_eq!(back.y, a.y);
    assert_eq!(back.v_gamma1, a.v_gamma1);
    let audit = audit_energy_balance(&back, &model.system).unwrap();
    assert_eq!(audit, audit_energy_balance(&a, &model.system).unwrap());
}

#[test]
fn config_survives_emit_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    let mut value = base_config();
    value["damping"]["qi"] = json!({"skew": 0.0});
    value["material"] = json!({"rho": 2.0, "t": vec![1.0; 33]});
    let cfg = ModelConfig::from_value(value, dir.path()).unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg.to_value()).unwrap()).unwrap();
    let again = wavebct::config::parse_config(&path).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.simulation_config().unwrap().hash(), cfg.simulation_config().unwrap().hash());
}
