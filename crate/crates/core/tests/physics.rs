#[path = "support/smib.rs"]
mod smib;

#[path = "support/grid39.rs"]
mod grid39;

use gridpulse_core::grid_model::{FaultKind, GridModel, ReducedNetwork, Stage, StageNetworks, C64};
use gridpulse_core::transim::{simulate_machines, Machines, SimOptions};
use nalgebra::DMatrix;

use grid39::{run, scenario};

#[test]
fn equilibrium_holds_without_fault() {
    let r = grid39::equilibrium();
    assert!((r.end_time - 5.0).abs() < 1e-9);
    assert!(r.drift < 1e-6, "drift {}", r.drift);
    assert!(!r.unstable);
    // Terminal voltages reproduce the power-flow solution.
    assert!(r.vt_error < 1e-8, "{}", r.vt_error);
}

#[test]
fn smib_clearing_ten_ms_either_side_of_critical() {
    let cct = smib::eac_critical_clearing_time();
    let below = ((cct - 0.010) * 1e3).round() * 1e-3;
    let above = ((cct + 0.010) * 1e3).round() * 1e-3;
    assert!(!smib::is_unstable(below), "cct {cct}");
    assert!(smib::is_unstable(above), "cct {cct}");
}

#[test]
fn smib_critical_clearing_time_matches_equal_area() {
    let oracle = smib::eac_critical_clearing_time();
    let sim = smib::simulated_critical_clearing_time();
    assert!((sim - oracle).abs() < 5e-3, "sim {sim} vs eac {oracle}");
}

#[test]
fn step_halving_converges() {
    let d = grid39::step_halving_change();
    assert!(d < 1e-4, "{d}");
}

#[test]
fn simulation_is_bit_deterministic() {
    let s = scenario(FaultKind::ThreePhase, 10, 0.2, 1.2);
    assert_eq!(run(&s, &SimOptions::default()), run(&s, &SimOptions::default()));
}

#[test]
fn long_bolted_fault_is_unstable_and_short_remote_one_is_not() {
    let hard = run(&scenario(FaultKind::ThreePhase, 27, 0.4, 1.4), &SimOptions::default());
    assert!(hard.labeling.unstable);
    assert!(hard.labeling.critical.is_some());
    let mild = run(&scenario(FaultKind::SingleLineGround, 20, 0.06, 0.7), &SimOptions::default());
    assert!(!mild.labeling.unstable);
    assert!(mild.labeling.critical.is_none());
}

#[test]
fn centre_of_inertia_speed_bounded_when_stable() {
    let m = GridModel::ieee39();
    let s = scenario(FaultKind::LineLine, 12, 0.1, 1.0);
    let t = run(&s, &SimOptions::default());
    assert!(!t.labeling.unstable);
    let h: Vec<f64> = m.generators.iter().map(|g| g.h).collect();
    let total: f64 = h.iter().sum();
    let worst = (0..t.len())
        .map(|k| (0..10).map(|g| h[g] * t.omega[g][k]).sum::<f64>().abs() / total)
        .fold(0.0, f64::max);
    assert!(worst < 2.0, "coi speed {worst} rad/s");
}

#[test]
fn lossless_energy_is_conserved() {
    // Three machines on a purely reactive network, frozen, no damping.
    let b = [[-9.0, 4.0, 5.0], [4.0, -7.0, 3.0], [5.0, 3.0, -8.0]];
    let matrix = DMatrix::from_fn(3, 3, |i, j| C64::new(0.0, b[i][j]));
    let net = ReducedNetwork {
        stage: Stage::Prefault,
        matrix,
        kept: vec![0, 1, 2],
        eliminated: vec![],
        recovery: DMatrix::zeros(0, 3),
    };
    let nets = StageNetworks {
        prefault: net.clone(),
        faulton: net.clone(),
        postfault: net,
        terminals: vec![0, 1, 2],
        fault_impedance: C64::new(0.0, 0.0),
        fault_node: 0,
    };
    let emf = vec![1.05, 1.0, 0.98];
    let machines = Machines {
        inertia: vec![0.08, 0.05, 0.12],
        damping: vec![0.0; 3],
        p_mech: vec![0.6, -0.1, -0.5],
        emf: emf.clone(),
        delta0: vec![0.5, -0.2, -0.1],
    };
    let opts = SimOptions { post_horizon: 4.0, threshold: 100.0, ..Default::default() };
    let t = simulate_machines(&machines, &nets, 0.5, 1.0, &opts).unwrap();
    let energy = |k: usize| {
        let mut w = 0.0;
        for i in 0..3 {
            w += 0.5 * machines.inertia[i] * t.omega[i][k].powi(2) - machines.p_mech[i] * t.delta[i][k];
            for j in i + 1..3 {
                w -= emf[i] * emf[j] * b[i][j] * (t.delta[i][k] - t.delta[j][k]).cos();
            }
        }
        w
    };
    let kinetic_peak = (0..t.len())
        .map(|k| (0..3).map(|i| 0.5 * machines.inertia[i] * t.omega[i][k].powi(2)).sum::<f64>())
        .fold(0.0, f64::max);
    assert!(kinetic_peak > 1e-3);
    let w0 = energy(0);
    let drift = (0..t.len()).map(|k| (energy(k) - w0).abs()).fold(0.0, f64::max);
    let per_second = drift / t.end_time();
    assert!(per_second / kinetic_peak < 1e-3, "drift {per_second} vs {kinetic_peak}");
}
