#![allow(dead_code)]
//! No-fault and step-halving runs on the built-in 39-bus system.

use gridpulse_core::grid_model::{
    prefault_network, solve_power_flow, stage_networks, FaultKind, GridModel, PowerFlowOptions, StageNetworks,
    StageOptions, C64,
};
use gridpulse_core::transim::{simulate, simulate_machines, FaultScenario, Machines, SimOptions, TraceSet};

pub fn scenario(kind: FaultKind, branch: usize, duration: f64, load: f64) -> FaultScenario {
    FaultScenario {
        kind,
        branch,
        location: 0.5,
        onset: 1.0,
        duration,
        load_scale: load,
        seed: 0,
        z_fault: C64::new(0.0, 0.0),
    }
}

pub fn run(s: &FaultScenario, opts: &SimOptions) -> TraceSet {
    let m = GridModel::ieee39();
    let op = solve_power_flow(&m, s.load_scale, &PowerFlowOptions::default()).unwrap();
    let nets = stage_networks(&m, &op, s, &StageOptions::default()).unwrap();
    simulate(&m, &op, &nets, s, opts).unwrap()
}

pub struct EquilibriumRun {
    pub end_time: f64,
    /// Largest |δ(t) − δ0| over all machines and samples (rad).
    pub drift: f64,
    pub unstable: bool,
    /// Largest terminal-voltage deviation from the power flow at t = 0.
    pub vt_error: f64,
}

/// Five seconds with the prefault network in force throughout.
pub fn equilibrium() -> EquilibriumRun {
    let m = GridModel::ieee39();
    let op = solve_power_flow(&m, 1.0, &PowerFlowOptions::default()).unwrap();
    let pre = prefault_network(&m, &op).unwrap();
    let nets = StageNetworks {
        prefault: pre.clone(),
        faulton: pre.clone(),
        postfault: pre,
        terminals: m.generators.iter().map(|g| g.bus).collect(),
        fault_impedance: C64::new(0.0, 0.0),
        fault_node: 0,
    };
    let opts = SimOptions { post_horizon: 4.0, ..Default::default() };
    let t = simulate_machines(&Machines::from_model(&m, &op), &nets, 0.5, 1.0, &opts).unwrap();
    let d0 = &op.delta0;
    let drift = (0..m.generator_count())
        .flat_map(|g| t.delta[g].iter().map(move |d| (d - d0[g]).abs()))
        .fold(0.0, f64::max);
    let vt_error = m
        .generators
        .iter()
        .enumerate()
        .map(|(g, gen)| (t.vt[g][0] - op.v_mag[gen.bus]).abs())
        .fold(0.0, f64::max);
    EquilibriumRun { end_time: t.end_time(), drift, unstable: t.labeling.unstable, vt_error }
}

/// Largest final-angle change when the step is halved, for a stable
/// single-line-to-ground fault.
pub fn step_halving_change() -> f64 {
    let s = scenario(FaultKind::SingleLineGround, 20, 0.08, 1.0);
    let coarse = run(&s, &SimOptions::default());
    let fine = run(&s, &SimOptions { dt: 5e-4, ..Default::default() });
    assert!(!coarse.labeling.unstable);
    let (lc, lf) = (coarse.len() - 1, fine.len() - 1);
    (0..coarse.generator_count())
        .map(|g| (coarse.delta[g][lc] - fine.delta[g][lf]).abs())
        .fold(0.0, f64::max)
}
