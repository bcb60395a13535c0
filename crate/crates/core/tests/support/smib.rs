//! Single-machine-infinite-bus fixture and its equal-area-criterion
//! critical clearing time, computed by quadrature.

use gridpulse_core::grid_model::{ReducedNetwork, Stage, StageNetworks, C64};
use gridpulse_core::transim::{simulate_machines, Machines, SimOptions};
use nalgebra::DMatrix;

pub const OMEGA_S: f64 = 2.0 * std::f64::consts::PI * 60.0;
pub const H: f64 = 3.5;
pub const E: f64 = 1.1;
pub const P_MECH: f64 = 1.0;
pub const X_PRE: f64 = 0.5;
pub const X_FAULT: f64 = 2.0;
pub const X_POST: f64 = 0.7;
pub const ONSET: f64 = 0.5;

fn net(x: f64, stage: Stage) -> ReducedNetwork {
    let y = C64::new(0.0, -1.0 / x);
    ReducedNetwork {
        stage,
        matrix: DMatrix::from_row_slice(2, 2, &[y, -y, -y, y]),
        kept: vec![0, 1],
        eliminated: vec![],
        recovery: DMatrix::zeros(0, 2),
    }
}

pub fn networks() -> StageNetworks {
    StageNetworks {
        prefault: net(X_PRE, Stage::Prefault),
        faulton: net(X_FAULT, Stage::Faulton),
        postfault: net(X_POST, Stage::Postfault),
        terminals: vec![0, 1],
        fault_impedance: C64::new(0.0, 0.0),
        fault_node: 0,
    }
}

pub fn delta0() -> f64 {
    (P_MECH * X_PRE / E).asin()
}

/// Machine 1 against a second machine of effectively infinite inertia.
pub fn machines() -> Machines {
    let p = E / X_PRE * delta0().sin();
    Machines {
        inertia: vec![2.0 * H / OMEGA_S, 1e12],
        damping: vec![0.0, 0.0],
        p_mech: vec![p, -p],
        emf: vec![E, 1.0],
        delta0: vec![delta0(), 0.0],
    }
}

/// Simulated stability for a clearing time (s after onset, on the 1 ms grid).
pub fn is_unstable(clearing: f64) -> bool {
    let opts = SimOptions { post_horizon: 3.0, ..Default::default() };
    let t = simulate_machines(&machines(), &networks(), ONSET, ONSET + clearing, &opts).unwrap();
    t.labeling.unstable
}

/// Critical clearing time from the equal-area criterion; the time to reach
/// the critical angle under fault-on dynamics is integrated numerically.
pub fn eac_critical_clearing_time() -> f64 {
    let m = 2.0 * H / OMEGA_S;
    let p_fault = E / X_FAULT;
    let p_post = E / X_POST;
    let d0 = delta0();
    let d_max = std::f64::consts::PI - (P_MECH / p_post).asin();
    let cos_cr = (P_MECH * (d_max - d0) + p_post * d_max.cos() - p_fault * d0.cos()) / (p_post - p_fault);
    let d_cr = cos_cr.acos();

    // t = ∫ dδ / ω(δ), ω² = (2/M)(P_m (δ−δ0) + P_f (cos δ − cos δ0)).
    // Substituting δ = δ0 + u² removes the endpoint singularity.
    let omega_sq = |d: f64| 2.0 / m * (P_MECH * (d - d0) + p_fault * (d.cos() - d0.cos()));
    let integrand = |u: f64| {
        if u == 0.0 {
            2.0 / (2.0 / m * (P_MECH - p_fault * d0.sin())).sqrt()
        } else {
            2.0 * u / omega_sq(d0 + u * u).sqrt()
        }
    };
    let upper = (d_cr - d0).sqrt();
    let n = 20_000;
    let h = upper / n as f64;
    let mut s = integrand(0.0) + integrand(upper);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * integrand(k as f64 * h);
    }
    s * h / 3.0
}

/// Smallest unstable clearing time on the 1 ms grid, by bisection.
pub fn simulated_critical_clearing_time() -> f64 {
    let (mut lo, mut hi) = (1usize, 2000usize);
    assert!(!is_unstable(lo as f64 * 1e-3) && is_unstable(hi as f64 * 1e-3));
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if is_unstable(mid as f64 * 1e-3) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi as f64 * 1e-3
}
