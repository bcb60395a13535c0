use nalgebra::DMatrix;

use super::{grid_index, label_stability, FaultScenario, TraceSet};
use crate::error::{Error, Result};
use crate::grid_model::{GridModel, OperatingPoint, ReducedNetwork, StageNetworks, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Integration step (s).
    pub dt: f64,
    /// Simulated time after clearance (s).
    pub post_horizon: f64,
    /// Pairwise angle-difference instability threshold (rad).
    pub threshold: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1e-3,
            post_horizon: 5.0,
            threshold: std::f64::consts::PI,
        }
    }
}

/// Per-machine constants of the swing equation
/// `M dω/dt = P_m − P_e − D ω`, `dδ/dt = ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Machines {
    /// `M = 2H / ω_s`.
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub p_mech: Vec<f64>,
    pub emf: Vec<f64>,
    pub delta0: Vec<f64>,
}

impl Machines {
    pub fn from_model(model: &GridModel, op: &OperatingPoint) -> Self {
        let ws = model.omega_sync();
        Machines {
            inertia: model.generators.iter().map(|g| 2.0 * g.h / ws).collect(),
            damping: model.generators.iter().map(|g| g.damping).collect(),
            p_mech: op.p_mech.clone(),
            emf: op.emf.clone(),
            delta0: op.delta0.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.inertia.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inertia.is_empty()
    }
}

/// `P_e,i = Σ_j E_i E_j (G_ij cos δ_ij + B_ij sin δ_ij)`.
pub fn electrical_power(emf: &[f64], delta: &[f64], net: &ReducedNetwork) -> Result<Vec<f64>> {
    let n = net.dim();
    if emf.len() != n || delta.len() != n {
        return Err(Error::Dimension(format!(
            "network has {n} machines, got {} EMFs and {} angles",
            emf.len(),
            delta.len()
        )));
    }
    let mut out = vec![0.0; n];
    Compiled::new(net).power(emf, delta, &mut out);
    Ok(out)
}

/// Flattened G and B for the inner loop.
struct Compiled {
    n: usize,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl Compiled {
    fn new(net: &ReducedNetwork) -> Self {
        let n = net.dim();
        let mut g = Vec::with_capacity(n * n);
        let mut b = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                g.push(net.matrix[(i, j)].re);
                b.push(net.matrix[(i, j)].im);
            }
        }
        Compiled { n, g, b }
    }

    fn power(&self, emf: &[f64], delta: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (mut s, mut c) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (si, ci) = delta[i].sin_cos();
            s[i] = si;
            c[i] = ci;
        }
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                let cos_ij = c[i] * c[j] + s[i] * s[j];
                let sin_ij = s[i] * c[j] - c[i] * s[j];
                acc += emf[j] * (self.g[i * n + j] * cos_ij + self.b[i * n + j] * sin_ij);
            }
            out[i] = emf[i] * acc;
        }
    }
}

/// Simulates `scenario` on the grid from its operating point.
pub fn simulate(
    model: &GridModel,
    op: &OperatingPoint,
    nets: &StageNetworks,
    scenario: &FaultScenario,
    opts: &SimOptions,
) -> Result<TraceSet> {
    simulate_machines(
        &Machines::from_model(model, op),
        nets,
        scenario.onset,
        scenario.clear_time(),
        opts,
    )
}

/// Fixed-step RK4 integration from the machines' initial angles with zero
/// speed deviation. The active network switches exactly at `t_fault` and
/// `t_clear`, both of which must lie on the `dt` grid. Algebraic outputs
/// recorded at a sample use the network in force just before that instant,
/// so the clearance sample still shows fault-on values.
pub fn simulate_machines(
    machines: &Machines,
    nets: &StageNetworks,
    t_fault: f64,
    t_clear: f64,
    opts: &SimOptions,
) -> Result<TraceSet> {
    let n = machines.len();
    for net in [&nets.prefault, &nets.faulton, &nets.postfault] {
        if net.dim() != n {
            return Err(Error::Dimension(format!(
                "{:?} network has dimension {}, expected {n}",
                net.stage,
                net.dim()
            )));
        }
    }
    if nets.terminals.len() != n {
        return Err(Error::Dimension("one terminal node per machine required".into()));
    }
    let dt = opts.dt;
    let kf = grid_index(t_fault, dt).ok_or(Error::OffGrid { time: t_fault, dt })?;
    let kc = grid_index(t_clear, dt).ok_or(Error::OffGrid { time: t_clear, dt })?;
    if kc <= kf {
        return Err(Error::Config(format!(
            "clearance {t_clear} s must come after onset {t_fault} s"
        )));
    }
    let kh = grid_index(opts.post_horizon, dt).ok_or(Error::OffGrid { time: opts.post_horizon, dt })?;
    let steps = kc + kh;

    let stages = [
        (Compiled::new(&nets.prefault), nets.prefault.recovery_rows(&nets.terminals)?),
        (Compiled::new(&nets.faulton), nets.faulton.recovery_rows(&nets.terminals)?),
        (Compiled::new(&nets.postfault), nets.postfault.recovery_rows(&nets.terminals)?),
    ];
    let stage_for_interval = |k: usize| -> usize {
        if k < kf {
            0
        } else if k < kc {
            1
        } else {
            2
        }
    };

    let mut delta = machines.delta0.clone();
    let mut omega = vec![0.0; n];
    let mut out_delta = vec![Vec::with_capacity(steps + 1); n];
    let mut out_omega = vec![Vec::with_capacity(steps + 1); n];
    let mut out_pe = vec![Vec::with_capacity(steps + 1); n];
    let mut out_vt = vec![Vec::with_capacity(steps + 1); n];
    let mut pe = vec![0.0; n];

    let record = |stage: &(Compiled, DMatrix<C64>),
                  delta: &[f64],
                  omega: &[f64],
                  pe: &mut [f64],
                  bufs: (&mut [Vec<f64>], &mut [Vec<f64>], &mut [Vec<f64>], &mut [Vec<f64>])| {
        stage.0.power(&machines.emf, delta, pe);
        let e: Vec<C64> = (0..n).map(|j| C64::from_polar(machines.emf[j], delta[j])).collect();
        for i in 0..n {
            let mut v = C64::new(0.0, 0.0);
            for (j, ej) in e.iter().enumerate() {
                v += stage.1[(i, j)] * ej;
            }
            bufs.0[i].push(delta[i]);
            bufs.1[i].push(omega[i]);
            bufs.2[i].push(pe[i]);
            bufs.3[i].push(v.norm());
        }
    };

    record(
        &stages[0],
        &delta,
        &omega,
        &mut pe,
        (&mut out_delta, &mut out_omega, &mut out_pe, &mut out_vt),
    );

    let deriv = |net: &Compiled, d: &[f64], w: &[f64], dd: &mut [f64], dw: &mut [f64], pe: &mut [f64]| {
        net.power(&machines.emf, d, pe);
        for i in 0..n {
            dd[i] = w[i];
            dw[i] = (machines.p_mech[i] - pe[i] - machines.damping[i] * w[i]) / machines.inertia[i];
        }
    };

    let mut k1 = (vec![0.0; n], vec![0.0; n]);
    let mut k2 = (vec![0.0; n], vec![0.0; n]);
    let mut k3 = (vec![0.0; n], vec![0.0; n]);
    let mut k4 = (vec![0.0; n], vec![0.0; n]);
    let mut td = vec![0.0; n];
    let mut tw = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    for k in 0..steps {
        let stage = &stages[stage_for_interval(k)];
        let net = &stage.0;
        deriv(net, &delta, &omega, &mut k1.0, &mut k1.1, &mut scratch);
        for i in 0..n {
            td[i] = delta[i] + 0.5 * dt * k1.0[i];
            tw[i] = omega[i] + 0.5 * dt * k1.1[i];
        }
        deriv(net, &td, &tw, &mut k2.0, &mut k2.1, &mut scratch);
        for i in 0..n {
            td[i] = delta[i] + 0.5 * dt * k2.0[i];
            tw[i] = omega[i] + 0.5 * dt * k2.1[i];
        }
        deriv(net, &td, &tw, &mut k3.0, &mut k3.1, &mut scratch);
        for i in 0..n {
            td[i] = delta[i] + dt * k3.0[i];
            tw[i] = omega[i] + dt * k3.1[i];
        }
        deriv(net, &td, &tw, &mut k4.0, &mut k4.1, &mut scratch);
        for i in 0..n {
            delta[i] += dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            omega[i] += dt / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        if delta.iter().chain(omega.iter()).any(|x| !x.is_finite()) {
            return Err(Error::SimulationDiverged { time: (k + 1) as f64 * dt });
        }
        record(
            stage,
            &delta,
            &omega,
            &mut pe,
            (&mut out_delta, &mut out_omega, &mut out_pe, &mut out_vt),
        );
    }

    let mut traces = TraceSet {
        dt,
        t_fault: kf as f64 * dt,
        t_clear: kc as f64 * dt,
        delta: out_delta,
        omega: out_omega,
        pe: out_pe,
        vt: out_vt,
        labeling: Default::default(),
    };
    traces.labeling = label_stability(&traces, opts.threshold);
    Ok(traces)
}
