//! Classical-model multi-machine simulation through prefault, fault-on and
//! postfault stages, with stability and critical-pair labeling.

mod label;
mod simulate;
mod trace_io;

pub use label::{label_stability, CriticalPair, Labeling};
pub use simulate::{electrical_power, simulate, simulate_machines, Machines, SimOptions};
pub use trace_io::{read_trace, write_trace};

use crate::grid_model::{FaultKind, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    /// Rotor angles (rad).
    pub delta: Vec<f64>,
    /// Speed deviations from synchronous (rad/s).
    pub omega: Vec<f64>,
    pub t: f64,
}

/// One randomized contingency.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultScenario {
    pub kind: FaultKind,
    /// Index into `GridModel::branches`.
    pub branch: usize,
    /// Position along the branch from its from-bus, in [0, 1].
    pub location: f64,
    /// Fault onset time (s).
    pub onset: f64,
    /// Fault duration (s); clearance happens at `onset + duration`.
    pub duration: f64,
    pub load_scale: f64,
    pub seed: u64,
    pub z_fault: C64,
}

impl FaultScenario {
    pub fn clear_time(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Uniformly sampled simulation output. Series are indexed
/// `[generator][sample]`; sample `k` sits at `t = k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub dt: f64,
    pub t_fault: f64,
    pub t_clear: f64,
    pub delta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub pe: Vec<Vec<f64>>,
    pub vt: Vec<Vec<f64>>,
    pub labeling: Labeling,
}

impl TraceSet {
    pub fn generator_count(&self) -> usize {
        self.delta.len()
    }

    pub fn len(&self) -> usize {
        self.delta.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end_time(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Grid index of a time that must lie on the sample grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        grid_index(t, self.dt)
    }
}

/// `round(t / dt)` if `t` lies on the grid to within 1e-6 of a step.
pub(crate) fn grid_index(t: f64, dt: f64) -> Option<usize> {
    let k = (t / dt).round();
    ((t / dt - k).abs() < 1e-6 && k >= 0.0).then_some(k as usize)
}
