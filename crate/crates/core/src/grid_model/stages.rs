use nalgebra::{DMatrix, DVector};

use super::{
    build_ybus, fault_shunt, kron_reduce, shunt_admittance, GridModel, OperatingPoint,
    ReducedNetwork, Stage, StageEdit, C64,
};
use crate::error::{Error, Result};
use crate::transim::FaultScenario;

#[derive(Debug, Clone, PartialEq)]
pub struct StageOptions {
    /// Admittance used for bolted faults (pu).
    pub bolted_admittance: f64,
    /// Location fractions within this distance of 0 or 1 attach the fault
    /// at the branch endpoint instead of splitting the branch.
    pub endpoint_tolerance: f64,
}

impl Default for StageOptions {
    fn default() -> Self {
        StageOptions {
            bolted_admittance: 1e6,
            endpoint_tolerance: 1e-6,
        }
    }
}

/// The three reduced networks a fault scenario steps through, plus the
/// terminal-bus index of each generator for voltage reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct StageNetworks {
    pub prefault: ReducedNetwork,
    pub faulton: ReducedNetwork,
    pub postfault: ReducedNetwork,
    pub terminals: Vec<usize>,
    /// Impedance inserted at the fault point.
    pub fault_impedance: C64,
    /// Node the fault shunt is attached to (may be the split node).
    pub fault_node: usize,
}

impl StageNetworks {
    pub fn get(&self, stage: Stage) -> &ReducedNetwork {
        match stage {
            Stage::Prefault => &self.prefault,
            Stage::Faulton => &self.faulton,
            Stage::Postfault => &self.postfault,
        }
    }
}

/// Builds prefault, fault-on and postfault networks reduced to generator
/// internal nodes. Loads enter as constant admittances at the operating
/// point; the fault-on network splits the faulted branch and attaches the
/// composed fault shunt; the postfault network drops the faulted branch.
pub fn stage_networks(
    model: &GridModel,
    op: &OperatingPoint,
    scenario: &FaultScenario,
    opts: &StageOptions,
) -> Result<StageNetworks> {
    let k = scenario.branch;
    let branch = model
        .branches
        .get(k)
        .ok_or(Error::UnknownElement { what: "branch", index: k })?;
    let f = scenario.location;
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Config(format!("location fraction {f} outside [0, 1]")));
    }

    let loads: Vec<StageEdit> = (0..model.bus_count())
        .filter_map(|i| {
            let y = op.load_admittance(i);
            (y.norm() > 0.0).then_some(StageEdit::AddShunt { node: i, admittance: y })
        })
        .collect();

    let (split, fault_node) = if f <= opts.endpoint_tolerance {
        (None, branch.from)
    } else if f >= 1.0 - opts.endpoint_tolerance {
        (None, branch.to)
    } else {
        (Some(StageEdit::SplitBranch { branch: k, fraction: f }), model.bus_count())
    };

    let mut with_split = loads.clone();
    with_split.extend(split.clone());

    let z_neg = driving_point(model, &build_ybus(model, &with_split)?, fault_node)?;
    let zero_model = zero_sequence_model(model);
    let z_zero = driving_point(model, &build_ybus(&zero_model, &with_split)?, fault_node)?;
    let z_fault = fault_shunt(scenario.kind, z_neg, z_zero, scenario.z_fault)?;
    let y_fault = shunt_admittance(z_fault, opts.bolted_admittance);

    let mut faulton_edits = with_split;
    faulton_edits.push(StageEdit::AddShunt { node: fault_node, admittance: y_fault });
    let mut post_edits = loads.clone();
    post_edits.push(StageEdit::RemoveBranch(k));

    let reduce = |edits: &[StageEdit], stage| -> Result<ReducedNetwork> {
        let y = build_ybus(model, edits)?;
        let (aug, keep) = augment_with_machines(model, &y);
        kron_reduce(&aug, &keep, stage)
    };

    Ok(StageNetworks {
        prefault: reduce(&loads, Stage::Prefault)?,
        faulton: reduce(&faulton_edits, Stage::Faulton)?,
        postfault: reduce(&post_edits, Stage::Postfault)?,
        terminals: model.generators.iter().map(|g| g.bus).collect(),
        fault_impedance: z_fault,
        fault_node,
    })
}

/// Prefault network (no fault) reduced to the internal nodes.
pub fn prefault_network(model: &GridModel, op: &OperatingPoint) -> Result<ReducedNetwork> {
    let loads: Vec<StageEdit> = (0..model.bus_count())
        .map(|i| StageEdit::AddShunt { node: i, admittance: op.load_admittance(i) })
        .collect();
    let y = build_ybus(model, &loads)?;
    let (aug, keep) = augment_with_machines(model, &y);
    kron_reduce(&aug, &keep, Stage::Prefault)
}

/// Appends one internal node per generator, tied to its terminal bus
/// through `1 / (j X'd)`. Returns the augmented matrix and the internal
/// node indices.
fn augment_with_machines(model: &GridModel, y: &DMatrix<C64>) -> (DMatrix<C64>, Vec<usize>) {
    let n = y.nrows();
    let g = model.generator_count();
    let mut aug = DMatrix::<C64>::zeros(n + g, n + g);
    aug.view_mut((0, 0), (n, n)).copy_from(y);
    for (k, gen) in model.generators.iter().enumerate() {
        let yg = C64::new(0.0, gen.xd_prime).inv();
        let internal = n + k;
        aug[(gen.bus, gen.bus)] += yg;
        aug[(internal, internal)] += yg;
        aug[(gen.bus, internal)] -= yg;
        aug[(internal, gen.bus)] -= yg;
    }
    (aug, (n..n + g).collect())
}

/// Thevenin impedance seen at `node` with machine EMFs shorted.
fn driving_point(model: &GridModel, y: &DMatrix<C64>, node: usize) -> Result<C64> {
    let mut ybar = y.clone();
    for gen in &model.generators {
        ybar[(gen.bus, gen.bus)] += C64::new(0.0, gen.xd_prime).inv();
    }
    let n = ybar.nrows();
    let mut e = DVector::<C64>::zeros(n);
    e[node] = C64::new(1.0, 0.0);
    let z = ybar
        .lu()
        .solve(&e)
        .ok_or(Error::SingularReduction { nodes: vec![node] })?;
    Ok(z[node])
}

fn zero_sequence_model(model: &GridModel) -> GridModel {
    let mut m = model.clone();
    for br in &mut m.branches {
        br.r *= br.zero_seq_factor;
        br.x *= br.zero_seq_factor;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{solve_power_flow, FaultKind, PowerFlowOptions};

    fn scenario(kind: FaultKind, branch: usize, location: f64) -> FaultScenario {
        FaultScenario {
            kind,
            branch,
            location,
            onset: 1.0,
            duration: 0.1,
            load_scale: 1.0,
            seed: 0,
            z_fault: C64::new(0.0, 0.0),
        }
    }

    fn setup() -> (GridModel, OperatingPoint) {
        let m = GridModel::ieee39();
        let op = solve_power_flow(&m, 1.0, &PowerFlowOptions::default()).unwrap();
        (m, op)
    }

    fn max_asym(a: &DMatrix<C64>) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let scale = a[(i, j)].norm().max(1e-300);
                worst = worst.max((a[(i, j)] - a[(j, i)]).norm() / scale);
            }
        }
        worst
    }

    #[test]
    fn reduced_matrices_are_square_and_symmetric() {
        let (m, op) = setup();
        let nets = stage_networks(&m, &op, &scenario(FaultKind::ThreePhase, 0, 0.4), &StageOptions::default()).unwrap();
        for net in [&nets.prefault, &nets.faulton, &nets.postfault] {
            assert_eq!(net.dim(), 10);
            assert!(max_asym(&net.matrix) < 1e-12);
        }
        assert_eq!(nets.faulton.stage, Stage::Faulton);
        assert_eq!(nets.fault_node, 39);
    }

    #[test]
    fn endpoint_attachment_at_fraction_zero() {
        let (m, op) = setup();
        let nets = stage_networks(&m, &op, &scenario(FaultKind::ThreePhase, 3, 0.0), &StageOptions::default()).unwrap();
        assert_eq!(nets.fault_node, m.branches[3].from);
        let nets = stage_networks(&m, &op, &scenario(FaultKind::ThreePhase, 3, 1.0), &StageOptions::default()).unwrap();
        assert_eq!(nets.fault_node, m.branches[3].to);
    }

    #[test]
    fn fault_types_change_only_the_fault_shunt() {
        let (m, op) = setup();
        let opts = StageOptions::default();
        let a = stage_networks(&m, &op, &scenario(FaultKind::ThreePhase, 5, 0.3), &opts).unwrap();
        let b = stage_networks(&m, &op, &scenario(FaultKind::SingleLineGround, 5, 0.3), &opts).unwrap();
        assert_eq!(a.prefault, b.prefault);
        assert_eq!(a.postfault, b.postfault);
        assert!(a.fault_impedance.norm() < b.fault_impedance.norm());
        // Unreduced fault-on matrices differ only at the split node's diagonal.
        let loads: Vec<StageEdit> = (0..m.bus_count())
            .map(|i| StageEdit::AddShunt { node: i, admittance: op.load_admittance(i) })
            .collect();
        let build = |z: C64| {
            let mut e = loads.clone();
            e.push(StageEdit::SplitBranch { branch: 5, fraction: 0.3 });
            e.push(StageEdit::AddShunt { node: 39, admittance: shunt_admittance(z, 1e6) });
            build_ybus(&m, &e).unwrap()
        };
        let (ya, yb) = (build(a.fault_impedance), build(b.fault_impedance));
        for i in 0..ya.nrows() {
            for j in 0..ya.ncols() {
                if (i, j) != (39, 39) {
                    assert_eq!(ya[(i, j)], yb[(i, j)]);
                }
            }
        }
        assert_ne!(ya[(39, 39)], yb[(39, 39)]);
    }

    #[test]
    fn postfault_edit_is_invertible() {
        let (m, op) = setup();
        let loads: Vec<StageEdit> = (0..m.bus_count())
            .map(|i| StageEdit::AddShunt { node: i, admittance: op.load_admittance(i) })
            .collect();
        let pre = build_ybus(&m, &loads).unwrap();
        let mut edits = loads.clone();
        edits.push(StageEdit::RemoveBranch(7));
        let mut post = build_ybus(&m, &edits).unwrap();
        let br = &m.branches[7];
        let ys = br.impedance().inv();
        let half = C64::new(0.0, br.b / 2.0);
        post[(br.from, br.from)] += ys + half;
        post[(br.to, br.to)] += ys + half;
        post[(br.from, br.to)] -= ys;
        post[(br.to, br.from)] -= ys;
        assert!((pre - post).iter().all(|d| d.norm() < 1e-9));
    }

    #[test]
    fn islanding_branch_rejected() {
        let (m, op) = setup();
        // Branch 2-30 is generator 10's only tie.
        let k = m
            .branches
            .iter()
            .position(|b| m.buses[b.to].id == 30)
            .unwrap();
        match stage_networks(&m, &op, &scenario(FaultKind::LineLine, k, 0.5), &StageOptions::default()) {
            Err(Error::Islanded { buses }) => assert_eq!(buses, vec![30]),
            other => panic!("expected island, got {other:?}"),
        }
    }

    #[test]
    fn prefault_reduction_matches_operating_point() {
        let (m, op) = setup();
        let net = prefault_network(&m, &op).unwrap();
        let e: Vec<C64> = (0..10).map(|k| C64::from_polar(op.emf[k], op.delta0[k])).collect();
        for i in 0..10 {
            let cur = (0..10).fold(C64::new(0.0, 0.0), |a, j| a + net.matrix[(i, j)] * e[j]);
            let pe = (e[i] * cur.conj()).re;
            assert!((pe - op.p_mech[i]).abs() < 1e-8, "gen {i}: {pe} vs {}", op.p_mech[i]);
        }
    }
}
