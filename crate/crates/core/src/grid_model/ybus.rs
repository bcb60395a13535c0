use nalgebra::DMatrix;

use super::{GridModel, C64};
use crate::error::{Error, Result};

/// A modification applied on top of the base network when assembling a
/// stage-specific admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum StageEdit {
    /// Take a branch out of service.
    RemoveBranch(usize),
    /// Split a branch at `fraction` of its length (measured from its
    /// from-bus), creating one extra node with index `bus_count()`.
    SplitBranch { branch: usize, fraction: f64 },
    /// Add a shunt admittance to ground at a node.
    AddShunt { node: usize, admittance: C64 },
}

/// Assembles the complex bus admittance matrix of `model` with `edits`
/// applied. A split adds one trailing node.
pub fn build_ybus(model: &GridModel, edits: &[StageEdit]) -> Result<DMatrix<C64>> {
    let n_bus = model.bus_count();
    let mut removed = vec![false; model.branches.len()];
    let mut split: Option<(usize, f64)> = None;
    for e in edits {
        match *e {
            StageEdit::RemoveBranch(k) => {
                if k >= model.branches.len() {
                    return Err(Error::UnknownElement { what: "branch", index: k });
                }
                removed[k] = true;
            }
            StageEdit::SplitBranch { branch, fraction } => {
                if branch >= model.branches.len() {
                    return Err(Error::UnknownElement { what: "branch", index: branch });
                }
                if !(fraction > 0.0 && fraction < 1.0) {
                    return Err(Error::Config(format!(
                        "split fraction {fraction} must lie strictly inside (0, 1)"
                    )));
                }
                if split.replace((branch, fraction)).is_some() {
                    return Err(Error::Config("only one branch split per stage".into()));
                }
            }
            StageEdit::AddShunt { .. } => {}
        }
    }
    let n = n_bus + usize::from(split.is_some());

    let mut y = DMatrix::<C64>::zeros(n, n);
    let mut edges = Vec::with_capacity(model.branches.len() + 1);
    let stamp = |y: &mut DMatrix<C64>, a: usize, b: usize, z: C64, charging: f64| {
        let ys = z.inv();
        let half = C64::new(0.0, charging / 2.0);
        y[(a, a)] += ys + half;
        y[(b, b)] += ys + half;
        y[(a, b)] -= ys;
        y[(b, a)] -= ys;
    };

    for (k, br) in model.branches.iter().enumerate() {
        if removed[k] {
            continue;
        }
        match split {
            Some((s, f)) if s == k => {
                let mid = n_bus;
                stamp(&mut y, br.from, mid, br.impedance() * f, br.b * f);
                stamp(&mut y, mid, br.to, br.impedance() * (1.0 - f), br.b * (1.0 - f));
                edges.push((br.from, mid));
                edges.push((mid, br.to));
            }
            _ => {
                stamp(&mut y, br.from, br.to, br.impedance(), br.b);
                edges.push((br.from, br.to));
            }
        }
    }
    for (i, bus) in model.buses.iter().enumerate() {
        y[(i, i)] += C64::new(bus.g_shunt, bus.b_shunt);
    }
    for e in edits {
        if let StageEdit::AddShunt { node, admittance } = *e {
            if node >= n {
                return Err(Error::UnknownElement { what: "node", index: node });
            }
            y[(node, node)] += admittance;
        }
    }

    let comps = connected_components(n, edges.iter().copied());
    if comps.len() > 1 {
        let island = comps.iter().min_by_key(|c| c.len()).unwrap();
        return Err(Error::Islanded {
            buses: island
                .iter()
                .map(|&i| model.buses.get(i).map_or(0, |b| b.id))
                .collect(),
        });
    }
    Ok(y)
}

/// Connected components of an undirected graph, each sorted, ordered by
/// smallest member.
pub fn connected_components(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut i = 0;
        while i < comp.len() {
            let u = comp[i];
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}
