use nalgebra::DMatrix;

use super::C64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prefault,
    Faulton,
    Postfault,
}

/// Admittance matrix reduced onto a set of kept nodes, with the map that
/// rebuilds eliminated-node voltages from kept-node voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub stage: Stage,
    pub matrix: DMatrix<C64>,
    /// Original indices of the kept nodes, in matrix order.
    pub kept: Vec<usize>,
    /// Original indices of the eliminated nodes, in recovery-row order.
    pub eliminated: Vec<usize>,
    /// `V_eliminated = recovery * V_kept`, i.e. `-Y_ee^-1 Y_ek`.
    pub recovery: DMatrix<C64>,
}

impl ReducedNetwork {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Recovery rows for the given original node indices (each must be an
    /// eliminated node or a kept node).
    pub fn recovery_rows(&self, nodes: &[usize]) -> Result<DMatrix<C64>> {
        let k = self.kept.len();
        let mut out = DMatrix::<C64>::zeros(nodes.len(), k);
        for (r, &node) in nodes.iter().enumerate() {
            if let Some(e) = self.eliminated.iter().position(|&x| x == node) {
                out.row_mut(r).copy_from(&self.recovery.row(e));
            } else if let Some(c) = self.kept.iter().position(|&x| x == node) {
                out[(r, c)] = C64::new(1.0, 0.0);
            } else {
                return Err(Error::UnknownElement { what: "node", index: node });
            }
        }
        Ok(out)
    }
}

/// Eliminates every node not in `keep`:
/// `Y_red = Y_kk - Y_ke Y_ee^-1 Y_ek`.
pub fn kron_reduce(y: &DMatrix<C64>, keep: &[usize], stage: Stage) -> Result<ReducedNetwork> {
    let n = y.nrows();
    if y.ncols() != n {
        return Err(Error::Dimension(format!("admittance matrix is {}x{}", n, y.ncols())));
    }
    let mut is_kept = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(Error::UnknownElement { what: "node", index: k });
        }
        if std::mem::replace(&mut is_kept[k], true) {
            return Err(Error::Dimension(format!("node {k} listed twice in keep set")));
        }
    }
    let elim: Vec<usize> = (0..n).filter(|&i| !is_kept[i]).collect();
    let (nk, ne) = (keep.len(), elim.len());

    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| y[(rows[r], cols[c])])
    };
    let y_kk = sub(keep, keep);
    if ne == 0 {
        return Ok(ReducedNetwork {
            stage,
            matrix: y_kk,
            kept: keep.to_vec(),
            eliminated: elim,
            recovery: DMatrix::zeros(0, nk),
        });
    }
    let y_ee = sub(&elim, &elim);
    let y_ek = sub(&elim, keep);
    let y_ke = sub(keep, &elim);

    let lu = y_ee.lu();
    let singular = || Error::SingularReduction { nodes: elim.clone() };
    let u = lu.u();
    let pivots: Vec<f64> = (0..ne).map(|i| u[(i, i)].norm()).collect();
    let max_pivot = pivots.iter().cloned().fold(0.0, f64::max);
    if pivots.iter().any(|&p| !(p > max_pivot * 1e-14)) {
        return Err(singular());
    }
    let x = lu.solve(&y_ek).ok_or_else(singular)?;
    if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(singular());
    }
    let matrix = y_kk - &y_ke * &x;
    Ok(ReducedNetwork {
        stage,
        matrix,
        kept: keep.to_vec(),
        eliminated: elim,
        recovery: -x,
    })
}
