#![allow(dead_code)]
//! Strictly convex quadratic with an exact line search, and textbook
//! linear CG as the oracle for the nonlinear loop.

use gridpulse_core::trainer::{minimize, Objective, TrainConfig};
use gridpulse_core::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `f(x) = ½ xᵀAx − bᵀx + c` with a closed-form exact line search; `c`
/// puts the minimum at 1 so the loss tolerance never triggers.
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl Quadratic {
    pub fn random(n: usize, cond: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = m.qr().q();
        let eig = DVector::from_fn(n, |i, _| cond.powf(i as f64 / (n - 1) as f64));
        let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let c = 0.5 * b.dot(&a.clone().lu().solve(&b).unwrap()) + 1.0;
        Quadratic { a, b, c }
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(x) - &self.b
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        let x = DVector::from_column_slice(x);
        Ok(0.5 * x.dot(&(&self.a * &x)) - self.b.dot(&x) + self.c)
    }
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(x)?, self.grad(x).as_slice().to_vec()))
    }
    fn exact_step(&self, x: &[f64], r: &[f64]) -> Option<f64> {
        let r = DVector::from_column_slice(r);
        Some(-self.grad(x).dot(&r) / r.dot(&(&self.a * &r)))
    }
}

/// Textbook linear CG on `Ax = b`, independent of the nonlinear loop.
pub fn linear_cg(q: &Quadratic, iters: usize) -> Vec<DVector<f64>> {
    let mut x = DVector::zeros(q.dim());
    let mut r = &q.b - &q.a * &x;
    let mut p = r.clone();
    let mut xs = vec![x.clone()];
    for _ in 0..iters {
        let ap = &q.a * &p;
        let alpha = r.dot(&r) / p.dot(&ap);
        x += alpha * &p;
        let r_new = &r - alpha * &ap;
        let beta = r_new.dot(&r_new) / r.dot(&r);
        p = &r_new + beta * &p;
        r = r_new;
        xs.push(x.clone());
    }
    xs
}

pub struct ConvergenceRun {
    pub iterations: usize,
    pub grad_norm: f64,
    /// Largest rise between successive accepted losses.
    pub max_rise: f64,
}

/// Minimizes a 50-dimensional quadratic (condition number 50) with a
/// 60-iteration cap and gradient tolerance 1e-8.
pub fn converge() -> ConvergenceRun {
    let q = Quadratic::random(50, 50.0, 3);
    let cfg = TrainConfig { max_iterations: 60, grad_tol: 1e-8, ..Default::default() };
    let (x, rep) = minimize(&q, vec![0.0; 50], &cfg).unwrap();
    let max_rise = rep.losses.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    ConvergenceRun { iterations: rep.iterations, grad_norm: q.grad(&x).norm(), max_rise }
}

pub struct OrthogonalityRun {
    /// Largest relative distance from the linear-CG iterate.
    pub iterate_error: f64,
    /// Largest |g_k · g_{k-1}| / (|g_k| |g_{k-1}|).
    pub orthogonality: f64,
}

/// Runs the first `steps` iterations one cap at a time.
pub fn orthogonality(steps: usize) -> OrthogonalityRun {
    let q = Quadratic::random(50, 50.0, 11);
    let oracle = linear_cg(&q, steps);
    let mut prev: Option<DVector<f64>> = None;
    let mut out = OrthogonalityRun { iterate_error: 0.0, orthogonality: 0.0 };
    for k in 1..=steps {
        let cfg = TrainConfig { max_iterations: k, grad_tol: 1e-300, ..Default::default() };
        let (x, rep) = minimize(&q, vec![0.0; 50], &cfg).unwrap();
        assert_eq!(rep.iterations, k);
        let x = DVector::from_column_slice(&x);
        out.iterate_error = out.iterate_error.max((&x - &oracle[k]).norm() / oracle[k].norm());
        let g = q.grad(x.as_slice());
        if let Some(gp) = &prev {
            out.orthogonality = out.orthogonality.max(g.dot(gp).abs() / (g.norm() * gp.norm()));
        }
        prev = Some(g);
    }
    out
}
