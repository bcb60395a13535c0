use std::time::Instant;

use crate::error::{Error, Result};

/// Differentiable objective for the CG loop.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Exact minimizing step along `r` from `x`, when the objective has a
    /// closed form for it. The CG loop then uses it instead of the
    /// interpolating search.
    fn exact_step(&self, _x: &[f64], _r: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchConfig {
    /// First trial step, relative to a unit-length direction.
    pub initial_step: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    pub max_expansions: usize,
    pub max_contractions: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig { initial_step: 1.0, c1: 1e-4, max_expansions: 8, max_contractions: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub loss_tol: f64,
    /// Iterations between forced steepest-descent restarts; `None` uses
    /// the parameter count capped at 200.
    pub restart_period: Option<usize>,
    pub line_search: LineSearchConfig,
    /// Clamp β at zero.
    pub pr_plus: bool,
    /// Weight-initialization seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 300,
            grad_tol: 1e-6,
            loss_tol: 1e-6,
            restart_period: None,
            line_search: LineSearchConfig::default(),
            pr_plus: true,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.loss_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.restart_period == Some(0) {
            return Err(Error::Config("restart period must be at least 1".into()));
        }
        let ls = &self.line_search;
        if !(ls.initial_step > 0.0 && ls.c1 > 0.0 && ls.c1 < 1.0) {
            return Err(Error::Config("line search needs a positive initial step and c1 in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn period(&self, params: usize) -> usize {
        self.restart_period.unwrap_or_else(|| params.clamp(1, 200))
    }
}

/// Iterate of the CG loop.
#[derive(Debug, Clone, PartialEq)]
pub struct CgState {
    pub k: usize,
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub g_prev: Option<Vec<f64>>,
    pub r: Vec<f64>,
    pub beta: f64,
    pub step: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub beta: f64,
    pub step: f64,
    pub restart: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    LossTolerance,
    MaxIterations,
    /// Steepest descent found no acceptable step.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub final_loss: f64,
    pub grad_norm: f64,
    pub wall_time: f64,
    pub losses: Vec<f64>,
    pub restarts: usize,
    pub line_search_failures: usize,
    pub stop: StopReason,
    pub log: Vec<IterationRecord>,
}

impl TrainReport {
    /// One line per iteration: `k loss grad_norm beta step restart`.
    pub fn log_text(&self) -> String {
        let mut s = String::from("# k loss grad_norm beta step restart\n");
        for r in &self.log {
            s.push_str(&format!("{} {:e} {:e} {} {:e} {}\n", r.k, r.loss, r.grad_norm, r.beta, r.step, u8::from(r.restart)));
        }
        s
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Polak-Ribière index `Gₖᵀ(Gₖ − Gₖ₋₁) / Gₖ₋₁ᵀGₖ₋₁`, clamped at zero when
/// `clamp` is set.
pub fn pr_beta(g: &[f64], g_prev: &[f64], clamp: bool) -> Result<f64> {
    let den = dot(g_prev, g_prev);
    if den == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let num: f64 = g.iter().zip(g_prev).map(|(a, b)| a * (a - b)).sum();
    let beta = num / den;
    Ok(if clamp { beta.max(0.0) } else { beta })
}

/// `Rₖ = −Gₖ + β Rₖ₋₁`, reset to `−Gₖ` when that is not a descent
/// direction. Returns the direction and whether it was reset.
pub fn cg_direction(g: &[f64], r_prev: Option<&[f64]>, beta: f64) -> (Vec<f64>, bool) {
    let Some(r_prev) = r_prev else {
        return (g.iter().map(|v| -v).collect(), false);
    };
    let r: Vec<f64> = g.iter().zip(r_prev).map(|(gi, ri)| -gi + beta * ri).collect();
    if dot(&r, g) >= 0.0 {
        (g.iter().map(|v| -v).collect(), true)
    } else {
        (r, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub value: f64,
    pub evaluations: usize,
    /// No trial satisfied sufficient decrease.
    pub failed: bool,
}

/// Minimizer of the quadratic through `φ(0)`, `φ'(0)` and `φ(δ)`;
/// infinite when that quadratic is not convex.
fn quadratic_step(phi0: f64, dphi0: f64, delta: f64, f_delta: f64) -> f64 {
    let curv = f_delta - phi0 - dphi0 * delta;
    if curv > 0.0 {
        -dphi0 * delta * delta / (2.0 * curv)
    } else {
        f64::INFINITY
    }
}

/// Approximate minimizer of `φ(δ) = f(x + δR)` by quadratic interpolation
/// with bracketing. Accepts the lowest trial satisfying
/// `φ(δ) ≤ φ(0) + c₁ δ φ'(0)`. On failure the smallest trial step is
/// returned with `failed` set.
pub fn line_search(
    mut phi: impl FnMut(f64) -> Result<f64>,
    phi0: f64,
    dphi0: f64,
    cfg: &LineSearchConfig,
    initial: f64,
) -> Result<LineSearchOutcome> {
    if !(dphi0 < 0.0) {
        return Err(Error::NotDescent { slope: dphi0 });
    }
    let armijo = |d: f64, v: f64| v.is_finite() && v <= phi0 + cfg.c1 * d * dphi0;
    let mut evaluations = 0;
    let mut eval = |d: f64| -> Result<f64> {
        evaluations += 1;
        let v = phi(d)?;
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    };
    let mut best: Option<(f64, f64)> = None;
    let consider = |d: f64, v: f64, best: &mut Option<(f64, f64)>| {
        if armijo(d, v) && best.map_or(true, |(_, bv)| v < bv) {
            *best = Some((d, v));
        }
    };

    let mut delta = initial;
    let mut f_delta = eval(delta)?;
    consider(delta, f_delta, &mut best);
    let mut smallest = (delta, f_delta);

    if armijo(delta, f_delta) {
        // Interpolate, and expand while the model points further out.
        for _ in 0..=cfg.max_expansions {
            let q = quadratic_step(phi0, dphi0, delta, f_delta);
            let next = if q.is_finite() { q.min(4.0 * delta) } else { 4.0 * delta };
            if (next - delta).abs() <= 1e-12 * delta {
                break;
            }
            let v = eval(next)?;
            consider(next, v, &mut best);
            if next < delta || !(v < f_delta) {
                break;
            }
            delta = next;
            f_delta = v;
            if q.is_finite() && q <= delta {
                break;
            }
        }
    } else {
        for _ in 0..cfg.max_contractions {
            let q = quadratic_step(phi0, dphi0, delta, f_delta);
            let next = if q.is_finite() { q.clamp(0.1 * delta, 0.5 * delta) } else { 0.5 * delta };
            delta = next;
            f_delta = eval(delta)?;
            if delta < smallest.0 {
                smallest = (delta, f_delta);
            }
            if armijo(delta, f_delta) {
                consider(delta, f_delta, &mut best);
                // One interpolation refinement inside the bracket.
                let q = quadratic_step(phi0, dphi0, delta, f_delta);
                if q.is_finite() && (q - delta).abs() > 1e-3 * delta && q < 2.0 * delta {
                    let v = eval(q)?;
                    consider(q, v, &mut best);
                }
                break;
            }
        }
    }
    Ok(match best {
        Some((step, value)) => LineSearchOutcome { step, value, evaluations, failed: false },
        None => LineSearchOutcome { step: smallest.0, value: smallest.1, evaluations, failed: true },
    })
}

fn axpy_new(x: &[f64], d: f64, r: &[f64]) -> Vec<f64> {
    x.iter().zip(r).map(|(xi, ri)| xi + d * ri).collect()
}

/// Nonlinear conjugate gradient (PR direction updates, periodic and
/// non-descent restarts) from `x0`.
pub fn minimize(obj: &dyn Objective, x0: Vec<f64>, cfg: &TrainConfig) -> Result<(Vec<f64>, TrainReport)> {
    cfg.validate()?;
    if x0.len() != obj.dim() {
        return Err(Error::Dimension(format!("start point has {} entries, objective {}", x0.len(), obj.dim())));
    }
    let started = Instant::now();
    let period = cfg.period(x0.len());
    let (f0, g0) = obj.value_grad(&x0)?;
    if !f0.is_finite() {
        return Err(Error::TrainingDiverged { iteration: 0 });
    }
    let mut st = CgState { k: 0, r: g0.iter().map(|v| -v).collect(), x: x0, g: g0, g_prev: None, beta: 0.0, step: 0.0, f: f0 };
    let mut restart = true;
    let mut since_restart = 0;
    let mut report = TrainReport {
        iterations: 0,
        final_loss: f0,
        grad_norm: norm(&st.g),
        wall_time: 0.0,
        losses: vec![f0],
        restarts: 0,
        line_search_failures: 0,
        stop: StopReason::MaxIterations,
        log: Vec::new(),
    };
    let mut prev_slope: Option<f64> = None;

    loop {
        let gnorm = norm(&st.g);
        report.log.push(IterationRecord { k: st.k, loss: st.f, grad_norm: gnorm, beta: st.beta, step: st.step, restart });
        if gnorm < cfg.grad_tol {
            report.stop = StopReason::GradientTolerance;
            break;
        }
        if st.f < cfg.loss_tol {
            report.stop = StopReason::LossTolerance;
            break;
        }
        if st.k >= cfg.max_iterations {
            report.stop = StopReason::MaxIterations;
            break;
        }

        let slope = dot(&st.g, &st.r);
        let step = match obj.exact_step(&st.x, &st.r) {
            Some(d) => d,
            None => {
                let rnorm = norm(&st.r);
                let init = match prev_slope {
                    Some(ps) if !restart => (st.step * ps / slope).clamp(1e-12, 1e12),
                    _ => cfg.line_search.initial_step / rnorm.max(1.0),
                };
                let x = &st.x;
                let r = &st.r;
                let out = line_search(|d| obj.value(&axpy_new(x, d, r)), st.f, slope, &cfg.line_search, init)?;
                if out.failed {
                    report.line_search_failures += 1;
                    if !(out.value <= st.f) {
                        // Refuse an increasing step: retry along −G, or stop
                        // if that already was the direction.
                        if restart {
                            report.stop = StopReason::Stalled;
                            break;
                        }
                        st.r = st.g.iter().map(|v| -v).collect();
                        restart = true;
                        report.restarts += 1;
                        since_restart = 0;
                        prev_slope = None;
                        continue;
                    }
                }
                out.step
            }
        };

        let x_new = axpy_new(&st.x, step, &st.r);
        let (f_new, g_new) = obj.value_grad(&x_new)?;
        if !f_new.is_finite() {
            return Err(Error::TrainingDiverged { iteration: st.k + 1 });
        }
        since_restart += 1;
        let (r_new, beta, reset) = if since_restart >= period {
            (g_new.iter().map(|v| -v).collect(), 0.0, true)
        } else {
            match pr_beta(&g_new, &st.g, cfg.pr_plus) {
                Ok(beta) => {
                    let (r, reset) = cg_direction(&g_new, Some(&st.r), beta);
                    (r, if reset { 0.0 } else { beta }, reset)
                }
                Err(_) => (g_new.iter().map(|v| -v).collect(), 0.0, true),
            }
        };
        if reset {
            since_restart = 0;
            report.restarts += 1;
        }
        prev_slope = Some(slope);
        restart = reset;
        st.g_prev = Some(std::mem::replace(&mut st.g, g_new));
        st.x = x_new;
        st.f = f_new;
        st.r = r_new;
        st.beta = beta;
        st.step = step;
        st.k += 1;
        report.losses.push(f_new);
    }
    report.iterations = st.k;
    report.final_loss = st.f;
    report.grad_norm = norm(&st.g);
    report.wall_time = started.elapsed().as_secs_f64();
    Ok((st.x, report))
}
