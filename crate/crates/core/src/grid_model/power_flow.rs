use nalgebra::{DMatrix, DVector};

use super::{build_ybus, BusKind, GridModel, C64};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowOptions {
    /// Infinity-norm bus power mismatch, pu.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Load scales outside this range still solve but attach a diagnostic.
    pub valid_load_scale: (f64, f64),
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: 1e-8,
            max_iterations: 30,
            valid_load_scale: (0.7, 1.4),
        }
    }
}

/// Solved pre-fault state, including the classical-model machine quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    /// Internal EMF magnitude behind X'd, per generator.
    pub emf: Vec<f64>,
    /// Initial rotor angle, per generator (rad).
    pub delta0: Vec<f64>,
    /// Mechanical power, equal to the initial electrical output.
    pub p_mech: Vec<f64>,
    /// Scaled bus loads actually applied.
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub load_scale: f64,
    pub mismatch: f64,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

impl OperatingPoint {
    pub fn voltage(&self, bus: usize) -> C64 {
        C64::from_polar(self.v_mag[bus], self.v_ang[bus])
    }

    /// Constant-admittance equivalent of each bus load at the solved voltage.
    pub fn load_admittance(&self, bus: usize) -> C64 {
        C64::new(self.p_load[bus], -self.q_load[bus]) / (self.v_mag[bus] * self.v_mag[bus])
    }
}

/// Newton-Raphson power flow in polar coordinates from a flat start.
///
/// `load_scale` multiplies every bus load and every non-slack generator
/// dispatch; the slack bus covers the balance and losses.
pub fn solve_power_flow(
    model: &GridModel,
    load_scale: f64,
    opts: &PowerFlowOptions,
) -> Result<OperatingPoint> {
    if !(load_scale > 0.0) || !load_scale.is_finite() {
        return Err(Error::Config(format!("load scale {load_scale} must be positive")));
    }
    let mut diagnostics = Vec::new();
    let (lo, hi) = opts.valid_load_scale;
    if load_scale < lo || load_scale > hi {
        let msg = format!("load scale {load_scale} outside validated range [{lo}, {hi}]");
        log::warn!("{msg}");
        diagnostics.push(msg);
    }

    let y = build_ybus(model, &[])?;
    let n = model.bus_count();
    let slack = model.slack_index();

    let p_load: Vec<f64> = model.buses.iter().map(|b| b.p_load * load_scale).collect();
    let q_load: Vec<f64> = model.buses.iter().map(|b| b.q_load * load_scale).collect();
    let mut p_spec: Vec<f64> = p_load.iter().map(|p| -p).collect();
    let q_spec: Vec<f64> = q_load.iter().map(|q| -q).collect();
    for g in &model.generators {
        p_spec[g.bus] += g.p_gen * load_scale;
    }

    let pvpq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| model.buses[i].kind == BusKind::Pq).collect();

    let mut vm: Vec<f64> = model
        .buses
        .iter()
        .map(|b| if b.kind == BusKind::Pq { 1.0 } else { b.v_set })
        .collect();
    let mut va = vec![0.0; n];

    let injections = |vm: &[f64], va: &[f64]| -> Vec<C64> {
        let v: Vec<C64> = (0..n).map(|i| C64::from_polar(vm[i], va[i])).collect();
        (0..n)
            .map(|i| {
                let mut cur = C64::new(0.0, 0.0);
                for j in 0..n {
                    cur += y[(i, j)] * v[j];
                }
                v[i] * cur.conj()
            })
            .collect()
    };
    let mismatch_vec = |s: &[C64]| -> Vec<f64> {
        pvpq.iter()
            .map(|&i| s[i].re - p_spec[i])
            .chain(pq.iter().map(|&i| s[i].im - q_spec[i]))
            .collect()
    };
    let inf_norm = |f: &[f64]| f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));

    let mut iterations = 0;
    let mut f = mismatch_vec(&injections(&vm, &va));
    let mut norm = inf_norm(&f);
    // Once inside tolerance, allow a couple of extra steps while the
    // quadratic tail still improves the residual.
    let mut polish = 2;
    loop {
        if norm < opts.tolerance {
            if polish == 0 || norm < 1e-13 {
                break;
            }
        } else if iterations >= opts.max_iterations {
            return Err(Error::PowerFlowDiverged { iterations, mismatch: norm });
        }
        if !norm.is_finite() {
            return Err(Error::PowerFlowDiverged { iterations, mismatch: norm });
        }

        let jac = jacobian(&y, &vm, &va, &pvpq, &pq);
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|x| -x));
        let dx = jac
            .lu()
            .solve(&rhs)
            .ok_or(Error::PowerFlowDiverged { iterations, mismatch: norm })?;

        let (mut vm_new, mut va_new) = (vm.clone(), va.clone());
        for (k, &i) in pvpq.iter().enumerate() {
            va_new[i] += dx[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            vm_new[i] += dx[pvpq.len() + k];
        }
        let f_new = mismatch_vec(&injections(&vm_new, &va_new));
        let norm_new = inf_norm(&f_new);
        iterations += 1;
        if norm < opts.tolerance {
            polish -= 1;
            if !(norm_new < norm) {
                break;
            }
        }
        vm = vm_new;
        va = va_new;
        f = f_new;
        norm = norm_new;
    }

    let s = injections(&vm, &va);
    let mut emf = Vec::with_capacity(model.generator_count());
    let mut delta0 = Vec::with_capacity(model.generator_count());
    let mut p_mech = Vec::with_capacity(model.generator_count());
    for g in &model.generators {
        let v = C64::from_polar(vm[g.bus], va[g.bus]);
        let s_gen = C64::new(s[g.bus].re + p_load[g.bus], s[g.bus].im + q_load[g.bus]);
        let current = (s_gen / v).conj();
        let e = v + C64::new(0.0, g.xd_prime) * current;
        emf.push(e.norm());
        delta0.push(e.arg());
        p_mech.push((e * current.conj()).re);
    }

    Ok(OperatingPoint {
        v_mag: vm,
        v_ang: va,
        emf,
        delta0,
        p_mech,
        p_load,
        q_load,
        load_scale,
        mismatch: norm,
        iterations,
        diagnostics,
    })
}

fn jacobian(y: &DMatrix<C64>, vm: &[f64], va: &[f64], pvpq: &[usize], pq: &[usize]) -> DMatrix<f64> {
    let n = vm.len();
    let v: Vec<C64> = (0..n).map(|i| C64::from_polar(vm[i], va[i])).collect();
    let vnorm: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, va[i])).collect();
    let ibus: Vec<C64> = (0..n)
        .map(|i| (0..n).fold(C64::new(0.0, 0.0), |acc, j| acc + y[(i, j)] * v[j]))
        .collect();
    let j_unit = C64::new(0.0, 1.0);

    // dS_i/dθ_k and dS_i/d|V|_k.
    let ds_dva = |i: usize, k: usize| -> C64 {
        let mut t = -y[(i, k)] * v[k];
        if i == k {
            t += ibus[i];
        }
        j_unit * v[i] * t.conj()
    };
    let ds_dvm = |i: usize, k: usize| -> C64 {
        let mut t = v[i] * (y[(i, k)] * vnorm[k]).conj();
        if i == k {
            t += ibus[i].conj() * vnorm[i];
        }
        t
    };

    let a = pvpq.len();
    let m = a + pq.len();
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for (r, &i) in pvpq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(r, c)] = ds_dva(i, k).re;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(r, a + c)] = ds_dvm(i, k).re;
        }
    }
    for (r, &i) in pq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(a + r, c)] = ds_dva(i, k).im;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(a + r, a + c)] = ds_dvm(i, k).im;
        }
    }
    jac
}
