#![allow(dead_code)]
//! Random (topology, mask, batch) triples for finite-difference checks.

use gridpulse_core::cfnn::{Batch, CascadeMask, Cfnn, CfnnTopology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Below this magnitude the relative error is measured against the floor,
/// since central-difference rounding noise is absolute.
const FLOOR: f64 = 1e-3;

struct Triple {
    net: Cfnn,
    params: Vec<f64>,
    rows: Vec<Vec<f64>>,
    targets: Vec<usize>,
}

fn triple(seed: u64, density: f64) -> Triple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = rng.gen_range(1..=4);
    let samples = rng.gen_range(1..=5);
    let layers = rng.gen_range(1..=4);
    let hidden: Vec<usize> = (0..layers).map(|_| rng.gen_range(1..=4)).collect();
    let classes = rng.gen_range(2..=5);
    let t = CfnnTopology::new(channels, samples, hidden, classes).unwrap();
    let mut mask = CascadeMask::for_topology(&t);
    for n in 0..t.cascade_neurons() {
        for c in 0..channels {
            mask.set(n, c, rng.gen_bool(density));
        }
    }
    let net = Cfnn::new(t, mask).unwrap();
    let params = (0..net.param_count()).map(|_| rng.gen_range(-0.8..0.8)).collect();
    let batch = rng.gen_range(1..=6);
    let rows = (0..batch).map(|_| (0..channels * samples).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let targets = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
    Triple { net, params, rows, targets }
}

/// Worst relative error between `backward` and central differences over
/// `count` random triples with step `h`.
pub fn max_relative_error(count: u64, h: f64) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..count {
        let density = [0.0, 0.5, 1.0][k as usize % 3];
        let t = triple(1000 + k, density);
        let batch = Batch { rows: t.rows.iter().map(Vec::as_slice).collect(), targets: t.targets.clone() };
        let grad = t.net.backward(&t.params, &batch).unwrap().grad;
        assert_eq!(grad.len(), t.net.param_count());
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let picks: Vec<usize> = if t.params.len() <= 200 {
            (0..t.params.len()).collect()
        } else {
            (0..200).map(|_| rng.gen_range(0..t.params.len())).collect()
        };
        for i in picks {
            let mut p = t.params.clone();
            p[i] = t.params[i] + h;
            let up = t.net.loss(&p, &batch).unwrap();
            p[i] = t.params[i] - h;
            let down = t.net.loss(&p, &batch).unwrap();
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}
