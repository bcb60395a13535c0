#![allow(dead_code)]
//! Small synthetic stability dataset with a nonlinear decision rule.

use gridpulse_core::cfnn::CfnnTopology;
use gridpulse_core::scenario_data::{Dataset, Feature, Normalizer, Provenance, Stream, WindowSpec, NO_PAIR};
use gridpulse_core::trainer::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two channels of three samples; unstable when a nonlinear score of the
/// last samples is positive.
pub fn toy(rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = WindowSpec { fs: 3.0, ltw: 1.0, features: vec![Feature::Pe], generators: 2 };
    let mut x = Vec::new();
    let mut unstable = Vec::new();
    for _ in 0..rows {
        let r: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let score = r[2] * r[5] + 0.3 * r[0] - 0.2;
        unstable.push(u8::from(score > 0.0));
        x.extend(r);
    }
    Dataset {
        spec,
        x,
        pair: unstable.iter().map(|&u| if u == 1 { 0 } else { NO_PAIR }).collect(),
        unstable,
        normalizer: Normalizer { samples: 3, mean: vec![0.0; 2], std: vec![1.0; 2], floored: vec![] },
        provenance: Provenance { config_hash: "toy".into(), seed, stream: Stream::Train, redraws: 0 },
    }
}

pub fn toy_topology() -> CfnnTopology {
    CfnnTopology::new(2, 3, vec![3, 2, 2, 2], 2).unwrap()
}

pub fn quick() -> TrainConfig {
    TrainConfig { max_iterations: 60, ..Default::default() }
}
