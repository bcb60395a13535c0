use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid_model::{connected_components, FaultKind, GridModel, C64};
use crate::transim::{FaultScenario, SimOptions};

/// Recipe for randomized contingencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kinds: Vec<FaultKind>,
    /// Fault duration range (s), inclusive.
    pub duration: (f64, f64),
    pub load_scale: (f64, f64),
    /// Fault onset (s).
    pub onset: f64,
    /// Candidate branch indices; `None` selects every branch whose outage
    /// keeps the network connected.
    pub branches: Option<Vec<usize>>,
    /// Location fraction is drawn uniformly from this range.
    pub location: (f64, f64),
    pub z_fault: C64,
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
    /// Redraws allowed per scenario before giving up.
    pub max_redraws: u32,
    pub sim: SimOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kinds: FaultKind::ALL.to_vec(),
            duration: (0.060, 0.400),
            load_scale: (0.70, 1.40),
            onset: 1.0,
            branches: None,
            location: (0.0, 1.0),
            z_fault: C64::new(0.0, 0.0),
            train_count: 300,
            test_count: 150,
            seed: 1,
            max_redraws: 16,
            sim: SimOptions::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn total(&self) -> usize {
        self.train_count + self.test_count
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.kinds.is_empty() {
            return bad("fault-type set is empty".into());
        }
        let (d0, d1) = self.duration;
        if !(d0 > 0.0 && d0 <= d1 && d1 < self.sim.post_horizon) {
            return bad(format!("duration range [{d0}, {d1}] must lie inside (0, {})", self.sim.post_horizon));
        }
        let (l0, l1) = self.load_scale;
        if !(l0 > 0.0 && l0 <= l1) {
            return bad(format!("load-scale range [{l0}, {l1}] must be positive and ordered"));
        }
        let (f0, f1) = self.location;
        if !(0.0 <= f0 && f0 <= f1 && f1 <= 1.0) {
            return bad(format!("location range [{f0}, {f1}] must lie in [0, 1]"));
        }
        if !(self.onset >= 0.0) {
            return bad(format!("onset {} must be non-negative", self.onset));
        }
        if self.train_count == 0 || self.test_count == 0 {
            return bad("train and test counts must be positive".into());
        }
        if matches!(&self.branches, Some(b) if b.is_empty()) {
            return bad("candidate branch set is empty".into());
        }
        Ok(())
    }

    /// Stable text form used for the provenance hash.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let kinds: Vec<&str> = self.kinds.iter().map(|k| k.code()).collect();
        writeln!(s, "kinds={}", kinds.join(",")).unwrap();
        writeln!(s, "duration={:?},{:?}", self.duration.0, self.duration.1).unwrap();
        writeln!(s, "load_scale={:?},{:?}", self.load_scale.0, self.load_scale.1).unwrap();
        writeln!(s, "onset={:?}", self.onset).unwrap();
        match &self.branches {
            Some(b) => writeln!(s, "branches={b:?}").unwrap(),
            None => writeln!(s, "branches=safe").unwrap(),
        }
        writeln!(s, "location={:?},{:?}", self.location.0, self.location.1).unwrap();
        writeln!(s, "z_fault={:?},{:?}", self.z_fault.re, self.z_fault.im).unwrap();
        writeln!(s, "counts={},{}", self.train_count, self.test_count).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "max_redraws={}", self.max_redraws).unwrap();
        writeln!(s, "sim={:?},{:?},{:?}", self.sim.dt, self.sim.post_horizon, self.sim.threshold).unwrap();
        s
    }
}

/// Branches whose removal leaves the network connected.
pub fn safe_branches(model: &GridModel) -> Vec<usize> {
    (0..model.branches.len())
        .filter(|&k| {
            let edges = model
                .branches
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, b)| (b.from, b.to));
            connected_components(model.bus_count(), edges).len() == 1
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws scenarios for a config resolved against a grid model.
#[derive(Debug, Clone)]
pub struct ScenarioSampler {
    pub config: ScenarioConfig,
    pub candidates: Vec<usize>,
}

impl ScenarioSampler {
    pub fn new(config: &ScenarioConfig, model: &GridModel) -> Result<Self> {
        config.validate()?;
        let candidates = match &config.branches {
            Some(b) => {
                if let Some(&k) = b.iter().find(|&&k| k >= model.branches.len()) {
                    return Err(Error::UnknownElement { what: "branch", index: k });
                }
                b.clone()
            }
            None => safe_branches(model),
        };
        if candidates.is_empty() {
            return Err(Error::Config("no candidate branches".into()));
        }
        Ok(ScenarioSampler { config: config.clone(), candidates })
    }

    /// Scenario `index` over the concatenated train then test indices.
    pub fn draw(&self, index: usize) -> FaultScenario {
        self.draw_attempt(index, 0)
    }

    /// Train and test use disjoint streams keyed by their local index, so
    /// changing one count does not perturb the other set.
    pub fn draw_attempt(&self, index: usize, attempt: u32) -> FaultScenario {
        let c = &self.config;
        let (stream, local) = if index < c.train_count { (0u64, index) } else { (1u64, index - c.train_count) };
        let seed = splitmix64(
            splitmix64(splitmix64(c.seed) ^ (stream << 62) ^ local as u64) ^ u64::from(attempt),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = c.kinds[rng.gen_range(0..c.kinds.len())];
        let branch = self.candidates[rng.gen_range(0..self.candidates.len())];
        let location = uniform(&mut rng, c.location);
        let dt = c.sim.dt;
        let duration = ((uniform(&mut rng, c.duration) / dt).round() * dt).clamp(c.duration.0, c.duration.1);
        let load_scale = uniform(&mut rng, c.load_scale);
        FaultScenario {
            kind,
            branch,
            location,
            onset: c.onset,
            duration,
            load_scale,
            seed,
            z_fault: c.z_fault,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}
