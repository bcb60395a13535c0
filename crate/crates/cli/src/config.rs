//! `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use gridpulse_core::cfnn::CfnnTopology;
use gridpulse_core::grid_model::{FaultKind, GridModel};
use gridpulse_core::scenario_data::{parse_features, ScenarioConfig, WindowSpec};
use gridpulse_core::trainer::{SearchConfig, TrainConfig};

/// Bad configuration text or flag values; maps to the usage exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Hidden layout and cascade connection count for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadLayout {
    pub hidden: Vec<usize>,
    /// Connections enabled shallow-first; must be whole cascade layers.
    pub cascades: usize,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Grid file; the built-in 39-bus system when absent.
    pub grid: Option<PathBuf>,
    pub out: PathBuf,
    /// Dataset directory; defaults to `out`.
    pub data: Option<PathBuf>,
    /// Model directory; defaults to `out`.
    pub models: Option<PathBuf>,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub window: WindowSpec,
    pub train: TrainConfig,
    pub stability: HeadLayout,
    pub pair: HeadLayout,
    pub validation_fraction: f64,
    pub split_seed: u64,
    pub counts: Vec<usize>,
    pub latency_passes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: None,
            out: PathBuf::from("gridpulse-out"),
            data: None,
            models: None,
            seed: 1,
            scenario: ScenarioConfig::default(),
            window: WindowSpec::default(),
            train: TrainConfig::default(),
            stability: HeadLayout { hidden: CfnnTopology::default_hidden(), cascades: 630, max_iterations: 300 },
            pair: HeadLayout { hidden: vec![20], cascades: 0, max_iterations: 200 },
            validation_fraction: 0.2,
            split_seed: 7,
            counts: (1..=16).map(|k| 90 * k).collect(),
            latency_passes: 1000,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

/// Comma list of non-negative integers.
pub fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>, ConfigError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s.trim())).collect()
}

/// Hidden layer sizes: comma list whose items are `n` or `nxk` (k layers of n).
pub fn parse_hidden(key: &str, v: &str) -> Result<Vec<usize>, ConfigError> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('x') {
            Some((n, k)) => {
                let n: usize = parse_num(key, n.trim())?;
                let k: usize = parse_num(key, k.trim())?;
                out.extend(std::iter::repeat(n).take(k));
            }
            None => out.push(parse_num(key, item)?),
        }
    }
    if out.is_empty() {
        return Err(ConfigError(format!("`{key}`: no hidden layers")));
    }
    Ok(out)
}

pub fn parse_faults(v: &str) -> Result<Vec<FaultKind>, ConfigError> {
    let kinds: Vec<FaultKind> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: gridpulse_core::Error| ConfigError(e.to_string())))
        .collect::<Result<_, _>>()?;
    if kinds.is_empty() {
        return Err(ConfigError("`faults`: empty list".into()));
    }
    Ok(kinds)
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("config line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| ConfigError(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let s = &mut self.scenario;
        match key {
            "grid" => self.grid = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "data" => self.data = Some(PathBuf::from(v)),
            "models" => self.models = Some(PathBuf::from(v)),
            "seed" => self.seed = parse_num(key, v)?,
            "train_count" => s.train_count = parse_num(key, v)?,
            "test_count" => s.test_count = parse_num(key, v)?,
            "faults" => s.kinds = parse_faults(v)?,
            "duration_min" => s.duration.0 = parse_num(key, v)?,
            "duration_max" => s.duration.1 = parse_num(key, v)?,
            "load_min" => s.load_scale.0 = parse_num(key, v)?,
            "load_max" => s.load_scale.1 = parse_num(key, v)?,
            "location_min" => s.location.0 = parse_num(key, v)?,
            "location_max" => s.location.1 = parse_num(key, v)?,
            "onset" => s.onset = parse_num(key, v)?,
            "branches" => {
                s.branches = if v == "safe" { None } else { Some(parse_usize_list(key, v)?) };
            }
            "z_fault_r" => s.z_fault.re = parse_num(key, v)?,
            "z_fault_x" => s.z_fault.im = parse_num(key, v)?,
            "max_redraws" => s.max_redraws = parse_num(key, v)?,
            "dt" => s.sim.dt = parse_num(key, v)?,
            "post_horizon" => s.sim.post_horizon = parse_num(key, v)?,
            "threshold" => s.sim.threshold = parse_num(key, v)?,
            "fs" => self.window.fs = parse_num(key, v)?,
            "ltw" => self.window.ltw = parse_num(key, v)?,
            "features" => {
                self.window.features = parse_features(v).map_err(|e| ConfigError(e.to_string()))?;
            }
            "stability_hidden" => self.stability.hidden = parse_hidden(key, v)?,
            "stability_cascades" => self.stability.cascades = parse_num(key, v)?,
            "stability_iterations" => self.stability.max_iterations = parse_num(key, v)?,
            "pair_hidden" => self.pair.hidden = parse_hidden(key, v)?,
            "pair_cascades" => self.pair.cascades = parse_num(key, v)?,
            "pair_iterations" => self.pair.max_iterations = parse_num(key, v)?,
            "grad_tol" => self.train.grad_tol = parse_num(key, v)?,
            "loss_tol" => self.train.loss_tol = parse_num(key, v)?,
            "restart_period" => {
                self.train.restart_period = if v == "auto" { None } else { Some(parse_num(key, v)?) };
            }
            "initial_step" => self.train.line_search.initial_step = parse_num(key, v)?,
            "c1" => self.train.line_search.c1 = parse_num(key, v)?,
            "pr_plus" => self.train.pr_plus = parse_bool(key, v)?,
            "validation_fraction" => self.validation_fraction = parse_num(key, v)?,
            "split_seed" => self.split_seed = parse_num(key, v)?,
            "counts" => self.counts = parse_usize_list(key, v)?,
            "latency_passes" => self.latency_passes = parse_num(key, v)?,
            other => return Err(ConfigError(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn data_dir(&self) -> &Path {
        self.data.as_deref().unwrap_or(&self.out)
    }

    pub fn models_dir(&self) -> &Path {
        self.models.as_deref().unwrap_or(&self.out)
    }

    pub fn grid_model(&self) -> gridpulse_core::Result<GridModel> {
        match &self.grid {
            Some(p) => GridModel::from_path(p),
            None => Ok(GridModel::ieee39()),
        }
    }

    /// Scenario recipe with the run seed applied.
    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig { seed: self.seed, ..self.scenario.clone() }
    }

    pub fn train_config(&self, layout: &HeadLayout) -> TrainConfig {
        TrainConfig { max_iterations: layout.max_iterations, seed: self.seed, ..self.train.clone() }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            validation_fraction: self.validation_fraction,
            split_seed: self.split_seed,
            train: self.train_config(&self.stability),
            ..SearchConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_shorthand() {
        assert_eq!(parse_hidden("h", "3x17").unwrap(), vec![3; 17]);
        assert_eq!(parse_hidden("h", "3x2, 12").unwrap(), vec![3, 3, 12]);
        assert!(parse_hidden("h", "").is_err());
        assert!(parse_hidden("h", "3xq").is_err());
    }

    #[test]
    fn text_overrides_defaults() {
        let mut c = RunConfig::default();
        c.apply_text("# desk run\ntrain_count = 40\nfaults = 3pg, slg\nbranches = 1,2 # two\nrestart_period = auto\n")
            .unwrap();
        assert_eq!(c.scenario.train_count, 40);
        assert_eq!(c.scenario.kinds, vec![FaultKind::ThreePhase, FaultKind::SingleLineGround]);
        assert_eq!(c.scenario.branches, Some(vec![1, 2]));
        assert_eq!(c.train.restart_period, None);
        assert_eq!(c.scenario.test_count, 150);
    }

    #[test]
    fn bad_lines_rejected() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("nonsense").unwrap_err().0.contains("line 1"));
        assert!(c.apply_text("colour = red").unwrap_err().0.contains("unknown key"));
        assert!(c.apply_text("seed = -1").is_err());
        assert!(c.apply_text("pr_plus = maybe").is_err());
    }

    #[test]
    fn default_sweep_grid() {
        let c = RunConfig::default();
        assert_eq!(c.counts.len(), 16);
        assert_eq!((c.counts[0], c.counts[15]), (90, 1440));
    }
}
