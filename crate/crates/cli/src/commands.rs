use std::fmt::Write as _;
use std::fs;
use std::hint::black_box;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gridpulse_core::cfnn::{
    pair_count, predict_heads, read_model, write_model, CascadeMask, Cfnn, CfnnModel, CfnnTopology, HeadKind,
};
use gridpulse_core::grid_model::{solve_power_flow, stage_networks, FaultKind, PowerFlowOptions, StageOptions};
use gridpulse_core::scenario_data::{
    build_dataset, read_dataset, safe_branches, write_dataset, write_records, Dataset, LatchedWindow,
    ScenarioSampler,
};
use gridpulse_core::trainer::{
    evaluate_pair, evaluate_stability, interior_maximum, sweep, sweep_csv, train_model, Confusion, SweepRow,
    TrainReport,
};
use gridpulse_core::transim::{read_trace, simulate, write_trace, FaultScenario, Labeling};
use gridpulse_core::Error;

use crate::config::{ConfigError, HeadLayout, RunConfig};

pub const TRAIN_FILE: &str = "train.tsd";
pub const TEST_FILE: &str = "test.tsd";
pub const PROVENANCE_FILE: &str = "provenance.txt";
pub const STABILITY_MODEL: &str = "stability.cfnn";
pub const PAIR_MODEL: &str = "pair.cfnn";
pub const EVAL_FILE: &str = "eval.txt";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const DECISION_FILE: &str = "decision.txt";

/// Reference figures reported for the original 1000/500-scenario study.
/// Printed next to our numbers; never used as targets.
pub const REFERENCE_ACCURACY: f64 = 0.978;
pub const REFERENCE_FPR_630: f64 = 0.019;

/// Keys in report files whose values are wall-clock measurements.
pub const TIMING_KEYS: [&str; 4] = ["latency_median_ms", "latency_p99_ms", "inference_ms", "decision_time"];

/// Report text with wall-clock lines removed, for reproducibility checks.
pub fn strip_timing(text: &str) -> String {
    text.lines()
        .filter(|l| {
            let key = l.split('=').next().unwrap_or("").trim();
            !TIMING_KEYS.contains(&key)
        })
        .map(|l| format!("{l}\n"))
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        ))
        .into());
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    require(path)?;
    Ok(read_dataset(path).with_context(|| format!("reading {}", path.display()))?)
}

fn load_model(path: &Path) -> Result<CfnnModel> {
    require(path)?;
    Ok(read_model(path).with_context(|| format!("reading {}", path.display()))?)
}

// ---------------------------------------------------------------- simulate

/// Scenario selection for `simulate`: either draw `index` from the run's
/// scenario recipe or build one from explicit fields; explicit fields
/// override drawn ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulateArgs {
    pub index: Option<usize>,
    pub kind: Option<FaultKind>,
    pub branch: Option<usize>,
    pub location: Option<f64>,
    pub onset: Option<f64>,
    pub duration: Option<f64>,
    pub load_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutcome {
    pub trace: PathBuf,
    pub scenario: FaultScenario,
    pub labeling: Labeling,
}

pub fn cmd_simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<SimulateOutcome> {
    let model = cfg.grid_model()?;
    let sc = cfg.scenario_config();
    let mut s = match args.index {
        Some(i) => {
            if i >= sc.total() {
                bail!(ConfigError(format!("scenario index {i} outside 0..{}", sc.total())));
            }
            ScenarioSampler::new(&sc, &model)?.draw(i)
        }
        None => FaultScenario {
            kind: sc.kinds.first().copied().unwrap_or(FaultKind::ThreePhase),
            branch: sc.branches.as_ref().and_then(|b| b.first().copied()).unwrap_or_else(|| {
                safe_branches(&model).first().copied().unwrap_or(0)
            }),
            location: 0.5,
            onset: sc.onset,
            duration: 0.1,
            load_scale: 1.0,
            seed: cfg.seed,
            z_fault: sc.z_fault,
        },
    };
    if let Some(k) = args.kind {
        s.kind = k;
    }
    if let Some(b) = args.branch {
        s.branch = b;
    }
    if let Some(x) = args.location {
        s.location = x;
    }
    if let Some(x) = args.onset {
        s.onset = x;
    }
    if let Some(x) = args.duration {
        s.duration = x;
    }
    if let Some(x) = args.load_scale {
        s.load_scale = x;
    }

    let op = solve_power_flow(&model, s.load_scale, &PowerFlowOptions::default())?;
    let nets = stage_networks(&model, &op, &s, &StageOptions::default())?;
    let traces = simulate(&model, &op, &nets, &s, &sc.sim)?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join(TRACE_FILE);
    write_trace(&path, &traces, Some(&s))?;
    Ok(SimulateOutcome { trace: path, scenario: s, labeling: traces.labeling })
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_unstable: usize,
    pub test_unstable: usize,
    pub config_hash: String,
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<GenSummary> {
    let model = cfg.grid_model()?;
    let sc = cfg.scenario_config();
    let built = build_dataset(&model, &sc, &cfg.window)?;
    ensure_dir(&cfg.out)?;
    write_dataset(&cfg.out.join(TRAIN_FILE), &built.train)?;
    write_dataset(&cfg.out.join(TEST_FILE), &built.test)?;
    write_records(&cfg.out.join("train_scenarios.csv"), &built.train_records)?;
    write_records(&cfg.out.join("test_scenarios.csv"), &built.test_records)?;

    let summary = GenSummary {
        train_rows: built.train.rows(),
        test_rows: built.test.rows(),
        train_unstable: built.train.unstable_count(),
        test_unstable: built.test.unstable_count(),
        config_hash: built.train.provenance.config_hash.clone(),
    };
    let mut p = String::new();
    writeln!(p, "config_hash = {}", summary.config_hash)?;
    writeln!(p, "seed = {}", sc.seed)?;
    writeln!(p, "train_rows = {}", summary.train_rows)?;
    writeln!(p, "test_rows = {}", summary.test_rows)?;
    writeln!(p, "train_unstable = {}", summary.train_unstable)?;
    writeln!(p, "test_unstable = {}", summary.test_unstable)?;
    writeln!(p, "train_redraws = {}", built.train.provenance.redraws)?;
    writeln!(p, "test_redraws = {}", built.test.provenance.redraws)?;
    writeln!(p, "normalizer_floored = {:?}", built.train.normalizer.floored)?;
    p.push_str("[scenario_config]\n");
    p.push_str(&sc.canonical_text());
    fs::write(cfg.out.join(PROVENANCE_FILE), p)?;
    Ok(summary)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadSelect {
    Stability,
    Pair,
    Both,
}

impl std::str::FromStr for HeadSelect {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "stability" => Ok(HeadSelect::Stability),
            "pair" => Ok(HeadSelect::Pair),
            "both" => Ok(HeadSelect::Both),
            other => Err(ConfigError(format!("unknown head `{other}` (stability, pair or both)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub stability: Option<TrainReport>,
    pub pair: Option<TrainReport>,
    /// Set when the pair head was requested but the data had no unstable rows.
    pub pair_skipped: bool,
}

fn head_net(data: &Dataset, layout: &HeadLayout, classes: usize) -> Result<Cfnn> {
    let t = CfnnTopology::new(data.spec.channels(), data.spec.samples()?, layout.hidden.clone(), classes)?;
    let mask = CascadeMask::shallow_first(&t, layout.cascades)?;
    Ok(Cfnn::new(t, mask)?)
}

fn fit_head(cfg: &RunConfig, data: &Dataset, head: HeadKind, layout: &HeadLayout, classes: usize) -> Result<TrainReport> {
    let net = head_net(data, layout, classes)?;
    let (model, report) = train_model(net, data, head, &cfg.train_config(layout))?;
    let dir = &cfg.out;
    let name = match head {
        HeadKind::Stability => STABILITY_MODEL,
        HeadKind::Pair => PAIR_MODEL,
    };
    write_model(&dir.join(name), &model)?;
    fs::write(dir.join(format!("{head}_train.log")), report.log_text())?;
    log::info!(
        "{head} head: {} iterations, loss {:.4e}, stop {:?}, {:.1} s",
        report.iterations,
        report.final_loss,
        report.stop,
        report.wall_time
    );
    Ok(report)
}

pub fn cmd_train(cfg: &RunConfig, heads: HeadSelect) -> Result<TrainSummary> {
    let data = load_dataset(&cfg.data_dir().join(TRAIN_FILE))?;
    ensure_dir(&cfg.out)?;
    let mut summary = TrainSummary { stability: None, pair: None, pair_skipped: false };
    if heads != HeadSelect::Pair {
        summary.stability = Some(fit_head(cfg, &data, HeadKind::Stability, &cfg.stability, 2)?);
    }
    if heads != HeadSelect::Stability {
        if data.unstable_count() == 0 {
            log::warn!("training data has no unstable rows; pair head skipped");
            eprintln!("warning: training data has no unstable rows; pair head skipped");
            summary.pair_skipped = true;
        } else {
            let classes = pair_count(data.spec.generators);
            summary.pair = Some(fit_head(cfg, &data, HeadKind::Pair, &cfg.pair, classes)?);
        }
    }
    Ok(summary)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: usize,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub fpr: f64,
    /// Unstable test rows scored by the pair head.
    pub pair_rows: usize,
    pub pair_accuracy: Option<f64>,
    pub latency_passes: usize,
    pub latency_median_ms: f64,
    pub latency_p99_ms: f64,
    pub dataset_hash: String,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let c = &self.confusion;
        let mut s = String::new();
        let _ = writeln!(s, "dataset_hash = {}", self.dataset_hash);
        let _ = writeln!(s, "rows = {}", self.rows);
        let _ = writeln!(s, "tp = {}\ntn = {}\nfp = {}\nfn = {}", c.tp, c.tn, c.fp, c.fn_);
        let _ = writeln!(s, "accuracy = {}", self.accuracy);
        let _ = writeln!(s, "fpr = {}", self.fpr);
        let _ = writeln!(s, "pair_rows = {}", self.pair_rows);
        match self.pair_accuracy {
            Some(a) => {
                let _ = writeln!(s, "pair_accuracy = {a}");
            }
            None => s.push_str("pair_accuracy = none\n"),
        }
        let _ = writeln!(s, "reference_accuracy = {REFERENCE_ACCURACY}");
        let _ = writeln!(s, "reference_fpr_630 = {REFERENCE_FPR_630}");
        let _ = writeln!(s, "latency_passes = {}", self.latency_passes);
        let _ = writeln!(s, "latency_median_ms = {:.6}", self.latency_median_ms);
        let _ = writeln!(s, "latency_p99_ms = {:.6}", self.latency_p99_ms);
        s
    }
}

/// Median and 99th percentile (nearest rank) of `samples`, in input units.
pub fn latency_stats(samples: &mut [f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let median = if n % 2 == 1 { samples[n / 2] } else { 0.5 * (samples[n / 2 - 1] + samples[n / 2]) };
    let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
    (median, samples[rank - 1])
}

/// Wall time of `passes` dual-head forward passes over rows of `data`,
/// cycling through them, on the calling thread. Milliseconds per pass.
pub fn time_inference(
    stability: &CfnnModel,
    pair: Option<&CfnnModel>,
    data: &Dataset,
    passes: usize,
) -> Result<Vec<f64>> {
    if data.rows() == 0 {
        bail!(Error::DatasetFormat("no rows to time".into()));
    }
    let mut out = Vec::with_capacity(passes);
    for p in 0..passes {
        let row = data.row(p % data.rows());
        let t0 = Instant::now();
        let d = predict_heads(stability, pair, black_box(row))?;
        out.push(t0.elapsed().as_secs_f64() * 1e3);
        black_box(d);
    }
    Ok(out)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let test = load_dataset(&cfg.data_dir().join(TEST_FILE))?;
    let stab = load_model(&cfg.models_dir().join(STABILITY_MODEL))?;
    let pair_path = cfg.models_dir().join(PAIR_MODEL);
    let pair = if pair_path.exists() { Some(load_model(&pair_path)?) } else { None };
    stab.spec.ensure_same(&test.spec)?;
    if let Some(p) = &pair {
        p.spec.ensure_same(&test.spec)?;
    }
    if stab.meta.get("dataset_hash") != Some(&test.provenance.config_hash) {
        log::warn!("stability model was trained on a dataset with a different config hash");
    }

    let confusion = evaluate_stability(&stab.net, &stab.params, &test)?;
    let pair_accuracy = match &pair {
        Some(p) => evaluate_pair(&p.net, &p.params, &test)?,
        None => None,
    };
    let mut lat = time_inference(&stab, pair.as_ref(), &test, cfg.latency_passes.max(1))?;
    let (median, p99) = latency_stats(&mut lat);
    let report = EvalReport {
        rows: test.rows(),
        accuracy: confusion.accuracy(),
        fpr: confusion.fpr(),
        confusion,
        pair_rows: test.unstable_count(),
        pair_accuracy,
        latency_passes: lat.len(),
        latency_median_ms: median,
        latency_p99_ms: p99,
        dataset_hash: test.provenance.config_hash.clone(),
    };
    ensure_dir(&cfg.out)?;
    fs::write(cfg.out.join(EVAL_FILE), report.to_text())?;
    Ok(report)
}

// ---------------------------------------------------------------- sweep

pub fn cmd_sweep(cfg: &RunConfig, counts: &[usize]) -> Result<Vec<SweepRow>> {
    let data = load_dataset(&cfg.data_dir().join(TRAIN_FILE))?;
    let t = CfnnTopology::new(data.spec.channels(), data.spec.samples()?, cfg.stability.hidden.clone(), 2)?;
    for &c in counts {
        CascadeMask::shallow_first(&t, c).map_err(|e| ConfigError(format!("count {c}: {e}")))?;
    }
    let rows = sweep(&t, &data, counts, &cfg.search_config())?;
    ensure_dir(&cfg.out)?;
    fs::write(cfg.out.join(SWEEP_FILE), sweep_csv(&rows))?;
    match interior_maximum(&rows) {
        Some(i) => log::info!("interior accuracy maximum at {} connections", rows[i].connections),
        None => log::info!("no interior accuracy maximum"),
    }
    Ok(rows)
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub clear_time: f64,
    pub unstable: bool,
    /// Zero-based generator pair.
    pub pair: Option<(usize, usize)>,
    pub stability_probabilities: Vec<f64>,
    pub pair_probabilities: Option<Vec<f64>>,
    /// Normalization plus both forward passes.
    pub inference_ms: f64,
}

impl Decision {
    pub fn decision_time(&self) -> f64 {
        self.clear_time + self.inference_ms * 1e-3
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "clear_time = {}", self.clear_time);
        let _ = writeln!(s, "label = {}", if self.unstable { "unstable" } else { "stable" });
        match self.pair {
            Some((i, j)) => {
                let _ = writeln!(s, "pair = {},{}", i + 1, j + 1);
            }
            None => s.push_str("pair = none\n"),
        }
        let _ = writeln!(s, "p_unstable = {}", self.stability_probabilities[1]);
        if let Some(pp) = &self.pair_probabilities {
            let best = pp.iter().copied().fold(0.0, f64::max);
            let _ = writeln!(s, "pair_confidence = {best}");
        }
        let _ = writeln!(s, "inference_ms = {:.3}", self.inference_ms);
        let _ = writeln!(s, "decision_time = {:.6}", self.decision_time());
        s
    }
}

/// Replays `trace` through a latched buffer up to the clearance sample
/// (the trace's own clearance when `clear_time` is `None`) and runs both
/// heads on the frozen window.
pub fn cmd_predict(cfg: &RunConfig, trace: &Path, clear_time: Option<f64>) -> Result<Decision> {
    let stab = load_model(&cfg.models_dir().join(STABILITY_MODEL))?;
    let pair_path = cfg.models_dir().join(PAIR_MODEL);
    let pair = if pair_path.exists() { Some(load_model(&pair_path)?) } else { None };
    require(trace)?;
    let traces = read_trace(trace)?;
    let spec = &stab.spec;
    if traces.generator_count() != spec.generators {
        bail!(Error::WindowMismatch(format!(
            "trace has {} generators, model expects {}",
            traces.generator_count(),
            spec.generators
        )));
    }
    let clear = clear_time.unwrap_or(traces.t_clear);
    let kc = traces.index_of(clear).ok_or(Error::OffGrid { time: clear, dt: traces.dt })?;
    if kc >= traces.len() {
        bail!(Error::DatasetFormat(format!("clear time {clear} s is past the end of the trace")));
    }

    let mut buffer = LatchedWindow::new(spec, traces.dt)?;
    for k in 0..=kc {
        buffer.push_trace_sample(&traces, k)?;
    }
    let raw = buffer.latch(traces.dt)?;

    let t0 = Instant::now();
    let row = stab.normalize(&raw);
    let d = predict_heads(&stab, pair.as_ref(), &row)?;
    let inference_ms = t0.elapsed().as_secs_f64() * 1e3;

    let decision = Decision {
        clear_time: clear,
        unstable: d.unstable,
        pair: d.pair,
        stability_probabilities: d.stability_probabilities,
        pair_probabilities: d.pair_probabilities,
        inference_ms,
    };
    ensure_dir(&cfg.out)?;
    fs::write(cfg.out.join(DECISION_FILE), decision.to_text())?;
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_percentiles() {
        let mut v: Vec<f64> = (1..=1000).rev().map(f64::from).collect();
        assert_eq!(latency_stats(&mut v), (500.5, 990.0));
        let mut odd = vec![3.0, 1.0, 2.0];
        assert_eq!(latency_stats(&mut odd), (2.0, 3.0));
    }

    #[test]
    fn timing_lines_stripped() {
        let t = "accuracy = 0.9\nlatency_median_ms = 0.01\nlatency_passes = 1000\ninference_ms = 0.002\n";
        assert_eq!(strip_timing(t), "accuracy = 0.9\nlatency_passes = 1000\n");
    }

    #[test]
    fn head_select_parses() {
        assert_eq!("both".parse::<HeadSelect>().unwrap(), HeadSelect::Both);
        assert!("all".parse::<HeadSelect>().is_err());
    }

    #[test]
    fn eval_report_identities() {
        let c = Confusion { tp: 3, tn: 5, fp: 1, fn_: 2 };
        let r = EvalReport {
            rows: 11,
            accuracy: c.accuracy(),
            fpr: c.fpr(),
            confusion: c,
            pair_rows: 5,
            pair_accuracy: None,
            latency_passes: 1,
            latency_median_ms: 0.0,
            latency_p99_ms: 0.0,
            dataset_hash: "x".into(),
        };
        assert_eq!(r.accuracy, 8.0 / 11.0);
        assert_eq!(r.fpr, 1.0 / 6.0);
        assert!(r.to_text().contains("reference_accuracy = 0.978"));
    }
}
