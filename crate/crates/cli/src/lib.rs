//! Command-line pipeline: fault simulation, dataset generation, training,
//! evaluation, cascade sweeps and latched-window prediction.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::*;
pub use config::{ConfigError, HeadLayout, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gridpulse", version, about = "Transient stability prediction from post-fault measurement windows")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Grid file (built-in 39-bus system when omitted).
    #[arg(long, global = true)]
    pub grid: Option<PathBuf>,
    /// `key = value` run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset directory (defaults to the output directory).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Model directory (defaults to the output directory).
    #[arg(long, global = true)]
    pub models: Option<PathBuf>,
    /// Comma-separated fault types: 3pg, slg, ll, llg.
    #[arg(long, global = true)]
    pub faults: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one fault scenario and write its trace.
    Simulate(SimulateCli),
    /// Generate train and test datasets.
    GenData,
    /// Train the stability and/or pair heads.
    Train {
        #[arg(long, default_value = "both")]
        head: String,
    },
    /// Accuracy, FPR, pair accuracy and latency on the test set.
    Eval,
    /// Validation accuracy and FPR per cascade connection count.
    Sweep {
        /// Comma-separated connection counts.
        #[arg(long)]
        counts: Option<String>,
    },
    /// Latch a window from a trace at clearance and run both heads.
    Predict {
        #[arg(long)]
        trace: PathBuf,
        /// Clearance time (s); the trace's own clearance when omitted.
        #[arg(long)]
        clear_time: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateCli {
    /// Draw this scenario index from the configured recipe.
    #[arg(long)]
    pub index: Option<usize>,
    /// Branch index (zero-based, in grid-file order).
    #[arg(long)]
    pub branch: Option<usize>,
    #[arg(long)]
    pub location: Option<f64>,
    #[arg(long)]
    pub onset: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub load_scale: Option<f64>,
}

/// Applies the config file and flag overrides.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(g) = &common.grid {
        cfg.grid = Some(g.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(d) = &common.data {
        cfg.data = Some(d.clone());
    }
    if let Some(m) = &common.models {
        cfg.models = Some(m.clone());
    }
    if let Some(f) = &common.faults {
        cfg.scenario.kinds = config::parse_faults(f)?;
    }
    if let Some(g) = &cfg.grid {
        if !g.exists() {
            return Err(ConfigError(format!("grid file {} does not exist", g.display())));
        }
    }
    Ok(cfg)
}

/// Exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() || cause.downcast_ref::<clap::Error>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<gridpulse_core::Error>() {
            return if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
        }
    }
    EXIT_DATA
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(&cli.common)?;
    match cli.command {
        Command::Simulate(a) => {
            let kind = match &cli.common.faults {
                Some(f) => config::parse_faults(f)?.first().copied(),
                None => None,
            };
            let args = SimulateArgs {
                index: a.index,
                kind,
                branch: a.branch,
                location: a.location,
                onset: a.onset,
                duration: a.duration,
                load_scale: a.load_scale,
            };
            let o = cmd_simulate(&cfg, &args)?;
            let pair = o
                .labeling
                .critical
                .map_or_else(|| "none".to_string(), |c| format!("{},{}", c.pair.0 + 1, c.pair.1 + 1));
            println!(
                "{} fault on branch {} at {:.3}, clear {:.3} s: {} (pair {pair}) -> {}",
                o.scenario.kind,
                o.scenario.branch,
                o.scenario.location,
                o.scenario.clear_time(),
                if o.labeling.unstable { "unstable" } else { "stable" },
                o.trace.display()
            );
        }
        Command::GenData => {
            let s = cmd_gen_data(&cfg)?;
            println!(
                "train {} rows ({} unstable), test {} rows ({} unstable), config {}",
                s.train_rows, s.train_unstable, s.test_rows, s.test_unstable, s.config_hash
            );
        }
        Command::Train { head } => {
            let heads: HeadSelect = head.parse()?;
            let s = cmd_train(&cfg, heads)?;
            for (name, r) in [("stability", &s.stability), ("pair", &s.pair)] {
                if let Some(r) = r {
                    println!(
                        "{name}: {} iterations, loss {:.6e}, |g| {:.3e}, {:?}, {:.1} s",
                        r.iterations, r.final_loss, r.grad_norm, r.stop, r.wall_time
                    );
                }
            }
        }
        Command::Eval => {
            let r = cmd_eval(&cfg)?;
            print!("{}", r.to_text());
        }
        Command::Sweep { counts } => {
            let counts = match counts {
                Some(c) => config::parse_usize_list("counts", &c)?,
                None => cfg.counts.clone(),
            };
            let rows = cmd_sweep(&cfg, &counts)?;
            print!("{}", gridpulse_core::trainer::sweep_csv(&rows));
            match gridpulse_core::trainer::interior_maximum(&rows) {
                Some(i) => println!("# interior maximum at {} connections", rows[i].connections),
                None => println!("# no interior maximum"),
            }
        }
        Command::Predict { trace, clear_time } => {
            let d = cmd_predict(&cfg, &trace, clear_time)?;
            print!("{}", d.to_text());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["gridpulse"]), EXIT_USAGE);
        assert_eq!(run(["gridpulse", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["gridpulse", "train", "--head", "all", "--out", "/nonexistent/x"]), EXIT_USAGE);
        assert_eq!(run(["gridpulse", "gen-data", "--faults", "4pg"]), EXIT_USAGE);
        assert_eq!(run(["gridpulse", "--help"]), EXIT_OK);
    }

    #[test]
    fn error_classification() {
        let numerical = anyhow::Error::from(gridpulse_core::Error::SimulationDiverged { time: 1.0 });
        assert_eq!(exit_code(&numerical), EXIT_NUMERICAL);
        let data = anyhow::Error::from(gridpulse_core::Error::DatasetFormat("x".into())).context("reading");
        assert_eq!(exit_code(&data), EXIT_DATA);
        assert_eq!(exit_code(&anyhow::Error::from(ConfigError("x".into()))), EXIT_USAGE);
    }
}
