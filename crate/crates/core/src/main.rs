use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use peer_cohesion::attach::AlphaMode;
use peer_cohesion::commands::{self, Overrides, PeerMode, RunConfig};
use peer_cohesion::io::read_to_string;
use peer_cohesion::synth::{RegimeSpec, SwitchScenario};
use peer_cohesion::{Error, Result};

#[derive(Parser)]
#[command(name = "peer-cohesion", version, about = "Peer-cohesion signal selection and backtests")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PeerModeArg {
    Explicit,
    Threshold,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaModeArg {
    Lca,
    Literal,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    peer_mode: Option<PeerModeArg>,
    #[arg(long, value_enum)]
    alpha_mode: Option<AlphaModeArg>,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, PathBuf, Overrides)> {
        let cfg = RunConfig::load(&self.config)?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .ok_or_else(|| Error::Config("no --out given and no output_dir in the config".into()))?;
        let ov = Overrides {
            peer_mode: self.peer_mode.map(|m| match m {
                PeerModeArg::Explicit => PeerMode::Explicit,
                PeerModeArg::Threshold => PeerMode::Threshold,
            }),
            alpha_mode: self.alpha_mode.map(|m| match m {
                AlphaModeArg::Lca => AlphaMode::Lca,
                AlphaModeArg::Literal => AlphaMode::Literal,
            }),
        };
        Ok((cfg, out, ov))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the long-run signal tree.
    BuildTree {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Attach the configured target at one rebalance row.
    Attach {
        #[command(flatten)]
        run: RunArgs,
        /// Tree file from build-tree; rebuilt from the config if absent.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Panel row; the last rebalance row by default.
        #[arg(long)]
        row: Option<usize>,
    },
    /// Rolling backtest of adaptive, greedy and buy-and-hold.
    Backtest {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        tree: Option<PathBuf>,
    },
    /// Generate a synthetic regime-switching panel.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Regime spec JSON; the default switch scenario if absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Plot-ready bundle from a ledger directory.
    Report {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of the full suite sizes.
        #[arg(long, default_value_t = 0.1)]
        scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_spec(path: &Path) -> Result<RegimeSpec> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Parameter(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::BuildTree { run } => {
            let (cfg, out, _) = run.load()?;
            print(&commands::build_tree(&cfg, &out)?)?;
        }
        Command::Attach { run, tree, row } => {
            let (cfg, out, ov) = run.load()?;
            print(&commands::attach(&cfg, tree.as_deref(), row, ov, &out)?)?;
        }
        Command::Backtest { run, tree } => {
            let (cfg, out, ov) = run.load()?;
            print(&commands::backtest(&cfg, tree.as_deref(), ov, &out)?)?;
        }
        Command::Simulate { out, seed, spec, length } => {
            let spec = match spec {
                Some(p) => load_spec(&p)?,
                None => commands::scenario_spec(seed),
            };
            let length = length.unwrap_or(SwitchScenario::default().length);
            print(&commands::simulate(&spec, length, &out)?)?;
        }
        Command::Report { ledger, out } => print(&commands::report(&ledger, &out)?)?,
        Command::Selftest { seed, scale, out } => {
            let report = commands::selftest(seed, scale, out.as_deref())?;
            print(&report)?;
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let class = e.class();
            let body = serde_json::json!({
                "error": {"class": class.as_str(), "message": e.to_string(), "exit_code": class.exit_code()}
            });
            eprintln!("{body}");
            ExitCode::from(class.exit_code() as u8)
        }
    }
}
