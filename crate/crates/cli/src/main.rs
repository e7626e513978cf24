use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use autonomy_core::experiment::{chatter_scenario, chattering_demo, run_sweep, summarize, write_sweep, SweepSpec};
use autonomy_core::trace::{export_trace, TraceFormat};
use autonomy_core::{run_episode, EpisodeConfig, Mode};
use autonomy_teleop::{bind, ServiceConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "autonomy", version, about = "Shared-control peg-in-hole simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Episode config (JSON). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Autonomous,
    Shared,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Autonomous => vec![Mode::Autonomous],
            ModeArg::Shared => vec![Mode::Shared],
            ModeArg::Both => vec![Mode::Autonomous, Mode::Shared],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and export its trace as CSV and JSON.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Lateral goal error (m).
        #[arg(long)]
        dx: Option<f64>,
    },
    /// Sweep goal error for each mode and write episode and summary tables.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        #[arg(long, default_value_t = 10)]
        runs: u32,
        /// Lateral goal errors in mm, comma separated. Defaults to 0,5,...,30.
        #[arg(long, value_delimiter = ',')]
        dx_mm: Option<Vec<f64>>,
    },
    /// Run a scenario with and without α filtering and count α crossings of 0.5.
    Chatter {
        #[command(flatten)]
        common: Common,
    },
    /// Serve live sessions over websockets.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "AUTONOMY_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value_t = 30.0)]
        stream_hz: f64,
        /// Run episodes as fast as possible instead of in real time.
        #[arg(long)]
        unpaced: bool,
    },
    /// Print a built-in config as JSON.
    Config {
        #[arg(value_enum, default_value = "default")]
        preset: Preset,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Chatter,
}

fn load(path: Option<&Path>, fallback: impl FnOnce() -> EpisodeConfig) -> Result<EpisodeConfig> {
    match path {
        Some(p) => Ok(EpisodeConfig::load(p)?),
        None => Ok(fallback()),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn run(common: Common, mode: Option<ModeArg>, dx: Option<f64>) -> Result<()> {
    let mut cfg = load(common.config.as_deref(), EpisodeConfig::default)?;
    match mode {
        Some(ModeArg::Autonomous) => cfg.mode = Mode::Autonomous,
        Some(ModeArg::Shared) => cfg.mode = Mode::Shared,
        Some(ModeArg::Both) => anyhow::bail!("run takes a single mode"),
        None => {}
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dx) = dx {
        cfg.goal_error.dx = dx;
    }
    let result = run_episode(&cfg)?;
    create_out(&common.out)?;
    export_trace(&result, TraceFormat::Csv, &common.out.join("trace.csv"))?;
    export_trace(&result, TraceFormat::Json, &common.out.join("trace.json"))?;
    match (result.completion_time, result.failure_reason) {
        (Some(t), _) => println!("success in {t:.3} s ({} ticks)", result.ticks),
        (None, Some(reason)) => println!("failed: {reason:?} after {} ticks", result.ticks),
        (None, None) => unreachable!("an unsuccessful episode has a failure reason"),
    }
    println!(
        "goal error dx={:.4} m dz={:.4} m, trace written to {}",
        result.goal_error.dx,
        result.goal_error.dz,
        common.out.display()
    );
    Ok(())
}

fn sweep(common: Common, mode: ModeArg, runs: u32, dx_mm: Option<Vec<f64>>) -> Result<()> {
    let mut base = load(common.config.as_deref(), EpisodeConfig::default)?;
    if let Some(seed) = common.seed {
        base.seed = seed;
    }
    let mut spec = SweepSpec::standard(base, runs);
    spec.modes = mode.modes();
    if let Some(dx) = dx_mm {
        spec.dx_values = dx.iter().map(|mm| mm / 1e3).collect();
    }
    let records = run_sweep(&spec)?;
    let (episodes, summary_path) = write_sweep(&common.out, &records)?;
    println!(
        "{:<11} {:>6} {:>4} {:>8} {:>8} {:>8}",
        "mode", "dx_mm", "n", "success", "mean_s", "std_s"
    );
    for c in summarize(&records) {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<11} {:>6.1} {:>4} {:>8.2} {:>8} {:>8}",
            c.mode.as_str(),
            c.dx_mm,
            c.n,
            c.success_rate,
            opt(c.mean_s),
            opt(c.std_s)
        );
    }
    println!("wrote {} and {}", episodes.display(), summary_path.display());
    Ok(())
}

fn chatter(common: Common) -> Result<()> {
    let mut cfg = load(common.config.as_deref(), chatter_scenario)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let report = chattering_demo(&cfg)?;
    create_out(&common.out)?;
    let path = common.out.join("chatter_alpha.csv");
    report.write_alpha_csv(&path)?;
    println!(
        "unfiltered: {} crossings ({:.1}/s)",
        report.unfiltered_crossings,
        report.unfiltered_rate()
    );
    println!(
        "filtered:   {} crossings ({:.1}/s), max per-tick step {:.2e}",
        report.filtered_crossings,
        report.filtered_rate(),
        report.max_filtered_step
    );
    match report.ratio() {
        Some(r) => println!("ratio {r:.4}"),
        None => println!("ratio undefined: the unfiltered run never crossed"),
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn serve(config: Option<PathBuf>, addr: SocketAddr, stream_hz: f64, unpaced: bool) -> Result<()> {
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).init();
    let episode = load(config.as_deref(), EpisodeConfig::default)?;
    let service = ServiceConfig {
        episode,
        stream_hz,
        paced: !unpaced,
        ..ServiceConfig::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let server = bind(service, addr).await?;
        println!("listening on {}", server.local_addr()?);
        server.run().await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { common, mode, dx } => run(common, mode, dx),
        Command::Sweep {
            common,
            mode,
            runs,
            dx_mm,
        } => sweep(common, mode, runs, dx_mm),
        Command::Chatter { common } => chatter(common),
        Command::Serve {
            config,
            bind,
            stream_hz,
            unpaced,
        } => serve(config, bind, stream_hz, unpaced),
        Command::Config { preset } => {
            let cfg = match preset {
                Preset::Default => EpisodeConfig::default(),
                Preset::Chatter => chatter_scenario(),
            };
            println!("{}", cfg.to_json());
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
