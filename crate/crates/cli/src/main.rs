//! Experiment harness for the few-mode IM/DD capacity laboratory.
//!
//! Subcommands map onto the study's result families: `bounds` and `baa`
//! sweep the capacity estimates over SNR, `ae-train` trains one
//! pre-coder/detector pair, `xt-sweep` and `fixed-channel` reproduce the
//! crosstalk-tolerance and zero-drift comparisons, and `plot` turns any
//! emitted CSV into gnuplot-ready data files.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

mod config;
mod csvio;
mod plot;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Profile};
use runner::RunContext;

#[derive(Parser)]
#[command(name = "fmflab", version, about = "Few-mode IM/DD MIMO capacity laboratory")]
struct Cli {
    /// TOML experiment configuration; defaults to the built-in
    /// `gruner-ofc` reference profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// `desk` caps runtimes for iteration; `full` reproduces the
    /// full-size experiments.
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,

    /// Output directory for CSV/plot/checkpoint files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads (0 = all cores). Results are identical for any
    /// thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// QR-decomposition ergodic upper bounds over the SNR sweep.
    Bounds,
    /// Blahut-Arimoto capacity estimates over (M, SNR).
    Baa {
        /// Line-search the power allocation per point (slower).
        #[arg(long)]
        power_search: bool,
        /// Also write distribution and MI-trace snapshots per point.
        #[arg(long)]
        snapshots: bool,
    },
    /// Train one pre-coder/detector pair at the configured link.
    AeTrain {
        #[arg(long, default_value = "prec3")]
        precoder: String,
        #[arg(long, default_value = "det1")]
        detector: String,
    },
    /// Achievable rate vs expected DEMUX crosstalk of mode 2.
    XtSweep,
    /// BAA vs AE with the drift frozen to the expected channel.
    FixedChannel,
    /// Emit gnuplot data files (and optionally an SVG) from a CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fmflab::Error>() {
            return match e {
                fmflab::Error::SingularChannel { .. }
                | fmflab::Error::Diverged { .. }
                | fmflab::Error::Domain(_)
                | fmflab::Error::GaussianFit(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    let cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::gruner_ofc(),
    };
    cfg.validate()?;
    let ctx = RunContext {
        cfg: &cfg,
        profile: cli.profile,
        seed: cli.seed,
        out_dir: &cli.out_dir,
    };
    std::fs::create_dir_all(&cli.out_dir)?;

    match &cli.command {
        Command::Bounds => runner::run_bounds(&ctx),
        Command::Baa {
            power_search,
            snapshots,
        } => runner::run_baa(&ctx, *power_search, *snapshots),
        Command::AeTrain { precoder, detector } => {
            let (p, d) = runner::parse_method(&format!("{precoder}/{detector}"))?;
            runner::run_ae_train(&ctx, p, d)
        }
        Command::XtSweep => runner::run_xt_sweep(&ctx),
        Command::FixedChannel => runner::run_fixed_channel(&ctx),
        Command::Plot { csv, svg } => {
            let written = plot::emit_plot_data(csv, &cli.out_dir, *svg)?;
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}
