use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coil_cli::{
    config::ExperimentConfig, demos, evaluate_checkpoint, export_plots, gen_demos, input_path,
    output_path, parse_config, train, write_eval, CliError,
};
use coil_core::coil::seed_offset;
use coil_core::morphopt::StrategyKind;

#[derive(Parser)]
#[command(name = "coil", version, about = "Co-imitation of morphology and behaviour")]
struct Cli {
    /// Experiment configuration (TOML); defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an expert on the task reward and record demonstrations.
    GenDemos {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run co-imitation and log per-episode metrics.
    Train {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        strategy: Option<StrategyKind>,
        /// Output directory; the configured one when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint against demonstrations.
    Evaluate {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Comma-separated morphology; the checkpoint's when omitted.
        #[arg(long, value_delimiter = ',')]
        morphology: Option<Vec<f64>>,
        /// Per-episode distances as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn metric logs into mean and standard deviation series.
    ExportPlots {
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Width of the step bins.
        #[arg(long, default_value_t = 5000)]
        bin: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(&input_path(p))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.coil.seed = s;
    }
    match cli.command {
        Command::GenDemos { out } => {
            let out = output_path(&out);
            let (d, report) = gen_demos(&cfg, &out)?;
            println!(
                "wrote {} episodes to {} (expert displacement {:.3}, random {:.3})",
                d.trajectories.len(),
                out.display(),
                report.expert_displacement,
                report.random_displacement
            );
        }
        Command::Train { demos: path, strategy, out } => {
            if let Some(s) = strategy {
                cfg.coil.strategy = s;
            }
            let d = demos::load_demos(&input_path(&path))?;
            let dir = output_path(&out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir)));
            let s = train(&cfg, &d, &dir)?;
            println!(
                "{} steps, {} episodes in {:.1}s; best morphology {:?}; metrics {}",
                s.steps,
                s.episodes,
                s.wall_clock_secs,
                s.best_morphology,
                s.metrics.display()
            );
        }
        Command::Evaluate { demos: path, checkpoint, episodes, morphology, out } => {
            let d = demos::load_demos(&input_path(&path))?;
            let episodes = episodes.unwrap_or(cfg.coil.eval_episodes);
            let seed = cfg.coil.seed + seed_offset::EVAL;
            let r = evaluate_checkpoint(&cfg, &d, &input_path(&checkpoint), morphology, episodes, seed)?;
            if let Some(out) = out {
                write_eval(&r, &output_path(&out))?;
            }
            println!(
                "wasserstein mean {} std {} over {} episodes at morphology {:?} ({:.1}s)",
                r.mean,
                r.std,
                r.distances.len(),
                r.morphology,
                r.wall_clock_secs
            );
        }
        Command::ExportPlots { metrics, demos: path, bin, out } => {
            let d = path.map(|p| demos::load_demos(&input_path(&p))).transpose()?;
            let logs: Vec<PathBuf> = metrics.iter().map(|p| input_path(p)).collect();
            let out = output_path(&out);
            let points = export_plots(&logs, d.as_ref(), cfg.coil.subsample, bin, &out)?;
            println!("wrote {} points to {}", points.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).render());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
