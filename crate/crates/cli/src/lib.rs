//! Library side of the `coil` command-line tool: configuration, file
//! formats and the subcommand implementations.

pub mod config;
pub mod demos;
pub mod error;
pub mod metrics;

use std::path::{Path, PathBuf};
use std::time::Instant;

use coil_core::coil::{
    evaluate, generate_demos, run, seed_offset, DemoSet, EvalReport, ExpertReport,
};
use coil_core::diff::{Tensor, TensorArchive};
use coil_core::features::FeatureMap;
use coil_core::imitation::Imitation;
use coil_core::rl_sac::SacAgent;
use coil_core::simenv::{make_env, MorphologyVector};
use coil_core::transport::mean_pairwise_demo_distance;

pub use config::{parse_config, parse_config_str, ExperimentConfig};
pub use error::CliError;

/// Environment variable naming the directory relative paths resolve under.
pub const OUTPUT_ROOT_VAR: &str = "COIL_OUTPUT_ROOT";

/// Resolves an output path against the output root.
pub fn output_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Input paths are taken as given when they exist, else under the root.
pub fn input_path(p: &Path) -> PathBuf {
    if p.exists() {
        p.to_path_buf()
    } else {
        output_path(p)
    }
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(metrics::PARTIAL_SUFFIX);
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn gen_demos(cfg: &ExperimentConfig, out: &Path) -> Result<(DemoSet, ExpertReport), CliError> {
    let spec = cfg.coil.env_spec()?;
    let (demos, report) = generate_demos(&spec, &cfg.expert, cfg.coil.seed)?;
    demos::save_demos(&demos, out)?;
    Ok((demos, report))
}

fn env_schema(cfg: &ExperimentConfig) -> Result<coil_core::features::FeatureSchema, CliError> {
    let spec = cfg.coil.env_spec()?;
    let env = make_env(&spec, &spec.default_xi().map_err(coil_core::coil::CoilError::from)?)
        .map_err(coil_core::coil::CoilError::from)?;
    Ok(FeatureMap::for_env(&env).schema())
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub steps: u64,
    pub episodes: u64,
    pub best_morphology: Vec<f64>,
    pub final_morphology: Vec<f64>,
    pub wall_clock_secs: f64,
}

/// Runs co-imitation, writing `metrics.csv`, the latest block
/// `checkpoint.txt` and `final.txt` into `dir`.
pub fn train(cfg: &ExperimentConfig, demos: &DemoSet, dir: &Path) -> Result<TrainSummary, CliError> {
    demos::check_schema(demos, env_schema(cfg)?)?;
    let start = Instant::now();
    let mut sink = metrics::CsvSink::create(dir)?;
    let res = run(&cfg.coil, demos, &mut sink)?;
    let mut archive = TensorArchive::new();
    res.agent.save(&mut archive, "agent");
    res.imitation.save(&mut archive, "imitation");
    archive.insert("morphology", Tensor::row(res.final_morphology.params()));
    archive.insert("best_morphology", Tensor::row(res.best_morphology.params()));
    let checkpoint = dir.join("final.txt");
    write_atomic(&checkpoint, archive.to_text().as_bytes())?;
    let metrics = sink.finish()?;
    Ok(TrainSummary {
        metrics,
        checkpoint,
        steps: res.steps,
        episodes: res.episodes,
        best_morphology: res.best_morphology.params().to_vec(),
        final_morphology: res.final_morphology.params().to_vec(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Scores a checkpoint's policy at `morphology`, or at the morphology
/// stored in the checkpoint.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    demos: &DemoSet,
    checkpoint: &Path,
    morphology: Option<Vec<f64>>,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport, CliError> {
    demos::check_schema(demos, env_schema(cfg)?)?;
    let spec = cfg.coil.env_spec()?;
    let archive = TensorArchive::load(checkpoint)
        .map_err(|e| CliError::Io(format!("{}: {e}", checkpoint.display())))?;
    let params = match morphology {
        Some(m) => m,
        None => archive
            .get("morphology")
            .map_err(|e| CliError::Io(format!("{}: {e}", checkpoint.display())))?
            .data()
            .to_vec(),
    };
    let xi = MorphologyVector::new(params, spec.bounds.clone())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let env = make_env(&spec, &xi).map_err(coil_core::coil::CoilError::from)?;
    let mut agent = SacAgent::new(
        env.observation_dim(),
        spec.bounds.len(),
        spec.torque_limits.clone(),
        cfg.coil.sac.clone(),
        cfg.coil.seed + seed_offset::AGENT,
    );
    agent
        .load(&archive, "agent")
        .map_err(|e| CliError::Io(format!("{}: {e}", checkpoint.display())))?;
    Ok(evaluate(&mut agent, &spec, &xi, demos, episodes, cfg.coil.subsample, seed)?)
}

/// Loads an imitation module from a checkpoint; used to resume analysis.
pub fn load_imitation(cfg: &ExperimentConfig, archive: &TensorArchive) -> Result<Imitation, CliError> {
    let spec = cfg.coil.env_spec()?;
    let xi = spec.default_xi().map_err(coil_core::coil::CoilError::from)?;
    let env = make_env(&spec, &xi).map_err(coil_core::coil::CoilError::from)?;
    let mut im = Imitation::new(
        cfg.coil.imitation.clone(),
        FeatureMap::for_env(&env).schema().dim(),
        env.observation_dim() + spec.bounds.len(),
        env.action_dim(),
        cfg.coil.seed + seed_offset::IMITATION,
    );
    im.load(archive, "imitation")
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(im)
}

pub fn write_eval(report: &EvalReport, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "wasserstein"])?;
    for (k, d) in report.distances.iter().enumerate() {
        w.write_record([k.to_string(), d.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Builds plot series from metric logs, adding the demonstration
/// self-distance when demonstrations are given.
pub fn export_plots(
    logs: &[PathBuf],
    demos: Option<&DemoSet>,
    subsample: usize,
    bin: u64,
    out: &Path,
) -> Result<Vec<metrics::SeriesPoint>, CliError> {
    let mut rows = Vec::new();
    for p in logs {
        rows.extend(metrics::read_metrics(p)?);
    }
    let baseline = match demos {
        Some(d) => Some(
            mean_pairwise_demo_distance(&d.trajectories, subsample, 0)
                .map_err(coil_core::coil::CoilError::from)?,
        ),
        None => None,
    };
    let points = metrics::plot_series(&rows, bin, baseline);
    metrics::write_series(&points, out)?;
    Ok(points)
}
