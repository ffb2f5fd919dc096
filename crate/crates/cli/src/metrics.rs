//! Per-episode metric logs and plot series.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use coil_core::coil::{mean_std, CoilError, EpisodeRecord, MetricSink};
use coil_core::diff::TensorArchive;

use crate::error::CliError;

pub const PARTIAL_SUFFIX: &str = ".partial";

fn partial(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(PARTIAL_SUFFIX);
    PathBuf::from(s)
}

/// Writes `metrics.csv` in `dir`, one flushed row per episode. The file
/// carries a `.partial` suffix until [`CsvSink::finish`] renames it.
/// Block checkpoints go to `checkpoint.txt` in the same directory.
pub struct CsvSink {
    writer: csv::Writer<File>,
    path: PathBuf,
    dir: PathBuf,
    header_written: bool,
}

impl CsvSink {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join("metrics.csv");
        let file = File::create(partial(&path))
            .map_err(|e| CliError::Io(format!("{}: {e}", partial(&path).display())))?;
        Ok(CsvSink {
            writer: csv::Writer::from_writer(file),
            path,
            dir: dir.to_path_buf(),
            header_written: false,
        })
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush()?;
        std::fs::rename(partial(&self.path), &self.path)?;
        Ok(self.path)
    }
}

fn io(e: impl std::fmt::Display) -> CoilError {
    CoilError::Io(e.to_string())
}

impl MetricSink for CsvSink {
    fn record(&mut self, r: &EpisodeRecord) -> Result<(), CoilError> {
        if !self.header_written {
            let mut header = vec!["step".to_string(), "episode".to_string()];
            header.extend((0..r.morphology.len()).map(|k| format!("morphology_{k}")));
            header.extend(["wasserstein", "reward_mean", "strategy", "seed"].map(String::from));
            self.writer.write_record(&header).map_err(io)?;
            self.header_written = true;
        }
        let mut row = vec![r.step.to_string(), r.episode.to_string()];
        row.extend(r.morphology.iter().map(|v| v.to_string()));
        row.push(r.wasserstein.to_string());
        row.push(r.reward_mean.to_string());
        row.push(r.strategy.as_str().to_string());
        row.push(r.seed.to_string());
        self.writer.write_record(&row).map_err(io)?;
        self.writer.flush().map_err(io)
    }

    fn checkpoint(&mut self, _index: usize, archive: &TensorArchive) -> Result<(), CoilError> {
        crate::write_atomic(&self.dir.join("checkpoint.txt"), archive.to_text().as_bytes())
            .map_err(io)
    }
}

/// One parsed metrics row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub episode: u64,
    pub morphology: Vec<f64>,
    pub wasserstein: f64,
    pub reward_mean: f64,
    pub strategy: String,
    pub seed: u64,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, CliError> {
    let origin = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Io(format!("{origin}: {e}")))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::Io(format!("{origin}: {e}")))?
        .clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(step), Some(episode), Some(w), Some(r), Some(strat), Some(seed)) = (
        col("step"),
        col("episode"),
        col("wasserstein"),
        col("reward_mean"),
        col("strategy"),
        col("seed"),
    ) else {
        return Err(CliError::Parse { path: origin, line: 1, msg: "missing metric columns".into() });
    };
    let morph: Vec<usize> = (0..header.len())
        .filter(|&i| header[i].starts_with("morphology_"))
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let bad = |msg: String| CliError::Parse { path: origin.clone(), line, msg };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", &header[i])));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|e| bad(format!("column {}: {e}", &header[i])));
        rows.push(MetricRow {
            step: int(step)?,
            episode: int(episode)?,
            morphology: morph.iter().map(|&i| num(i)).collect::<Result<_, _>>()?,
            wasserstein: num(w)?,
            reward_mean: num(r)?,
            strategy: rec[strat].to_string(),
            seed: int(seed)?,
        });
    }
    Ok(rows)
}

/// A point of a plotted curve.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub series: String,
    pub step: u64,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

pub const DEMONSTRATIONS_SERIES: &str = "Demonstrations";

/// Averages episodes into step bins of width `bin` per strategy and seed,
/// then takes mean and standard deviation across seeds. Bins are labelled
/// by their upper edge. With `demo_baseline`, a flat "Demonstrations"
/// series is added at every bin.
pub fn plot_series(rows: &[MetricRow], bin: u64, demo_baseline: Option<f64>) -> Vec<SeriesPoint> {
    let bin = bin.max(1);
    let mut per_seed: BTreeMap<(String, u64, u64), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let edge = r.step.div_ceil(bin) * bin;
        let e = per_seed.entry((r.strategy.clone(), edge, r.seed)).or_insert((0.0, 0));
        e.0 += r.wasserstein;
        e.1 += 1;
    }
    let mut grouped: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for ((strategy, edge, _), (sum, n)) in per_seed {
        grouped.entry((strategy, edge)).or_default().push(sum / n as f64);
    }
    let mut out: Vec<SeriesPoint> = grouped
        .into_iter()
        .map(|((series, step), values)| {
            let (mean, std) = mean_std(&values);
            SeriesPoint { series, step, mean, std, seeds: values.len() }
        })
        .collect();
    if let Some(d) = demo_baseline {
        let mut edges: Vec<u64> = out.iter().map(|p| p.step).collect();
        edges.sort_unstable();
        edges.dedup();
        out.extend(edges.into_iter().map(|step| SeriesPoint {
            series: DEMONSTRATIONS_SERIES.into(),
            step,
            mean: d,
            std: 0.0,
            seeds: 0,
        }));
    }
    out
}

pub fn write_series(points: &[SeriesPoint], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "step", "mean", "std", "seeds"])?;
    for p in points {
        w.write_record([
            p.series.clone(),
            p.step.to_string(),
            p.mean.to_string(),
            p.std.to_string(),
            p.seeds.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    crate::write_atomic(path, &bytes)
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
