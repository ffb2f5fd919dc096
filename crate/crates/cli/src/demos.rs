//! Demonstration files.
//!
//! ```text
//! coil-demos 1
//! env <preset>
//! schema limbs=<n> markers=<m> base_velocity=<true|false>
//! episode <index> length=<n> source=<expert|imitator> morphology=<v,v,..|->
//! ...
//! data
//! <one feature vector per line, space separated>
//! ```
//!
//! Records follow the episode lines in order; each episode's `length`
//! consecutive records belong to it. Floats use shortest round-trip
//! formatting.

use std::fmt::Write as _;
use std::path::Path;

use coil_core::coil::DemoSet;
use coil_core::features::{FeatureSchema, FeatureTrajectory, Source};

use crate::error::CliError;

pub const DEMO_MAGIC: &str = "coil-demos";
pub const DEMO_VERSION: u32 = 1;

pub fn demos_to_string(demos: &DemoSet) -> Result<String, CliError> {
    let schema = demos
        .schema()
        .ok_or_else(|| CliError::Usage("refusing to save an empty demonstration set".into()))?;
    let mut s = format!("{DEMO_MAGIC} {DEMO_VERSION}\nenv {}\n", demos.env);
    let _ = writeln!(
        s,
        "schema limbs={} markers={} base_velocity={}",
        schema.limbs, schema.markers_per_limb, schema.base_velocity
    );
    for t in &demos.trajectories {
        if t.schema() != schema {
            return Err(CliError::Schema { expected: schema, got: t.schema() });
        }
        let morph = match &t.morphology {
            Some(m) => m.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            None => "-".into(),
        };
        let _ = writeln!(
            s,
            "episode {} length={} source={} morphology={morph}",
            t.episode,
            t.len(),
            t.source.as_str()
        );
    }
    s.push_str("data\n");
    for t in &demos.trajectories {
        for f in t.features() {
            let line: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn save_demos(demos: &DemoSet, path: &Path) -> Result<(), CliError> {
    let text = demos_to_string(demos)?;
    crate::write_atomic(path, text.as_bytes())
}

pub fn load_demos(path: &Path) -> Result<DemoSet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_demos(&text, &path.display().to_string())
}

fn field<'a>(token: Option<&'a str>, key: &str) -> Option<&'a str> {
    token?.strip_prefix(key)?.strip_prefix('=')
}

struct Header {
    episode: usize,
    length: usize,
    source: Source,
    morphology: Option<Vec<f64>>,
}

pub fn parse_demos(text: &str, origin: &str) -> Result<DemoSet, CliError> {
    let err = |line: usize, msg: String| CliError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(text.lines().count() + 1, format!("unexpected end of file, expected {what}")))
    };

    let (n, magic) = next("header")?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(DEMO_MAGIC) {
        return Err(err(n, format!("not a demonstration file (missing `{DEMO_MAGIC}`)")));
    }
    if parts.next().and_then(|v| v.parse::<u32>().ok()) != Some(DEMO_VERSION) {
        return Err(err(n, format!("unsupported version, expected {DEMO_VERSION}")));
    }

    let (n, env_line) = next("env line")?;
    let env = env_line
        .strip_prefix("env ")
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .ok_or_else(|| err(n, "expected `env <name>`".into()))?
        .to_string();

    let (n, schema_line) = next("schema line")?;
    let mut toks = schema_line.split_whitespace();
    if toks.next() != Some("schema") {
        return Err(err(n, "expected `schema ...`".into()));
    }
    let limbs = field(toks.next(), "limbs").and_then(|v| v.parse().ok());
    let markers = field(toks.next(), "markers").and_then(|v| v.parse().ok());
    let base_velocity = field(toks.next(), "base_velocity").and_then(|v| v.parse().ok());
    let schema = match (limbs, markers, base_velocity) {
        (Some(limbs), Some(markers_per_limb), Some(base_velocity)) => FeatureSchema {
            limbs,
            markers_per_limb,
            base_velocity,
        },
        _ => return Err(err(n, "malformed schema line".into())),
    };

    let mut headers = Vec::new();
    loop {
        let (n, line) = next("`data`")?;
        if line.trim() == "data" {
            break;
        }
        let mut toks = line.split_whitespace();
        if toks.next() != Some("episode") {
            return Err(err(n, "expected an episode line or `data`".into()));
        }
        let episode = toks.next().and_then(|v| v.parse().ok());
        let length = field(toks.next(), "length").and_then(|v| v.parse().ok());
        let source = match field(toks.next(), "source") {
            Some("expert") => Some(Source::Expert),
            Some("imitator") => Some(Source::Imitator),
            _ => None,
        };
        let morphology = match field(toks.next(), "morphology") {
            Some("-") => Some(None),
            Some(list) => list
                .split(',')
                .map(|v| v.parse::<f64>().ok())
                .collect::<Option<Vec<_>>>()
                .map(Some),
            None => None,
        };
        match (episode, length, source, morphology, toks.next()) {
            (Some(episode), Some(length), Some(source), Some(morphology), None) if length > 0 => {
                headers.push(Header { episode, length, source, morphology })
            }
            _ => return Err(err(n, "malformed episode line".into())),
        }
    }

    let mut trajectories = Vec::with_capacity(headers.len());
    for h in headers {
        let mut features = Vec::with_capacity(h.length);
        for _ in 0..h.length {
            let (n, line) = next("a feature record")?;
            let record = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| err(n, format!("bad number: {e}")))?;
            if record.len() != schema.dim() {
                return Err(err(
                    n,
                    format!("record has {} values, schema dimension is {}", record.len(), schema.dim()),
                ));
            }
            features.push(record);
        }
        let t = FeatureTrajectory::new(schema, features, h.episode, h.source, h.morphology)
            .map_err(|e| CliError::Io(e.to_string()))?;
        trajectories.push(t);
    }
    if let Some((n, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(err(n, "records beyond the declared episode lengths".into()));
    }
    Ok(DemoSet { env, trajectories })
}

/// Rejects demonstrations whose schema differs from `expected`.
pub fn check_schema(demos: &DemoSet, expected: FeatureSchema) -> Result<(), CliError> {
    match demos.schema() {
        Some(got) if got != expected => Err(CliError::Schema { expected, got }),
        _ => Ok(()),
    }
}
