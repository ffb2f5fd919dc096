//! Experiment configuration files.
//!
//! TOML with the sections `[env]`, `[train]`, `[sac]`, `[imitation]`,
//! `[morphology]`, `[expert]` and `[run]`. Every key is optional; an empty
//! file gives the defaults. Unknown sections and keys are rejected, and
//! every violation is reported at once.

use std::path::Path;

use coil_core::coil::{CoilConfig, ExpertConfig};
use coil_core::imitation::IlAlgorithm;
use coil_core::morphopt::StrategyKind;
use coil_core::simenv::PRESET_NAMES;
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub coil: CoilConfig,
    pub expert: ExpertConfig,
    /// Where `train` writes, relative to the output root.
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            coil: CoilConfig::default(),
            expert: ExpertConfig::default(),
            output_dir: "runs".into(),
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

struct Fields<'e> {
    section: &'static str,
    table: Table,
    errors: &'e mut Vec<String>,
}

impl<'e> Fields<'e> {
    fn bad(&mut self, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{}.{key}: {msg}", self.section));
    }

    fn float(&mut self, key: &str, lo: f64, hi: f64, open_lo: bool, open_hi: bool) -> Option<f64> {
        let v = self.table.remove(key)?;
        let x = match v {
            Value::Float(f) => f,
            Value::Integer(i) => i as f64,
            other => {
                self.bad(key, format!("expected a number, got {}", other.type_str()));
                return None;
            }
        };
        let below = if open_lo { x <= lo } else { x < lo };
        let above = if open_hi { x >= hi } else { x > hi };
        if !x.is_finite() || below || above {
            let l = if open_lo { '(' } else { '[' };
            let r = if open_hi { ')' } else { ']' };
            self.bad(key, format!("{x} is outside {l}{lo}, {hi}{r}"));
            return None;
        }
        Some(x)
    }

    fn set_float(&mut self, key: &str, target: &mut f64, lo: f64, hi: f64, open_lo: bool, open_hi: bool) {
        if let Some(x) = self.float(key, lo, hi, open_lo, open_hi) {
            *target = x;
        }
    }

    fn int(&mut self, key: &str, min: i64) -> Option<i64> {
        match self.table.remove(key)? {
            Value::Integer(i) if i >= min => Some(i),
            Value::Integer(i) => {
                self.bad(key, format!("{i} is below the minimum {min}"));
                None
            }
            other => {
                self.bad(key, format!("expected an integer, got {}", other.type_str()));
                None
            }
        }
    }

    fn set_usize(&mut self, key: &str, target: &mut usize, min: i64) {
        if let Some(i) = self.int(key, min) {
            *target = i as usize;
        }
    }

    fn set_u64(&mut self, key: &str, target: &mut u64, min: i64) {
        if let Some(i) = self.int(key, min) {
            *target = i as u64;
        }
    }

    fn set_bool(&mut self, key: &str, target: &mut bool) {
        match self.table.remove(key) {
            Some(Value::Boolean(b)) => *target = b,
            Some(other) => self.bad(key, format!("expected a boolean, got {}", other.type_str())),
            None => {}
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.table.remove(key)? {
            Value::String(s) => Some(s),
            other => {
                self.bad(key, format!("expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn parsed<T: std::str::FromStr<Err = String>>(&mut self, key: &str, target: &mut T) {
        if let Some(s) = self.string(key) {
            match s.parse() {
                Ok(v) => *target = v,
                Err(e) => self.bad(key, e),
            }
        }
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.table.remove(key)?;
        let values: Option<Vec<f64>> = match &v {
            Value::Array(a) => a
                .iter()
                .map(|x| match x {
                    Value::Float(f) => Some(*f),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                })
                .collect(),
            _ => None,
        };
        if values.is_none() {
            self.bad(key, "expected an array of numbers");
        }
        values
    }

    fn finish(self) {
        for key in self.table.keys() {
            self.errors.push(format!("{}.{key}: unknown key", self.section));
        }
    }
}

const SECTIONS: &[&str] = &["env", "train", "sac", "imitation", "morphology", "expert", "run"];

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(vec![one_line(&e.to_string())]))?;
    let mut errors = Vec::new();
    let mut sections = std::collections::HashMap::new();
    for (key, value) in std::mem::take(&mut root) {
        match value {
            Value::Table(t) if SECTIONS.contains(&key.as_str()) => {
                sections.insert(key, t);
            }
            _ if SECTIONS.contains(&key.as_str()) => errors.push(format!("{key}: expected a section")),
            _ => errors.push(format!("{key}: unknown key")),
        }
    }
    let mut cfg = ExperimentConfig::default();
    let mut section = |name: &str| -> Table { sections.remove(name).unwrap_or_default() };

    {
        let table = section("env");
        let mut f = Fields { section: "env", table, errors: &mut errors };
        if let Some(name) = f.string("name") {
            if PRESET_NAMES.contains(&name.as_str()) {
                cfg.coil.env = name;
            } else {
                f.bad("name", format!("unknown preset `{name}`; expected one of {}", PRESET_NAMES.join(", ")));
            }
        }
        if let Some(n) = f.int("episode_length", 1) {
            cfg.coil.episode_length = Some(n as usize);
        }
        f.finish();
    }
    {
        let table = section("train");
        let c = &mut cfg.coil;
        let mut f = Fields { section: "train", table, errors: &mut errors };
        f.parsed::<IlAlgorithm>("algorithm", &mut c.algorithm);
        c.imitation.algorithm = c.algorithm;
        f.set_u64("max_steps", &mut c.max_steps, 1);
        f.set_u64("seed", &mut c.seed, 0);
        f.set_usize("eval_episodes", &mut c.eval_episodes, 1);
        f.set_usize("subsample", &mut c.subsample, 1);
        f.set_bool("relabel_rewards", &mut c.relabel_rewards);
        f.finish();
    }
    {
        let table = section("sac");
        let s = &mut cfg.coil.sac;
        let mut f = Fields { section: "sac", table, errors: &mut errors };
        f.set_usize("hidden", &mut s.hidden, 1);
        f.set_usize("layers", &mut s.layers, 1);
        f.set_usize("batch_size", &mut s.batch_size, 1);
        f.set_float("gamma", &mut s.gamma, 0.0, 1.0, false, true);
        f.set_float("tau", &mut s.tau, 0.0, 1.0, true, false);
        f.set_float("lr", &mut s.lr, 0.0, 1.0, true, false);
        f.set_float("q_weight_decay", &mut s.q_weight_decay, 0.0, 1.0, false, false);
        f.set_float("initial_alpha", &mut s.initial_alpha, 0.0, f64::MAX, true, false);
        if let Some(a) = f.float("fixed_alpha", 0.0, f64::MAX, false, false) {
            s.fixed_alpha = Some(a);
        }
        f.set_usize("replay_capacity", &mut s.replay_capacity, 1);
        f.set_usize("updates_per_step", &mut s.updates_per_step, 1);
        f.set_usize("warmup_steps", &mut s.warmup_steps, 0);
        f.finish();
        if s.replay_capacity < s.batch_size {
            errors.push(format!(
                "sac.replay_capacity: {} is smaller than batch_size {}",
                s.replay_capacity, s.batch_size
            ));
        }
    }
    {
        let table = section("imitation");
        let m = &mut cfg.coil.imitation;
        let mut f = Fields { section: "imitation", table, errors: &mut errors };
        f.set_usize("hidden", &mut m.hidden, 1);
        f.set_usize("layers", &mut m.layers, 1);
        f.set_float("lr", &mut m.lr, 0.0, 1.0, true, false);
        f.set_float("weight_decay", &mut m.weight_decay, 0.0, 1.0, false, false);
        f.set_float("gradient_penalty", &mut m.gradient_penalty, 0.0, f64::MAX, false, false);
        f.set_float("prior_sigma", &mut m.prior_sigma, 0.0, f64::MAX, true, false);
        f.set_float("prior_weight", &mut m.prior_weight, 0.0, f64::MAX, false, false);
        f.set_float("vae_beta", &mut m.vae_beta, 0.0, f64::MAX, false, false);
        f.set_usize("vae_latent", &mut m.vae_latent, 1);
        f.set_usize("random_steps", &mut m.random_steps, 1);
        f.set_usize("pretrain_patience", &mut m.plateau.patience, 1);
        f.set_usize("pretrain_max_epochs", &mut m.plateau.max_epochs, 1);
        f.set_bool("online_inverse", &mut m.online_inverse);
        f.finish();
    }
    {
        let table = section("morphology");
        let c = &mut cfg.coil;
        let mut f = Fields { section: "morphology", table, errors: &mut errors };
        f.parsed::<StrategyKind>("strategy", &mut c.strategy);
        f.set_usize("episodes_per_morphology", &mut c.episodes_per_morphology, 1);
        f.set_float("beta", &mut c.bo.beta, 0.0, f64::MAX, false, false);
        f.set_usize("grid_size", &mut c.bo.grid_size, 1);
        f.set_usize("gp_restarts", &mut c.bo.fit.restarts, 0);
        f.set_usize("gp_window", &mut c.bo.fit.window, 1);
        f.set_u64("epsilon_decay_steps", &mut c.epsilon_decay_steps, 1);
        f.set_usize("pso_particles", &mut c.q_pso.particles, 1);
        f.set_usize("pso_iters", &mut c.q_pso.iters, 1);
        f.set_usize("q_start_states", &mut c.q_start_states, 1);
        if let Some(v) = f.floats("initial") {
            c.initial_morphology = Some(v);
        }
        f.finish();
    }
    {
        let table = section("expert");
        let e = &mut cfg.expert;
        let mut f = Fields { section: "expert", table, errors: &mut errors };
        f.set_u64("training_steps", &mut e.training_steps, 1);
        f.set_usize("episodes", &mut e.episodes, 1);
        f.set_float("control_cost", &mut e.control_cost, 0.0, f64::MAX, false, false);
        f.set_float("competence_factor", &mut e.competence_factor, 0.0, f64::MAX, false, false);
        f.set_usize("random_episodes", &mut e.random_episodes, 1);
        f.set_usize("hidden", &mut e.sac.hidden, 1);
        f.set_usize("batch_size", &mut e.sac.batch_size, 1);
        f.set_usize("warmup_steps", &mut e.sac.warmup_steps, 0);
        f.finish();
    }
    {
        let table = section("run");
        let mut f = Fields { section: "run", table, errors: &mut errors };
        if let Some(dir) = f.string("output_dir") {
            if dir.is_empty() {
                f.bad("output_dir", "must not be empty");
            } else {
                cfg.output_dir = dir;
            }
        }
        f.finish();
    }

    cfg.expert.episode_length = cfg.coil.episode_length;
    if errors.is_empty() {
        if let Ok(spec) = cfg.coil.env_spec() {
            if let Some(init) = &cfg.coil.initial_morphology {
                if init.len() != spec.bounds.len() {
                    errors.push(format!(
                        "morphology.initial: {} values for a {}-parameter morphology",
                        init.len(),
                        spec.bounds.len()
                    ));
                } else if let Some(k) = init
                    .iter()
                    .zip(&spec.bounds)
                    .position(|(v, (lo, hi))| v < lo || v > hi)
                {
                    errors.push(format!("morphology.initial: entry {k} is outside its bounds"));
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(errors))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
