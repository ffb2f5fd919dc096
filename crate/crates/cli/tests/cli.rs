use std::path::Path;
use std::process::Command;

use coil_cli::demos::{demos_to_string, load_demos, parse_demos, save_demos};
use coil_cli::metrics::{plot_series, read_metrics, MetricRow, DEMONSTRATIONS_SERIES};
use coil_cli::{parse_config_str, CliError};
use coil_core::coil::DemoSet;
use coil_core::features::{FeatureSchema, FeatureTrajectory, Source};
use coil_core::morphopt::StrategyKind;

fn coil() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coil"))
}

fn demo_set(episodes: usize, len: usize) -> DemoSet {
    let schema = FeatureSchema {
        limbs: 1,
        markers_per_limb: 1,
        base_velocity: false,
    };
    let trajectories = (0..episodes)
        .map(|e| {
            let f = (0..len)
                .map(|t| {
                    let a = 0.1 * t as f64 + e as f64;
                    vec![a.cos() / 3.0, a.sin() * 1e-17, -a / 7.0, f64::MIN_POSITIVE * a]
                })
                .collect();
            let morph = if e % 2 == 0 { Some(vec![0.5]) } else { None };
            FeatureTrajectory::new(schema, f, e, Source::Expert, morph).unwrap()
        })
        .collect();
    DemoSet {
        env: "pendulum".into(),
        trajectories,
    }
}

#[test]
fn empty_config_gives_defaults() {
    let cfg = parse_config_str("").unwrap();
    assert_eq!(cfg.coil.sac.gamma, 0.97);
    assert_eq!(cfg.coil.sac.batch_size, 1024);
    assert_eq!(cfg.coil.sac.lr, 3e-4);
    assert_eq!(cfg.coil.sac.tau, 0.005);
    assert_eq!(cfg.coil.episodes_per_morphology, 20);
    assert_eq!(cfg.coil.bo.beta, 2.0);
    assert_eq!(cfg.coil.eval_episodes, 10);
}

#[test]
fn config_values_are_applied() {
    let cfg = parse_config_str(
        "[env]\nname = \"pendulum\"\nepisode_length = 50\n\
         [train]\nalgorithm = \"gail\"\nseed = 4\n\
         [sac]\ngamma = 0.9\nbatch_size = 32\n\
         [morphology]\nstrategy = \"q_pso\"\ninitial = [0.3]\n\
         [run]\noutput_dir = \"out\"\n",
    )
    .unwrap();
    assert_eq!(cfg.coil.env, "pendulum");
    assert_eq!(cfg.coil.episode_length, Some(50));
    assert_eq!(cfg.coil.imitation.algorithm.as_str(), "gail");
    assert_eq!(cfg.coil.seed, 4);
    assert_eq!(cfg.coil.sac.gamma, 0.9);
    assert_eq!(cfg.coil.strategy, StrategyKind::QPso);
    assert_eq!(cfg.coil.initial_morphology, Some(vec![0.3]));
    assert_eq!(cfg.output_dir, "out");
}

#[test]
fn unknown_key_is_named() {
    let err = parse_config_str("[sac]\ngamma = 0.9\nlearning_rate = 1.0\n").unwrap_err();
    assert!(err.to_string().contains("sac.learning_rate: unknown key"), "{err}");
    let err = parse_config_str("[nope]\n").unwrap_err();
    assert!(err.to_string().contains("nope"), "{err}");
}

#[test]
fn every_violation_is_reported() {
    let err = parse_config_str("[sac]\ngamma = 1.5\ntau = 0\n[env]\nname = \"moon\"\n").unwrap_err();
    let CliError::Config(list) = &err else { panic!("{err:?}") };
    assert_eq!(list.len(), 3, "{list:?}");
    assert!(list.iter().any(|m| m.starts_with("sac.gamma")));
    assert!(list.iter().any(|m| m.starts_with("sac.tau")));
    assert!(list.iter().any(|m| m.starts_with("env.name")));
    assert_eq!(err.code(), "E_CONFIG");
}

#[test]
fn syntax_error_mentions_line() {
    let err = parse_config_str("[sac]\ngamma = = 2\n").unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn initial_morphology_out_of_bounds_is_rejected() {
    let err = parse_config_str("[env]\nname = \"pendulum\"\n[morphology]\ninitial = [5.0]\n").unwrap_err();
    assert!(err.to_string().contains("morphology.initial"), "{err}");
}

#[test]
fn demo_round_trip_is_bit_identical() {
    let d = demo_set(10, 37);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.txt");
    save_demos(&d, &p).unwrap();
    let back = load_demos(&p).unwrap();
    assert_eq!(back, d);
    for (a, b) in back.trajectories.iter().zip(&d.trajectories) {
        for (x, y) in a.features().iter().flatten().zip(b.features().iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn wrong_arity_reports_its_line() {
    let text = demos_to_string(&demo_set(2, 3)).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let data = lines.iter().position(|l| l == "data").unwrap();
    lines[data + 2] = "1 2 3".into();
    let err = parse_demos(&lines.join("\n"), "x").unwrap_err();
    match err {
        CliError::Parse { line, .. } => assert_eq!(line, data + 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_and_overlong_files_are_rejected() {
    let text = demos_to_string(&demo_set(2, 3)).unwrap();
    let short: Vec<&str> = text.lines().collect();
    assert!(matches!(parse_demos(&short[..short.len() - 1].join("\n"), "x"), Err(CliError::Parse { .. })));
    let long = format!("{text}0 0 0 0\n");
    assert!(matches!(parse_demos(&long, "x"), Err(CliError::Parse { .. })));
    assert!(matches!(parse_demos("hello\n", "x"), Err(CliError::Parse { line: 1, .. })));
}

#[test]
fn empty_demo_set_is_not_saved() {
    let d = DemoSet {
        env: "pendulum".into(),
        trajectories: vec![],
    };
    assert!(demos_to_string(&d).is_err());
}

fn row(strategy: &str, seed: u64, step: u64, w: f64) -> MetricRow {
    MetricRow {
        step,
        episode: 0,
        morphology: vec![],
        wasserstein: w,
        reward_mean: 0.0,
        strategy: strategy.into(),
        seed,
    }
}

#[test]
fn series_take_mean_and_std_across_seeds() {
    let rows = vec![
        row("bo", 0, 10, 1.0),
        row("bo", 0, 20, 3.0),
        row("bo", 1, 15, 4.0),
        row("bo", 2, 20, 6.0),
        row("random", 0, 30, 5.0),
    ];
    let pts = plot_series(&rows, 50, Some(0.25));
    let bo = pts.iter().find(|p| p.series == "bo").unwrap();
    assert_eq!(bo.step, 50);
    assert_eq!(bo.seeds, 3);
    assert!((bo.mean - 4.0).abs() < 1e-12);
    assert!((bo.std - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
    let demo: Vec<_> = pts.iter().filter(|p| p.series == DEMONSTRATIONS_SERIES).collect();
    assert_eq!(demo.len(), 1);
    assert_eq!(demo[0].mean, 0.25);
}

fn write(path: &Path, s: &str) {
    std::fs::write(path, s).unwrap();
}

const TINY: &str = "[env]\nname = \"pendulum\"\nepisode_length = 20\n\
[train]\nmax_steps = 120\nsubsample = 40\n\
[sac]\nhidden = 8\nbatch_size = 16\nwarmup_steps = 20\n\
[imitation]\nhidden = 8\nrandom_steps = 100\npretrain_max_epochs = 3\n\
[morphology]\nstrategy = \"random\"\nepisodes_per_morphology = 2\n\
[expert]\ntraining_steps = 200\nepisodes = 3\nhidden = 8\nbatch_size = 16\nwarmup_steps = 50\ncompetence_factor = 0\n";

#[test]
fn end_to_end_commands() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(&root.join("c.toml"), TINY);
    let run = |args: &[&str]| {
        let out = coil()
            .current_dir(root)
            .env("COIL_OUTPUT_ROOT", root.join("out"))
            .args(args)
            .output()
            .unwrap();
        assert!(out.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["gen-demos", "--config", "c.toml", "--out", "demos.txt"]);
    assert!(root.join("out/demos.txt").exists());
    run(&["train", "--config", "c.toml", "--demos", "demos.txt", "--out", "a"]);
    run(&["train", "--config", "c.toml", "--demos", "demos.txt", "--out", "b"]);
    run(&["train", "--config", "c.toml", "--demos", "demos.txt", "--out", "f", "--strategy", "fixed"]);
    let a = std::fs::read(root.join("out/a/metrics.csv")).unwrap();
    let b = std::fs::read(root.join("out/b/metrics.csv")).unwrap();
    assert_eq!(a, b);
    assert!(!root.join("out/a/metrics.csv.partial").exists());
    let ra = read_metrics(&root.join("out/a/metrics.csv")).unwrap();
    let rf = read_metrics(&root.join("out/f/metrics.csv")).unwrap();
    assert_eq!(ra.len(), rf.len());
    assert!(ra.iter().zip(&rf).all(|(x, y)| x.step == y.step));
    let header = String::from_utf8(a).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "step,episode,morphology_0,wasserstein,reward_mean,strategy,seed");

    let eval = run(&["evaluate", "--config", "c.toml", "--demos", "demos.txt", "--checkpoint", "a/final.txt", "--out", "eval.csv"]);
    assert!(eval.contains("over 10 episodes"), "{eval}");
    run(&["export-plots", "--metrics", "a/metrics.csv", "f/metrics.csv", "--demos", "demos.txt", "--bin", "40", "--out", "series.csv"]);
    let series = std::fs::read_to_string(root.join("out/series.csv")).unwrap();
    assert!(series.starts_with("series,step,mean,std,seeds"));
    assert!(series.contains("Demonstrations,"));
    assert!(series.contains("\nrandom,") && series.contains("\nfixed,"));
}

#[test]
fn failures_give_one_coded_line_and_nonzero_status() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(&root.join("bad.toml"), "[sac]\ngamma = 2.0\nfoo = 1\n");
    write(&root.join("c.toml"), "[env]\nname = \"chain2\"\n");
    save_demos(&demo_set(2, 5), &root.join("d.txt")).unwrap();
    write(&root.join("junk.txt"), "coil-demos 1\nenv x\nschema nonsense\n");
    let cases: &[(&[&str], &str)] = &[
        (&["train", "--config", "bad.toml", "--demos", "d.txt"], "E_CONFIG"),
        (&["train", "--config", "c.toml", "--demos", "d.txt"], "E_SCHEMA"),
        (&["train", "--demos", "junk.txt"], "E_PARSE"),
        (&["train", "--demos", "missing.txt"], "E_IO"),
        (&["frobnicate"], "E_USAGE"),
    ];
    for (args, code) in cases {
        let out = coil().current_dir(root).args(*args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        let lines: Vec<&str> = err.lines().collect();
        assert_eq!(lines.len(), 1, "{args:?}: {err}");
        assert!(lines[0].starts_with(&format!("error[{code}]")), "{args:?}: {err}");
    }
}
