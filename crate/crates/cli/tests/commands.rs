use std::fs;
use std::path::Path;

use clap::Parser;
use hitl_cli::{run, Cli, CliError, Command};
use hitl_core::harness::{read_curve, read_traces, read_variance_map};
use hitl_core::learner::{AlphaMode, MUpdateMode, TableFile};
use hitl_core::ObservationMode;
use tempfile::TempDir;

fn hitl(args: &[&str]) -> Result<String, CliError> {
    let cli = Cli::try_parse_from(std::iter::once("hitl").chain(args.iter().copied())).expect("arguments parse");
    run(cli)
}

fn train_small(out: &Path) -> std::path::PathBuf {
    let out_dir = out.to_str().unwrap();
    hitl(&["train", "--map", "trap_world", "--train-episodes", "3000", "--seed", "4", "--out-dir", out_dir]).unwrap();
    out.join("trap_world.table")
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "[run]\nmap = \"po_world\"\nmode = \"patch\"\nseed = 3\n\n[env]\npsi = 0.7\n\n[train]\nalpha_mode = \"visit_decay\"\nmax_episodes = 100\n",
    )
    .unwrap();
    let cli = Cli::try_parse_from([
        "hitl",
        "train",
        "--config",
        config.to_str().unwrap(),
        "--psi",
        "0.9",
        "--train-episodes",
        "50",
        "--m-update-mode",
        "paper_literal",
    ])
    .unwrap();
    let Command::Train(args) = cli.command else { panic!("expected train") };
    let mut cfg = args.run.resolve().unwrap();
    args.train.apply(&mut cfg);
    assert_eq!(cfg.run.map, "po_world");
    assert_eq!(cfg.run.mode, ObservationMode::Patch);
    assert_eq!(cfg.run.seed, 3);
    assert_eq!(cfg.env.psi, 0.9);
    assert_eq!(cfg.train.alpha_mode, AlphaMode::VisitDecay);
    assert_eq!(cfg.train.max_episodes, 50);
    assert_eq!(cfg.train.m_update_mode, MUpdateMode::Literal);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let cli = Cli::try_parse_from(["hitl", "train", "--config", path.to_str().unwrap()]).unwrap();
        let Command::Train(args) = cli.command else { unreachable!() };
        args.run.resolve().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3);
}

#[test]
fn train_then_deploy_and_export() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let table = train_small(&out);
    let tables = TableFile::load(&table).unwrap();
    assert_eq!(tables.meta.map, "trap_world");
    assert!(!tables.q.is_empty());

    let t = table.to_str().unwrap();
    let o = out.to_str().unwrap();

    hitl(&["eval", "--table", t, "--epsilon", "inf", "--episodes", "50", "--out-dir", o]).unwrap();
    let (meta, traces) = read_traces(out.join("trap_world_traces.csv")).unwrap();
    assert_eq!(traces.len(), 50);
    assert!(traces.iter().all(|t| t.expert_calls == 0));
    assert_eq!(meta.get("map"), Some("trap_world"));

    hitl(&[
        "sweep-threshold",
        "--table",
        t,
        "--epsilons",
        "0.001,1,inf",
        "--episodes",
        "40",
        "--window",
        "2",
        "--out-dir",
        o,
    ])
    .unwrap();
    let (meta, points) = read_curve(out.join("trap_world_threshold.csv")).unwrap();
    assert_eq!(points.len(), 3);
    for key in ["config_hash", "seed", "map", "m_update_mode"] {
        assert!(meta.get(key).is_some(), "curve header lacks {key}");
    }
    let (_, smooth) = read_curve(out.join("trap_world_threshold_smoothed.csv")).unwrap();
    assert_eq!(smooth.len(), 2);

    for source in ["learned", "exact", "mc"] {
        hitl(&["variance-map", "--table", t, "--source", source, "--rollouts", "50", "--out-dir", o]).unwrap();
        let (_, vmap) = read_variance_map(out.join(format!("trap_world_variance_{source}.txt"))).unwrap();
        assert!(!vmap.values.is_empty());
    }

    let summary = hitl(&["topn", "--table", t, "--n", "3,5"]).unwrap();
    assert!(summary.contains("top-3") && summary.contains("top-5"));
}

#[test]
fn table_header_decides_the_map() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let table = train_small(&out);
    let t = table.to_str().unwrap();
    let err = hitl(&["eval", "--table", t, "--map", "shortcut_world", "--episodes", "5"]).unwrap_err();
    assert!(err.to_string().contains("does not match"), "{err}");
    let err = hitl(&["eval", "--table", t, "--mode", "patch", "--episodes", "5"]).unwrap_err();
    assert!(err.to_string().contains("contradicts"), "{err}");
}

#[test]
fn penalty_sweep_reports_training_calls() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().to_str().unwrap();
    hitl(&["sweep-penalty", "--train-episodes", "500", "--episodes", "20", "--c-grid", "0,-1000", "--out-dir", o])
        .unwrap();
    let (meta, points) = read_curve(dir.path().join("trap_world_penalty.csv")).unwrap();
    assert_eq!(points.len(), 2);
    let total: u64 = meta.get("training_calls_total").unwrap().parse().unwrap();
    assert!(total > 0);
}

#[test]
fn positive_penalty_is_rejected() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().to_str().unwrap();
    let err = hitl(&["sweep-penalty", "--train-episodes", "10", "--episodes", "2", "--c-grid", "1", "--out-dir", o])
        .unwrap_err();
    assert!(matches!(err, CliError::Core(hitl_core::Error::Validation(_))), "{err}");
}
