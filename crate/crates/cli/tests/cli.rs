use std::path::Path;
use std::process::Command;

use softsnake::algo::Algorithm;
use softsnake::eval::load_json_report;
use softsnake_cli::{cmd_collect, cmd_compare, cmd_eval, cmd_simulate, cmd_train, CliError, Layout, RunConfig};

/// Seconds-scale settings: coarse body, short episodes, tiny networks.
fn tiny(out: &Path) -> RunConfig {
    RunConfig::load(
        None,
        &[
            format!("out_dir={}", serde_json::Value::String(out.display().to_string())),
            "body.n_points=33".into(),
            "environment.max_steps=12".into(),
            "dataset.n_episodes=6".into(),
            "trainer.hidden=[8,8]".into(),
            "trainer.batch_size=16".into(),
            "trainer.total_steps=40".into(),
            "trainer.eval_every=20".into(),
            "trainer.eval_goals=2".into(),
            "evaluation.n_goals=3".into(),
            "simulate.steps=100".into(),
        ],
    )
    .unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_softsnake"))
}

#[test]
fn simulate_moves_forward_and_counts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.simulate.steps = 500;
    let out = cmd_simulate(&cfg).unwrap();
    assert_eq!(out.trace.len(), 501);
    let d = out.displacement();
    assert!(d.x > 0.0, "{d:?}");
    let csv = std::fs::read_to_string(dir.path().join("simulate/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 502);

    cfg.actuation.p_m = 0.0;
    let still = cmd_simulate(&cfg).unwrap();
    assert!(still.displacement().norm() < 1e-9);
}

#[test]
fn pipeline_produces_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.trainer.algorithm = Algorithm::DisaIql;
    let layout = Layout::new(dir.path());

    let (ds, m1) = cmd_collect(&cfg).unwrap();
    assert_eq!(ds.n_episodes(), 6);
    let (_, m2) = cmd_collect(&cfg).unwrap();
    assert_eq!(m1.outputs, m2.outputs);

    let t1 = cmd_train(&cfg, None).unwrap();
    let t2 = cmd_train(&cfg, None).unwrap();
    assert_eq!(t1.checkpoint_hash, t2.checkpoint_hash);
    assert_eq!(t1.manifest.outputs, t2.manifest.outputs);
    let log = std::fs::read_to_string(layout.train_dir(Algorithm::DisaIql).join("training_log.csv")).unwrap();
    assert!(log.lines().next().unwrap().contains("alpha_t"));
    assert_eq!(log.lines().count(), 3);

    let e1 = cmd_eval(&cfg, None).unwrap();
    assert_eq!(e1.algorithm, Algorithm::DisaIql);
    assert_eq!(e1.reports.len(), 2);
    let e2 = cmd_eval(&cfg, None).unwrap();
    assert_eq!(e1.manifest, e2.manifest);
    for r in &e1.reports {
        let back = load_json_report(&layout.eval_dir(Algorithm::DisaIql).join(format!("{}.json", r.region))).unwrap();
        assert_eq!(back.records, r.records);
        assert_eq!(r.records.len(), 3);
    }
    let dir_eval = layout.eval_dir(Algorithm::DisaIql);
    for f in ["effective_config.json", "manifest.json", "left_half.csv", "right_half_summary.csv"] {
        assert!(dir_eval.join(f).is_file(), "{f}");
    }
    assert!(dir_eval.join("trajectories/left_half/goal_0000.csv").is_file());
}

#[test]
fn compare_tabulates_every_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    cmd_collect(&cfg).unwrap();
    let missing = cmd_compare(&cfg).err().unwrap();
    assert!(matches!(missing, CliError::MissingArtifact { .. }));
    assert!(missing.to_string().contains("softsnake train --algorithm bc"));

    for alg in Algorithm::ALL {
        let mut c = cfg.clone();
        c.trainer.algorithm = alg;
        cmd_train(&c, None).unwrap();
    }
    let mut iql = cfg.clone();
    iql.trainer.algorithm = Algorithm::Iql;
    let iql_eval = cmd_eval(&iql, None).unwrap();

    let cmp = cmd_compare(&cfg).unwrap();
    assert_eq!(cmp.rows.len(), 4 * cfg.evaluation.test_regions.len());
    for (ri, region) in cfg.evaluation.test_regions.iter().enumerate() {
        let name = region.kind.name();
        let a = &iql_eval.reports[ri].aggregates;
        assert_eq!(cmp.success(name, Algorithm::Iql), Some(a.success_rate));
        assert!(cmp.text.contains(&format!("disa_iql - iql success delta on {name}")));
        for alg in Algorithm::ALL {
            let r = load_json_report(&Layout::new(dir.path()).eval_dir(alg).join(format!("{name}.json"))).unwrap();
            assert_eq!(cmp.success(name, alg), Some(r.aggregates.success_rate));
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("compare/comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + cmp.rows.len());
    assert!(cmp.text.contains("out-of-distribution"));
}

#[test]
fn binary_reports_missing_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["eval", "--algorithm", "iql", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("checkpoint") && err.contains("softsnake train --algorithm iql"), "{err}");

    let out = bin().args(["train", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("softsnake collect"));
}

#[test]
fn binary_rejects_bad_config_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"trainer": {"learning_rate": 1}}"#).unwrap();
    let out = bin().arg("config").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    let out = bin()
        .args(["config", "--set", "trainer.tau_expectile=2", "--set", "dataset.n_episodes=0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tau_expectile") && err.contains("n_episodes"), "{err}");

    let out = bin().args(["train", "--algorithm", "sac"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_runs_simulate_and_writes_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--set", "simulate.steps=20", "--set", "body.n_points=33", "--seed", "4", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eff: RunConfig =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("simulate/effective_config.json")).unwrap())
            .unwrap();
    assert_eq!(eff.seed, 4);
    assert_eq!(eff.trainer.seed, 4);
    assert_eq!(eff.simulate.steps, 20);
    let manifest = std::fs::read_to_string(dir.path().join("simulate/manifest.json")).unwrap();
    assert!(manifest.contains("trajectory.csv"));
}
