use std::path::Path;
use std::sync::Arc;

use ndqn_core::controller::Architecture;
use ndqn_core::error::Error;
use ndqn_core::fixtures::{FixtureFiles, Knowledge};
use ndqn_core::harness::{
    compare, evaluate_checkpoint, load_checkpoint, random_policy_baseline, run_training, RunConfig, RunReport,
    CHECKPOINT_DIR, CONFIG_FILE, METRICS_FILE, REPORT_FILE,
};
use ndqn_core::metrics::{mann_kendall, TrainingLog};
use ndqn_core::text::Compression;
use proptest::prelude::*;

fn knowledge() -> Arc<Knowledge> {
    Arc::new(Knowledge::builtin().unwrap())
}

fn small(dir: Option<&Path>, mode: Architecture) -> RunConfig {
    RunConfig {
        mode,
        budget: Some(1_500),
        checkpoint_every: Some(500),
        learning_steps: Some(500),
        eval_episodes: 10,
        seed: 3,
        output_dir: dir.map(Path::to_path_buf),
        ..RunConfig::default()
    }
}

#[test]
fn training_run_writes_its_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_training(&small(Some(tmp.path()), Architecture::Ndqn), knowledge()).unwrap();
    for f in [METRICS_FILE, REPORT_FILE, CONFIG_FILE] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }
    assert!(tmp.path().join(CHECKPOINT_DIR).join("system.json").is_file());
    let log = TrainingLog::read_csv(&tmp.path().join(METRICS_FILE)).unwrap();
    assert_eq!(log.rows.iter().map(|r| r.step).collect::<Vec<_>>(), [500, 1_000, 1_500]);
    assert_eq!(RunReport::load(tmp.path()).unwrap(), out.report);
    assert_eq!(RunConfig::load(&tmp.path().join(CONFIG_FILE)).unwrap(), out.report.config);
    assert_eq!(out.report.state_dims.len(), 3);
    assert_eq!(out.report.eval.unwrap().episodes, 10);

    let from_dir = evaluate_checkpoint(tmp.path(), knowledge(), 10, 99).unwrap();
    let from_ckpt = evaluate_checkpoint(&tmp.path().join(CHECKPOINT_DIR), knowledge(), 10, 99).unwrap();
    assert_eq!(from_dir, from_ckpt);
}

#[test]
fn same_seed_gives_identical_metrics_apart_from_time() {
    let a = run_training(&small(None, Architecture::DqnFlat), knowledge()).unwrap();
    let b = run_training(&small(None, Architecture::DqnFlat), knowledge()).unwrap();
    assert_eq!(a.log.to_csv_without_time(), b.log.to_csv_without_time());
    assert_eq!(a.report.eval, b.report.eval);
}

#[test]
fn zero_eval_episodes_skips_evaluation() {
    let cfg = RunConfig {
        eval_episodes: 0,
        budget: Some(300),
        checkpoint_every: Some(100),
        ..RunConfig::default()
    };
    let out = run_training(&cfg, knowledge()).unwrap();
    assert!(out.report.eval.is_none());
    assert_eq!(out.report.success(), out.report.final_row.map(|r| r.avg_success));
}

#[test]
fn invalid_configs_are_rejected() {
    let cfg = RunConfig {
        budget: Some(0),
        ..RunConfig::default()
    };
    assert!(matches!(run_training(&cfg, knowledge()), Err(Error::Config(_))));
    assert!(matches!(
        RunConfig::from_toml_str("mode = \"ndqn\"\nbogus = 1\n"),
        Err(Error::Config(_))
    ));
    assert!(RunConfig::from_toml_str("mode = \"sideways\"\n").is_err());
}

#[test]
fn toml_round_trip() {
    let cfg = RunConfig {
        mode: Architecture::DqnFlat,
        compression: Compression::Raw,
        budget: Some(1234),
        seed: 11,
        learning_steps: Some(900),
        ..RunConfig::default()
    };
    let text = cfg.to_toml_string().unwrap();
    assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    let partial = RunConfig::from_toml_str("compression = \"raw\"\n").unwrap();
    assert_eq!(partial.seed, 7);
    assert_eq!(partial.compression, Compression::Raw);
    assert_eq!(partial.budget(), 20_000);
}

#[test]
fn random_baseline_is_reproducible() {
    let mut sys = run_training(
        &RunConfig {
            budget: Some(100),
            checkpoint_every: Some(100),
            eval_episodes: 0,
            ..RunConfig::default()
        },
        knowledge(),
    )
    .unwrap()
    .system;
    let a = random_policy_baseline(&mut sys, 50, 5).unwrap();
    let b = random_policy_baseline(&mut sys, 50, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.episodes, 50);
    assert!((0.0..=1.0).contains(&a.avg_success));
}

#[test]
fn tampered_checkpoint_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        budget: Some(200),
        checkpoint_every: Some(100),
        eval_episodes: 0,
        output_dir: Some(tmp.path().to_path_buf()),
        ..RunConfig::default()
    };
    run_training(&cfg, knowledge()).unwrap();
    let path = tmp.path().join(CHECKPOINT_DIR).join("system.json");
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    json["views"][0]["vocab"].as_array_mut().unwrap().pop();
    std::fs::write(&path, json.to_string()).unwrap();
    assert!(matches!(load_checkpoint(tmp.path(), knowledge()), Err(Error::Checkpoint(_))));
    assert!(load_checkpoint(&tmp.path().join("nowhere"), knowledge()).is_err());
}

#[test]
fn missing_fixture_file_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    FixtureFiles::builtin().write_dir(tmp.path()).unwrap();
    std::fs::remove_file(tmp.path().join("venues.txt")).unwrap();
    assert!(matches!(
        FixtureFiles::load_dir(tmp.path()),
        Err(Error::MissingFixture { .. })
    ));
}

#[test]
fn comparison_reports_speed_and_quality() {
    let a = run_training(&small(None, Architecture::Ndqn), knowledge()).unwrap().report;
    let mut b = a.clone();
    b.elapsed_seconds = a.elapsed_seconds * 2.0;
    b.eval.as_mut().unwrap().avg_success = a.eval.unwrap().avg_success + 0.02;
    let c = compare(&a, &b).unwrap();
    assert!((c.speedup - 2.0).abs() < 1e-9);
    assert!((c.delta_eval_success.unwrap() - 0.02).abs() < 1e-9);
    assert!(c.quality_preserved);
    b.eval.as_mut().unwrap().avg_success = a.eval.unwrap().avg_success + 0.2;
    assert!(!compare(&a, &b).unwrap().quality_preserved);
    b.budget += 1;
    assert!(matches!(compare(&a, &b), Err(Error::Input(_))));
}

/// Exact null distribution of the Mann-Kendall statistic by enumerating permutations.
fn permutation_variance(n: usize) -> f64 {
    fn permute(items: &mut Vec<f64>, k: usize, out: &mut Vec<f64>) {
        if k == items.len() {
            let mut s = 0.0;
            for i in 0..items.len() {
                for j in i + 1..items.len() {
                    s += (items[j] - items[i]).signum();
                }
            }
            out.push(s);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let mut items: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut stats = Vec::new();
    permute(&mut items, 0, &mut stats);
    stats.iter().map(|s| s * s).sum::<f64>() / stats.len() as f64
}

#[test]
fn mann_kendall_variance_matches_permutation_distribution() {
    for n in 3..=7 {
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 2.7).sin()).collect();
        let mk = mann_kendall(&xs).unwrap();
        assert!((mk.variance - permutation_variance(n)).abs() < 1e-9, "n = {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mann_kendall_is_antisymmetric(xs in prop::collection::vec(-10.0f64..10.0, 3..30)) {
        let up = mann_kendall(&xs).unwrap();
        let rev: Vec<f64> = xs.iter().rev().copied().collect();
        let down = mann_kendall(&rev).unwrap();
        prop_assert_eq!(up.s, -down.s);
        prop_assert!((up.p_increasing + down.p_increasing - 1.0).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&up.p_increasing));
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec((1usize..100, 0.0f64..5.0, 0.0f64..1.0), 0..10)) {
        let mut log = TrainingLog::default();
        for (i, (eps, r, s)) in rows.into_iter().enumerate() {
            log.rows.push(ndqn_core::metrics::MetricsRow {
                step: (i + 1) * 100,
                episodes: eps,
                avg_reward: r,
                avg_success: s,
                avg_length: 5.0,
                elapsed_seconds: 0.5,
            });
        }
        let back = TrainingLog::from_csv(&log.to_csv()).unwrap();
        prop_assert_eq!(back.rows.len(), log.rows.len());
        for (a, b) in back.rows.iter().zip(&log.rows) {
            prop_assert_eq!(a.step, b.step);
            prop_assert!((a.avg_reward - b.avg_reward).abs() < 1e-6);
        }
    }
}
