//! Preset runs end to end at desk scale: loss trend, clamping and metric
//! reproducibility from the files on disk.

use serde_json::json;
use spacefill_core::experiments::{self, DEFAULT_SEEDS, DESK_SCALE};
use spacefill_core::trainer::{self, ConfigEcho, MetricRow};
use spacefill_core::MlpParams;

fn short(extra: serde_json::Value) -> serde_json::Value {
    let mut patch = json!({"iterations": 300, "eval_every": 100});
    experiments::merge_patch(&mut patch, &extra);
    patch
}

fn read_metrics(path: &std::path::Path) -> Vec<MetricRow> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            MetricRow {
                iteration: f[0].parse().unwrap(),
                w1: f[1].parse().unwrap(),
                w2: f[2].parse().unwrap(),
                fill_mean: f[3].parse().unwrap(),
                fill_sup: f[4].parse().unwrap(),
                eval_seed: f[5].parse().unwrap(),
            }
        })
        .collect()
}

#[test]
fn loss_falls_for_every_preset_seed() {
    for seed in DEFAULT_SEEDS {
        for name in ["sim1-easy", "sim1-hard"] {
            let (arch, cfg) = experiments::resolve(name, DESK_SCALE, &[short(json!({"seed": seed}))]).unwrap();
            let (_, record) = trainer::train_generator(&arch, &cfg).unwrap();
            let (first, last) = record.quartile_means().unwrap();
            assert!(last < first, "{name} seed {seed}: first quartile {first}, last {last}");
        }
    }
}

#[test]
fn clamped_preset_never_exceeds_bound() {
    let kappa = 0.3;
    let patch = short(json!({
        "iterations": 60, "eval_every": 20, "keep_eval_checkpoints": true,
        "clamp": {"kappa": kappa}, "optimizer": {"lr": 0.05}
    }));
    let (arch, cfg) = experiments::resolve("sim1-easy", DESK_SCALE, &[patch]).unwrap();
    let (params, record) = trainer::train_generator(&arch, &cfg).unwrap();
    assert!(params.max_abs() <= kappa);
    assert!(record.eval_checkpoints.iter().all(|(_, p)| p.max_abs() <= kappa));
}

#[test]
fn metrics_on_disk_are_reproducible_from_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let patch = short(json!({"keep_eval_checkpoints": true, "seed": 23}));
    let (arch, cfg) = experiments::resolve("sim1-hard", DESK_SCALE, &[patch]).unwrap();
    experiments::run_config(&arch, &cfg, dir.path()).unwrap();

    let echo: ConfigEcho =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo.train, cfg);
    let target = echo.train.target.measure().unwrap();
    let rows = read_metrics(&dir.path().join("metrics.csv"));
    assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![100, 200, 300]);
    for row in rows {
        let path = dir.path().join(format!("checkpoints/iter_{:06}.json", row.iteration));
        let params = MlpParams::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
        let m = trainer::evaluate(&params, &echo.train.input_spec, &target, target.len(), row.eval_seed).unwrap();
        for (a, b) in [(m.w1, row.w1), (m.w2, row.w2), (m.fill_mean, row.fill_mean), (m.fill_sup, row.fill_sup)] {
            assert!((a - b).abs() <= 1e-9, "iteration {}: {a} vs {b}", row.iteration);
        }
    }
    let last = MlpParams::from_json(&std::fs::read_to_string(dir.path().join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(
        last.as_flat(),
        MlpParams::from_json(&std::fs::read_to_string(dir.path().join("checkpoints/iter_000300.json")).unwrap())
            .unwrap()
            .as_flat()
    );
}

#[test]
fn three_dimensional_preset_runs_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let (arch, cfg) = experiments::resolve("sim3-1d", DESK_SCALE, &[json!({"iterations": 20, "eval_every": 10})]).unwrap();
    experiments::run_config(&arch, &cfg, dir.path()).unwrap();
    for f in ["loss.svg", "fill.svg", "scatter_xy.svg", "scatter_xz.svg"] {
        assert!(dir.path().join("plots").join(f).exists(), "{f}");
    }
}
