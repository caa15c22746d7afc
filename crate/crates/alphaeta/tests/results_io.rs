use std::fs;

use alphaeta::core::{ChannelModel, CurveRow, ExperimentConfig};
use alphaeta::results::read_metadata;
use alphaeta::{
    load_config, read_results, run_ensemble, sidecar_path, write_results, EnsembleOptions, Error,
    RunMetadata, CSV_HEADER,
};

fn small(n_trials: u64) -> ExperimentConfig {
    ExperimentConfig {
        key_bits: 8,
        symbols: 64,
        channel: ChannelModel::WrappedGaussian { sigma: 4.0 },
        q_max: 12,
        n_trials,
        ..load_config(None, &["L=8"]).unwrap()
    }
}

fn threads(n: usize) -> EnsembleOptions {
    EnsembleOptions {
        threads: n,
        ..Default::default()
    }
}

#[test]
fn round_trip_is_exact() {
    let cfg = small(40);
    let run = run_ensemble(&cfg, &threads(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let meta = RunMetadata::new(&cfg, run.threads, run.wall_clock_seconds);
    write_results(&run.aggregate, &meta, &path).unwrap();

    let back = read_results(&path).unwrap();
    assert_eq!(back, run.aggregate);
    let qs: Vec<u32> = back.rows.iter().map(|r| r.q).collect();
    assert_eq!(qs, (1..=12).collect::<Vec<_>>());

    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(read_metadata(&sidecar_path(&path)).unwrap(), meta);
}

#[test]
fn non_finite_values_survive() {
    let row = CurveRow {
        q: 1,
        mean_entropy: f64::NAN,
        stderr_entropy: 0.0,
        mean_prob_correct: 1.0 / 3.0,
        stderr_prob_correct: 5e-324,
        mean_collision: f64::INFINITY,
        stderr_collision: 1e300,
        mean_nonzero_false: 255.0,
        estimate_entropy: 0.1 + 0.2,
        estimate_in_domain: false,
    };
    let agg = alphaeta::core::CurveAggregate {
        config: None,
        rows: vec![row.clone()],
    };
    let cfg = small(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("odd.csv");
    write_results(&agg, &RunMetadata::new(&cfg, 1, 0.0), &path).unwrap();
    let back = read_results(&path).unwrap().rows.remove(0);
    assert!(back.mean_entropy.is_nan());
    assert_eq!(back.mean_prob_correct.to_bits(), row.mean_prob_correct.to_bits());
    assert_eq!(back.stderr_prob_correct.to_bits(), row.stderr_prob_correct.to_bits());
    assert_eq!(back.mean_collision, f64::INFINITY);
    assert_eq!(back.estimate_entropy.to_bits(), row.estimate_entropy.to_bits());
}

#[test]
fn malformed_rows_report_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let header = CSV_HEADER.join(",");
    fs::write(
        &path,
        format!("{header}\n1,1.0,0.0,0.5,0.0,0.5,0.0,3.0,1.0,true\n2,oops,0.0,0.5,0.0,0.5,0.0,3.0,1.0,true\n"),
    )
    .unwrap();
    match read_results(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }

    fs::write(&path, "q,entropy\n1,2\n").unwrap();
    assert!(matches!(read_results(&path), Err(Error::Parse { line: 1, .. })));

    fs::write(&path, format!("{header}\n1,1.0,0.0\n")).unwrap();
    assert!(matches!(read_results(&path), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn failed_write_leaves_nothing() {
    let cfg = small(2);
    let run = run_ensemble(&cfg, &threads(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    // the CSV path is a directory, so the sidecar succeeds and the CSV fails
    let path = dir.path().join("taken");
    fs::create_dir(&path).unwrap();
    let meta = RunMetadata::new(&cfg, 1, 0.0);
    assert!(write_results(&run.aggregate, &meta, &path).is_err());
    assert!(!sidecar_path(&path).exists());
    assert!(path.is_dir());
}

#[test]
fn single_trial_has_zero_stderr() {
    let cfg = small(1);
    let run = run_ensemble(&cfg, &threads(1)).unwrap();
    let rec = &run.records[0];
    for (i, row) in run.aggregate.rows.iter().enumerate() {
        assert_eq!(row.mean_entropy, rec.entropy[i]);
        assert_eq!(row.mean_prob_correct, rec.prob_correct[i]);
        assert_eq!(row.stderr_entropy, 0.0);
        assert_eq!(row.stderr_prob_correct, 0.0);
        assert_eq!(row.stderr_collision, 0.0);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = small(37);
    let one = run_ensemble(&cfg, &threads(1)).unwrap();
    for n in [2, 3, 8] {
        let other = run_ensemble(&cfg, &threads(n)).unwrap();
        assert_eq!(other.records, one.records);
        assert_eq!(other.aggregate, one.aggregate);
    }
}

#[test]
fn mean_posterior_entropy_is_deterministic_and_bounds_mean_entropy() {
    let cfg = small(45);
    let opts = |n| EnsembleOptions {
        threads: n,
        mean_posterior: true,
        fault: None,
    };
    let a = run_ensemble(&cfg, &opts(1)).unwrap();
    let b = run_ensemble(&cfg, &opts(4)).unwrap();
    let ha = a.mean_posterior_entropy.clone().unwrap();
    assert_eq!(Some(ha.clone()), b.mean_posterior_entropy);
    assert_eq!(a.records, run_ensemble(&cfg, &threads(1)).unwrap().records);
    // entropy is concave: the averaged posterior is at least as uncertain
    for (h, row) in ha.iter().zip(&a.aggregate.rows) {
        assert!(*h >= row.mean_entropy - 1e-9, "{h} < {}", row.mean_entropy);
        assert!(*h <= cfg.key_bits as f64 + 1e-9);
    }
}

#[test]
fn budget_is_checked_before_running() {
    let mut cfg = small(10);
    cfg.max_evaluations = 100.0;
    let err = run_ensemble(&cfg, &threads(1)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn config_json_shape() {
    let cfg = load_config(None, &["prng=ideal_random", r#"channel={"kind":"uniform_arc","arc_fraction":0.25}"#])
        .unwrap();
    let v = serde_json::to_value(&cfg).unwrap();
    assert_eq!(v["channel"], serde_json::json!({"kind": "uniform_arc", "arc_fraction": 0.25}));
    assert_eq!(v["prng"], "ideal_random");
    assert_eq!(v["cipher"], "alpha_eta");
    assert_eq!(v["attack"], "ciphertext_only");
    assert_eq!(v["Q_max"], 60);

    let lfsr = serde_json::to_value(ExperimentConfig::default()).unwrap();
    assert_eq!(lfsr["prng"], serde_json::json!({"lfsr": {"L": 13, "taps": [13, 4, 3, 1]}}));
    assert_eq!(lfsr["channel"], serde_json::json!({"kind": "wrapped_gaussian", "sigma": 16.0}));
}
