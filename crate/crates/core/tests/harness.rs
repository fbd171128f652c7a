use std::collections::BTreeMap;

use tlcb_core::harness::{emit_results, run_experiment, summary_path, write_traces_csv, OutputFormat};
use tlcb_core::{Algorithm, ExperimentConfig, Summary};

fn config(algo: Algorithm, n_q: u64, n_p: u64, trials: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(algo, n_q).unwrap();
    c.source.n_p = n_p;
    c.trials = trials;
    c.seed = 17;
    c
}

#[test]
fn traces_start_at_zero_and_never_decrease() {
    for algo in [Algorithm::Baseline, Algorithm::Transfer, Algorithm::Adaptive] {
        let n_p = if algo == Algorithm::Baseline { 0 } else { 4_000 };
        let (_, traces) = run_experiment(&config(algo, 2_000, n_p, 4)).unwrap();
        for tr in &traces {
            assert_eq!(tr.checkpoints[0], 1);
            assert!(tr.cum_regret[0] >= 0.0);
            assert!(tr.cum_regret.windows(2).all(|w| w[0] <= w[1]), "{algo}");
        }
    }
}

#[test]
fn csv_rows_reproduce_the_summary() {
    let c = config(Algorithm::Transfer, 3_000, 3_000, 6);
    let (summary, traces) = run_experiment(&c).unwrap();
    let mut buf = Vec::new();
    write_traces_csv(&mut buf, c.algorithm, &traces).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(reader.headers().unwrap(), vec!["algo", "trial", "checkpoint_t", "cum_regret"]);
    let mut by_t: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], "transfer");
        by_t.entry(rec[2].parse().unwrap()).or_default().push(rec[3].parse().unwrap());
        rows += 1;
    }
    assert_eq!(rows, c.trials * c.checkpoints.len());
    for stat in &summary.checkpoints {
        let vals = &by_t[&stat.t];
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - stat.mean).abs() <= 1e-12 * stat.mean.abs().max(1.0));
    }
    // 17 significant digits survive the text round trip.
    let parsed: Vec<f64> = by_t[&c.n_q].clone();
    let exact: Vec<f64> = traces.iter().map(|t| *t.cum_regret.last().unwrap()).collect();
    assert_eq!(parsed, exact);
}

#[test]
fn standard_error_shrinks_like_root_trials() {
    let se = |trials| {
        let mut c = config(Algorithm::Transfer, 4_000, 6_000, trials);
        c.checkpoints = vec![4_000];
        run_experiment(&c).unwrap().0.final_standard_error()
    };
    let ratio = se(24) / se(96);
    assert!((ratio / 2.0 - 1.0).abs() <= 0.3, "{ratio}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let c = config(Algorithm::Adaptive, 1_500, 3_000, 6);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(&c).unwrap().1)
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn summary_json_round_trips() {
    let mut c = config(Algorithm::Transfer, 1_000, 500, 3);
    c.alpha = Some(1.0);
    let (summary, _) = run_experiment(&c).unwrap();
    assert_eq!(summary.minimax_rate_overlay.as_ref().map(Vec::len), Some(summary.checkpoints.len()));
    let text = serde_json::to_string(&summary).unwrap();
    let back: Summary = serde_json::from_str(&text).unwrap();
    assert_eq!(back, summary);
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["config", "checkpoints", "minimax_rate_overlay", "wall_clock_seconds"] {
        assert!(value.get(key).is_some(), "{key}");
    }
    assert!(value["checkpoints"][0].get("t").is_some());
}

#[test]
fn emitted_files_match_the_writers() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(Algorithm::Baseline, 800, 0, 3);
    let (summary, traces) = run_experiment(&c).unwrap();

    let csv_path = dir.path().join("runs.csv");
    let written = emit_results(&summary, &traces, OutputFormat::Csv, &csv_path).unwrap();
    assert_eq!(written, vec![csv_path.clone(), summary_path(&csv_path)]);
    let mut expected = Vec::new();
    write_traces_csv(&mut expected, c.algorithm, &traces).unwrap();
    assert_eq!(std::fs::read(&csv_path).unwrap(), expected);
    let side: Summary = serde_json::from_slice(&std::fs::read(summary_path(&csv_path)).unwrap()).unwrap();
    assert_eq!(side, summary);

    let json_path = dir.path().join("summary.json");
    assert_eq!(emit_results(&summary, &traces, OutputFormat::Json, &json_path).unwrap(), vec![json_path.clone()]);
    let back: Summary = serde_json::from_slice(&std::fs::read(&json_path).unwrap()).unwrap();
    assert_eq!(back, summary);
}
