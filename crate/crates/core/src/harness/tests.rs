use approx::assert_relative_eq;

use super::*;
use crate::arrays::{ArrayKind, ArraySpec, Pose};
use crate::protocol::ArraySpecs;

fn tiny_scenario(n_x: usize, n_y: usize, seeds: Vec<u64>) -> Scenario {
    let mut s = bundled("los_only").unwrap().unwrap();
    s.ue_grid.n_x = n_x;
    s.ue_grid.n_y = n_y;
    s.seeds = seeds;
    s.n_pilots = 32;
    s.codebook.step_deg = 10.0;
    s.arrays = ArraySpecs {
        ap: ArraySpec::new(ArrayKind::Ula, 4, 1, 0.5, Pose::default()).unwrap(),
        ris: ArraySpec::new(ArrayKind::Ura, 8, 8, 0.5, Pose::default()).unwrap(),
        ue: ArraySpec::new(ArrayKind::Ula, 8, 1, 0.5, Pose::default()).unwrap(),
    };
    s
}

#[test]
fn stats_examples() {
    let s = error_stats(&[1.0, 1.0, 1.0]).unwrap();
    assert_eq!((s.peak, s.mean, s.variance, s.n_trials), (1.0, 1.0, 0.0, 3));
    let s = error_stats(&[0.0, 2.0]).unwrap();
    assert_eq!((s.peak, s.mean, s.variance), (2.0, 1.0, 1.0));
    let s = error_stats(&[3.0, 4.0, 8.0]).unwrap();
    assert_eq!((s.peak, s.mean), (8.0, 5.0));
    assert_relative_eq!(s.variance, 14.0 / 3.0, epsilon = 1e-12);
    assert!(error_stats(&[]).is_err());
    assert!(error_stats(&[-1.0]).is_err());
}

#[test]
fn modes_parse_and_print() {
    for m in Mode::ALL {
        assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
    }
    assert!("fast".parse::<Mode>().is_err());
}

#[test]
fn trial_seeds_differ_across_grid_and_seed() {
    let mut seen = std::collections::HashSet::new();
    for g in 0..25 {
        for s in 1..5 {
            assert!(seen.insert(trial_seed(s, g)));
        }
    }
}

#[test]
fn single_trial_stats_are_degenerate() {
    let s = tiny_scenario(1, 1, vec![7]);
    let r = run_montecarlo(&s, Mode::OnebitSweepMusic, 1).unwrap();
    assert_eq!(r.trials.len(), 1);
    assert_eq!(r.failures, 0);
    let stats = r.stats.unwrap();
    assert_eq!(stats.n_trials, 1);
    assert_eq!(stats.peak, stats.mean);
    assert_eq!(stats.variance, 0.0);
    assert!(r.mapping.is_none());
}

#[test]
fn output_order_and_values_do_not_depend_on_jobs() {
    let s = tiny_scenario(2, 2, vec![1, 2]);
    let one = run_montecarlo(&s, Mode::OnebitSweep, 1).unwrap();
    let two = run_montecarlo(&s, Mode::OnebitSweep, 2).unwrap();
    assert_eq!(one, two);
    let order: Vec<(usize, u64)> = one.trials.iter().map(|t| (t.grid_index, t.seed)).collect();
    assert_eq!(order, vec![(0, 1), (0, 2), (1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2)]);
}

#[test]
fn failed_trials_are_counted_not_fatal() {
    let mut s = tiny_scenario(1, 2, vec![1]);
    // A ToA jitter far larger than the delay makes some trials fail with a
    // negative ToA; statistics cover the rest.
    s.toa_sigma = 1.0;
    let r = run_montecarlo(&s, Mode::OnebitSweep, 1).unwrap();
    assert_eq!(r.trials.len(), 2);
    assert_eq!(r.failures, r.trials.iter().filter(|t| t.error.is_some()).count());
    assert_eq!(r.stats.map_or(0, |s| s.n_trials) + r.failures, 2);
}

fn document(results: Vec<MonteCarloResult>) -> ReportDocument {
    let s = tiny_scenario(1, 1, vec![1]);
    ReportDocument {
        tool_version: TOOL_VERSION.into(),
        scenario: s.name.clone(),
        scenario_hash: s.hash(),
        results,
    }
}

#[test]
fn empty_report_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    let doc = document(vec![summarize(Mode::OnebitSweep, Vec::new(), false)]);
    emit_report(&doc, ReportFormat::Csv, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.trim_end(), CSV_HEADER.join(","));
    assert!(parse_csv(&path).unwrap().is_empty());
}

#[test]
fn csv_rows_match_header_and_recompute_stats() {
    let s = tiny_scenario(2, 1, vec![1, 2]);
    let r = run_montecarlo(&s, Mode::OnebitSweep, 1).unwrap();
    let stats = r.stats.unwrap();
    let doc = document(vec![r]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.csv");
    emit_report(&doc, ReportFormat::Csv, &path).unwrap();

    let mut reader = csv::Reader::from_path(&path).unwrap();
    for record in reader.records() {
        assert_eq!(record.unwrap().len(), CSV_HEADER.len());
    }
    let rows = parse_csv(&path).unwrap();
    assert_eq!(rows.len(), 4);
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.angle_error_deg).collect();
    assert_eq!(error_stats(&errors).unwrap(), stats);
    assert!(stats_path(&path).exists());
}

#[test]
fn json_report_round_trips() {
    let s = tiny_scenario(1, 2, vec![3]);
    let doc = document(vec![run_montecarlo(&s, Mode::OnebitSweepMusic, 1).unwrap()]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    emit_report(&doc, ReportFormat::Json, &path).unwrap();
    assert_eq!(read_document(&path).unwrap(), doc);
}

#[test]
fn unwritable_path_is_an_io_error() {
    let doc = document(Vec::new());
    let path = std::path::Path::new("/nonexistent-dir/out.csv");
    match emit_report(&doc, ReportFormat::Csv, path) {
        Err(Error::Io { path: p, .. }) => assert_eq!(p, path),
        other => panic!("unexpected {other:?}"),
    }
}
