use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rislab::harness::{error_stats, parse_csv, read_document, Mode};
use rislab::ris::Codebook;

fn rislab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rislab")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// A 2×1 grid, two seeds and small arrays: quick enough for every mode.
fn tiny_scenario(dir: &Path) -> PathBuf {
    let text = r#"{
        "schema": 1,
        "name": "tiny",
        "scene": {
            "schema": 1,
            "carrier_frequency_hz": 3.5e9,
            "room": { "min": [0, 0, 0], "max": [8, 10, 3], "gamma": 0.5 },
            "nodes": {
                "ap": { "position": [7, 6, 1.5], "yaw": 90 },
                "ris": { "position": [4, 9.9, 1.5], "yaw": 180 },
                "ue": { "position": [2.5, 6, 1.5] }
            }
        },
        "ue_grid": { "x_range": [2, 3], "y_range": [5, 6], "n_x": 2, "n_y": 1 },
        "n_pilots": 32,
        "seeds": [1, 2],
        "codebook": { "step_deg": 5 },
        "arrays": { "ris": { "kind": "ura", "count_h": 8, "count_v": 8 } }
    }"#;
    let path = dir.join("tiny.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&rislab(&["--help"])), 0);
    assert_eq!(code(&rislab(&["--version"])), 0);
}

#[test]
fn bad_arguments_are_validation_errors() {
    assert_eq!(code(&rislab(&["frobnicate"])), 1);
    assert_eq!(code(&rislab(&["sweep-table", "--scenario", "paper_replica", "--mode", "fast"])), 1);
    assert_eq!(code(&rislab(&["sweep-table", "--scenario", "paper_replica", "--format", "xml"])), 1);
    assert_eq!(code(&rislab(&["trace", "--scenario", "/no/such/file.json"])), 1);
}

#[test]
fn malformed_scenario_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let good = std::fs::read_to_string(tiny_scenario(dir.path())).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, good.replace("\"n_pilots\": 32", "\"n_pilots\": \"many\"")).unwrap();
    let out = rislab(&["sweep-table", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_pilots"));
}

#[test]
fn scene_without_ris_paths_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let good = std::fs::read_to_string(tiny_scenario(dir.path())).unwrap();
    // Anechoic room with a screen between AP and RIS.
    let blocked = good.replace("\"gamma\": 0.5 }", "\"gamma\": 0.0 }, \"surfaces\": [{ \"corners\": [[6, 9, 0], [6, 7, 0], [6, 7, 3], [6, 9, 3]] }]");
    let path = dir.path().join("blocked.json");
    std::fs::write(&path, blocked).unwrap();
    let out = rislab(&["codebook", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn trace_lists_every_link() {
    let out = rislab(&["trace", "--scenario", "paper_replica"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("link,order,reflectors,length_m"));
    for link in ["ap-ris,0,", "ris-ue,0,", "ap-ue,1,"] {
        assert!(text.contains(link), "missing {link}");
    }
    // The partition blocks the direct AP→UE line of sight.
    assert!(!text.contains("ap-ue,0,"));
}

#[test]
fn codebook_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("cb.json");
    let out = rislab(&["codebook", "--scenario", "paper_replica", "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let cb = Codebook::from_json(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(cb.len(), 81);
    assert_eq!(cb.entries[0].len(), 1024);
}

#[test]
fn sweep_table_csv_is_complete_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    let out_path = dir.path().join("table.csv");
    let out = rislab(&[
        "sweep-table",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let rows = parse_csv(&out_path).unwrap();
    // 2 grid points × 2 seeds per mode.
    assert_eq!(rows.len(), 3 * 4);

    let mut stats = csv::Reader::from_path(dir.path().join("table.stats.csv")).unwrap();
    let mut n_modes = 0;
    for record in stats.records() {
        let record = record.unwrap();
        let mode = &record[2];
        let errors: Vec<f64> = rows
            .iter()
            .filter(|r| r.mode == mode)
            .filter_map(|r| r.angle_error_deg)
            .collect();
        let recomputed = error_stats(&errors).unwrap();
        let field = |i: usize| record[i].parse::<f64>().unwrap();
        assert_eq!(record[3].parse::<usize>().unwrap(), recomputed.n_trials);
        assert_eq!(field(5), recomputed.peak);
        assert_eq!(field(6), recomputed.mean);
        assert_eq!(field(7), recomputed.variance);
        n_modes += 1;
    }
    assert_eq!(n_modes, 3);
    let hash = &rows[0].scenario_hash;
    assert_eq!(hash.len(), 64);
    assert!(rows.iter().all(|r| &r.scenario_hash == hash && r.tool_version.starts_with("rislab ")));
}

#[test]
fn seed_flag_and_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = tiny_scenario(dir.path());
    let out_path = dir.path().join("map.json");
    let out = rislab(&[
        "map",
        "--scenario",
        scenario.to_str().unwrap(),
        "--mode",
        "onebit_sweep_music",
        "--seed",
        "9",
        "--format",
        "json",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_document(&out_path).unwrap();
    assert_eq!(doc.results.len(), 1);
    let r = &doc.results[0];
    assert_eq!(r.mode, Mode::OnebitSweepMusic);
    assert_eq!(r.trials.len(), 2);
    assert!(r.trials.iter().all(|t| t.seed == 9));
    assert!(r.mapping.is_some());
}
