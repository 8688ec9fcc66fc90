//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Wall-clock limits are part of each check.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rislab::arrays::{ArrayKind, ArraySpec, Pose, SPEED_OF_LIGHT};
use rislab::channel::Frame;
use rislab::estimation::{estimate_azimuth, DEFAULT_GRID_STEP};
use rislab::geometry::{trace_between, Nodes, Room, Scene, Surface};
use rislab::harness::{bundled, run_montecarlo, Mode, Scenario};
use rislab::protocol::{
    beam_sweep, cancel_los, onoff_direct_estimate, reconstruct_los, run_protocol, ArraySpecs, Environment,
    PositionEstimate, SignalSettings,
};
use rislab::ris::{build_codebook, mrt_config, power_pattern, AnglePair, BitDepth, RisConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Name, time limit in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 on/off exactness", 30, on_off_exactness),
        ("2 mrt optimality", 30, mrt_optimality),
        ("3 music exactness", 60, music_exactness),
        ("4 image method vs fermat", 60, image_method_vs_fermat),
        ("5 angle error table", 600, angle_error_table),
        ("6 mapping accuracy", 600, mapping_accuracy),
        ("7 los cancellation", 60, los_cancellation),
        ("8 determinism", 600, determinism),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(limit);
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} ({:.1} s, limit {limit} s)",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn noiseless(n_pilots: usize) -> SignalSettings {
    SignalSettings {
        snr_db: f64::INFINITY,
        n_pilots,
        ..SignalSettings::default()
    }
}

fn specs(ris_side: usize) -> ArraySpecs {
    ArraySpecs {
        ap: ArraySpec::new(ArrayKind::Ula, 4, 1, 0.5, Pose::default()).unwrap(),
        ris: ArraySpec::new(ArrayKind::Ura, ris_side, ris_side, 0.5, Pose::default()).unwrap(),
        ue: ArraySpec::new(ArrayKind::Ula, 8, 1, 0.5, Pose::default()).unwrap(),
    }
}

/// Room with random wall reflectivity, 1–3 random upright facets and a
/// random UE in front of the RIS.
fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let mut gammas = [0.0; 6];
    for g in &mut gammas {
        *g = rng.random_range(0.0..0.9);
    }
    let room = Room {
        min: Vector3::zeros(),
        max: Vector3::new(8.0, 10.0, 3.0),
        gammas,
    };
    let n_facets = rng.random_range(1..=3);
    let facets = (0..n_facets)
        .map(|k| {
            let c = Vector3::new(rng.random_range(1.0..7.0), rng.random_range(1.0..8.5), 0.0);
            let theta: f64 = rng.random_range(0.0..PI);
            let half = 0.5 * rng.random_range(0.5..1.5);
            let height = rng.random_range(0.5..2.5);
            let d = Vector3::new(theta.cos(), theta.sin(), 0.0) * half;
            let up = Vector3::new(0.0, 0.0, height);
            Surface::from_corners(&format!("box{k}"), [c - d, c + d, c + d + up, c - d + up], rng.random_range(0.3..1.0))
                .unwrap()
        })
        .collect();
    let nodes = Nodes {
        ap: Pose::new(Vector3::new(7.0, 6.0, 1.5), FRAC_PI_2),
        ris: Pose::new(Vector3::new(4.0, 9.9, 1.5), PI),
        ue: Pose::new(
            Vector3::new(rng.random_range(0.5..7.5), rng.random_range(1.0..8.0), rng.random_range(0.8..2.0)),
            0.0,
        ),
    };
    Scene::new(room, facets, 3.5e9, nodes).unwrap()
}

fn on_off_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let specs = specs(8);
    let mut worst: f64 = 0.0;
    let mut scenes = 0;
    while scenes < 100 {
        let scene = random_scene(&mut rng);
        let Ok(env) = Environment::new(&scene, &specs, &noiseless(32), scenes as u64) else {
            continue; // every RIS path blocked; draw again
        };
        let phases = (0..specs.ris.len())
            .map(|_| if rng.random_bool(0.5) { FRAC_PI_2 } else { -FRAC_PI_2 })
            .collect();
        let config = RisConfig::new(phases, BitDepth::OneBit, 0.0, 0.0);
        let (r_ris, r_d) = env.components(&config).unwrap();
        let mut acq = |c: &RisConfig| env.noiseless(c);
        let (d_est, _) = onoff_direct_estimate(&mut acq, &config).unwrap();
        let err = d_est.try_sub(&r_d).unwrap().energy().sqrt();
        let scale = if r_d.energy() > 0.0 { r_d.energy() } else { r_ris.energy() };
        worst = worst.max(err / scale.sqrt());
        scenes += 1;
    }
    outcome(worst <= 1e-9, format!("worst relative error {worst:.2e} over {scenes} scenes (≤ 1e-9)"))
}

fn mrt_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let ris = ArraySpec::new(ArrayKind::Ura, 8, 8, 0.5, Pose::default()).unwrap();
    let n2 = (ris.len() * ris.len()) as f64;
    let mut worst_rel: f64 = 0.0;
    let mut beaten = 0;
    for _ in 0..1000 {
        let mut angle = || AnglePair::new(rng.random_range(0.0..PI), rng.random_range(-1.0..1.0));
        let incidence = angle();
        let target = angle();
        let mrt = mrt_config(incidence, target, &ris);
        let p = power_pattern(&mrt, target.azimuth, target.elevation, incidence, &ris).unwrap();
        worst_rel = worst_rel.max((p - n2).abs() / n2);
        for _ in 0..100 {
            let phases = (0..ris.len()).map(|_| rng.random_range(-PI..PI)).collect();
            let other = RisConfig::new(phases, BitDepth::Continuous, 0.0, 0.0);
            let q = power_pattern(&other, target.azimuth, target.elevation, incidence, &ris).unwrap();
            if q > p {
                beaten += 1;
            }
        }
    }
    outcome(
        worst_rel <= 1e-8 && beaten == 0,
        format!("worst |P − N²|/N² {worst_rel:.2e}, competitors above MRT {beaten}/100000"),
    )
}

fn music_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let ula = ArraySpec::new(ArrayKind::Ula, 8, 1, 0.5, Pose::default()).unwrap();
    let n = 64;
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let az = rng.random_range(5f64.to_radians()..175f64.to_radians());
        let a = ula.steering(az, 0.0);
        let s = DMatrix::from_fn(1, n, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)));
        let frame = Frame::new(&a * s, 1e6);
        let est = estimate_azimuth(&frame, &ula, DEFAULT_GRID_STEP).unwrap();
        worst = worst.max((est - az).abs().to_degrees());
    }
    outcome(worst <= 0.02, format!("worst error {worst:.5}° over 500 azimuths (≤ 0.02°)"))
}

/// Minimizes a convex function of one variable on [lo, hi].
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-11 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

fn image_method_vs_fermat() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let max = Vector3::new(8.0, 10.0, 3.0);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    while compared < 50 {
        let wall = rng.random_range(0..6);
        let mut gammas = [0.0; 6];
        gammas[wall] = 0.8;
        let room = Room {
            min: Vector3::zeros(),
            max,
            gammas,
        };
        let mut point = || {
            Vector3::new(
                rng.random_range(0.2..7.8),
                rng.random_range(0.2..9.8),
                rng.random_range(0.2..2.8),
            )
        };
        let (tx, rx) = (point(), point());
        let nodes = Nodes {
            ap: Pose::new(tx, 0.0),
            ris: Pose::new(point(), 0.0),
            ue: Pose::new(rx, 0.0),
        };
        let scene = Scene::new(room, Vec::new(), 3.5e9, nodes).unwrap();
        let paths = trace_between(&scene, &tx, &rx, 1).unwrap();
        let Some(path) = paths.iter().find(|p| p.order == 1) else {
            continue;
        };

        // Brute force: minimize the path length over the wall plane.
        let axis = wall / 2;
        let fixed = if wall % 2 == 0 { 0.0 } else { max[axis] };
        let (u, v) = [(1, 2), (0, 2), (0, 1)][axis];
        let at = |a: f64, b: f64| {
            let mut p = Vector3::zeros();
            p[axis] = fixed;
            p[u] = a;
            p[v] = b;
            p
        };
        let length = |p: Vector3<f64>| (p - tx).norm() + (rx - p).norm();
        let best_b = |a: f64| golden(|b| length(at(a, b)), 0.0, max[v]);
        let a = golden(|a| length(at(a, best_b(a))), 0.0, max[u]);
        let fermat = at(a, best_b(a));
        worst = worst.max((fermat - path.reflection_points[0]).norm());
        compared += 1;
    }
    outcome(worst <= 1e-4, format!("worst reflection-point mismatch {worst:.2e} m over {compared} walls (≤ 1e-4 m)"))
}

fn replica() -> Scenario {
    bundled("paper_replica").expect("bundled").expect("valid")
}

fn angle_error_table() -> Outcome {
    let scenario = replica();
    let mean = |m: Mode| {
        let r = run_montecarlo(&scenario, m, 0).unwrap();
        assert_eq!(r.failures, 0, "{m} had failed trials");
        r.stats.unwrap()
    };
    let cont = mean(Mode::ContinuousSweep);
    let onebit = mean(Mode::OnebitSweep);
    let music = mean(Mode::OnebitSweepMusic);
    let checks = [
        music.mean <= 2.0,
        music.mean < onebit.mean,
        cont.mean <= 2.0,
        onebit.variance > music.variance,
    ];
    outcome(
        checks.iter().all(|c| *c),
        format!(
            "{} trials/mode; mean ẽ continuous {:.3}°, 1-bit {:.3}°, 1-bit+MUSIC {:.3}°; variance 1-bit {:.2}°², 1-bit+MUSIC {:.3}°²; checks (a–d) {checks:?}",
            music.n_trials, cont.mean, onebit.mean, music.mean, onebit.variance, music.variance
        ),
    )
}

fn mapping_accuracy() -> Outcome {
    let scenario = bundled("single_wall").expect("bundled").expect("valid");
    assert_eq!(scenario.toa_sigma, 0.0);
    let r = run_montecarlo(&scenario, Mode::ContinuousSweep, 0).unwrap();
    let m = r.mapping.expect("mapping enabled");
    let mean = m.mean_error_m.unwrap_or(f64::INFINITY);
    let rate = m.detection_rate();
    outcome(
        mean <= 0.5 && rate >= 0.8,
        format!(
            "mean wall error {mean:.3} m (std {:.3} m), detected in {}/{} trials (≥ 80%)",
            m.std_error_m.unwrap_or(f64::NAN),
            m.detected_trials,
            m.eligible_trials
        ),
    )
}

fn los_cancellation() -> Outcome {
    let scenario = bundled("los_only").expect("bundled").expect("valid");
    let params = scenario.protocol_params();

    // Ground truth on a noiseless channel.
    let env = Environment::new(&scenario.scene, &params.specs, &noiseless(params.signal.n_pilots), 1).unwrap();
    let specs = env.specs().clone();
    let (ris, ue) = (specs.ris.pose, specs.ue.pose);
    let range = (ue.position - ris.position).norm();
    let truth = PositionEstimate {
        azimuth_est: ris.local_angles_to(&ue.position).0,
        ue_aoa_est: Some(ue.local_angles_to(&ris.position).0),
        range_est: range,
        toa_est: range / SPEED_OF_LIGHT,
        position: ue.position.into(),
    };
    let codebook = build_codebook(env.incidence(), params.codebook_range, params.codebook_step, &specs.ris, BitDepth::OneBit)
        .unwrap();
    let mut acq = |c: &RisConfig| env.noiseless(c);
    let phi0 = beam_sweep(&mut acq, &codebook, params.signal.n_pilots).unwrap().best_config;
    let (r_d, _) = onoff_direct_estimate(&mut acq, &RisConfig::all_j(specs.ris.len())).unwrap();
    let r_ris = env.noiseless(&phi0).unwrap().try_sub(&r_d).unwrap();
    let recon = reconstruct_los(&truth, &specs, env.carrier_frequency(), env.sample_rate()).unwrap();
    let exact = cancel_los(&r_ris, &phi0, &recon, &env.pilot(), truth.toa_est).unwrap().energy() / r_ris.energy();

    // Estimated parameters from full positioning passes at the scenario SNR.
    let mut worst_est: f64 = 0.0;
    for g in 0..scenario.ue_grid.len() {
        let scene = scenario.scene_at(g).unwrap();
        let report = run_protocol(&scene, &params, 100 + g as u64).unwrap();
        let env = Environment::new(&scene, &params.specs, &noiseless(params.signal.n_pilots), 1).unwrap();
        let specs = env.specs().clone();
        let estimate = PositionEstimate {
            azimuth_est: report.est_azimuth_deg.to_radians(),
            ue_aoa_est: report.ue_aoa_deg.map(f64::to_radians),
            range_est: report.range_est_m,
            toa_est: report.range_est_m / SPEED_OF_LIGHT,
            position: report.ue_est,
        };
        let codebook =
            build_codebook(env.incidence(), params.codebook_range, params.codebook_step, &specs.ris, params.bit_depth)
                .unwrap();
        let phi0 = &codebook.entries[report.best_index];
        let los = env.los_component(phi0).unwrap();
        let recon = reconstruct_los(&estimate, &specs, env.carrier_frequency(), env.sample_rate()).unwrap();
        let residual = cancel_los(&los, phi0, &recon, &env.pilot(), estimate.toa_est).unwrap();
        worst_est = worst_est.max(residual.energy() / los.energy());
    }
    outcome(
        exact <= 1e-9 && worst_est <= 0.1,
        format!(
            "ground-truth residual {exact:.2e} (≤ 1e-9), worst estimated-parameter residual {:.2}% over {} UE positions (≤ 10%)",
            100.0 * worst_est,
            scenario.ue_grid.len()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_rislab"))
            .args(["sweep-table", "--scenario", "paper_replica", "--jobs", jobs, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "sweep-table failed: {}", String::from_utf8_lossy(&status.stderr));
        let stats = out.with_file_name(format!("{}.stats.csv", name.trim_end_matches(".csv")));
        (std::fs::read(&out).unwrap(), std::fs::read(stats).unwrap())
    };
    let (a, a_stats) = run("a.csv", "1");
    let (b, b_stats) = run("b.csv", "2");
    let rows = a.iter().filter(|&&c| c == b'\n').count();
    outcome(
        a == b && a_stats == b_stats,
        format!("two sweep-table runs ({} lines, 1 vs 2 workers) byte-identical: {}", rows, a == b && a_stats == b_stats),
    )
}

