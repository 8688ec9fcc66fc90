//! RIS radiation pattern, MRT configurations, 1-bit quantization and
//! codebooks. All angles here are in the RIS local frame.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arrays::ArraySpec;
use crate::error::{Error, Result};

/// Default codebook azimuth step, 2°.
pub const DEFAULT_CODEBOOK_STEP: f64 = 2.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub azimuth: f64,
    pub elevation: f64,
}

impl AnglePair {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    pub fn azimuth(azimuth: f64) -> Self {
        Self::new(azimuth, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BitDepth {
    #[default]
    Continuous,
    OneBit,
}

/// Per-element phases θ_i; the reflection weight is ω_i = e^{jθ_i}.
#[derive(Debug, Clone, PartialEq)]
pub struct RisConfig {
    pub phases: Vec<f64>,
    pub bit_depth: BitDepth,
    pub target_azimuth: f64,
    pub target_elevation: f64,
}

impl RisConfig {
    pub fn new(phases: Vec<f64>, bit_depth: BitDepth, target_azimuth: f64, target_elevation: f64) -> Self {
        Self {
            phases,
            bit_depth,
            target_azimuth,
            target_elevation,
        }
    }

    /// Every element at +π/2 (ω = j): the Φ¹ configuration of the ON/OFF protocol.
    pub fn all_j(n: usize) -> Self {
        Self::new(vec![FRAC_PI_2; n], BitDepth::OneBit, FRAC_PI_2, 0.0)
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn weights(&self) -> Vec<Complex64> {
        self.phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect()
    }

    /// ω → −ω. For one-bit configs this swaps +π/2 and −π/2 exactly.
    pub fn negated(&self) -> Self {
        let phases = match self.bit_depth {
            BitDepth::OneBit => self.phases.iter().map(|&t| -t).collect(),
            BitDepth::Continuous => self
                .phases
                .iter()
                .map(|&t| if t > 0.0 { t - PI } else { t + PI })
                .collect(),
        };
        Self {
            phases,
            ..self.clone()
        }
    }

    pub fn target(&self) -> AnglePair {
        AnglePair::new(self.target_azimuth, self.target_elevation)
    }
}

/// |ωᵀ(a(incidence) ⊙ a*(reflect))|².
pub fn power_pattern(
    config: &RisConfig,
    reflect_azimuth: f64,
    reflect_elevation: f64,
    incidence: AnglePair,
    ris_spec: &ArraySpec,
) -> Result<f64> {
    if config.len() != ris_spec.len() {
        return Err(Error::shape(format!(
            "config has {} phases, RIS has {} elements",
            config.len(),
            ris_spec.len()
        )));
    }
    let a_inc = ris_spec.steering(incidence.azimuth, incidence.elevation);
    let a_ref = ris_spec.steering(reflect_azimuth, reflect_elevation);
    let sum: Complex64 = config
        .phases
        .iter()
        .zip(a_inc.iter().zip(a_ref.iter()))
        .map(|(&t, (ai, ar))| Complex64::from_polar(1.0, t) * ai * ar.conj())
        .sum();
    Ok(sum.norm_sqr())
}

/// Co-phases every element toward `target`: ω_i = a_i*(incidence)·a_i(target).
pub fn mrt_config(incidence: AnglePair, target: AnglePair, ris_spec: &ArraySpec) -> RisConfig {
    let a_inc = ris_spec.steering(incidence.azimuth, incidence.elevation);
    let a_tgt = ris_spec.steering(target.azimuth, target.elevation);
    let phases = a_inc
        .iter()
        .zip(a_tgt.iter())
        .map(|(ai, at)| (ai.conj() * at).arg())
        .collect();
    RisConfig::new(phases, BitDepth::Continuous, target.azimuth, target.elevation)
}

/// Nearest of ±π/2 on the circle, ties to +π/2.
pub fn quantize_phase(theta: f64) -> f64 {
    // cos(θ − π/2) ≥ cos(θ + π/2)  ⇔  sin θ ≥ 0
    if theta.sin() >= 0.0 {
        FRAC_PI_2
    } else {
        -FRAC_PI_2
    }
}

pub fn quantize_config(config: &RisConfig) -> RisConfig {
    if config.bit_depth == BitDepth::OneBit {
        return config.clone();
    }
    RisConfig {
        phases: config.phases.iter().map(|&t| quantize_phase(t)).collect(),
        bit_depth: BitDepth::OneBit,
        ..config.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub entries: Vec<RisConfig>,
    pub angle_step: f64,
    pub incidence: AnglePair,
    pub bit_depth: BitDepth,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.target_azimuth).collect()
    }
}

/// One MRT entry per grid azimuth in `azimuth_range`, elevation 0.
pub fn build_codebook(
    incidence: AnglePair,
    azimuth_range: (f64, f64),
    angle_step: f64,
    ris_spec: &ArraySpec,
    bit_depth: BitDepth,
) -> Result<Codebook> {
    build_codebook_at(incidence, azimuth_range, angle_step, 0.0, ris_spec, bit_depth)
}

/// As [`build_codebook`] with every entry aimed at `elevation`.
pub fn build_codebook_at(
    incidence: AnglePair,
    azimuth_range: (f64, f64),
    angle_step: f64,
    elevation: f64,
    ris_spec: &ArraySpec,
    bit_depth: BitDepth,
) -> Result<Codebook> {
    let (lo, hi) = azimuth_range;
    if !(angle_step > 0.0 && angle_step.is_finite()) {
        return Err(Error::invalid(format!("codebook step must be positive, got {angle_step}")));
    }
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::invalid(format!("empty codebook range [{lo}, {hi}]")));
    }
    if lo < -1e-12 || hi > PI + 1e-12 {
        return Err(Error::invalid(format!(
            "codebook range [{lo}, {hi}] leaves the RIS front half-space [0, π]"
        )));
    }
    let count = ((hi - lo) / angle_step + 1e-9).floor() as usize + 1;
    let entries = (0..count)
        .map(|k| {
            let target = AnglePair::new(lo + k as f64 * angle_step, elevation);
            let cfg = mrt_config(incidence, target, ris_spec);
            match bit_depth {
                BitDepth::Continuous => cfg,
                BitDepth::OneBit => quantize_config(&cfg),
            }
        })
        .collect();
    Ok(Codebook {
        entries,
        angle_step,
        incidence,
        bit_depth,
    })
}

/// Exchange format: angles in degrees, 1-bit phases as ±1 signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookFile {
    pub bit_depth: BitDepth,
    pub angle_step_deg: f64,
    pub incidence_deg: [f64; 2],
    pub entries: Vec<CodebookEntryFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookEntryFile {
    pub target_azimuth_deg: f64,
    #[serde(default)]
    pub target_elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs: Option<Vec<i8>>,
}

impl Codebook {
    pub fn to_file(&self) -> CodebookFile {
        CodebookFile {
            bit_depth: self.bit_depth,
            angle_step_deg: self.angle_step.to_degrees(),
            incidence_deg: [self.incidence.azimuth.to_degrees(), self.incidence.elevation.to_degrees()],
            entries: self
                .entries
                .iter()
                .map(|e| {
                    let (phases, signs) = match e.bit_depth {
                        BitDepth::Continuous => (Some(e.phases.clone()), None),
                        BitDepth::OneBit => {
                            (None, Some(e.phases.iter().map(|&t| if t > 0.0 { 1 } else { -1 }).collect()))
                        }
                    };
                    CodebookEntryFile {
                        target_azimuth_deg: e.target_azimuth.to_degrees(),
                        target_elevation_deg: e.target_elevation.to_degrees(),
                        phases,
                        signs,
                    }
                })
                .collect(),
        }
    }

    pub fn from_file(file: &CodebookFile) -> Result<Self> {
        let entries = file
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let phases = match (file.bit_depth, &e.phases, &e.signs) {
                    (BitDepth::Continuous, Some(p), None) => p.clone(),
                    (BitDepth::OneBit, None, Some(s)) => s
                        .iter()
                        .map(|&v| match v {
                            1 => Ok(FRAC_PI_2),
                            -1 => Ok(-FRAC_PI_2),
                            other => Err(Error::Parse {
                                key: format!("entries[{i}].signs"),
                                message: format!("sign must be ±1, got {other}"),
                            }),
                        })
                        .collect::<Result<Vec<_>>>()?,
                    _ => {
                        return Err(Error::Parse {
                            key: format!("entries[{i}]"),
                            message: "continuous entries need `phases`, one-bit entries need `signs`".into(),
                        })
                    }
                };
                Ok(RisConfig::new(
                    phases,
                    file.bit_depth,
                    e.target_azimuth_deg.to_radians(),
                    e.target_elevation_deg.to_radians(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            entries,
            angle_step: file.angle_step_deg.to_radians(),
            incidence: AnglePair::new(file.incidence_deg[0].to_radians(), file.incidence_deg[1].to_radians()),
            bit_depth: file.bit_depth,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("codebook serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&crate::geometry::scene_file::parse_json(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrays::Pose;
    use proptest::prelude::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn ura(n: usize) -> ArraySpec {
        ArraySpec::ura(n, n, 0.5, Pose::default()).unwrap()
    }

    #[test]
    fn mrt_hits_n_squared_at_target() {
        let spec = ura(32);
        let inc = AnglePair::new(deg(30.0), deg(5.0));
        let tgt = AnglePair::new(deg(110.0), deg(-3.0));
        let cfg = mrt_config(inc, tgt, &spec);
        let p = power_pattern(&cfg, tgt.azimuth, tgt.elevation, inc, &spec).unwrap();
        let n2 = (spec.len() * spec.len()) as f64;
        assert!((p - n2).abs() <= 1e-9 * n2);
    }

    #[test]
    fn single_element() {
        let spec = ArraySpec::ula(1, 0.5, Pose::default()).unwrap();
        let cfg = mrt_config(AnglePair::azimuth(0.4), AnglePair::azimuth(2.0), &spec);
        assert_eq!(cfg.phases, vec![0.0]);
        let odd = RisConfig::new(vec![1.3], BitDepth::Continuous, 0.0, 0.0);
        let p = power_pattern(&odd, 0.9, 0.2, AnglePair::azimuth(0.1), &spec).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pattern_length_mismatch() {
        let cfg = RisConfig::new(vec![0.0; 3], BitDepth::Continuous, 0.0, 0.0);
        assert!(matches!(
            power_pattern(&cfg, 0.0, 0.0, AnglePair::azimuth(0.0), &ura(2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn mrt_mirror_target_is_conjugate_symmetric() {
        let spec = ArraySpec::ula(8, 0.5, Pose::default()).unwrap();
        let inc = AnglePair::azimuth(deg(50.0));
        let cfg = mrt_config(inc, AnglePair::azimuth(PI - deg(50.0)), &spec);
        // Oracle: ω_i = conj(a_inc_i)·a_tgt_i evaluated directly.
        let a_inc = spec.steering(inc.azimuth, 0.0);
        let a_tgt = spec.steering(PI - inc.azimuth, 0.0);
        let w = cfg.weights();
        for i in 0..8 {
            assert!((w[i] - a_inc[i].conj() * a_tgt[i]).norm() < 1e-12);
        }
        // Phases are symmetric about the array centre.
        let pair = w[0] * w[7];
        for i in 0..8 {
            assert!((w[i] * w[7 - i] - pair).norm() < 1e-12);
        }
        assert!((w[0] * w[7].conj()).im.abs() > 1e-3, "non-trivial progression");
    }

    #[test]
    fn quantization_examples() {
        assert_eq!(quantize_phase(0.3), FRAC_PI_2);
        assert_eq!(quantize_phase(-2.0), -FRAC_PI_2);
        assert_eq!(quantize_phase(0.0), FRAC_PI_2);
        let cfg = RisConfig::new(vec![0.3, -2.0, 0.0, 3.0], BitDepth::Continuous, 0.1, 0.0);
        let q = quantize_config(&cfg);
        assert_eq!(q.bit_depth, BitDepth::OneBit);
        assert_eq!(q.phases, vec![FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, FRAC_PI_2]);
        assert_eq!(q.target_azimuth, 0.1);
    }

    #[test]
    fn one_bit_mrt_is_optimal_among_one_bit_configs_on_2x2() {
        let spec = ura(2);
        let inc = AnglePair::new(deg(35.0), 0.0);
        for tgt_deg in [20.0, 70.0, 100.0, 150.0] {
            let tgt = AnglePair::azimuth(deg(tgt_deg));
            let q = quantize_config(&mrt_config(inc, tgt, &spec));
            let pq = power_pattern(&q, tgt.azimuth, 0.0, inc, &spec).unwrap();
            // Brute force over all 2⁴ one-bit configurations.
            let best = (0..16u32)
                .map(|mask| {
                    let phases = (0..4)
                        .map(|i| if mask >> i & 1 == 1 { FRAC_PI_2 } else { -FRAC_PI_2 })
                        .collect();
                    let c = RisConfig::new(phases, BitDepth::OneBit, 0.0, 0.0);
                    power_pattern(&c, tgt.azimuth, 0.0, inc, &spec).unwrap()
                })
                .fold(0.0, f64::max);
            assert!(pq <= best + 1e-12, "{tgt_deg}: {pq} vs best {best}");
            assert!(best > 0.0);
        }
    }

    #[test]
    fn one_bit_large_ris_keeps_classic_loss() {
        let spec = ura(32);
        let inc = AnglePair::azimuth(deg(40.0));
        let tgt = AnglePair::azimuth(deg(95.0));
        let q = quantize_config(&mrt_config(inc, tgt, &spec));
        let p = power_pattern(&q, tgt.azimuth, 0.0, inc, &spec).unwrap();
        let n2 = (spec.len() * spec.len()) as f64;
        assert!(p <= n2 && p >= (2.0 / PI).powi(2) * n2 * 0.95, "{}", p / n2);
    }

    #[test]
    fn negation() {
        let spec = ura(4);
        let inc = AnglePair::azimuth(deg(60.0));
        let q = quantize_config(&mrt_config(inc, AnglePair::azimuth(deg(120.0)), &spec));
        let neg = q.negated();
        for (a, b) in q.phases.iter().zip(&neg.phases) {
            assert_eq!(*a, -*b);
            assert_eq!(a.abs(), FRAC_PI_2);
        }
        let c = mrt_config(inc, AnglePair::azimuth(deg(80.0)), &spec);
        for cfg in [&q, &c] {
            let n = cfg.negated();
            for (w, v) in cfg.weights().iter().zip(n.weights()) {
                assert!((w + v).norm() < 1e-12);
            }
            for az in [0.3, 1.0, 2.5] {
                let a = power_pattern(cfg, az, 0.0, inc, &spec).unwrap();
                let b = power_pattern(&n, az, 0.0, inc, &spec).unwrap();
                assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
        assert!(RisConfig::all_j(3).negated().phases.iter().all(|&t| t == -FRAC_PI_2));
    }

    #[test]
    fn codebook_count_and_continuous_gain() {
        let spec = ura(4);
        let inc = AnglePair::azimuth(deg(30.0));
        let cb = build_codebook(inc, (deg(10.0), deg(170.0)), deg(2.0), &spec, BitDepth::Continuous).unwrap();
        assert_eq!(cb.len(), 81);
        let n2 = 256.0;
        for (k, e) in cb.entries.iter().enumerate() {
            assert!((e.target_azimuth - deg(10.0 + 2.0 * k as f64)).abs() < 1e-12);
            let p = power_pattern(e, e.target_azimuth, 0.0, inc, &spec).unwrap();
            assert!((p - n2).abs() < 1e-9 * n2);
        }
    }

    #[test]
    fn codebook_rejects_bad_ranges() {
        let spec = ura(2);
        let inc = AnglePair::azimuth(0.5);
        for (range, step) in [
            ((1.0, 0.5), 0.1),
            ((0.1, 0.5), 0.0),
            ((-0.5, 0.5), 0.1),
            ((0.5, 4.0), 0.1),
        ] {
            assert!(matches!(
                build_codebook(inc, range, step, &spec, BitDepth::OneBit),
                Err(Error::InvalidArgument(_))
            ));
        }
    }

    /// Wraps a direction cosine difference into [−1, 1): λ/2 spacing aliases u and u ± 2.
    fn wrap_cos(u: f64) -> f64 {
        (u + 1.0).rem_euclid(2.0) - 1.0
    }

    #[test]
    fn one_bit_codebook_winners_sit_in_main_or_mirror_lobe() {
        let spec = ura(32);
        let n2 = (spec.len() * spec.len()) as f64;
        // Half the null-to-null main-lobe width in direction cosine: 1/(N·d/λ).
        let lobe = 1.0 / 16.0;
        for inc_deg in [5.0, 30.0, 60.0] {
            let inc = AnglePair::azimuth(deg(inc_deg));
            let cb = build_codebook(inc, (deg(10.0), deg(170.0)), deg(2.0), &spec, BitDepth::OneBit).unwrap();
            // Oracle: pairwise pattern evaluation across the codebook.
            let table: Vec<Vec<f64>> = cb
                .entries
                .iter()
                .map(|e| {
                    cb.entries
                        .iter()
                        .map(|t| power_pattern(e, t.target_azimuth, 0.0, inc, &spec).unwrap())
                        .collect()
                })
                .collect();
            let mut own_wins = 0;
            let mut gain_sum = 0.0;
            for (i, t) in cb.entries.iter().enumerate() {
                let own = table[i][i];
                assert!(own <= n2 * (1.0 + 1e-12));
                gain_sum += own / n2;
                let winner = (0..cb.len())
                    .fold(0, |b, j| if table[j][i] > table[b][i] { j } else { b });
                if winner == i {
                    own_wins += 1;
                }
                // Real-valued 1-bit weights radiate equally toward the target and
                // toward its mirror u' = 2·u_inc − u_target.
                let u = cb.entries[winner].target_azimuth.cos();
                let u_t = t.target_azimuth.cos();
                let mirror = 2.0 * inc.azimuth.cos() - u_t;
                let d = wrap_cos(u - u_t).abs().min(wrap_cos(u - mirror).abs());
                assert!(d <= lobe, "incidence {inc_deg}: target {} won by {}", t.target_azimuth.to_degrees(),
                    cb.entries[winner].target_azimuth.to_degrees());
            }
            assert!(2 * own_wins >= cb.len(), "{own_wins}/{}", cb.len());
            // Classic 1-bit loss, averaged over the codebook.
            let mean_gain = gain_sum / cb.len() as f64;
            assert!(mean_gain >= (2.0 / PI).powi(2) * 0.95, "{mean_gain}");
        }
    }

    #[test]
    fn one_bit_mirror_lobe_has_full_strength() {
        let spec = ura(8);
        let inc = AnglePair::azimuth(deg(70.0));
        let tgt = AnglePair::azimuth(deg(100.0));
        let q = quantize_config(&mrt_config(inc, tgt, &spec));
        let mirror = (2.0 * inc.azimuth.cos() - tgt.azimuth.cos()).acos();
        let main = power_pattern(&q, tgt.azimuth, 0.0, inc, &spec).unwrap();
        let image = power_pattern(&q, mirror, 0.0, inc, &spec).unwrap();
        assert!((main - image).abs() <= 1e-9 * main);
    }

    #[test]
    fn codebook_is_deterministic_and_round_trips() {
        let spec = ura(4);
        let inc = AnglePair::new(deg(20.0), deg(2.0));
        for bits in [BitDepth::Continuous, BitDepth::OneBit] {
            let a = build_codebook(inc, (deg(30.0), deg(60.0)), deg(5.0), &spec, bits).unwrap();
            let b = build_codebook(inc, (deg(30.0), deg(60.0)), deg(5.0), &spec, bits).unwrap();
            assert_eq!(a.to_json(), b.to_json());
            let back = Codebook::from_json(&a.to_json()).unwrap();
            assert_eq!(back.len(), a.len());
            for (x, y) in back.entries.iter().zip(&a.entries) {
                assert_eq!(x.phases, y.phases);
                assert!((x.target_azimuth - y.target_azimuth).abs() < 1e-12);
            }
        }
        let bad = r#"{"bit_depth":"one_bit","angle_step_deg":2,"incidence_deg":[0,0],
                     "entries":[{"target_azimuth_deg":10,"signs":[1,0]}]}"#;
        assert!(matches!(Codebook::from_json(bad), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn mrt_beats_random_configs(
            inc_az in 0.0f64..PI, tgt_az in 0.0f64..PI,
            inc_el in -0.5f64..0.5, tgt_el in -0.5f64..0.5,
            phases in proptest::collection::vec(-PI..PI, 16),
        ) {
            let spec = ura(4);
            let inc = AnglePair::new(inc_az, inc_el);
            let tgt = AnglePair::new(tgt_az, tgt_el);
            let mrt = power_pattern(&mrt_config(inc, tgt, &spec), tgt_az, tgt_el, inc, &spec).unwrap();
            prop_assert!((mrt - 256.0).abs() < 1e-9 * 256.0);
            let other = RisConfig::new(phases, BitDepth::Continuous, 0.0, 0.0);
            let p = power_pattern(&other, tgt_az, tgt_el, inc, &spec).unwrap();
            prop_assert!(p <= mrt + 1e-9);
        }
    }
}
