//! Discrete-time MIMO channels built from traced paths, and the signal
//! chain AP → (RIS) → UE.
//!
//! Frames live on an absolute sample axis whose origin is the transmission
//! instant: column 0 of a frame is sample `start_sample`. Channel taps are
//! relative to the channel's `first_tap_delay`; [`combine_received`] places
//! filtered frames on the absolute axis using the integer part of
//! delay·F_s, the same convention LoS cancellation uses.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::arrays::ArraySpec;
use crate::error::{Error, Result};
use crate::geometry::PathRecord;
use crate::ris::RisConfig;

/// Default sampling rate, Hz.
pub const DEFAULT_SAMPLE_RATE: f64 = 122.88e6;

/// Default pilot length N_s.
pub const DEFAULT_PILOTS: usize = 256;

// Slack for delay·F_s products that land a hair below an integer.
const SAMPLE_EPS: f64 = 1e-6;

/// Integer part of delay·F_s, robust to rounding just below an integer.
pub fn delay_samples(delay: f64, sample_rate: f64) -> i64 {
    (delay * sample_rate + SAMPLE_EPS).floor() as i64
}

/// How the fractional-delay factor β_{l,n} is realized.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FractionalDelay {
    /// Kronecker delta at the nearest tap.
    #[default]
    Nearest,
    /// Hann-windowed sinc spanning `half_width` taps either side.
    WindowedSinc { half_width: usize },
}

/// Tapped-delay-line MIMO channel: `taps[n]` is the n_rx × n_tx matrix H[n].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTaps {
    pub taps: Vec<DMatrix<Complex64>>,
    pub sample_rate: f64,
    pub carrier_frequency: f64,
    /// Delay of tap index 0, seconds.
    pub first_tap_delay: f64,
}

impl ChannelTaps {
    pub fn n_rx(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    /// Single-tap channel.
    pub fn flat(
        matrix: DMatrix<Complex64>,
        sample_rate: f64,
        carrier_frequency: f64,
        delay: f64,
    ) -> Self {
        Self {
            taps: vec![matrix],
            sample_rate,
            carrier_frequency,
            first_tap_delay: delay,
        }
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_squared()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.taps
            .iter()
            .all(|t| t.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

/// A block of samples, one row per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub samples: DMatrix<Complex64>,
    pub sample_rate: f64,
    /// Absolute sample index of column 0.
    pub start_sample: i64,
}

impl Frame {
    pub fn new(samples: DMatrix<Complex64>, sample_rate: f64) -> Self {
        Self {
            samples,
            sample_rate,
            start_sample: 0,
        }
    }

    pub fn zeros(n_antennas: usize, n_samples: usize, sample_rate: f64) -> Self {
        Self::new(DMatrix::zeros(n_antennas, n_samples), sample_rate)
    }

    pub fn n_antennas(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    /// Mean power per antenna per sample.
    pub fn mean_power(&self) -> f64 {
        let n = self.samples.len();
        if n == 0 {
            0.0
        } else {
            self.samples.norm_squared() / n as f64
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.norm_squared()
    }

    /// Single-stream pilot: `precoder · s[n]` with unit-modulus QPSK symbols s[n].
    pub fn precoded_pilot(
        precoder: &DVector<Complex64>,
        n_samples: usize,
        sample_rate: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let symbols: Vec<Complex64> = (0..n_samples).map(|_| qpsk(&mut rng)).collect();
        Self::new(
            DMatrix::from_fn(precoder.len(), n_samples, |r, c| precoder[r] * symbols[c]),
            sample_rate,
        )
    }

    /// Independent unit-modulus QPSK symbols on every antenna.
    pub fn pilot(n_antennas: usize, n_samples: usize, sample_rate: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Column-major fill keeps the stream order sample-by-sample.
        let mut samples = DMatrix::zeros(n_antennas, n_samples);
        for c in 0..n_samples {
            for r in 0..n_antennas {
                samples[(r, c)] = qpsk(&mut rng);
            }
        }
        Self::new(samples, sample_rate)
    }

    /// `self − other` for frames on the same axis and shape.
    pub fn try_sub(&self, other: &Frame) -> Result<Frame> {
        self.check_compatible(other)?;
        Ok(Frame {
            samples: &self.samples - &other.samples,
            ..self.clone()
        })
    }

    pub fn try_add(&self, other: &Frame) -> Result<Frame> {
        self.check_compatible(other)?;
        Ok(Frame {
            samples: &self.samples + &other.samples,
            ..self.clone()
        })
    }

    pub fn scaled(&self, factor: f64) -> Frame {
        Frame {
            samples: &self.samples * Complex64::new(factor, 0.0),
            ..self.clone()
        }
    }

    fn check_compatible(&self, other: &Frame) -> Result<()> {
        if self.samples.shape() != other.samples.shape() || self.start_sample != other.start_sample
        {
            return Err(Error::shape(format!(
                "frames differ: {:?}@{} vs {:?}@{}",
                self.samples.shape(),
                self.start_sample,
                other.samples.shape(),
                other.start_sample
            )));
        }
        Ok(())
    }
}

fn qpsk(rng: &mut impl Rng) -> Complex64 {
    let k: u8 = rng.random_range(0..4);
    Complex64::from_polar(1.0, PI / 4.0 + PI / 2.0 * k as f64)
}

fn same_rate(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

fn hann_sinc(x: f64, half_width: usize) -> f64 {
    let w = half_width as f64 + 1.0;
    if x.abs() >= w {
        return 0.0;
    }
    let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
    sinc * 0.5 * (1.0 + (PI * x / w).cos())
}

/// Builds H[n] = Σ_l β_{l,n}·α_l·e^{−j2πτ_l f_c}·a_rx(AoA_l)·a_tx(AoD_l)ᴴ
/// with β as a Kronecker delta at the nearest tap.
pub fn synthesize_channel(
    paths: &[PathRecord],
    tx_spec: &ArraySpec,
    rx_spec: &ArraySpec,
    carrier_frequency: f64,
    sample_rate: f64,
) -> Result<ChannelTaps> {
    synthesize_channel_with(
        paths,
        tx_spec,
        rx_spec,
        carrier_frequency,
        sample_rate,
        FractionalDelay::Nearest,
    )
}

pub fn synthesize_channel_with(
    paths: &[PathRecord],
    tx_spec: &ArraySpec,
    rx_spec: &ArraySpec,
    carrier_frequency: f64,
    sample_rate: f64,
    fractional: FractionalDelay,
) -> Result<ChannelTaps> {
    if paths.is_empty() {
        return Err(Error::EmptyChannel);
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
    }
    let tau_min = paths.iter().map(|p| p.delay).fold(f64::INFINITY, f64::min);
    let pad = match fractional {
        FractionalDelay::Nearest => 0,
        FractionalDelay::WindowedSinc { half_width } => half_width,
    };
    let offsets: Vec<f64> = paths
        .iter()
        .map(|p| (p.delay - tau_min) * sample_rate + pad as f64)
        .collect();
    let n_taps = offsets
        .iter()
        .map(|&o| match fractional {
            FractionalDelay::Nearest => o.round() as usize + 1,
            FractionalDelay::WindowedSinc { half_width } => o.floor() as usize + half_width + 2,
        })
        .max()
        .unwrap_or(1);

    let mut taps = vec![DMatrix::zeros(rx_spec.len(), tx_spec.len()); n_taps];
    for (path, &offset) in paths.iter().zip(&offsets) {
        let a_tx = tx_spec.steering(
            tx_spec.pose.to_local_azimuth(path.aod_azimuth),
            path.aod_elevation,
        );
        let a_rx = rx_spec.steering(
            rx_spec.pose.to_local_azimuth(path.aoa_azimuth),
            path.aoa_elevation,
        );
        let gain = Complex64::from_polar(path.gain, -TAU * path.delay * carrier_frequency);
        let rank_one = (&a_rx * a_tx.adjoint()) * gain;
        match fractional {
            FractionalDelay::Nearest => taps[offset.round() as usize] += &rank_one,
            FractionalDelay::WindowedSinc { .. } => {
                for (n, tap) in taps.iter_mut().enumerate() {
                    let beta = hann_sinc(n as f64 - offset, pad);
                    if beta != 0.0 {
                        *tap += &rank_one * Complex64::new(beta, 0.0);
                    }
                }
            }
        }
    }
    Ok(ChannelTaps {
        taps,
        sample_rate,
        carrier_frequency,
        first_tap_delay: tau_min - pad as f64 / sample_rate,
    })
}

/// The path-sum form of a nearest-tap channel: per path a complex gain, a
/// tap index and one steering vector on each side.
///
/// Cascading two of these through an RIS costs O(P·Q·N) instead of
/// O(taps₁·taps₂·N·N_R·N_T), which is what makes large RIS sweeps cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct PathChannel {
    /// α_l·e^{−j2πτ_l f_c}.
    pub gains: Vec<Complex64>,
    pub tap_index: Vec<usize>,
    /// Column l is a_rx(AoA_l).
    pub rx_vectors: DMatrix<Complex64>,
    /// Column l is a_tx(AoD_l).
    pub tx_vectors: DMatrix<Complex64>,
    pub sample_rate: f64,
    pub carrier_frequency: f64,
    pub first_tap_delay: f64,
}

impl PathChannel {
    pub fn new(
        paths: &[PathRecord],
        tx_spec: &ArraySpec,
        rx_spec: &ArraySpec,
        carrier_frequency: f64,
        sample_rate: f64,
    ) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyChannel);
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        let tau_min = paths.iter().map(|p| p.delay).fold(f64::INFINITY, f64::min);
        let mut rx_vectors = DMatrix::zeros(rx_spec.len(), paths.len());
        let mut tx_vectors = DMatrix::zeros(tx_spec.len(), paths.len());
        for (l, p) in paths.iter().enumerate() {
            rx_vectors.set_column(
                l,
                &rx_spec.steering(rx_spec.pose.to_local_azimuth(p.aoa_azimuth), p.aoa_elevation),
            );
            tx_vectors.set_column(
                l,
                &tx_spec.steering(tx_spec.pose.to_local_azimuth(p.aod_azimuth), p.aod_elevation),
            );
        }
        Ok(Self {
            gains: paths
                .iter()
                .map(|p| Complex64::from_polar(p.gain, -TAU * p.delay * carrier_frequency))
                .collect(),
            tap_index: paths
                .iter()
                .map(|p| ((p.delay - tau_min) * sample_rate).round() as usize)
                .collect(),
            rx_vectors,
            tx_vectors,
            sample_rate,
            carrier_frequency,
            first_tap_delay: tau_min,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.gains.len()
    }

    pub fn n_taps(&self) -> usize {
        self.tap_index.iter().max().map_or(1, |m| m + 1)
    }

    /// Same taps as [`synthesize_channel`] on the originating paths.
    pub fn to_taps(&self) -> ChannelTaps {
        let mut taps = vec![DMatrix::zeros(self.rx_vectors.nrows(), self.tx_vectors.nrows()); self.n_taps()];
        for l in 0..self.n_paths() {
            let outer = self.rx_vectors.column(l) * self.tx_vectors.column(l).adjoint();
            taps[self.tap_index[l]] += outer * self.gains[l];
        }
        ChannelTaps {
            taps,
            sample_rate: self.sample_rate,
            carrier_frequency: self.carrier_frequency,
            first_tap_delay: self.first_tap_delay,
        }
    }

    /// Replaces the transmit side by a fixed precoder: the result has a
    /// single transmit "antenna" carrying a_tx(AoD_l)ᴴ·w per path.
    pub fn precoded(&self, precoder: &DVector<Complex64>) -> Result<Self> {
        if precoder.len() != self.tx_vectors.nrows() {
            return Err(Error::shape(format!(
                "precoder length {} for {} transmit antennas",
                precoder.len(),
                self.tx_vectors.nrows()
            )));
        }
        let projected = self.tx_vectors.adjoint() * precoder;
        Ok(Self {
            gains: self.gains.iter().zip(projected.iter()).map(|(g, p)| g * p).collect(),
            tx_vectors: DMatrix::from_element(1, self.n_paths(), Complex64::new(1.0, 0.0)),
            ..self.clone()
        })
    }
}

impl PathChannel {
    /// Sums paths that share a tap into one pseudo-path. Only valid for a
    /// single-antenna (e.g. precoded) transmit side.
    pub fn merged_by_tap(&self) -> Result<Self> {
        if self.tx_vectors.nrows() != 1 {
            return Err(Error::shape("tap merging needs a single transmit antenna"));
        }
        let n_taps = self.n_taps();
        let mut rx = DMatrix::zeros(self.rx_vectors.nrows(), n_taps);
        let mut used = vec![false; n_taps];
        for l in 0..self.n_paths() {
            let n = self.tap_index[l];
            used[n] = true;
            let coef = self.gains[l] * self.tx_vectors[(0, l)].conj();
            let mut col = rx.column_mut(n);
            col += self.rx_vectors.column(l) * coef;
        }
        let keep: Vec<usize> = (0..n_taps).filter(|&n| used[n]).collect();
        Ok(Self {
            gains: vec![Complex64::new(1.0, 0.0); keep.len()],
            tap_index: keep.clone(),
            rx_vectors: rx.select_columns(keep.iter()),
            tx_vectors: DMatrix::from_element(1, keep.len(), Complex64::new(1.0, 0.0)),
            ..self.clone()
        })
    }
}

/// [`cascaded_channel`] evaluated in path-sum form.
pub fn cascade_paths(h1: &PathChannel, config: &RisConfig, h2: &PathChannel) -> Result<ChannelTaps> {
    let n = config.len();
    if h1.rx_vectors.nrows() != n || h2.tx_vectors.nrows() != n {
        return Err(Error::shape(format!(
            "RIS size mismatch: h1 feeds {}, config has {n}, h2 takes {}",
            h1.rx_vectors.nrows(),
            h2.tx_vectors.nrows()
        )));
    }
    if !same_rate(h1.sample_rate, h2.sample_rate) {
        return Err(Error::shape("h1 and h2 sample rates differ"));
    }
    let mut weighted = h1.rx_vectors.clone();
    for (i, w) in config.weights().iter().enumerate() {
        weighted.row_mut(i).iter_mut().for_each(|z| *z *= *w);
    }
    // coupling[(q, p)] = a_RIS(AoD_q)ᴴ·diag(ω)·a_RIS(AoA_p)
    let coupling = h2.tx_vectors.adjoint() * weighted;
    let n_taps = h1.n_taps() + h2.n_taps() - 1;
    let (n_rx, n_tx) = (h2.rx_vectors.nrows(), h1.tx_vectors.nrows());
    let mut taps = vec![DMatrix::zeros(n_rx, n_tx); n_taps];
    let tx_adj = h1.tx_vectors.adjoint();
    for q in 0..h2.n_paths() {
        let rx = h2.rx_vectors.column(q);
        for p in 0..h1.n_paths() {
            let coef = h2.gains[q] * coupling[(q, p)] * h1.gains[p];
            let tap = &mut taps[h1.tap_index[p] + h2.tap_index[q]];
            for t in 0..n_tx {
                let c = coef * tx_adj[(p, t)];
                for r in 0..n_rx {
                    tap[(r, t)] += rx[r] * c;
                }
            }
        }
    }
    Ok(ChannelTaps {
        taps,
        sample_rate: h1.sample_rate,
        carrier_frequency: h1.carrier_frequency,
        first_tap_delay: h1.first_tap_delay + h2.first_tap_delay,
    })
}

/// Convolves a frame with a channel; output length n_samples + n_taps − 1.
pub fn apply_channel(h: &ChannelTaps, x: &Frame) -> Result<Frame> {
    if x.n_antennas() != h.n_tx() {
        return Err(Error::shape(format!(
            "frame has {} antennas, channel expects {}",
            x.n_antennas(),
            h.n_tx()
        )));
    }
    if !same_rate(x.sample_rate, h.sample_rate) {
        return Err(Error::shape(format!(
            "frame sampled at {} Hz, channel at {} Hz",
            x.sample_rate, h.sample_rate
        )));
    }
    let ns = x.n_samples();
    let mut out = DMatrix::zeros(h.n_rx(), ns + h.n_taps() - 1);
    let one = Complex64::new(1.0, 0.0);
    for (k, tap) in h.taps.iter().enumerate() {
        out.columns_mut(k, ns).gemm(one, tap, &x.samples, one);
    }
    Ok(Frame {
        samples: out,
        sample_rate: x.sample_rate,
        start_sample: x.start_sample,
    })
}

fn check_ris_sizes(h1: &ChannelTaps, config: &RisConfig, h2: &ChannelTaps) -> Result<()> {
    if h1.n_rx() != config.len() || h2.n_tx() != config.len() {
        return Err(Error::shape(format!(
            "RIS size mismatch: h1 feeds {}, config has {}, h2 takes {}",
            h1.n_rx(),
            config.len(),
            h2.n_tx()
        )));
    }
    if !same_rate(h1.sample_rate, h2.sample_rate) {
        return Err(Error::shape("h1 and h2 sample rates differ"));
    }
    Ok(())
}

/// r_RIS = H₂ ∗ (Φ·(H₁ ∗ x)) with Φ = diag(ω) applied to every sample.
pub fn cascade_through_ris(
    h1: &ChannelTaps,
    config: &RisConfig,
    h2: &ChannelTaps,
    x: &Frame,
) -> Result<Frame> {
    check_ris_sizes(h1, config, h2)?;
    let mut at_ris = apply_channel(h1, x)?;
    for (i, w) in config.weights().iter().enumerate() {
        at_ris.samples.row_mut(i).iter_mut().for_each(|z| *z *= *w);
    }
    apply_channel(h2, &at_ris)
}

/// Effective AP→UE channel through the RIS, Σ_{a+b=n} H₂[b]·Φ·H₁[a].
///
/// Equivalent to [`cascade_through_ris`] by associativity, but cheap to
/// apply repeatedly to short pilot frames.
pub fn cascaded_channel(
    h1: &ChannelTaps,
    config: &RisConfig,
    h2: &ChannelTaps,
) -> Result<ChannelTaps> {
    check_ris_sizes(h1, config, h2)?;
    let weights = config.weights();
    let n_taps = h1.n_taps() + h2.n_taps() - 1;
    let mut taps = vec![DMatrix::zeros(h2.n_rx(), h1.n_tx()); n_taps];
    let one = Complex64::new(1.0, 0.0);
    for (a, t1) in h1.taps.iter().enumerate() {
        let mut scaled = t1.clone();
        for (i, w) in weights.iter().enumerate() {
            scaled.row_mut(i).iter_mut().for_each(|z| *z *= *w);
        }
        for (b, t2) in h2.taps.iter().enumerate() {
            taps[a + b].gemm(one, t2, &scaled, one);
        }
    }
    Ok(ChannelTaps {
        taps,
        sample_rate: h1.sample_rate,
        carrier_frequency: h1.carrier_frequency,
        first_tap_delay: h1.first_tap_delay + h2.first_tap_delay,
    })
}

/// Noise variance giving `snr_db` relative to the mean power of `reference`.
pub fn noise_variance(reference: &Frame, snr_db: f64) -> f64 {
    reference.mean_power() / 10f64.powf(snr_db / 10.0)
}

/// Adds circularly-symmetric complex Gaussian noise of the given variance.
pub fn add_noise(x: &Frame, variance: f64, rng: &mut impl Rng) -> Frame {
    let mut out = x.clone();
    if variance <= 0.0 {
        return out;
    }
    let sigma = (variance / 2.0).sqrt();
    for z in out.samples.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex64::new(re * sigma, im * sigma);
    }
    out
}

/// Adds AWGN at `snr_db` below the frame's mean power. `+∞` disables noise.
pub fn add_awgn(x: &Frame, snr_db: f64, seed: u64) -> Result<Frame> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(add_noise(x, noise_variance(x, snr_db), &mut rng))
}

/// Places the RIS-path and direct-path frames on a common axis and sums them.
///
/// Each frame is shifted by ⌊delay·F_s⌋ samples; the result starts at the
/// earlier arrival.
pub fn combine_received(
    r_ris: &Frame,
    r_d: &Frame,
    delay_ris: f64,
    delay_d: f64,
    sample_rate: f64,
) -> Result<Frame> {
    if delay_ris < 0.0 || delay_d < 0.0 || !delay_ris.is_finite() || !delay_d.is_finite() {
        return Err(Error::invalid("path delays must be non-negative"));
    }
    if r_ris.n_antennas() != r_d.n_antennas() {
        return Err(Error::shape(format!(
            "antenna counts differ: {} vs {}",
            r_ris.n_antennas(),
            r_d.n_antennas()
        )));
    }
    if !same_rate(r_ris.sample_rate, sample_rate) || !same_rate(r_d.sample_rate, sample_rate) {
        return Err(Error::shape("frame sample rates differ"));
    }
    let pos_ris = r_ris.start_sample + delay_samples(delay_ris, sample_rate);
    let pos_d = r_d.start_sample + delay_samples(delay_d, sample_rate);
    let start = pos_ris.min(pos_d);
    let end = (pos_ris + r_ris.n_samples() as i64).max(pos_d + r_d.n_samples() as i64);
    let mut out = DMatrix::zeros(r_ris.n_antennas(), (end - start) as usize);
    for (frame, pos) in [(r_ris, pos_ris), (r_d, pos_d)] {
        let offset = (pos - start) as usize;
        let mut view = out.columns_mut(offset, frame.n_samples());
        view += &frame.samples;
    }
    Ok(Frame {
        samples: out,
        sample_rate,
        start_sample: start,
    })
}
