//! MUSIC direction finding at the UE.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::arrays::ArraySpec;
use crate::channel::Frame;
use crate::error::{Error, Result};

/// Default spectrum grid step, 0.1°.
pub const DEFAULT_GRID_STEP: f64 = 0.1 * PI / 180.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    pub matrix: DMatrix<Complex64>,
    pub n_snapshots: usize,
}

/// R = (1/N_s)·Σ r[n]·r[n]ᴴ.
pub fn sample_covariance(frame: &Frame) -> Result<Covariance> {
    let (n_ant, n) = frame.samples.shape();
    if n == 0 || n_ant == 0 {
        return Err(Error::invalid("covariance of an empty frame"));
    }
    if n < n_ant {
        log::warn!("{n} snapshots for {n_ant} antennas; covariance is rank deficient");
    }
    let mut matrix = &frame.samples * frame.samples.adjoint() / Complex64::new(n as f64, 0.0);
    // Remove rounding asymmetry so the Hermitian invariant holds exactly.
    matrix = (&matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(Covariance {
        matrix,
        n_snapshots: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakShape {
    /// Refine on the values themselves.
    Direct,
    /// Values are reciprocals of a smooth null spectrum; refine on 1/P.
    Reciprocal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub grid_step: f64,
    pub shape: PeakShape,
}

impl Spectrum {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, grid_step: f64, shape: PeakShape) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::shape(format!(
                "spectrum grid has {} points and {} values",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            grid_step,
            shape,
        })
    }

    /// Angle/value pairs as CSV, angles in degrees.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "azimuth_deg,value").expect("vec write");
        for (a, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{},{}", a.to_degrees(), v).expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Azimuth grid over [0, π] with the given step; π itself is included when
/// the step divides it.
pub fn azimuth_grid(step: f64) -> Vec<f64> {
    let n = (PI / step + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending, ties by index.
fn sorted_eigen(matrix: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(matrix.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(matrix.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of the covariance, descending.
pub fn eigenvalues(cov: &Covariance) -> Vec<f64> {
    sorted_eigen(&cov.matrix).0
}

/// P(φ) = 1 / ‖E_nᴴ a(φ)‖² over the local azimuth grid [0, π].
pub fn music_spectrum(
    cov: &Covariance,
    rx_spec: &ArraySpec,
    n_sources: usize,
    grid_step: f64,
) -> Result<Spectrum> {
    let n = cov.matrix.nrows();
    if cov.matrix.ncols() != n || n != rx_spec.len() {
        return Err(Error::shape(format!(
            "covariance is {}×{}, array has {} elements",
            n,
            cov.matrix.ncols(),
            rx_spec.len()
        )));
    }
    if n_sources == 0 || n_sources >= n {
        return Err(Error::invalid(format!(
            "n_sources must be in 1..{n}, got {n_sources}"
        )));
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::invalid(format!("grid step must be positive, got {grid_step}")));
    }
    let (values, vectors) = sorted_eigen(&cov.matrix);
    let largest = values[0].max(0.0);
    if values.iter().any(|v| !v.is_finite()) || values[n - 1] < -1e-10 * largest.max(f64::MIN_POSITIVE) {
        return Err(Error::NumericalDegeneracy(format!(
            "covariance is not positive semi-definite (eigenvalues {:e} .. {:e})",
            values[n - 1],
            values[0]
        )));
    }
    let noise = vectors.columns(n_sources, n - n_sources).into_owned();
    let noise_adj = noise.adjoint();
    let grid = azimuth_grid(grid_step);
    // Keep the denominator away from 0 for exact noiseless steering matches.
    let floor = f64::EPSILON * n as f64;
    let spectrum = grid
        .iter()
        .map(|&az| {
            let a = rx_spec.steering(az, 0.0);
            let proj = &noise_adj * a;
            1.0 / proj.norm_squared().max(floor)
        })
        .collect();
    Spectrum::new(grid, spectrum, grid_step, PeakShape::Reciprocal)
}

/// Vertex offset of the parabola through (−1, a), (0, b), (1, c), in grid units.
fn parabola_vertex(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// Global maximum of the spectrum, optionally ignoring grid points within
/// `halfwidth` of an excluded angle, refined by a 3-point parabola.
pub fn pick_peak(spectrum: &Spectrum, exclude: Option<(f64, f64)>) -> Result<f64> {
    let allowed = |k: usize| match exclude {
        Some((angle, half)) => (spectrum.grid[k] - angle).abs() > half,
        None => true,
    };
    let best = (0..spectrum.grid.len())
        .filter(|&k| allowed(k))
        .fold(None, |best: Option<usize>, k| match best {
            Some(b) if spectrum.values[b] >= spectrum.values[k] => Some(b),
            _ => Some(k),
        })
        .ok_or(Error::NoPeak)?;
    let n = spectrum.grid.len();
    if best == 0 || best + 1 >= n {
        return Ok(spectrum.grid[best]);
    }
    let v = |k: usize| match spectrum.shape {
        PeakShape::Direct => spectrum.values[k],
        PeakShape::Reciprocal => -1.0 / spectrum.values[k],
    };
    let delta = parabola_vertex(v(best - 1), v(best), v(best + 1));
    let spacing = 0.5 * (spectrum.grid[best + 1] - spectrum.grid[best - 1]);
    Ok(spectrum.grid[best] + delta * spacing)
}

/// Single-source MUSIC azimuth estimate from a frame, local frame, [0, π].
pub fn estimate_azimuth(frame: &Frame, rx_spec: &ArraySpec, grid_step: f64) -> Result<f64> {
    let cov = sample_covariance(frame)?;
    let spectrum = music_spectrum(&cov, rx_spec, 1, grid_step)?;
    pick_peak(&spectrum, None)
}
