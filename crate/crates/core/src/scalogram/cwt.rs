//! Morlet CWT with L2 (1/√s) normalization:
//!
//! ```text
//! W(s, t) = (1/√s) · Σ_k x[k] · conj(ψ((k − t) / (s·fs))) · Δt
//! ```
//!
//! Outside the signal the input is treated as zero. The production path is a
//! frequency-domain convolution; [`cwt_direct`] evaluates the sum literally.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{morlet, ScaleGrid, ScalogramError};

/// Kernel half-width in units of `s·fs`; |ψ| < 2e-16 beyond it.
const SUPPORT_SIGMAS: f64 = 8.5;

/// Complex coefficients, one row per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexScalogram {
    pub rows: Vec<Vec<Complex64>>,
    pub sampling_rate_hz: f64,
    pub grid: ScaleGrid,
}

/// `|W|` as a row-major `n_scales × n_time` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    pub magnitude: Vec<f64>,
    pub n_scales: usize,
    pub n_time: usize,
    pub sampling_rate_hz: f64,
    pub grid: ScaleGrid,
    pub parent_id: String,
}

impl Scalogram {
    pub fn row(&self, scale_index: usize) -> &[f64] {
        &self.magnitude[scale_index * self.n_time..(scale_index + 1) * self.n_time]
    }

    pub fn at(&self, scale_index: usize, t: usize) -> f64 {
        self.magnitude[scale_index * self.n_time + t]
    }
}

impl ComplexScalogram {
    pub fn to_magnitude(&self, parent_id: &str) -> Scalogram {
        let n_time = self.rows.first().map_or(0, Vec::len);
        Scalogram {
            magnitude: self.rows.iter().flatten().map(|c| c.norm()).collect(),
            n_scales: self.rows.len(),
            n_time,
            sampling_rate_hz: self.sampling_rate_hz,
            grid: self.grid.clone(),
            parent_id: parent_id.to_string(),
        }
    }
}

fn check_input(signal: &[f64], fs: f64) -> Result<(), ScalogramError> {
    if signal.len() < 2 {
        return Err(ScalogramError::InvalidArgument(format!(
            "signal needs at least 2 samples, got {}",
            signal.len()
        )));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(ScalogramError::InvalidArgument(format!(
            "sampling rate must be positive, got {fs}"
        )));
    }
    if let Some(index) = signal.iter().position(|v| !v.is_finite()) {
        return Err(ScalogramError::NonFinite { index });
    }
    Ok(())
}

/// Reusable CWT state: FFT plans and kernel spectra cached per FFT length.
///
/// Not shared between threads; give each worker its own plan.
pub struct CwtPlan {
    grid: ScaleGrid,
    fs: f64,
    planner: FftPlanner<f64>,
    half_widths: Vec<usize>,
    kernels: HashMap<usize, Vec<Vec<Complex64>>>,
}

impl CwtPlan {
    pub fn new(grid: ScaleGrid, sampling_rate_hz: f64) -> Self {
        let half_widths = grid
            .scales
            .iter()
            .map(|s| (SUPPORT_SIGMAS * s * sampling_rate_hz).ceil() as usize)
            .collect();
        Self {
            grid,
            fs: sampling_rate_hz,
            planner: FftPlanner::new(),
            half_widths,
            kernels: HashMap::new(),
        }
    }

    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.fs
    }

    fn kernel_spectra(&mut self, n_fft: usize, fft: &Arc<dyn Fft<f64>>) -> &Vec<Vec<Complex64>> {
        let (grid, fs, half_widths) = (&self.grid, self.fs, &self.half_widths);
        self.kernels.entry(n_fft).or_insert_with(|| {
            let dt = 1.0 / fs;
            grid.scales
                .iter()
                .zip(half_widths)
                .map(|(&s, &half)| {
                    // h[m] = Δt/√s · ψ(m/(s·fs)); W = x ⊛ h because conj(ψ(−u)) = ψ(u).
                    let norm = dt / s.sqrt();
                    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
                    for m in -(half as isize)..=(half as isize) {
                        let idx = m.rem_euclid(n_fft as isize) as usize;
                        buf[idx] = morlet(m as f64 / (s * fs), grid.omega0) * norm;
                    }
                    fft.process(&mut buf);
                    buf
                })
                .collect()
        })
    }

    pub fn transform(&mut self, signal: &[f64]) -> Result<ComplexScalogram, ScalogramError> {
        check_input(signal, self.fs)?;
        let n = signal.len();
        let max_half = self.half_widths.iter().copied().max().unwrap_or(0);
        // Linear (not circular) convolution on [0, n) needs n_fft ≥ n + half-width.
        let n_fft = (n + max_half + 1).next_power_of_two();
        let forward = self.planner.plan_fft_forward(n_fft);
        let inverse = self.planner.plan_fft_inverse(n_fft);

        let mut spectrum: Vec<Complex64> = signal
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
            .take(n_fft)
            .collect();
        forward.process(&mut spectrum);

        let scale = 1.0 / n_fft as f64;
        let kernels = self.kernel_spectra(n_fft, &forward);
        let mut rows = Vec::with_capacity(kernels.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for kernel in kernels {
            for ((b, x), h) in buf.iter_mut().zip(&spectrum).zip(kernel) {
                *b = x * h;
            }
            inverse.process(&mut buf);
            rows.push(buf[..n].iter().map(|c| c * scale).collect());
        }
        Ok(ComplexScalogram {
            rows,
            sampling_rate_hz: self.fs,
            grid: self.grid.clone(),
        })
    }
}

/// Complex CWT coefficients via FFT convolution.
pub fn cwt_complex(
    signal: &[f64],
    sampling_rate_hz: f64,
    grid: &ScaleGrid,
) -> Result<ComplexScalogram, ScalogramError> {
    CwtPlan::new(grid.clone(), sampling_rate_hz).transform(signal)
}

/// Scalogram magnitude `|W(s, t)|`.
pub fn cwt(
    signal: &[f64],
    sampling_rate_hz: f64,
    grid: &ScaleGrid,
    parent_id: &str,
) -> Result<Scalogram, ScalogramError> {
    Ok(cwt_complex(signal, sampling_rate_hz, grid)?.to_magnitude(parent_id))
}

/// Literal evaluation of the defining sum over every sample, O(n²) per scale.
pub fn cwt_direct(
    signal: &[f64],
    sampling_rate_hz: f64,
    grid: &ScaleGrid,
) -> Result<ComplexScalogram, ScalogramError> {
    check_input(signal, sampling_rate_hz)?;
    let n = signal.len() as isize;
    let dt = 1.0 / sampling_rate_hz;
    let rows = grid
        .scales
        .iter()
        .map(|&s| {
            let norm = dt / s.sqrt();
            // table[d + n - 1] = conj(ψ(d / (s·fs))) for d = k - t in (-n, n)
            let table: Vec<Complex64> = (-(n - 1)..n)
                .map(|d| morlet(d as f64 / (s * sampling_rate_hz), grid.omega0).conj())
                .collect();
            (0..n)
                .map(|t| {
                    let acc: Complex64 = signal
                        .iter()
                        .enumerate()
                        .map(|(k, &x)| table[(k as isize - t + n - 1) as usize] * x)
                        .sum();
                    acc * norm
                })
                .collect()
        })
        .collect();
    Ok(ComplexScalogram {
        rows,
        sampling_rate_hz,
        grid: grid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalogram::scale_grid;

    #[test]
    fn zero_signal_gives_zero_scalogram() {
        let s = cwt(&[0.0; 300], 250.0, &ScaleGrid::default(), "z").unwrap();
        assert_eq!(s.n_scales, 64);
        assert_eq!(s.n_time, 300);
        assert!(s.magnitude.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_short_or_non_finite() {
        let g = ScaleGrid::default();
        assert!(cwt(&[1.0], 250.0, &g, "").is_err());
        assert!(matches!(
            cwt(&[1.0, f64::NAN, 2.0], 250.0, &g, ""),
            Err(ScalogramError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn fft_matches_direct_on_short_signal() {
        let g = scale_grid(2.0, 40.0, 6, 6.0).unwrap();
        let x: Vec<f64> = (0..200)
            .map(|i| ((i * 37 % 101) as f64 - 50.0) / 17.0)
            .collect();
        let a = cwt_complex(&x, 250.0, &g).unwrap();
        let b = cwt_direct(&x, 250.0, &g).unwrap();
        let peak = b
            .rows
            .iter()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for (ca, cb) in ra.iter().zip(rb) {
                assert!((ca - cb).norm() <= 1e-9 * peak);
            }
        }
    }

    #[test]
    fn plan_reuse_is_consistent() {
        let g = scale_grid(1.0, 40.0, 8, 6.0).unwrap();
        let mut plan = CwtPlan::new(g.clone(), 250.0);
        let x: Vec<f64> = (0..500).map(|i| (i as f64 * 0.3).sin()).collect();
        let first = plan.transform(&x).unwrap();
        let again = plan.transform(&x).unwrap();
        assert_eq!(first, again);
        assert_eq!(first, cwt_complex(&x, 250.0, &g).unwrap());
    }
}
