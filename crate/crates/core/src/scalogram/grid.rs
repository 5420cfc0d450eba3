use std::f64::consts::PI;

use super::{ScalogramError, DEFAULT_OMEGA0};

pub const DEFAULT_F_MIN_HZ: f64 = 0.5;
pub const DEFAULT_F_MAX_HZ: f64 = 40.0;
pub const DEFAULT_N_SCALES: usize = 64;

/// Wavelet scales in seconds, ordered from the highest pseudo-frequency down.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    pub scales: Vec<f64>,
    pub omega0: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
}

/// Pseudo-frequency of a Morlet scale: `omega0 / (2π s)`.
pub fn pseudo_frequency(scale_s: f64, omega0: f64) -> f64 {
    omega0 / (2.0 * PI * scale_s)
}

/// Log-spaced pseudo-frequencies from `f_max_hz` down to `f_min_hz`.
pub fn scale_grid(
    f_min_hz: f64,
    f_max_hz: f64,
    n_scales: usize,
    omega0: f64,
) -> Result<ScaleGrid, ScalogramError> {
    if !(f_min_hz.is_finite() && f_max_hz.is_finite() && f_min_hz > 0.0 && f_min_hz < f_max_hz) {
        return Err(ScalogramError::InvalidArgument(format!(
            "band must satisfy 0 < f_min < f_max, got [{f_min_hz}, {f_max_hz}]"
        )));
    }
    if n_scales < 2 {
        return Err(ScalogramError::InvalidArgument(format!(
            "need at least 2 scales, got {n_scales}"
        )));
    }
    if !(omega0.is_finite() && omega0 > 0.0) {
        return Err(ScalogramError::InvalidArgument(format!(
            "omega0 must be positive, got {omega0}"
        )));
    }
    let ratio = f_min_hz / f_max_hz;
    let last = n_scales - 1;
    let scales = (0..n_scales)
        .map(|i| {
            let f = match i {
                0 => f_max_hz,
                i if i == last => f_min_hz,
                i => f_max_hz * ratio.powf(i as f64 / last as f64),
            };
            omega0 / (2.0 * PI * f)
        })
        .collect();
    Ok(ScaleGrid {
        scales,
        omega0,
        f_min_hz,
        f_max_hz,
    })
}

impl Default for ScaleGrid {
    fn default() -> Self {
        scale_grid(
            DEFAULT_F_MIN_HZ,
            DEFAULT_F_MAX_HZ,
            DEFAULT_N_SCALES,
            DEFAULT_OMEGA0,
        )
        .expect("default grid is valid")
    }
}

impl ScaleGrid {
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.scales
            .iter()
            .map(|&s| pseudo_frequency(s, self.omega0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_scales_are_band_edges() {
        let g = scale_grid(0.5, 40.0, 2, 6.0).unwrap();
        let f = g.frequencies();
        assert!((f[0] - 40.0).abs() < 1e-12);
        assert!((f[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eight_hz_scale() {
        let s = 6.0 / (2.0 * PI * 8.0);
        assert!((s - 0.119_366).abs() < 1e-6);
        assert!((pseudo_frequency(s, 6.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_bands() {
        assert!(scale_grid(8.0, 8.0, 64, 6.0).is_err());
        assert!(scale_grid(0.0, 8.0, 64, 6.0).is_err());
        assert!(scale_grid(1.0, 8.0, 1, 6.0).is_err());
    }

    #[test]
    fn default_grid_is_monotone_and_in_band() {
        let g = ScaleGrid::default();
        assert_eq!(g.len(), 64);
        assert!(g.scales.windows(2).all(|w| w[0] < w[1]));
        for f in g.frequencies() {
            assert!((0.5 - 1e-9..=40.0 + 1e-9).contains(&f));
        }
    }
}
