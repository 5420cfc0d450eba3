use std::f64::consts::PI;

use num_complex::Complex64;

pub const DEFAULT_OMEGA0: f64 = 6.0;

/// Morlet mother wavelet `π^(-1/4) · exp(i·omega0·u) · exp(-u²/2)`.
///
/// The admissibility correction `exp(-omega0²/2)` is omitted (about 1.5e-8 at omega0 = 6).
#[inline]
pub fn morlet(u: f64, omega0: f64) -> Complex64 {
    let envelope = PI.powf(-0.25) * (-0.5 * u * u).exp();
    let (sin, cos) = (omega0 * u).sin_cos();
    Complex64::new(envelope * cos, envelope * sin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_origin() {
        let v = morlet(0.0, 6.0);
        assert!((v.re - PI.powf(-0.25)).abs() < 1e-15);
        assert!((v.re - 0.7511).abs() < 1e-4);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn gaussian_decay() {
        assert!(morlet(8.0, 6.0).norm() < 1e-13);
        assert!(morlet(-8.0, 6.0).norm() < 1e-13);
    }

    #[test]
    fn conjugate_symmetry_and_bound() {
        for i in -400..=400 {
            let u = i as f64 * 0.0173;
            let a = morlet(u, 6.0);
            let b = morlet(-u, 6.0);
            assert!((a - b.conj()).norm() < 1e-15);
            assert!((a.norm() - b.norm()).abs() < 1e-15);
            assert!(a.norm() <= PI.powf(-0.25) + 1e-15);
        }
    }
}
