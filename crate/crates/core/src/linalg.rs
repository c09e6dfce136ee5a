//! Small fixed-size complex linear algebra shared by the two-level modules.

use nalgebra::{Matrix2, Vector3};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// `n · σ` for a real direction `n`.
pub fn pauli_along(n: &Vector3<f64>) -> Mat2 {
    sigma_x() * C64::from(n.x) + sigma_y() * C64::from(n.y) + sigma_z() * C64::from(n.z)
}

pub fn det(m: &Mat2) -> C64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

pub fn trace(m: &Mat2) -> C64 {
    m[(0, 0)] + m[(1, 1)]
}

/// Frobenius norm.
pub fn norm(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Operator 2-norm from the closed-form singular values of a 2×2 matrix.
pub fn spectral_norm(m: &Mat2) -> f64 {
    singular_values(m).0
}

/// `(σ_max, σ_min)` of a 2×2 matrix.
pub fn singular_values(m: &Mat2) -> (f64, f64) {
    let f = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let d = det(m).norm();
    let disc = (f * f - 4.0 * d * d).max(0.0).sqrt();
    let smax = ((f + disc) / 2.0).sqrt();
    let smin = if smax > 0.0 { d / smax } else { 0.0 };
    (smax, smin)
}

pub fn inverse(m: &Mat2) -> Option<Mat2> {
    let d = det(m);
    if d.norm() == 0.0 {
        return None;
    }
    Some(Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / d)
}

/// `sinh(s)/s` as an even function of `s`, evaluated stably near zero.
fn sinhc(s: C64) -> C64 {
    if s.norm() < 1e-3 {
        let s2 = s * s;
        ONE + s2 / 6.0 + s2 * s2 / 120.0 + s2 * s2 * s2 / 5040.0
    } else {
        s.sinh() / s
    }
}

/// Matrix exponential of a traceless 2×2 matrix.
///
/// For traceless `A`, `A² = -det(A)·1`, so `exp(A) = cosh(s) + sinh(s)/s · A`
/// with `s² = -det(A)`. Both coefficients are even in `s`, so the square-root
/// branch is irrelevant and `det exp(A) = 1` up to rounding.
pub fn expm_traceless(a: &Mat2) -> Mat2 {
    let s2 = -det(a);
    let s = s2.sqrt();
    let c = s.cosh();
    Mat2::identity() * c + a * sinhc(s)
}

/// Eigenvalues of a 2×2 matrix as `(λ₊, λ₋) = h ± sqrt(h² - det)` with `h = tr/2`.
pub fn eigenvalues(m: &Mat2) -> (C64, C64) {
    let h = trace(m) / 2.0;
    let disc = (h * h - det(m)).sqrt();
    (h + disc, h - disc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (sigma_x(), sigma_y(), sigma_z());
        assert!(norm(&(x * y - z * I)) < 1e-15);
        assert!(norm(&(y * z - x * I)) < 1e-15);
        assert!(norm(&(z * x - y * I)) < 1e-15);
        assert!(norm(&(x * x - Mat2::identity())) < 1e-15);
    }

    #[test]
    fn expm_matches_series() {
        let a = Mat2::new(C64::new(0.3, -0.2), C64::new(1.1, 0.4), C64::new(-0.7, 0.9), C64::new(-0.3, 0.2));
        let mut term = Mat2::identity();
        let mut sum = Mat2::identity();
        for k in 1..40 {
            term = term * a / C64::from(k as f64);
            sum += term;
        }
        assert!(norm(&(expm_traceless(&a) - sum)) < 1e-13);
        assert!((det(&expm_traceless(&a)) - ONE).norm() < 1e-14);
    }

    #[test]
    fn expm_small_argument() {
        let a = sigma_x() * C64::new(1e-6, 2e-7);
        let e = expm_traceless(&a);
        let expected = Mat2::identity() + a + a * a / C64::from(2.0);
        assert!(norm(&(e - expected)) < 1e-17);
    }

    #[test]
    fn singular_values_of_diagonal() {
        let m = Mat2::new(C64::from(3.0), ZERO, ZERO, C64::new(0.0, -0.5));
        let (smax, smin) = singular_values(&m);
        assert!((smax - 3.0).abs() < 1e-14 && (smin - 0.5).abs() < 1e-14);
    }
}
