//! Floquet spectrum of `U(T)`, extended-unitarity classification,
//! stroboscopic powers and population dynamics.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{det, eigenvalues, inverse, singular_values, trace, Mat2, C64, I, ONE, ZERO};
use crate::model::TwoLevelModel;
use crate::propagator::{propagate_matrix, IntegratorSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    ExtendedUnitary,
    Unstable,
    Marginal,
}

impl StabilityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::ExtendedUnitary => "extended_unitary",
            StabilityClass::Unstable => "unstable",
            StabilityClass::Marginal => "marginal",
        }
    }
}

impl fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StabilityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extended_unitary" => Ok(Self::ExtendedUnitary),
            "unstable" => Ok(Self::Unstable),
            "marginal" => Ok(Self::Marginal),
            _ => Err(Error::Parse(format!("unknown stability class {s:?}"))),
        }
    }
}

/// Classification thresholds: `tol_phase` bounds `|Im β|` (and `|Im u₀(T)|`),
/// `tol_edge` is the width of the band-edge strip `|u₀(T)| ≈ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub tol_phase: f64,
    pub tol_edge: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol_phase: 1e-6, tol_edge: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub class: StabilityClass,
    pub u0: C64,
    /// `arccos(Re u₀) ∈ [0, π]` when the class is not `Unstable`.
    pub beta: Option<f64>,
    /// `|Im arccos u₀|`.
    pub im_beta: f64,
}

/// Classifies from the half-trace `u₀(T)`: stable iff `u₀(T)` is real and in `[-1, 1]`.
pub fn classify_stability(u0: C64, tol: &Tolerances) -> StabilityReport {
    let im_beta = u0.acos().im.abs();
    let real = u0.im.abs() <= tol.tol_phase;
    let edge_gap = u0.re.abs() - 1.0;
    let class = if !real || edge_gap > tol.tol_edge {
        StabilityClass::Unstable
    } else if edge_gap.abs() <= tol.tol_edge {
        StabilityClass::Marginal
    } else {
        StabilityClass::ExtendedUnitary
    };
    let beta = match class {
        StabilityClass::Unstable => None,
        _ => Some(u0.re.clamp(-1.0, 1.0).acos()),
    };
    StabilityReport { class, u0, beta, im_beta }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetDecomposition {
    /// `λ = e^{iβ}`, ordered by `(Re β, Im β)`.
    pub eigenvalues: [C64; 2],
    /// Principal eigenphases, `Re β ∈ (-π, π]`.
    pub eigenphases: [C64; 2],
    /// Columns are the normalized eigenvectors.
    pub similarity: Mat2,
    /// 2-norm condition number of `similarity`.
    pub condition: f64,
    pub class: StabilityClass,
}

impl FloquetDecomposition {
    pub fn diagonal(&self) -> Mat2 {
        Mat2::new(self.eigenvalues[0], ZERO, ZERO, self.eigenvalues[1])
    }

    /// `S D S⁻¹`.
    pub fn reassemble(&self) -> Option<Mat2> {
        Some(self.similarity * self.diagonal() * inverse(&self.similarity)?)
    }
}

fn eigenvector(u: &Mat2, lambda: C64, fallback: usize) -> [C64; 2] {
    let (p, q, r, s) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    let v1 = [q, lambda - p];
    let v2 = [lambda - s, r];
    let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
    let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
    let scale = u.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
    if n <= 1e-14 * scale {
        // U = λ·1 on this eigenspace
        return if fallback == 0 { [ONE, ZERO] } else { [ZERO, ONE] };
    }
    [v[0] / n, v[1] / n]
}

fn principal_phase(lambda: C64) -> C64 {
    -I * lambda.ln()
}

/// Eigen-decomposition of a Floquet operator with `det U ≈ 1`.
///
/// Coincident eigenvalues (`u₀ = ±1` within `tol_edge`) are classified
/// `Marginal` and never treated as a regular diagonalization.
pub fn floquet_decompose(u: &Mat2, tol: &Tolerances) -> Result<FloquetDecomposition> {
    if u.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidArgument("Floquet operator has non-finite entries".into()));
    }
    let (lp, lm) = eigenvalues(u);
    let mut pairs = [(principal_phase(lp), lp), (principal_phase(lm), lm)];
    pairs.sort_by(|x, y| x.0.re.total_cmp(&y.0.re).then(x.0.im.total_cmp(&y.0.im)));

    let v0 = eigenvector(u, pairs[0].1, 0);
    let v1 = eigenvector(u, pairs[1].1, 1);
    let similarity = Mat2::new(v0[0], v1[0], v0[1], v1[1]);
    let (smax, smin) = singular_values(&similarity);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let half_trace = trace(u) / 2.0 / det(u).sqrt();
    let edge = classify_stability(half_trace, tol);
    let class = if edge.class == StabilityClass::Marginal || !condition.is_finite() {
        StabilityClass::Marginal
    } else if pairs.iter().all(|(b, _)| b.im.abs() <= tol.tol_phase) {
        StabilityClass::ExtendedUnitary
    } else {
        StabilityClass::Unstable
    };

    Ok(FloquetDecomposition {
        eigenvalues: [pairs[0].1, pairs[1].1],
        eigenphases: [pairs[0].0, pairs[1].0],
        similarity,
        condition,
        class,
    })
}

/// `U(NT) = S Dᴺ S⁻¹`.
pub fn stroboscopic_power(dec: &FloquetDecomposition, n: u64) -> Result<Mat2> {
    if dec.class == StabilityClass::Marginal {
        return Err(Error::MarginalPower);
    }
    if n == 0 {
        return Ok(Mat2::identity());
    }
    let nf = n as f64;
    let d = Mat2::new((I * dec.eigenphases[0] * nf).exp(), ZERO, ZERO, (I * dec.eigenphases[1] * nf).exp());
    let s_inv = inverse(&dec.similarity).ok_or(Error::MarginalPower)?;
    Ok(dec.similarity * d * s_inv)
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationTrace {
    pub times: Vec<f64>,
    /// `(c↑, c↓)`
    pub amplitudes: Vec<[C64; 2]>,
    /// `(|c↑|², |c↓|²)`
    pub populations: Vec<[f64; 2]>,
}

/// Amplitudes `c(t) = U(t) c(0)` over `n_periods`, continued stroboscopically
/// as `U(t + NT) = U(t) U(T)ᴺ`.
pub fn population_trace(
    model: &TwoLevelModel,
    initial: [C64; 2],
    n_periods: usize,
    settings: &IntegratorSettings,
) -> Result<PopulationTrace> {
    if initial.iter().all(|c| *c == ZERO) {
        return Err(Error::InvalidArgument("initial state must be nonzero".into()));
    }
    if n_periods == 0 {
        return Err(Error::InvalidArgument("n_periods must be at least 1".into()));
    }
    let period = model.period();
    let traj = propagate_matrix(model, period, settings)?;
    let u_t = traj.final_matrix();
    let mut power = Mat2::identity();
    let mut out = PopulationTrace { times: Vec::new(), amplitudes: Vec::new(), populations: Vec::new() };
    for n in 0..n_periods {
        let skip = usize::from(n > 0);
        for (t, m) in traj.times.iter().zip(&traj.matrices).skip(skip) {
            let u = m * power;
            let c = [u[(0, 0)] * initial[0] + u[(0, 1)] * initial[1], u[(1, 0)] * initial[0] + u[(1, 1)] * initial[1]];
            out.times.push(t + n as f64 * period);
            out.populations.push([c[0].norm_sqr(), c[1].norm_sqr()]);
            out.amplitudes.push(c);
        }
        power = u_t * power;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    fn diag(a: C64, b: C64) -> Mat2 {
        Mat2::new(a, ZERO, ZERO, b)
    }

    #[test]
    fn unit_circle_diagonal() {
        let u = diag(C64::new(0.0, -1.0).exp(), C64::new(0.0, 1.0).exp());
        let d = floquet_decompose(&u, &Tolerances::default()).unwrap();
        assert_eq!(d.class, StabilityClass::ExtendedUnitary);
        assert!((d.eigenphases[0] - C64::from(-1.0)).norm() < 1e-14);
        assert!((d.eigenphases[1] - C64::from(1.0)).norm() < 1e-14);
        assert!(norm(&(d.reassemble().unwrap() - u)) < 1e-14);
        assert!((d.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn growing_diagonal_is_unstable() {
        let d = floquet_decompose(&diag(C64::from(2.0), C64::from(0.5)), &Tolerances::default()).unwrap();
        assert_eq!(d.class, StabilityClass::Unstable);
        let ln2 = 2f64.ln();
        assert!((d.eigenphases[0] - C64::new(0.0, -ln2)).norm() < 1e-14);
        assert!((d.eigenphases[1] - C64::new(0.0, ln2)).norm() < 1e-14);
    }

    #[test]
    fn jordan_block_is_marginal() {
        let u = Mat2::new(ONE, ONE, ZERO, ONE);
        let d = floquet_decompose(&u, &Tolerances::default()).unwrap();
        assert_eq!(d.class, StabilityClass::Marginal);
        assert!(d.condition > 1e6);
        assert!(matches!(stroboscopic_power(&d, 3), Err(Error::MarginalPower)));
    }

    #[test]
    fn classify_examples() {
        let tol = Tolerances::default();
        let r = classify_stability(C64::from(1f64.cos()), &tol);
        assert_eq!(r.class, StabilityClass::ExtendedUnitary);
        assert!((r.beta.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(classify_stability(C64::from(1.2), &tol).class, StabilityClass::Unstable);
        assert_eq!(classify_stability(C64::from(1.0), &tol).class, StabilityClass::Marginal);
        assert_eq!(classify_stability(C64::from(-1.0 + 1e-9), &tol).class, StabilityClass::Marginal);
        assert_eq!(classify_stability(C64::new(0.3, 1e-3), &tol).class, StabilityClass::Unstable);
    }

    #[test]
    fn powers() {
        let u = diag(C64::new(0.0, -1.0).exp(), C64::new(0.0, 1.0).exp());
        let d = floquet_decompose(&u, &Tolerances::default()).unwrap();
        assert_eq!(stroboscopic_power(&d, 0).unwrap(), Mat2::identity());
        let p3 = stroboscopic_power(&d, 3).unwrap();
        assert!(norm(&(p3 - diag(C64::new(0.0, -3.0).exp(), C64::new(0.0, 3.0).exp()))) < 1e-13);
    }

    #[test]
    fn non_normal_extended_unitary() {
        // similar to a unitary diagonal through a skewed basis
        let s = Mat2::new(ONE, C64::new(0.7, 0.2), ZERO, ONE);
        let dmat = diag(C64::new(0.0, 0.4).exp(), C64::new(0.0, -0.4).exp());
        let u = s * dmat * inverse(&s).unwrap();
        let d = floquet_decompose(&u, &Tolerances::default()).unwrap();
        assert_eq!(d.class, StabilityClass::ExtendedUnitary);
        assert!(d.condition > 1.5);
        assert!(norm(&(d.reassemble().unwrap() - u)) < 1e-13);
        let p = stroboscopic_power(&d, 7).unwrap();
        let direct = (0..7).fold(Mat2::identity(), |acc, _| u * acc);
        assert!(norm(&(p - direct)) < 1e-12);
    }
}
