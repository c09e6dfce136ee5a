//! Mapped lattice potentials `V±(x) = b(x)² ± b'(x)` and their Bloch bands.
//!
//! Bands are computed by plane-wave expansion: for quasi-momentum `k` and
//! truncation `M` the `(2M+1)×(2M+1)` matrix
//! `H_nm = (k + 2πn/L)² δ_nm + Ṽ_{n-m}` is diagonalized with a general
//! complex eigensolver, so PT-symmetric complex potentials are handled on the
//! same code path as real ones.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigVals, EigValsh, FactorizeInto, Solve, UPLO};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{C64, I, ZERO};
use crate::model::TwoLevelModel;

/// Default plane-wave truncation for unit lattice constant.
pub const DEFAULT_TRUNCATION: usize = 32;

/// Relative threshold on `|Im E|` for flagging an eigenvalue as real.
pub const REAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialSign {
    Plus,
    Minus,
}

impl PotentialSign {
    fn factor(self) -> f64 {
        match self {
            PotentialSign::Plus => 1.0,
            PotentialSign::Minus => -1.0,
        }
    }
}

impl fmt::Display for PotentialSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PotentialSign::Plus => "plus",
            PotentialSign::Minus => "minus",
        })
    }
}

impl FromStr for PotentialSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plus" | "+" => Ok(PotentialSign::Plus),
            "minus" | "-" => Ok(PotentialSign::Minus),
            other => Err(Error::Parse(format!("unknown potential sign {other:?} (plus | minus)"))),
        }
    }
}

/// `V(x) = Σₙ Ṽₙ e^{i2πnx/L}` with finitely many nonzero `Ṽₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePotential {
    lattice_constant: f64,
    coeffs: BTreeMap<i64, C64>,
    sign: PotentialSign,
}

impl LatticePotential {
    pub fn new(lattice_constant: f64, coeffs: BTreeMap<i64, C64>, sign: PotentialSign) -> Result<Self> {
        if !(lattice_constant.is_finite() && lattice_constant > 0.0) {
            return Err(Error::InvalidArgument(format!("lattice constant must be positive, got {lattice_constant}")));
        }
        if coeffs.values().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Fourier coefficient".into()));
        }
        let coeffs = coeffs.into_iter().filter(|(_, c)| *c != ZERO).collect();
        Ok(Self { lattice_constant, coeffs, sign })
    }

    pub fn zero(lattice_constant: f64) -> Result<Self> {
        Self::new(lattice_constant, BTreeMap::new(), PotentialSign::Plus)
    }

    pub fn lattice_constant(&self) -> f64 {
        self.lattice_constant
    }

    pub fn sign(&self) -> PotentialSign {
        self.sign
    }

    pub fn coefficients(&self) -> &BTreeMap<i64, C64> {
        &self.coeffs
    }

    pub fn coefficient(&self, n: i64) -> C64 {
        self.coeffs.get(&n).copied().unwrap_or(ZERO)
    }

    /// Largest `|n|` with a nonzero coefficient.
    pub fn support(&self) -> usize {
        self.coeffs.keys().map(|n| n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> C64 {
        self.coeffs
            .iter()
            .map(|(&n, &c)| c * (I * (TAU * n as f64 * x / self.lattice_constant)).exp())
            .sum()
    }

    /// Real-valued potential: `Ṽ₋ₙ = conj(Ṽₙ)`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|(&n, &c)| (self.coefficient(-n) - c.conj()).norm() <= tol * c.norm().max(1.0))
    }

    /// Coefficients of `V(x + x₀)`.
    pub fn shifted(&self, x0: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(&n, &c)| (n, c * (I * (TAU * n as f64 * x0 / self.lattice_constant)).exp()))
            .collect();
        Self { coeffs, ..self.clone() }
    }

    /// Truncation used when none is requested: `M = 32`, raised to four times
    /// the potential support for long superlattice periods.
    pub fn default_truncation(&self) -> usize {
        DEFAULT_TRUNCATION.max(4 * self.support())
    }

    /// Plain-text export: key/value header lines then `n,re,im` rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lattice_constant = {:?}", self.lattice_constant);
        let _ = writeln!(s, "sign = {}", self.sign);
        s.push_str("n,re,im\n");
        for (n, c) in &self.coeffs {
            let _ = writeln!(s, "{},{:?},{:?}", n, c.re, c.im);
        }
        s
    }

    /// Parses the format written by [`LatticePotential::to_text`]; `#` lines are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lattice_constant = None;
        let mut sign = PotentialSign::Plus;
        let mut coeffs = BTreeMap::new();
        let mut in_rows = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("potential line {}: {what}: {raw:?}", lineno + 1));
            if in_rows {
                let f: Vec<&str> = line.split(',').map(str::trim).collect();
                if f.len() != 3 {
                    return Err(bad("expected n,re,im"));
                }
                let n: i64 = f[0].parse().map_err(|_| bad("bad index"))?;
                let re: f64 = f[1].parse().map_err(|_| bad("bad real part"))?;
                let im: f64 = f[2].parse().map_err(|_| bad("bad imaginary part"))?;
                if coeffs.insert(n, C64::new(re, im)).is_some() {
                    return Err(bad("duplicate index"));
                }
            } else if line == "n,re,im" {
                in_rows = true;
            } else {
                let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
                match k.trim() {
                    "lattice_constant" => lattice_constant = Some(v.trim().parse().map_err(|_| bad("bad number"))?),
                    "sign" => sign = v.parse()?,
                    _ => return Err(bad("unknown key")),
                }
            }
        }
        let l = lattice_constant.ok_or_else(|| Error::Parse("potential file lacks lattice_constant".into()))?;
        Self::new(l, coeffs, sign)
    }
}

/// Fourier coefficients of `V± = b² ± b'` computed exactly from the
/// profile's harmonics (convolution for `b²`, `i2πn/L` for `b'`).
pub fn map_to_potential(model: &TwoLevelModel, sign: PotentialSign) -> LatticePotential {
    let l = model.period();
    let b = model.profile().exponential_coefficients();
    let mut v: BTreeMap<i64, C64> = BTreeMap::new();
    for (&n, &bn) in &b {
        for (&m, &bm) in &b {
            *v.entry(n + m).or_insert(ZERO) += bn * bm;
        }
    }
    for (&n, &bn) in &b {
        *v.entry(n).or_insert(ZERO) += I * (TAU * n as f64 / l) * bn * sign.factor();
    }
    LatticePotential::new(l, v, sign).expect("model period is positive and coefficients finite")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSolution {
    pub k: f64,
    pub truncation: usize,
    /// Sorted by real part, ties by imaginary part.
    pub eigenvalues: Vec<C64>,
    pub real_flags: Vec<bool>,
}

pub fn is_real_energy(e: C64) -> bool {
    e.im.abs() <= REAL_TOL * e.norm().max(1.0)
}

fn check_k(pot: &LatticePotential, k: f64) -> Result<()> {
    let edge = PI / pot.lattice_constant;
    if !k.is_finite() || k.abs() > edge * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("k = {k} outside the first Brillouin zone |k| ≤ {edge}")));
    }
    Ok(())
}

/// The plane-wave Hamiltonian at `k` with `2m+1` modes.
pub fn plane_wave_matrix(pot: &LatticePotential, k: f64, m: usize) -> Result<Array2<C64>> {
    if m < pot.support() {
        return Err(Error::TruncationTooSmall { m, support: pot.support() });
    }
    let size = 2 * m + 1;
    let g = TAU / pot.lattice_constant;
    let mi = m as i64;
    let mut h = Array2::<C64>::zeros((size, size));
    for i in 0..size {
        let ni = i as i64 - mi;
        let q = k + g * ni as f64;
        h[(i, i)] = C64::from(q * q);
    }
    for (&d, &c) in pot.coefficients() {
        for i in 0..size {
            let j = i as i64 - d;
            if (0..size as i64).contains(&j) {
                h[(i, j as usize)] += c;
            }
        }
    }
    Ok(h)
}

fn sort_spectrum(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// All `2M+1` plane-wave eigenvalues at quasi-momentum `k`.
pub fn bands_at_k(pot: &LatticePotential, k: f64, m: usize) -> Result<BandSolution> {
    check_k(pot, k)?;
    let h = plane_wave_matrix(pot, k, m)?;
    let mut eigenvalues: Vec<C64> = if pot.coefficients().is_empty() {
        // diagonal: exact
        h.diag().to_vec()
    } else {
        h.eigvals().map_err(|e| Error::Eigensolver(e.to_string()))?.to_vec()
    };
    sort_spectrum(&mut eigenvalues);
    let real_flags = eigenvalues.iter().map(|&e| is_real_energy(e)).collect();
    Ok(BandSolution { k, truncation: m, eigenvalues, real_flags })
}

/// Hermitian path for real potentials, used to cross-check [`bands_at_k`].
pub fn bands_at_k_hermitian(pot: &LatticePotential, k: f64, m: usize) -> Result<Vec<f64>> {
    check_k(pot, k)?;
    if !pot.is_real(1e-12) {
        return Err(Error::InvalidArgument("Hermitian band path needs a real potential".into()));
    }
    let h = plane_wave_matrix(pot, k, m)?;
    let mut e = h.eigvalsh(UPLO::Lower).map_err(|e| Error::Eigensolver(e.to_string()))?.to_vec();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Eigenvalue of the plane-wave matrix closest to `target`, by shift-and-invert iteration.
pub fn nearest_eigenvalue(pot: &LatticePotential, k: f64, m: usize, target: C64) -> Result<C64> {
    check_k(pot, k)?;
    let h = plane_wave_matrix(pot, k, m)?;
    let size = h.nrows();
    let mut shifted = h.clone();
    // nudge the shift off an exact eigenvalue so the factorization stays regular
    let sigma = target + C64::new(1e-11 * target.norm().max(1.0), 0.0);
    for i in 0..size {
        shifted[(i, i)] -= sigma;
    }
    let lu = shifted.factorize_into().map_err(|e| Error::Eigensolver(e.to_string()))?;
    let mut x: Array1<C64> = (0..size).map(|i| (I * (0.7 * i as f64)).exp()).collect();
    let mut mu = ZERO;
    for iter in 0..200 {
        let y = lu.solve(&x).map_err(|e| Error::Eigensolver(e.to_string()))?;
        let nrm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !nrm.is_finite() || nrm == 0.0 {
            return Err(Error::Eigensolver("inverse iteration breakdown".into()));
        }
        x = y.mapv(|z| z / nrm);
        let hx = h.dot(&x);
        let next: C64 = x.iter().zip(hx.iter()).map(|(a, b)| a.conj() * b).sum();
        if iter > 0 && (next - mu).norm() <= 1e-13 * next.norm().max(1.0) {
            return Ok(next);
        }
        mu = next;
    }
    Ok(mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub k: f64,
    pub band_index: usize,
    pub energy: C64,
    pub real: bool,
}

/// Lowest `n_bands` bands on a k grid, k-points solved in parallel,
/// output ordered by grid position then band index.
pub fn dispersion(pot: &LatticePotential, k_grid: &[f64], n_bands: usize, m: usize) -> Result<Vec<DispersionPoint>> {
    if n_bands == 0 || n_bands > 2 * m + 1 {
        return Err(Error::InvalidArgument(format!("n_bands = {n_bands} must lie in 1..={}", 2 * m + 1)));
    }
    let per_k: Vec<Result<BandSolution>> = k_grid.par_iter().map(|&k| bands_at_k(pot, k, m)).collect();
    let mut out = Vec::with_capacity(k_grid.len() * n_bands);
    for sol in per_k {
        let sol = sol?;
        for (band_index, (&energy, &real)) in sol.eigenvalues.iter().zip(&sol.real_flags).take(n_bands).enumerate() {
            out.push(DispersionPoint { k: sol.k, band_index, energy, real });
        }
    }
    Ok(out)
}

/// First grid point at which the lowest band stops being real.
pub fn pt_breaking_onset(points: &[DispersionPoint]) -> Option<f64> {
    points.iter().find(|p| p.band_index == 0 && !p.real).map(|p| p.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PtReport {
    pub symmetric: bool,
    /// Shift `x₀` about which all coefficients are real, if one was found on the grid.
    pub center: Option<f64>,
    pub real_potential: bool,
}

/// Looks for a shift `x₀ = jL/n_centers` making every shifted coefficient real,
/// i.e. `V(x₀ - x)* = V(x₀ + x)`. Real potentials are reported symmetric
/// (time reversal alone) even when no parity center lies on the grid.
pub fn pt_check(pot: &LatticePotential, n_centers: usize) -> PtReport {
    let l = pot.lattice_constant();
    let center = (0..n_centers.max(1)).map(|j| j as f64 * l / n_centers.max(1) as f64).find(|&x0| {
        pot.shifted(x0).coefficients().values().all(|c| c.im.abs() <= 1e-10 * c.norm().max(1.0))
    });
    let real_potential = pot.is_real(1e-10);
    PtReport { symmetric: center.is_some() || real_potential, center, real_potential }
}

/// Largest distance from each of the lowest `n` eigenvalues of `a` to the
/// nearest eigenvalue of `b`, and vice versa. Insensitive to the ordering of
/// nearly degenerate or complex-conjugate pairs.
pub fn matched_deviation(a: &[C64], b: &[C64], n: usize) -> f64 {
    let one_way = |x: &[C64], y: &[C64]| {
        let pool = &y[..(n + 2).min(y.len())];
        x.iter().take(n).map(|e| pool.iter().map(|f| (e - f).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Spectra of both superpartners `V⁺` and `V⁻` at the same `k`.
pub fn susy_pair_spectra(model: &TwoLevelModel, k: f64, m: usize) -> Result<(BandSolution, BandSolution)> {
    let plus = map_to_potential(model, PotentialSign::Plus);
    let minus = map_to_potential(model, PotentialSign::Minus);
    Ok((bands_at_k(&plus, k, m)?, bands_at_k(&minus, k, m)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_preset, DrivingProfile, Harmonic, Preset, StaticAmplitude, TwoLevelModel, Frame};

    fn sine_model(mu: f64) -> TwoLevelModel {
        let p = DrivingProfile::new(1.0, vec![Harmonic::sin(1, C64::from(mu))]).unwrap();
        TwoLevelModel::new(StaticAmplitude::real(1.0), p, Frame::canonical())
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn sine_drive_coefficients() {
        let v = map_to_potential(&sine_model(2.0), PotentialSign::Plus);
        assert!(close(v.coefficient(0), C64::from(2.0), 1e-14));
        assert!(close(v.coefficient(1), C64::from(TAU), 1e-14));
        assert!(close(v.coefficient(-1), C64::from(TAU), 1e-14));
        assert!(close(v.coefficient(2), C64::from(-1.0), 1e-14));
        assert!(close(v.coefficient(-2), C64::from(-1.0), 1e-14));
        assert_eq!(v.support(), 2);
    }

    #[test]
    fn zero_drive_maps_to_zero() {
        let m = make_preset(Preset::H1, C64::from(1.0), 0.0, None).unwrap();
        assert!(map_to_potential(&m, PotentialSign::Plus).coefficients().is_empty());
    }

    #[test]
    fn coefficients_reproduce_b_squared_plus_derivative() {
        let m = make_preset(Preset::H2, C64::from(1.0), 1.7, None).unwrap();
        for sign in [PotentialSign::Plus, PotentialSign::Minus] {
            let v = map_to_potential(&m, sign);
            for x in [0.0, 0.21, 0.5, 0.83] {
                let b = m.drive(x);
                let direct = b * b + m.drive_derivative(x) * sign.factor();
                assert!(close(v.eval(x), direct, 1e-12));
            }
        }
    }

    #[test]
    fn free_particle_bands() {
        let v = LatticePotential::zero(1.0).unwrap();
        let s = bands_at_k(&v, 0.0, 2).unwrap();
        let p2 = 4.0 * PI * PI;
        let expected = [0.0, p2, p2, 4.0 * p2, 4.0 * p2];
        for (e, x) in s.eigenvalues.iter().zip(expected) {
            assert!((e - x).norm() <= 1e-10 * x.max(1.0));
        }
        let s = bands_at_k(&v, PI, 2).unwrap();
        assert!((s.eigenvalues[0].re - PI * PI).abs() < 1e-12);
        assert!((s.eigenvalues[1].re - PI * PI).abs() < 1e-12);
        assert_eq!(s.eigenvalues.len(), 5);
    }

    #[test]
    fn truncation_and_zone_errors() {
        let v = map_to_potential(&sine_model(2.0), PotentialSign::Plus);
        assert!(matches!(bands_at_k(&v, 0.0, 1), Err(Error::TruncationTooSmall { .. })));
        assert!(bands_at_k(&v, 4.0, 8).is_err());
    }

    #[test]
    fn hermitian_path_agrees_for_real_potential() {
        let m = make_preset(Preset::H1, C64::from(1.0), 2.0, None).unwrap();
        let v = map_to_potential(&m, PotentialSign::Plus);
        let general = bands_at_k(&v, 0.3, 32).unwrap();
        let herm = bands_at_k_hermitian(&v, 0.3, 32).unwrap();
        for (g, h) in general.eigenvalues.iter().zip(&herm) {
            assert!((g.re - h).abs() < 1e-9 * h.abs().max(1.0));
            assert!(g.im.abs() < 1e-9 * h.abs().max(1.0));
        }
        assert!(general.real_flags.iter().all(|&r| r));
    }

    #[test]
    fn nearest_eigenvalue_matches_full_solve() {
        let m = make_preset(Preset::H2, C64::from(1.0), 4.0, None).unwrap();
        let v = map_to_potential(&m, PotentialSign::Plus);
        let full = bands_at_k(&v, 1.0, 32).unwrap();
        for target in [C64::from(3.0), C64::from(25.0), C64::new(-8.0, 0.5)] {
            let best = full
                .eigenvalues
                .iter()
                .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
                .copied()
                .unwrap();
            let got = nearest_eigenvalue(&v, 1.0, 32, target).unwrap();
            assert!(close(got, best, 1e-8), "{got} vs {best}");
        }
    }

    #[test]
    fn pt_examples() {
        let h2 = make_preset(Preset::H2, C64::from(1.0), 4.0, None).unwrap();
        let r = pt_check(&map_to_potential(&h2, PotentialSign::Plus), 64);
        assert!(r.symmetric && r.center == Some(0.0) && !r.real_potential);

        let r = pt_check(&map_to_potential(&sine_model(2.0), PotentialSign::Plus), 64);
        assert!(r.symmetric && r.center == Some(0.0));

        let mut c = BTreeMap::new();
        c.insert(1, C64::new(1.0, 0.5));
        let broken = LatticePotential::new(1.0, c, PotentialSign::Plus).unwrap();
        assert!(!pt_check(&broken, 64).symmetric);
    }

    #[test]
    fn shifted_h2_potential_recovers_center() {
        let h2 = make_preset(Preset::H2, C64::from(1.0), 4.0, None).unwrap();
        let v = map_to_potential(&h2, PotentialSign::Plus).shifted(0.25);
        let r = pt_check(&v, 64);
        assert!(r.symmetric);
        // centers of V(x) at 0 and L/2 move to 3/4 and 1/4
        let c = r.center.unwrap();
        assert!((c - 0.25).abs() < 1e-12 || (c - 0.75).abs() < 1e-12, "{c}");
    }

    #[test]
    fn text_round_trip() {
        let m = make_preset(Preset::H2, C64::from(1.0), 4.0, None).unwrap();
        let v = map_to_potential(&m, PotentialSign::Minus);
        let back = LatticePotential::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert!(LatticePotential::from_text("sign = plus\nn,re,im\n").is_err());
    }

    #[test]
    fn dispersion_is_ordered_and_complete() {
        let v = LatticePotential::zero(1.0).unwrap();
        let ks: Vec<f64> = (0..11).map(|j| PI * j as f64 / 10.0).collect();
        let d = dispersion(&v, &ks, 3, 8).unwrap();
        assert_eq!(d.len(), 33);
        for p in d.iter().filter(|p| p.band_index == 0) {
            assert!((p.energy.re - p.k * p.k).abs() < 1e-10);
        }
    }
}
