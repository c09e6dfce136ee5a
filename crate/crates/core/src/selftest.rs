//! Fast invariant checks across all modules, run by `nhfloquet selftest`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::floquet::{classify_stability, floquet_decompose, population_trace, StabilityClass, Tolerances};
use crate::lattice::{bands_at_k, map_to_potential, matched_deviation, susy_pair_spectra, LatticePotential, PotentialSign};
use crate::linalg::{det, norm, trace, Mat2, C64, ONE, ZERO};
use crate::model::{make_preset, Preset, RationalAlpha, StaticAmplitude, TwoLevelModel};
use crate::propagator::{
    count_split_recombine, floquet_operator, intra_period_spectrum, propagate_matrix, propagate_pauli_to, reconstruct,
    IntegratorSettings,
};
use crate::scan::{evaluate_point, CellClass};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfTestReport {
    pub checks: Vec<CheckOutcome>,
}

impl SelfTestReport {
    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.passed).count()
    }

    pub fn failed(&self) -> usize {
        self.checks.len() - self.passed()
    }
}

type CheckFn = fn() -> crate::Result<(bool, String)>;

fn sample_models() -> crate::Result<Vec<TwoLevelModel>> {
    let a = RationalAlpha::new(1, 2)?;
    Ok(vec![
        make_preset(Preset::H1, C64::from(1.0), 2.0, None)?,
        make_preset(Preset::H1b, C64::from(0.7), 1.5, None)?,
        make_preset(Preset::H2, C64::new(0.0, 0.8), 3.0, None)?,
        make_preset(Preset::H3, C64::from(1.3), 2.0, Some(a))?,
        make_preset(Preset::H4, C64::from(0.4), 1.0, Some(a))?,
    ])
}

fn determinant() -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for m in sample_models()? {
        let traj = propagate_matrix(&m, m.period(), &IntegratorSettings::default())?;
        worst = traj.matrices.iter().map(|u| (det(u) - ONE).norm()).fold(worst, f64::max);
    }
    Ok((worst <= 1e-9, format!("max |det U - 1| = {worst:e}")))
}

fn hermitian_unitarity() -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for m in sample_models()? {
        let h = m.hermitian_counterpart();
        let traj = propagate_matrix(&h, h.period(), &IntegratorSettings::default())?;
        worst = traj.matrices.iter().map(|u| norm(&(u.adjoint() * u - Mat2::identity()))).fold(worst, f64::max);
    }
    Ok((worst <= 1e-9, format!("max |U^dag U - 1| = {worst:e}")))
}

fn pauli_matrix_agreement() -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let settings = IntegratorSettings::default();
    for m in sample_models()? {
        let direct = propagate_matrix(&m, m.period(), &settings)?.final_matrix();
        let comps = propagate_pauli_to(&m, m.period(), &settings)?.final_components();
        worst = worst.max(norm(&(reconstruct(m.frame(), &comps) - direct)));
    }
    Ok((worst <= 1e-8, format!("max |U_pauli - U_matrix| = {worst:e}")))
}

fn h1_point() -> crate::Result<(bool, String)> {
    let m = make_preset(Preset::H1, C64::from(1.0), 2.0, None)?;
    let settings = IntegratorSettings::default();
    let (u, _) = floquet_operator(&m, &settings)?;
    let class = classify_stability(trace(&u) / 2.0, &Tolerances::default()).class;
    let pops = population_trace(&m, [ONE, ZERO], 2, &settings)?;
    let diff = pops.populations.iter().map(|p| (p[0] - p[1] - 1.0).abs()).fold(0.0, f64::max);
    let max_sum = pops.populations.iter().map(|p| p[0] + p[1]).fold(0.0, f64::max);
    let splits = count_split_recombine(&intra_period_spectrum(&m, &settings)?, 1e-9);
    let ok = class == StabilityClass::ExtendedUnitary && diff <= 1e-7 && max_sum > 1.0 && splits >= 1;
    Ok((ok, format!("class {class}, |dP - 1| <= {diff:e}, max P sum {max_sum:.4}, {splits} split events")))
}

fn static_line() -> crate::Result<(bool, String)> {
    let tol = Tolerances::default();
    let settings = IntegratorSettings::default();
    let mut worst: f64 = 0.0;
    for g in [0.3, 1.0, 2.5] {
        let r = evaluate_point(Preset::H1, StaticAmplitude::real(g), 0.0, None, &settings, &tol)?;
        if r.class != CellClass::ExtendedUnitary {
            return Ok((false, format!("gamma {g}: class {}", r.class)));
        }
        worst = worst.max((r.beta.unwrap_or(f64::NAN) - g).abs());
    }
    Ok((worst <= 1e-9, format!("max |beta - gamma T| = {worst:e}")))
}

fn decomposition() -> crate::Result<(bool, String)> {
    let tol = Tolerances::default();
    let d = floquet_decompose(&Mat2::new(C64::from(2.0), ZERO, ZERO, C64::from(0.5)), &tol)?;
    let j = floquet_decompose(&Mat2::new(ONE, ONE, ZERO, ONE), &tol)?;
    let ok = d.class == StabilityClass::Unstable && j.class == StabilityClass::Marginal;
    Ok((ok, format!("diag(2, 1/2) -> {}, Jordan block -> {}", d.class, j.class)))
}

fn free_bands() -> crate::Result<(bool, String)> {
    let pot = LatticePotential::zero(1.0)?;
    let k = 0.4;
    let sol = bands_at_k(&pot, k, 8)?;
    let mut exact: Vec<f64> = (-8..=8).map(|n| (k + 2.0 * PI * n as f64).powi(2)).collect();
    exact.sort_by(f64::total_cmp);
    let worst = sol.eigenvalues.iter().zip(&exact).map(|(e, x)| (e - x).norm()).fold(0.0, f64::max);
    Ok((worst <= 1e-10, format!("max |E - (k + 2 pi n)^2| = {worst:e}")))
}

fn susy() -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for m in [
        make_preset(Preset::H1, C64::from(1.0), 2.0, None)?,
        make_preset(Preset::H2, C64::from(1.0), 4.0, None)?,
    ] {
        for k in [0.0, 1.0, PI] {
            let m_trunc = map_to_potential(&m, PotentialSign::Plus).default_truncation();
            let (p, q) = susy_pair_spectra(&m, k, m_trunc)?;
            worst = worst.max(matched_deviation(&p.eigenvalues, &q.eigenvalues, 5));
        }
    }
    Ok((worst <= 1e-6, format!("max lowest-5 mismatch = {worst:e}")))
}

fn mapping() -> crate::Result<(bool, String)> {
    let tol = Tolerances::default();
    let settings = IntegratorSettings::default();
    let pot = map_to_potential(&make_preset(Preset::H1, ONE, 2.0, None)?, PotentialSign::Plus);
    let mut worst: f64 = 0.0;
    for e in [1.0, 9.0, 30.0] {
        let r = evaluate_point(Preset::H1, StaticAmplitude::from_energy(e), 2.0, None, &settings, &tol)?;
        if let Some(beta) = r.beta.filter(|_| r.class == CellClass::ExtendedUnitary) {
            let d = crate::scan::lattice_discrepancy(&pot, pot.default_truncation(), e, beta)?;
            worst = worst.max(d.deviation);
        }
    }
    Ok((worst <= 1e-4, format!("max |E_band - gamma^2| = {worst:e}")))
}

const CHECKS: &[(&str, CheckFn)] = &[
    ("determinant_conservation", determinant),
    ("hermitian_unitarity", hermitian_unitarity),
    ("pauli_matrix_agreement", pauli_matrix_agreement),
    ("h1_extended_unitary_point", h1_point),
    ("static_limit_phase", static_line),
    ("floquet_decomposition", decomposition),
    ("free_particle_bands", free_bands),
    ("susy_degeneracy", susy),
    ("floquet_band_mapping", mapping),
];

/// Runs every check; errors count as failures.
pub fn run_selftest() -> SelfTestReport {
    let checks = CHECKS
        .iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
        })
        .collect();
    SelfTestReport { checks }
}
