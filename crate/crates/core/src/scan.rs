//! Parameter sweeps: `(γ, μ)` phase diagrams, Floquet-side dispersion
//! extraction against the band side, and butterfly spectra over rational `α`.
//!
//! Every grid point is an independent pure computation. Points are evaluated
//! with rayon and collected in grid order, so results do not depend on the
//! number of worker threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::floquet::{classify_stability, StabilityClass, Tolerances};
use crate::lattice::{dispersion, map_to_potential, nearest_eigenvalue, DispersionPoint, PotentialSign};
use crate::linalg::{trace, C64};
use crate::model::{gcd, make_preset, Preset, RationalAlpha, StaticAmplitude};
use crate::propagator::{floquet_operator, IntegratorSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    ExtendedUnitary,
    Unstable,
    Marginal,
    Failed,
}

impl CellClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CellClass::ExtendedUnitary => "extended_unitary",
            CellClass::Unstable => "unstable",
            CellClass::Marginal => "marginal",
            CellClass::Failed => "failed",
        }
    }

    pub fn is_stable(self) -> bool {
        self == CellClass::ExtendedUnitary
    }
}

impl From<StabilityClass> for CellClass {
    fn from(c: StabilityClass) -> Self {
        match c {
            StabilityClass::ExtendedUnitary => CellClass::ExtendedUnitary,
            StabilityClass::Unstable => CellClass::Unstable,
            StabilityClass::Marginal => CellClass::Marginal,
        }
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "failed" => Ok(CellClass::Failed),
            other => other.parse::<StabilityClass>().map(Into::into),
        }
    }
}

/// Outcome of one Floquet evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointResult {
    pub class: CellClass,
    /// `u₀(T)`; `None` when integration failed.
    pub u0: Option<C64>,
    pub beta: Option<f64>,
    pub im_beta: Option<f64>,
}

/// Propagates one period and classifies the half-trace of `U(T)`.
/// Integration failures become [`CellClass::Failed`].
pub fn evaluate_point(
    preset: Preset,
    amplitude: StaticAmplitude,
    mu: f64,
    alpha: Option<RationalAlpha>,
    settings: &IntegratorSettings,
    tol: &Tolerances,
) -> Result<PointResult> {
    let model = make_preset(preset, C64::from(0.0), mu, alpha)?.with_amplitude(amplitude);
    Ok(match floquet_operator(&model, settings) {
        Ok((u, _)) => {
            let r = classify_stability(trace(&u) / 2.0, tol);
            PointResult { class: r.class.into(), u0: Some(r.u0), beta: r.beta, im_beta: Some(r.im_beta) }
        }
        Err(_) => PointResult { class: CellClass::Failed, u0: None, beta: None, im_beta: None },
    })
}

/// The static-amplitude axis of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaAxis {
    /// Real `γ` values.
    Gamma(Vec<f64>),
    /// Signed `γ²` values; negative entries use `γ = i√(-γ²)`.
    GammaSq(Vec<f64>),
}

impl GammaAxis {
    pub fn len(&self) -> usize {
        match self {
            GammaAxis::Gamma(v) | GammaAxis::GammaSq(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn amplitude(&self, i: usize) -> StaticAmplitude {
        match self {
            GammaAxis::Gamma(v) => StaticAmplitude::real(v[i]),
            GammaAxis::GammaSq(v) => StaticAmplitude::from_energy(v[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagramSpec {
    pub preset: Preset,
    pub alpha: Option<RationalAlpha>,
    pub gamma: GammaAxis,
    pub mu: Vec<f64>,
    pub settings: IntegratorSettings,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseCell {
    pub gamma_sq: f64,
    pub mu: f64,
    #[serde(flatten)]
    pub result: PointResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseDiagram {
    pub n_gamma: usize,
    pub n_mu: usize,
    /// Row-major in `μ`: cell `(i_mu, i_gamma)` at `i_mu * n_gamma + i_gamma`.
    pub cells: Vec<PhaseCell>,
}

fn check_grid(name: &str, v: &[f64], min_len: usize) -> Result<()> {
    if v.len() < min_len {
        return Err(Error::InvalidArgument(format!("{name} grid needs at least {min_len} points, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} grid has non-finite values")));
    }
    Ok(())
}

/// Classifies every `(γ, μ)` cell.
pub fn phase_diagram(spec: &PhaseDiagramSpec) -> Result<PhaseDiagram> {
    let gammas = match &spec.gamma {
        GammaAxis::Gamma(v) | GammaAxis::GammaSq(v) => v,
    };
    check_grid("gamma", gammas, 2)?;
    check_grid("mu", &spec.mu, 2)?;
    spec.settings.validate()?;
    // surface configuration errors once instead of per cell
    make_preset(spec.preset, C64::from(0.0), 0.0, spec.alpha)?;

    let n_gamma = spec.gamma.len();
    let cells = (0..n_gamma * spec.mu.len())
        .into_par_iter()
        .map(|idx| {
            let (i_mu, i_g) = (idx / n_gamma, idx % n_gamma);
            let amp = spec.gamma.amplitude(i_g);
            let mu = spec.mu[i_mu];
            let result = evaluate_point(spec.preset, amp, mu, spec.alpha, &spec.settings, &spec.tolerances)?;
            Ok(PhaseCell { gamma_sq: amp.energy(), mu, result })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseDiagram { n_gamma, n_mu: spec.mu.len(), cells })
}

/// A stable Floquet point `(β, γ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FloquetPoint {
    pub gamma_sq: f64,
    pub beta: f64,
}

/// Records `β = arccos u₀(T)` at every extended-unitary `γ²` of a fixed-`μ` line.
pub fn floquet_dispersion(
    preset: Preset,
    mu: f64,
    alpha: Option<RationalAlpha>,
    gamma_sq: &[f64],
    settings: &IntegratorSettings,
    tol: &Tolerances,
) -> Result<Vec<FloquetPoint>> {
    check_grid("gamma_sq", gamma_sq, 1)?;
    let results = gamma_sq
        .par_iter()
        .map(|&e| evaluate_point(preset, StaticAmplitude::from_energy(e), mu, alpha, settings, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(gamma_sq
        .iter()
        .zip(results)
        .filter(|(_, r)| r.class.is_stable())
        .map(|(&e, r)| FloquetPoint { gamma_sq: e, beta: r.beta.expect("stable points carry beta") })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointDiscrepancy {
    pub gamma_sq: f64,
    pub beta: f64,
    /// Band eigenvalue at `k = β/L` closest to `γ²`.
    pub nearest_band: C64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionComparison {
    pub mu: f64,
    pub lattice_constant: f64,
    pub truncation: usize,
    pub floquet_points: Vec<PointDiscrepancy>,
    /// Bands of `V⁺` on `kL ∈ [0, π]`; `k` is stored as `kL`.
    pub band_curves: Vec<DispersionPoint>,
    pub max_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionSpec {
    pub preset: Preset,
    pub mu: f64,
    pub alpha: Option<RationalAlpha>,
    pub gamma_sq: Vec<f64>,
    pub k_points: usize,
    pub n_bands: usize,
    pub truncation: Option<usize>,
    pub settings: IntegratorSettings,
    pub tolerances: Tolerances,
}

/// Distance from `γ²` to the nearest plane-wave eigenvalue of the mapped `V⁺` at `k = β/L`.
pub fn lattice_discrepancy(
    pot: &crate::lattice::LatticePotential,
    truncation: usize,
    gamma_sq: f64,
    beta: f64,
) -> Result<PointDiscrepancy> {
    let k = beta / pot.lattice_constant();
    let nearest = nearest_eigenvalue(pot, k, truncation, C64::from(gamma_sq))?;
    Ok(PointDiscrepancy { gamma_sq, beta, nearest_band: nearest, deviation: (nearest - gamma_sq).norm() })
}

/// Floquet-side points against direct band curves of the mapped `V⁺`.
pub fn compare_dispersion(spec: &DispersionSpec) -> Result<DispersionComparison> {
    if spec.k_points < 2 {
        return Err(Error::InvalidArgument("k_points must be at least 2".into()));
    }
    let model = make_preset(spec.preset, C64::from(0.0), spec.mu, spec.alpha)?;
    let pot = map_to_potential(&model, PotentialSign::Plus);
    let l = pot.lattice_constant();
    let truncation = spec.truncation.unwrap_or_else(|| pot.default_truncation());

    let points =
        floquet_dispersion(spec.preset, spec.mu, spec.alpha, &spec.gamma_sq, &spec.settings, &spec.tolerances)?;
    let floquet_points = points
        .par_iter()
        .map(|p| lattice_discrepancy(&pot, truncation, p.gamma_sq, p.beta))
        .collect::<Result<Vec<_>>>()?;

    let k_grid: Vec<f64> = (0..spec.k_points).map(|j| std::f64::consts::PI / l * j as f64 / (spec.k_points - 1) as f64).collect();
    let band_curves = dispersion(&pot, &k_grid, spec.n_bands, truncation)?
        .into_iter()
        .map(|p| DispersionPoint { k: p.k * l, ..p })
        .collect();
    let max_discrepancy = floquet_points.iter().map(|p| p.deviation).fold(0.0, f64::max);
    Ok(DispersionComparison { mu: spec.mu, lattice_constant: l, truncation, floquet_points, band_curves, max_discrepancy })
}

/// Reduced fractions `p/q` with `q ≤ q_max` and `lo < p/q ≤ hi`, in increasing order.
pub fn farey_fractions(q_max: u32, lo: f64, hi: f64) -> Vec<RationalAlpha> {
    let mut out = Vec::new();
    for q in 1..=q_max {
        let p_max = (hi * q as f64).floor().max(0.0) as u32;
        for p in 1..=p_max {
            let v = p as f64 / q as f64;
            if gcd(p, q) == 1 && v > lo && v <= hi {
                out.push(RationalAlpha::new(p, q).expect("coprime"));
            }
        }
    }
    out.sort_by(|a, b| (a.p() as u64 * b.q() as u64).cmp(&(b.p() as u64 * a.q() as u64)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButterflySpec {
    pub preset: Preset,
    pub mu: f64,
    pub q_max: u32,
    pub gamma_sq: Vec<f64>,
    /// Half-open `(lo, hi]`.
    pub alpha_range: (f64, f64),
    pub settings: IntegratorSettings,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ButterflyRecord {
    pub p: u32,
    pub q: u32,
    pub alpha: f64,
    pub gamma_sq: f64,
    pub class: CellClass,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ButterflyData {
    pub mu: f64,
    /// Ordered by `α`, then by `γ²` grid position.
    pub records: Vec<ButterflyRecord>,
}

/// Stability of the two-frequency presets over rational `α = p/q`, each
/// evaluated over its full period `q`.
pub fn butterfly(spec: &ButterflySpec) -> Result<ButterflyData> {
    if !spec.preset.needs_alpha() {
        return Err(Error::InvalidArgument(format!("butterfly needs H3 or H4, got {}", spec.preset)));
    }
    if spec.q_max < 1 {
        return Err(Error::InvalidArgument("q_max must be at least 1".into()));
    }
    check_grid("gamma_sq", &spec.gamma_sq, 1)?;
    spec.settings.validate()?;
    let alphas = farey_fractions(spec.q_max, spec.alpha_range.0, spec.alpha_range.1);
    let n = spec.gamma_sq.len();
    let records = (0..alphas.len() * n)
        .into_par_iter()
        .map(|idx| {
            let alpha = alphas[idx / n];
            let e = spec.gamma_sq[idx % n];
            let r = evaluate_point(
                spec.preset,
                StaticAmplitude::from_energy(e),
                spec.mu,
                Some(alpha),
                &spec.settings,
                &spec.tolerances,
            )?;
            Ok(ButterflyRecord { p: alpha.p(), q: alpha.q(), alpha: alpha.value(), gamma_sq: e, class: r.class, beta: r.beta })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ButterflyData { mu: spec.mu, records })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheckReport {
    pub checked: usize,
    pub passed: usize,
    pub tolerance: f64,
    /// Points that failed the check (or whose eigensolve failed).
    pub exceptions: Vec<(ButterflyRecord, Option<PointDiscrepancy>)>,
}

impl CrossCheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }
}

/// Checks every stable butterfly point against the band problem of the
/// mapped `V⁺` (lattice constant `q`) at `k = β/q`.
pub fn cross_check_butterfly(
    preset: Preset,
    data: &ButterflyData,
    truncation: Option<usize>,
    tolerance: f64,
) -> Result<CrossCheckReport> {
    let stable: Vec<&ButterflyRecord> = data.records.iter().filter(|r| r.class.is_stable()).collect();
    let outcomes: Vec<(ButterflyRecord, Option<PointDiscrepancy>)> = stable
        .par_iter()
        .map(|r| {
            let alpha = RationalAlpha::new(r.p, r.q).ok();
            let check = make_preset(preset, C64::from(0.0), data.mu, alpha).ok().and_then(|model| {
                let pot = map_to_potential(&model, PotentialSign::Plus);
                let m = truncation.unwrap_or_else(|| pot.default_truncation());
                lattice_discrepancy(&pot, m, r.gamma_sq, r.beta?).ok()
            });
            (**r, check)
        })
        .collect();
    let passed = outcomes.iter().filter(|(_, d)| d.is_some_and(|d| d.deviation <= tolerance)).count();
    let exceptions = outcomes.into_iter().filter(|(_, d)| !d.is_some_and(|d| d.deviation <= tolerance)).collect();
    Ok(CrossCheckReport { checked: stable.len(), passed, tolerance, exceptions })
}

/// Number of spectral gaps in the column at `alpha`: maximal runs of unstable
/// `γ²` cells with occupied (extended-unitary or marginal) cells on both sides.
pub fn count_gaps(data: &ButterflyData, alpha: RationalAlpha) -> usize {
    let mut column: Vec<&ButterflyRecord> =
        data.records.iter().filter(|r| r.p == alpha.p() && r.q == alpha.q()).collect();
    column.sort_by(|a, b| a.gamma_sq.total_cmp(&b.gamma_sq));
    let occupied: Vec<bool> =
        column.iter().map(|r| matches!(r.class, CellClass::ExtendedUnitary | CellClass::Marginal)).collect();
    let mut gaps = 0;
    let mut seen = false;
    let mut in_gap = false;
    for o in occupied {
        if o {
            if in_gap && seen {
                gaps += 1;
            }
            seen = true;
            in_gap = false;
        } else {
            in_gap = true;
        }
    }
    gaps
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn farey_sequence_small() {
        let f: Vec<String> = farey_fractions(4, 0.0, 1.0).iter().map(|a| a.to_string()).collect();
        assert_eq!(f, ["1/4", "1/3", "1/2", "2/3", "3/4", "1/1"]);
        assert_eq!(farey_fractions(12, 0.0, 1.0).len(), 46);
    }

    #[test]
    fn gap_counting() {
        let mk = |g: f64, c: CellClass| ButterflyRecord { p: 1, q: 2, alpha: 0.5, gamma_sq: g, class: c, beta: None };
        use CellClass::*;
        let classes = [Unstable, ExtendedUnitary, Unstable, Unstable, Marginal, ExtendedUnitary, Unstable, ExtendedUnitary, Unstable];
        let data = ButterflyData { mu: 2.0, records: classes.iter().enumerate().map(|(i, &c)| mk(i as f64, c)).collect() };
        assert_eq!(count_gaps(&data, RationalAlpha::new(1, 2).unwrap()), 2);
        assert_eq!(count_gaps(&data, RationalAlpha::new(1, 3).unwrap()), 0);
    }

    #[test]
    fn static_row_of_phase_diagram() {
        let spec = PhaseDiagramSpec {
            preset: Preset::H1,
            alpha: None,
            gamma: GammaAxis::Gamma(vec![0.0, 0.5, 1.0, std::f64::consts::PI, 4.0]),
            mu: vec![0.0, 2.0],
            settings: IntegratorSettings::default(),
            tolerances: Tolerances::default(),
        };
        let pd = phase_diagram(&spec).unwrap();
        assert_eq!(pd.cells.len(), 10);
        let row0: Vec<CellClass> = pd.cells[..5].iter().map(|c| c.result.class).collect();
        use CellClass::*;
        assert_eq!(row0, [Marginal, ExtendedUnitary, ExtendedUnitary, Marginal, ExtendedUnitary]);
        // μ = 2, γ = 0: U(T) = 1
        assert_eq!(pd.cells[5].result.class, Marginal);
        // μ = 2, γ = 1 sits inside a stable region
        assert_eq!(pd.cells[7].result.class, ExtendedUnitary);
    }

    #[test]
    fn rejects_degenerate_grids() {
        let spec = PhaseDiagramSpec {
            preset: Preset::H1,
            alpha: None,
            gamma: GammaAxis::Gamma(vec![1.0]),
            mu: vec![0.0, 2.0],
            settings: IntegratorSettings::default(),
            tolerances: Tolerances::default(),
        };
        assert!(phase_diagram(&spec).is_err());
    }

    #[test]
    fn failed_cells_do_not_abort() {
        // a tolerance below double precision drives the step size to underflow
        let settings = IntegratorSettings { rel_tol: 1e-30, abs_tol: 1e-32, ..IntegratorSettings::default() };
        let r = evaluate_point(Preset::H1, StaticAmplitude::real(1.0), 2.0, None, &settings, &Tolerances::default());
        assert_eq!(r.unwrap().class, CellClass::Failed);
    }
}
