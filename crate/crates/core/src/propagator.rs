//! Time propagation of `i dU/dt = H(t) U`, both for the full 2×2 matrix and
//! for its Pauli components `U = u₀ + Σ uᵢ nᵢ·σ`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, expm_traceless, Mat2, C64, I, ONE, ZERO};
use crate::model::{Frame, TwoLevelModel};
use crate::rk::{Dopri5, State, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Dormand–Prince 5(4) with embedded error control.
    Adaptive,
    /// Fixed-step product `U ← exp(-i h H(t + h/2)) U`, with `h ≤ max_step`.
    MidpointExponential,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Adaptive => "adaptive",
            Method::MidpointExponential => "midpoint-exp",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "adaptive" => Ok(Method::Adaptive),
            "midpoint-exp" => Ok(Method::MidpointExponential),
            other => Err(Error::Parse(format!("unknown method {other:?} (adaptive | midpoint-exp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorSettings {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Sample points per driving period, endpoints included.
    pub dense_samples: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self { method: Method::Adaptive, rel_tol: 1e-10, abs_tol: 1e-12, max_step: 0.05, dense_samples: 1000 }
    }
}

const MAX_STEPS: usize = 50_000_000;

impl IntegratorSettings {
    /// The midpoint-exponential reference with `steps` steps per unit time.
    pub fn reference(steps_per_unit: usize) -> Self {
        Self { method: Method::MidpointExponential, max_step: 1.0 / steps_per_unit as f64, dense_samples: 2, ..Self::default() }
    }

    /// Same settings without intra-period sampling.
    pub fn endpoint_only(&self) -> Self {
        Self { dense_samples: 2, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.rel_tol.is_finite()
            && self.abs_tol.is_finite()
            && self.max_step.is_finite();
        if !ok {
            return Err(Error::InvalidArgument("tolerances and max_step must be positive".into()));
        }
        if self.dense_samples < 2 {
            return Err(Error::InvalidArgument("dense_samples must be at least 2".into()));
        }
        Ok(())
    }

    fn step_control(&self) -> StepControl {
        StepControl { rel_tol: self.rel_tol, abs_tol: self.abs_tol, max_step: self.max_step, max_steps: MAX_STEPS }
    }
}

/// Uniform sample times on `[0, t_end]` at `dense_samples` points per period.
pub fn sample_times(t_end: f64, period: f64, dense_samples: usize) -> Vec<f64> {
    let intervals = ((dense_samples - 1) as f64 * t_end / period).ceil().max(1.0) as usize;
    (0..=intervals).map(|j| if j == intervals { t_end } else { t_end * j as f64 / intervals as f64 }).collect()
}

#[derive(Debug, Clone)]
pub struct PropagatorTrajectory {
    pub times: Vec<f64>,
    pub matrices: Vec<Mat2>,
    /// Accumulated embedded error (adaptive method only).
    pub error_estimate: Option<f64>,
}

impl PropagatorTrajectory {
    pub fn final_matrix(&self) -> Mat2 {
        *self.matrices.last().expect("trajectory has at least two samples")
    }
}

#[derive(Debug, Clone)]
pub struct PauliComponents {
    pub times: Vec<f64>,
    /// `(u₀, u₁, u₂, u₃)` at each sample.
    pub components: Vec<[C64; 4]>,
    pub error_estimate: Option<f64>,
}

impl PauliComponents {
    pub fn final_components(&self) -> [C64; 4] {
        *self.components.last().expect("trajectory has at least two samples")
    }
}

/// `u₀ + Σ uᵢ nᵢ·σ`.
pub fn reconstruct(frame: &Frame, u: &[C64; 4]) -> Mat2 {
    let [n1, n2, n3] = frame.pauli();
    Mat2::identity() * u[0] + n1 * u[1] + n2 * u[2] + n3 * u[3]
}

/// Inverse of [`reconstruct`]: `u₀ = tr U / 2`, `uᵢ = tr(U nᵢ·σ) / 2`.
pub fn decompose(frame: &Frame, m: &Mat2) -> [C64; 4] {
    let [n1, n2, n3] = frame.pauli();
    let tr = |x: Mat2| (x[(0, 0)] + x[(1, 1)]) / 2.0;
    [tr(*m), tr(m * n1), tr(m * n2), tr(m * n3)]
}

fn to_state(m: &Mat2) -> State {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

fn from_state(s: &State) -> Mat2 {
    Mat2::new(s[0], s[1], s[2], s[3])
}

fn check_end(t_end: f64) -> Result<()> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    Ok(())
}

fn matrix_rhs(model: &TwoLevelModel) -> impl Fn(f64, &State) -> State + '_ {
    let [n1, _, n3] = model.frame().pauli();
    let a = model.a();
    move |t, y| {
        let h = n3 * a + n1 * (I * model.drive(t));
        let mh = h * (-I);
        to_state(&(mh * from_state(y)))
    }
}

/// The first-order component system
/// `u̇₀ = b u₁ - i a u₃`, `u̇₁ = b u₀ - a u₂`, `u̇₂ = a u₁ - i b u₃`, `u̇₃ = -i a u₀ + i b u₂`.
pub fn pauli_rhs(a: C64, b: C64, u: &[C64; 4]) -> [C64; 4] {
    [
        b * u[1] - I * a * u[3],
        b * u[0] - a * u[2],
        a * u[1] - I * b * u[3],
        -I * a * u[0] + I * b * u[2],
    ]
}

fn midpoint_product(model: &TwoLevelModel, times: &[f64], max_step: f64) -> Vec<Mat2> {
    let mut u = Mat2::identity();
    let mut out = Vec::with_capacity(times.len());
    out.push(u);
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let n = (span / max_step).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for s in 0..n {
            let tm = w[0] + (s as f64 + 0.5) * h;
            let step = expm_traceless(&(model.hamiltonian(tm) * C64::new(0.0, -h)));
            u = step * u;
        }
        out.push(u);
    }
    out
}

fn integrate_samples<F>(f: &F, y0: State, times: &[f64], settings: &IntegratorSettings) -> Result<(Vec<State>, f64)>
where
    F: Fn(f64, &State) -> State,
{
    let mut rk = Dopri5::new(settings.step_control());
    let mut y = y0;
    let mut out = Vec::with_capacity(times.len());
    out.push(y);
    for w in times.windows(2) {
        rk.advance(f, w[0], w[1], &mut y)?;
        out.push(y);
    }
    Ok((out, rk.error_estimate()))
}

/// Integrates the matrix equation from `U(0) = 1` to `t_end`, sampling
/// uniformly (the integrator restarts exactly at every sample time).
pub fn propagate_matrix(model: &TwoLevelModel, t_end: f64, settings: &IntegratorSettings) -> Result<PropagatorTrajectory> {
    settings.validate()?;
    check_end(t_end)?;
    let times = sample_times(t_end, model.period(), settings.dense_samples);
    if model.profile().is_zero() {
        // constant Hamiltonian: U(t) = exp(-iHt) exactly
        let h = model.hamiltonian(0.0);
        let matrices = times.iter().map(|&t| expm_traceless(&(h * C64::new(0.0, -t)))).collect();
        let error_estimate = (settings.method == Method::Adaptive).then_some(0.0);
        return Ok(PropagatorTrajectory { times, matrices, error_estimate });
    }
    match settings.method {
        Method::MidpointExponential => {
            let matrices = midpoint_product(model, &times, settings.max_step);
            Ok(PropagatorTrajectory { times, matrices, error_estimate: None })
        }
        Method::Adaptive => {
            let rhs = matrix_rhs(model);
            let (states, err) = integrate_samples(&rhs, to_state(&Mat2::identity()), &times, settings)?;
            let matrices = states.iter().map(from_state).collect();
            Ok(PropagatorTrajectory { times, matrices, error_estimate: Some(err) })
        }
    }
}

/// Integrates the component system over `[0, t_end]`.
pub fn propagate_pauli_to(model: &TwoLevelModel, t_end: f64, settings: &IntegratorSettings) -> Result<PauliComponents> {
    settings.validate()?;
    check_end(t_end)?;
    if settings.method == Method::MidpointExponential || model.profile().is_zero() {
        let traj = propagate_matrix(model, t_end, settings)?;
        let components = traj.matrices.iter().map(|m| decompose(model.frame(), m)).collect();
        return Ok(PauliComponents { times: traj.times, components, error_estimate: traj.error_estimate });
    }
    let times = sample_times(t_end, model.period(), settings.dense_samples);
    let a = model.a();
    let rhs = |t: f64, u: &State| pauli_rhs(a, model.drive(t), u);
    let (components, err) = integrate_samples(&rhs, [ONE, ZERO, ZERO, ZERO], &times, settings)?;
    Ok(PauliComponents { times, components, error_estimate: Some(err) })
}

/// Pauli components over one driving period.
pub fn propagate_pauli(model: &TwoLevelModel, settings: &IntegratorSettings) -> Result<PauliComponents> {
    propagate_pauli_to(model, model.period(), settings)
}

/// `U(T)` with no intermediate sampling, plus the error estimate when available.
pub fn floquet_operator(model: &TwoLevelModel, settings: &IntegratorSettings) -> Result<(Mat2, Option<f64>)> {
    let traj = propagate_matrix(model, model.period(), &settings.endpoint_only())?;
    Ok((traj.final_matrix(), traj.error_estimate))
}

/// `u₀(T)` from the component system.
pub fn floquet_trace(model: &TwoLevelModel, settings: &IntegratorSettings) -> Result<C64> {
    Ok(propagate_pauli(model, &settings.endpoint_only())?.final_components()[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumSample {
    pub t: f64,
    pub eigenvalues: [C64; 2],
}

/// Eigenvalues of `U(t)` over one period, paired continuously in `t` by
/// nearest-neighbour matching (ties keep the previous order).
pub fn intra_period_spectrum(model: &TwoLevelModel, settings: &IntegratorSettings) -> Result<Vec<SpectrumSample>> {
    let traj = propagate_matrix(model, model.period(), settings)?;
    let mut out: Vec<SpectrumSample> = Vec::with_capacity(traj.times.len());
    for (t, m) in traj.times.iter().zip(&traj.matrices) {
        let (l1, l2) = eigenvalues(m);
        let pair = match out.last() {
            None => [l1, l2],
            Some(prev) => {
                let [p1, p2] = prev.eigenvalues;
                let keep = (l1 - p1).norm() + (l2 - p2).norm();
                let swap = (l1 - p2).norm() + (l2 - p1).norm();
                if swap < keep {
                    [l2, l1]
                } else {
                    [l1, l2]
                }
            }
        };
        out.push(SpectrumSample { t: *t, eigenvalues: pair });
    }
    Ok(out)
}

/// Counts intervals on which the real parts of the two eigenvalues differ by
/// more than `tol`, bracketed on both sides by samples where they coincide.
pub fn count_split_recombine(samples: &[SpectrumSample], tol: f64) -> usize {
    let coincident: Vec<bool> =
        samples.iter().map(|s| (s.eigenvalues[0].re - s.eigenvalues[1].re).abs() <= tol).collect();
    let mut events = 0;
    let mut seen_coincident = false;
    let mut in_split = false;
    for c in coincident {
        if c {
            if in_split && seen_coincident {
                events += 1;
            }
            in_split = false;
            seen_coincident = true;
        } else {
            in_split = true;
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{det, norm};
    use crate::model::{make_preset, Preset};

    fn h1(gamma: f64, mu: f64) -> TwoLevelModel {
        make_preset(Preset::H1, C64::from(gamma), mu, None).unwrap()
    }

    #[test]
    fn static_sigma_z() {
        let traj = propagate_matrix(&h1(1.0, 0.0), 1.0, &IntegratorSettings::default()).unwrap();
        let expected = Mat2::new(C64::new(0.0, -1.0).exp(), ZERO, ZERO, C64::new(0.0, 1.0).exp());
        assert!(norm(&(traj.final_matrix() - expected)) < 1e-10);
        assert_eq!(traj.matrices[0], Mat2::identity());
        assert_eq!(traj.times.len(), 1000);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
    }

    #[test]
    fn zero_mean_commuting_drive_returns_to_identity() {
        let traj = propagate_matrix(&h1(0.0, 2.0), 1.0, &IntegratorSettings::default()).unwrap();
        assert!(norm(&(traj.final_matrix() - Mat2::identity())) < 1e-9);
    }

    #[test]
    fn pauli_closed_forms() {
        let p = propagate_pauli(&h1(1.0, 0.0), &IntegratorSettings::default()).unwrap();
        for (t, u) in p.times.iter().zip(&p.components).step_by(37) {
            assert!((u[0] - C64::from(t.cos())).norm() < 1e-10);
            assert!((u[3] - C64::new(0.0, -t.sin())).norm() < 1e-10);
            assert!(u[1].norm() < 1e-12 && u[2].norm() < 1e-12);
        }
        let m = h1(0.0, 2.0);
        let p = propagate_pauli(&m, &IntegratorSettings::default()).unwrap();
        for (t, u) in p.times.iter().zip(&p.components).step_by(37) {
            let b = m.profile().integral(*t);
            assert!((u[0] - b.cosh()).norm() < 1e-9);
            assert!((u[1] - b.sinh()).norm() < 1e-9);
        }
        assert!((p.final_components()[0] - ONE).norm() < 1e-9);
    }

    #[test]
    fn midpoint_reference_agrees_with_adaptive() {
        let m = h1(1.0, 2.0);
        let (adaptive, _) = floquet_operator(&m, &IntegratorSettings::default()).unwrap();
        let (reference, _) = floquet_operator(&m, &IntegratorSettings::reference(20_000)).unwrap();
        assert!(norm(&(adaptive - reference)) < 1e-7);
    }

    #[test]
    fn static_spectrum_real_parts_equal_cos_t() {
        let s = intra_period_spectrum(&h1(1.0, 0.0), &IntegratorSettings::default()).unwrap();
        for x in s.iter().step_by(50) {
            assert!((x.eigenvalues[0].re - x.t.cos()).abs() < 1e-9);
            assert!((x.eigenvalues[1].re - x.t.cos()).abs() < 1e-9);
            assert!((x.eigenvalues[0] * x.eigenvalues[1] - ONE).norm() < 1e-9);
        }
        assert_eq!(count_split_recombine(&s, 1e-6), 0);
    }

    #[test]
    fn split_counter() {
        let mk = |d: f64| SpectrumSample { t: 0.0, eigenvalues: [C64::from(1.0 + d), C64::from(1.0 - d)] };
        let s: Vec<_> = [0.0, 0.1, 0.2, 0.0, 0.0, 0.3, 0.0, 0.4].iter().map(|&d| mk(d)).collect();
        assert_eq!(count_split_recombine(&s, 1e-9), 2);
    }

    #[test]
    fn det_is_one_for_h2() {
        let m = make_preset(Preset::H2, C64::from(0.8), 1.5, None).unwrap();
        let traj = propagate_matrix(&m, 1.0, &IntegratorSettings::default()).unwrap();
        for u in &traj.matrices {
            assert!((det(u) - ONE).norm() < 1e-9);
        }
    }

    #[test]
    fn invalid_inputs() {
        let m = h1(1.0, 1.0);
        assert!(propagate_matrix(&m, 0.0, &IntegratorSettings::default()).is_err());
        let bad = IntegratorSettings { dense_samples: 1, ..IntegratorSettings::default() };
        assert!(propagate_matrix(&m, 1.0, &bad).is_err());
    }

    #[test]
    fn sample_times_cover_multiple_periods() {
        let t = sample_times(3.0, 1.0, 11);
        assert_eq!(t.len(), 31);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[30], 3.0);
        assert!((t[10] - 1.0).abs() < 1e-15);
    }
}
