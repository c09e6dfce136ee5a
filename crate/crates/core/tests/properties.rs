use std::f64::consts::PI;

use nhfloquet::floquet::{classify_stability, floquet_decompose, StabilityClass, Tolerances};
use nhfloquet::lattice::{bands_at_k, map_to_potential, matched_deviation, susy_pair_spectra, PotentialSign};
use nhfloquet::linalg::{det, eigenvalues, norm, spectral_norm, trace, Mat2, C64, ONE};
use nhfloquet::model::{make_preset, Preset, RationalAlpha, StaticAmplitude, TwoLevelModel};
use nhfloquet::propagator::{floquet_operator, propagate_matrix, propagate_pauli_to, reconstruct, IntegratorSettings};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn preset_strategy() -> impl Strategy<Value = Preset> {
    prop::sample::select(Preset::ALL.to_vec())
}

fn alpha_strategy() -> impl Strategy<Value = RationalAlpha> {
    prop::sample::select(vec![(1, 1), (1, 2), (1, 3), (2, 3), (3, 4)])
        .prop_map(|(p, q)| RationalAlpha::new(p, q).unwrap())
}

/// Random preset model; `gamma_sq < 0` selects the imaginary branch.
fn model_strategy() -> impl Strategy<Value = TwoLevelModel> {
    (preset_strategy(), -4.0..9.0f64, 0.0..3.0f64, alpha_strategy()).prop_map(|(p, e, mu, a)| {
        let alpha = p.needs_alpha().then_some(a);
        make_preset(p, C64::from(0.0), mu, alpha).unwrap().with_amplitude(StaticAmplitude::from_energy(e))
    })
}

fn coarse() -> IntegratorSettings {
    IntegratorSettings { dense_samples: 50, ..IntegratorSettings::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, rng_seed: RngSeed::Fixed(0x5eed), ..ProptestConfig::default() })]

    #[test]
    fn drive_is_periodic_and_hamiltonian_traceless(m in model_strategy(), t in 0.0..1.0f64) {
        let period = m.period();
        let t = t * period;
        prop_assert!((m.drive(t + period) - m.drive(t)).norm() < 1e-9 * (1.0 + m.drive(t).norm()));
        prop_assert!(trace(&m.hamiltonian(t)).norm() < 1e-14);
    }

    #[test]
    fn determinant_stays_one(m in model_strategy()) {
        let traj = propagate_matrix(&m, m.period(), &coarse()).unwrap();
        for u in &traj.matrices {
            prop_assert!((det(u) - ONE).norm() < 1e-9 * spectral_norm(u).powi(2).max(1.0));
        }
    }

    #[test]
    fn two_periods_compose(m in model_strategy()) {
        let settings = IntegratorSettings::default().endpoint_only();
        let u1 = propagate_matrix(&m, m.period(), &settings).unwrap().final_matrix();
        let u2 = propagate_matrix(&m, 2.0 * m.period(), &settings).unwrap().final_matrix();
        prop_assert!(norm(&(u2 - u1 * u1)) < 1e-7 * norm(&u1).powi(2).max(1.0));
    }

    #[test]
    fn pauli_and_matrix_paths_agree(m in model_strategy()) {
        let s = coarse();
        let traj = propagate_matrix(&m, m.period(), &s).unwrap();
        let comps = propagate_pauli_to(&m, m.period(), &s).unwrap();
        for (u, c) in traj.matrices.iter().zip(&comps.components) {
            prop_assert!(norm(&(reconstruct(m.frame(), c) - u)) < 1e-8 * norm(u).max(1.0));
        }
    }

    #[test]
    fn hermitian_counterpart_is_unitary(m in model_strategy()) {
        let h = m.hermitian_counterpart();
        let traj = propagate_matrix(&h, h.period(), &coarse()).unwrap();
        for u in &traj.matrices {
            prop_assert!(norm(&(u.adjoint() * u - Mat2::identity())) < 1e-9);
        }
    }

    #[test]
    fn classification_agrees_with_decomposition(m in model_strategy()) {
        let tol = Tolerances::default();
        let (u, _) = floquet_operator(&m, &IntegratorSettings::default()).unwrap();
        let u0 = trace(&u) / 2.0;
        // skip points too close to a threshold to be classified reliably
        let edge = (u0.re.abs() - 1.0).abs();
        prop_assume!(edge > 1e-5 && (u0.im.abs() < 1e-9 || u0.im.abs() > 1e-4));
        let c = classify_stability(u0, &tol).class;
        let d = floquet_decompose(&u, &tol).unwrap().class;
        prop_assert_eq!(c, d);
    }

    #[test]
    fn error_estimate_bounds_actual_error(m in model_strategy()) {
        let loose = IntegratorSettings { rel_tol: 1e-7, abs_tol: 1e-9, ..IntegratorSettings::default() };
        let tight = IntegratorSettings { rel_tol: 1e-12, abs_tol: 1e-14, ..IntegratorSettings::default() };
        let (u_loose, est) = floquet_operator(&m, &loose).unwrap();
        let (u_tight, _) = floquet_operator(&m, &tight).unwrap();
        let est = est.unwrap();
        prop_assert!(est.is_finite() && est >= 0.0);
        let actual = (u_loose - u_tight).iter().map(|z| z.norm()).fold(0.0, f64::max);
        // the accumulated local estimate is an error scale, not a strict bound
        prop_assert!(actual <= 100.0 * est + 1e-10, "actual {actual:e} vs estimate {est:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, rng_seed: RngSeed::Fixed(0x5eed), ..ProptestConfig::default() })]

    #[test]
    fn unstable_growth_rate_matches_floquet_multiplier(gamma_sq in 4.0..30.0f64, mu in 1.5..4.0f64) {
        let m = make_preset(Preset::H1, C64::from(0.0), mu, None).unwrap().with_amplitude(StaticAmplitude::from_energy(gamma_sq));
        let settings = IntegratorSettings::default().endpoint_only();
        let (u, _) = floquet_operator(&m, &settings).unwrap();
        let (l1, l2) = eigenvalues(&u);
        let rate = l1.norm().max(l2.norm()).ln();
        prop_assume!(rate > 0.2);
        // the subdominant multiplier 1/λ fades as |λ|^(-2N)
        let (n0, n1) = (10.0, 30.0);
        let u_a = propagate_matrix(&m, n0, &settings).unwrap().final_matrix();
        let u_b = propagate_matrix(&m, n1, &settings).unwrap().final_matrix();
        let slope = (spectral_norm(&u_b).ln() - spectral_norm(&u_a).ln()) / (n1 - n0);
        prop_assert!((slope - rate).abs() <= 0.05 * rate, "slope {slope} vs {rate}");
    }

    #[test]
    fn superpartners_are_isospectral(mu in 0.0..4.0f64, k in 0.0..PI, h2 in any::<bool>()) {
        let p = if h2 { Preset::H2 } else { Preset::H1 };
        let m = make_preset(p, ONE, mu, None).unwrap();
        let (a, b) = susy_pair_spectra(&m, k, 32).unwrap();
        prop_assert!(matched_deviation(&a.eigenvalues, &b.eigenvalues, 5) < 1e-6);
    }

    #[test]
    fn bands_converge_in_truncation(mu in 0.0..4.0f64, k in 0.0..PI, h2 in any::<bool>()) {
        let p = if h2 { Preset::H2 } else { Preset::H1 };
        let pot = map_to_potential(&make_preset(p, ONE, mu, None).unwrap(), PotentialSign::Plus);
        let m = pot.default_truncation();
        let a = bands_at_k(&pot, k, m).unwrap();
        let b = bands_at_k(&pot, k, m + 16).unwrap();
        prop_assert!(matched_deviation(&a.eigenvalues, &b.eigenvalues, 5) < 1e-8);
    }

    /// `φ = c↑ + c↓` of the first column of `U` solves `-φ'' + V⁺φ = γ²φ`.
    /// Checked in weak form against `w = sin²(πt)` with Simpson's rule and
    /// `φ' = bφ - iγχ`, `χ = c↑ - c↓`, from the first-order equations.
    #[test]
    fn mapped_equation_weak_residual(gamma_sq in -4.0..30.0f64, mu in 0.0..4.0f64, h2 in any::<bool>()) {
        let p = if h2 { Preset::H2 } else { Preset::H1 };
        let m = make_preset(p, C64::from(0.0), mu, None).unwrap().with_amplitude(StaticAmplitude::from_energy(gamma_sq));
        let pot = map_to_potential(&m, PotentialSign::Plus);
        let n = 2000;
        let settings = IntegratorSettings { dense_samples: n + 1, ..IntegratorSettings::default() };
        let traj = propagate_matrix(&m, 1.0, &settings).unwrap();
        let a = m.a();
        let i = C64::new(0.0, 1.0);
        let mut residual = C64::from(0.0);
        let mut scale = 0.0;
        for (j, (t, u)) in traj.times.iter().zip(&traj.matrices).enumerate() {
            let phi = u[(0, 0)] + u[(1, 0)];
            let chi = u[(0, 0)] - u[(1, 0)];
            let dphi = m.drive(*t) * phi - i * a * chi;
            let w = (PI * t).sin().powi(2);
            let dw = PI * (2.0 * PI * t).sin();
            let integrand = -dphi * dw - (pot.eval(*t) - a * a) * phi * w;
            let simpson = if j == 0 || j == n { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            residual += integrand * simpson;
            scale += simpson * ((pot.eval(*t) * phi * w).norm() + (dphi * dw).norm());
        }
        prop_assert!(residual.norm() <= 1e-6 * scale, "residual {} scale {scale}", residual.norm());
    }
}

#[test]
fn stability_class_names_round_trip() {
    for c in [StabilityClass::ExtendedUnitary, StabilityClass::Unstable, StabilityClass::Marginal] {
        assert_eq!(c.as_str().parse::<StabilityClass>().unwrap(), c);
    }
}
