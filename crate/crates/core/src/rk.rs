//! Adaptive Dormand–Prince 5(4) stepping for small complex linear systems.

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

pub type State = [C64; 4];

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Fifth-order weights (identical to the last stage row, so the scheme is FSAL).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];

const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

/// Stateful stepper; the step size and the FSAL derivative carry over
/// between consecutive [`Dopri5::advance`] calls.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    ctl: StepControl,
    h: Option<f64>,
    fsal: Option<(f64, State)>,
    steps: usize,
    error_sum: f64,
}

/// `y + h Σⱼ wⱼ kⱼ` over the first `w.len()` stages.
fn combine(y: &State, k: &[State; 7], w: &[f64], h: f64) -> State {
    let mut out = *y;
    for (wj, kj) in w.iter().zip(k) {
        if *wj != 0.0 {
            let s = wj * h;
            for i in 0..4 {
                out[i] += kj[i] * s;
            }
        }
    }
    out
}

impl Dopri5 {
    pub fn new(ctl: StepControl) -> Self {
        Self { ctl, h: None, fsal: None, steps: 0, error_sum: 0.0 }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Sum over accepted steps of the largest embedded local error component.
    pub fn error_estimate(&self) -> f64 {
        self.error_sum
    }

    /// Integrates `y` from `t0` to exactly `t1`.
    pub fn advance<F>(&mut self, f: &F, t0: f64, t1: f64, y: &mut State) -> Result<()>
    where
        F: Fn(f64, &State) -> State,
    {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let mut t = t0;
        let mut h = self.h.unwrap_or(span.min(self.ctl.max_step) * 0.1).min(self.ctl.max_step);
        let mut k1 = match self.fsal {
            Some((tf, k)) if tf == t0 => k,
            _ => f(t, y),
        };
        let mut rejected = false;

        while t < t1 {
            if self.steps >= self.ctl.max_steps {
                return Err(Error::TooManySteps { t, max_steps: self.ctl.max_steps });
            }
            let last = t + h >= t1 - 1e-12 * span;
            let h_try = if last { t1 - t } else { h };
            if h_try < 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::StepUnderflow { t, h: h_try });
            }

            let mut k = [[ZERO; 4]; 7];
            k[0] = k1;
            for s in 1..7 {
                let ys = combine(y, &k, &A[s][..s], h_try);
                k[s] = f(t + C[s] * h_try, &ys);
            }
            let y5 = combine(y, &k, &B5, h_try);
            let y4 = combine(y, &k, &B4, h_try);

            let mut err: f64 = 0.0;
            let mut err_abs: f64 = 0.0;
            for i in 0..4 {
                let e = (y5[i] - y4[i]).norm();
                let scale = self.ctl.abs_tol + self.ctl.rel_tol * y[i].norm().max(y5[i].norm());
                err = err.max(e / scale);
                err_abs = err_abs.max(e);
            }
            if !err.is_finite() {
                return Err(Error::StepUnderflow { t, h: h_try });
            }

            if err <= 1.0 {
                t = if last { t1 } else { t + h_try };
                *y = y5;
                k1 = k[6];
                self.steps += 1;
                self.error_sum += err_abs;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let grown = if rejected { h_try.min(h) } else { h_try * fac };
                // keep the pre-clamp step when the last step was shortened to hit t1
                h = if last { h.max(grown) } else { grown }.min(self.ctl.max_step);
                rejected = false;
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                h = h_try * fac;
                rejected = true;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        self.h = Some(h);
        self.fsal = Some((t1, k1));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctl(rel_tol: f64) -> StepControl {
        StepControl { rel_tol, abs_tol: rel_tol * 1e-2, max_step: 1.0, max_steps: 1_000_000 }
    }

    #[test]
    fn tableau_row_sums_match_nodes() {
        for s in 0..7 {
            let sum: f64 = A[s].iter().sum();
            assert!((sum - C[s]).abs() < 1e-14, "row {s}");
        }
        assert!((B5.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((B4.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_growth_and_rotation() {
        // y' = diag(λ) y with complex λ
        let lam = [C64::new(0.3, 2.0), C64::new(-1.0, 0.5), C64::new(0.0, -7.0), C64::new(1.0, 0.0)];
        let f = |_t: f64, y: &State| {
            let mut d = *y;
            for i in 0..4 {
                d[i] = lam[i] * y[i];
            }
            d
        };
        let mut y = [C64::from(1.0); 4];
        let mut rk = Dopri5::new(ctl(1e-11));
        rk.advance(&f, 0.0, 2.0, &mut y).unwrap();
        for i in 0..4 {
            let exact = (lam[i] * 2.0).exp();
            assert!((y[i] - exact).norm() < 1e-9 * exact.norm().max(1.0), "{i}: {} vs {}", y[i], exact);
        }
    }

    #[test]
    fn restarts_land_exactly_and_agree_with_one_shot() {
        let f = |t: f64, y: &State| [y[1], -y[0] * (1.0 + t.sin()), ZERO, ZERO];
        let mut one = [C64::from(1.0), ZERO, ZERO, ZERO];
        Dopri5::new(ctl(1e-12)).advance(&f, 0.0, 3.0, &mut one).unwrap();
        let mut pieces = [C64::from(1.0), ZERO, ZERO, ZERO];
        let mut rk = Dopri5::new(ctl(1e-12));
        for j in 0..30 {
            rk.advance(&f, j as f64 * 0.1, (j + 1) as f64 * 0.1, &mut pieces).unwrap();
        }
        assert!((one[0] - pieces[0]).norm() < 1e-9);
    }

    #[test]
    fn fifth_order_convergence() {
        // fixed steps through max_step with loose tolerance
        let f = |t: f64, y: &State| [y[0] * C64::new(t.cos(), 1.0), ZERO, ZERO, ZERO];
        let exact = (C64::new(1.0f64.sin(), 1.0)).exp();
        let run = |h: f64| {
            let mut y = [C64::from(1.0), ZERO, ZERO, ZERO];
            let c = StepControl { rel_tol: 1.0, abs_tol: 1.0, max_step: h, max_steps: 1_000_000 };
            Dopri5::new(c).advance(&f, 0.0, 1.0, &mut y).unwrap();
            (y[0] - exact).norm()
        };
        let (e1, e2) = (run(0.1), run(0.05));
        let order = (e1 / e2).log2();
        assert!(order > 4.6 && order < 5.6, "observed order {order}");
    }

    #[test]
    fn step_budget_is_enforced() {
        let f = |_t: f64, y: &State| [y[0] * C64::new(0.0, 1e4), ZERO, ZERO, ZERO];
        let mut y = [C64::from(1.0), ZERO, ZERO, ZERO];
        let c = StepControl { rel_tol: 1e-12, abs_tol: 1e-14, max_step: 1.0, max_steps: 50 };
        assert!(matches!(Dopri5::new(c).advance(&f, 0.0, 1.0, &mut y), Err(Error::TooManySteps { .. })));
    }
}
