//! Adaptive Dormand–Prince 5(4) time stepper shared by the cumulant
//! equations (four real unknowns) and the exact density-matrix evolution
//! (thousands of complex unknowns).

use std::ops::{Add, ControlFlow, Mul};

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Scalar type the stepper can operate on.
pub trait Component: Copy + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Component for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Component for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t:e} (h = {h:e}); the system is too stiff for explicit stepping")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {steps} exhausted at t = {t:e}")]
    Budget { t: f64, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Reached,
    Stopped,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Dormand–Prince stepper with its workspace. The step size persists across
/// calls to [`Dopri5::advance`], so a long integration can be split into
/// segments without restarting the controller.
pub struct Dopri5<T: Component> {
    tol: Tolerances,
    h: Option<f64>,
    k: [Vec<T>; 7],
    ytmp: Vec<T>,
    ynew: Vec<T>,
    pub stats: Stats,
}

impl<T: Component> Dopri5<T> {
    pub fn new(dim: usize, tol: Tolerances) -> Self {
        let zeros = || vec![T::zero(); dim];
        Self {
            tol,
            h: None,
            k: [zeros(), zeros(), zeros(), zeros(), zeros(), zeros(), zeros()],
            ytmp: zeros(),
            ynew: zeros(),
            stats: Stats::default(),
        }
    }

    fn error_norm(&self, y: &[T]) -> f64 {
        let mut acc = 0.0;
        for i in 0..y.len() {
            let k = &self.k;
            let err = (k[0][i] * E1
                + k[2][i] * E3
                + k[3][i] * E4
                + k[4][i] * E5
                + k[5][i] * E6
                + k[6][i] * E7)
                .magnitude();
            let scale = self.tol.atol + self.tol.rtol * y[i].magnitude().max(self.ynew[i].magnitude());
            let r = err / scale;
            acc += r * r;
        }
        (acc / y.len().max(1) as f64).sqrt()
    }

    fn initial_step(&self, y: &[T], f0: &[T]) -> f64 {
        let mut d0: f64 = 0.0;
        let mut d1: f64 = 0.0;
        for (yi, fi) in y.iter().zip(f0) {
            let scale = self.tol.atol + self.tol.rtol * yi.magnitude();
            d0 += (yi.magnitude() / scale).powi(2);
            d1 += (fi.magnitude() / scale).powi(2);
        }
        let n = y.len().max(1) as f64;
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
    }

    /// Integrates `y' = f(t, y)` from `*t` to `t_end`. After every accepted
    /// step the observer sees the new time, state and derivative, and may
    /// stop the integration early.
    pub fn advance<F, O>(
        &mut self,
        f: &mut F,
        t: &mut f64,
        y: &mut [T],
        t_end: f64,
        mut observer: O,
    ) -> Result<Outcome, OdeError>
    where
        F: FnMut(f64, &[T], &mut [T]),
        O: FnMut(f64, &[T], &[T]) -> ControlFlow<()>,
    {
        let n = y.len();
        f(*t, y, &mut self.k[0]);
        self.stats.rhs_evals += 1;
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(y, &self.k[0]),
        };
        let mut steps = 0usize;

        while *t < t_end {
            if steps >= self.tol.max_steps {
                return Err(OdeError::Budget { t: *t, steps });
            }
            steps += 1;

            let remaining = t_end - *t;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            if hs <= 16.0 * f64::EPSILON * t.abs().max(1e-300) {
                return Err(OdeError::StepUnderflow { t: *t, h: hs });
            }

            self.stages(f, *t, y, hs);
            self.stats.rhs_evals += 6;

            let finite = self.ynew.iter().all(|v| v.is_finite());
            let err = if finite { self.error_norm(y) } else { f64::INFINITY };

            if err <= 1.0 {
                *t = if last { t_end } else { *t + hs };
                y.copy_from_slice(&self.ynew);
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                self.stats.accepted += 1;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // don't let a short final step shrink the controller's step
                h = if last { h.max(hs * factor) } else { hs * factor };
                if let ControlFlow::Break(()) = observer(*t, y, &self.k[0]) {
                    self.h = Some(h);
                    return Ok(Outcome::Stopped);
                }
            } else {
                self.stats.rejected += 1;
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                h = hs * factor;
            }
        }
        debug_assert_eq!(y.len(), n);
        self.h = Some(h);
        Ok(Outcome::Reached)
    }

    fn stages<F>(&mut self, f: &mut F, t: f64, y: &[T], h: f64)
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ytmp = &mut self.ytmp;

        for i in 0..n {
            ytmp[i] = y[i] + k1[i] * (h * A21);
        }
        f(t + C2 * h, ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(t + C3 * h, ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(t + C4 * h, ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(t + C5 * h, ytmp, k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        f(t + h, ytmp, k6);
        for i in 0..n {
            self.ynew[i] = y[i]
                + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        f(t + h, &self.ynew, k7);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut stepper = Dopri5::new(1, Tolerances::uniform(1e-10));
        let mut y = [1.0];
        let mut t = 0.0;
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -2.0 * y[0];
        stepper
            .advance(&mut rhs, &mut t, &mut y, 3.0, |_, _, _| ControlFlow::Continue(()))
            .unwrap();
        assert_eq!(t, 3.0);
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn complex_rotation_and_segments() {
        let omega = 3.0;
        let mut stepper = Dopri5::new(1, Tolerances::uniform(1e-11));
        let mut y = [C64::new(1.0, 0.0)];
        let mut t = 0.0;
        let mut rhs = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = y[0] * C64::new(-0.5, omega);
        for k in 1..=10 {
            let target = 0.4 * k as f64;
            stepper
                .advance(&mut rhs, &mut t, &mut y, target, |_, _, _| ControlFlow::Continue(()))
                .unwrap();
            let exact = (C64::new(-0.5, omega) * target).exp();
            assert!((y[0] - exact).norm() < 1e-9, "t={target}");
        }
    }

    #[test]
    fn observer_can_stop() {
        let mut stepper = Dopri5::new(1, Tolerances::uniform(1e-8));
        let mut y = [1.0];
        let mut t = 0.0;
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let out = stepper
            .advance(&mut rhs, &mut t, &mut y, 100.0, |_, _, dy| {
                if dy[0].abs() < 1e-3 {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            })
            .unwrap();
        assert_eq!(out, Outcome::Stopped);
        assert!(t < 100.0 && y[0] < 1e-3);
    }

    #[test]
    fn blow_up_reports_underflow() {
        let mut stepper = Dopri5::new(1, Tolerances::uniform(1e-8));
        let mut y = [1.0];
        let mut t = 0.0;
        // y' = y^2 blows up at t = 1
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let err = stepper
            .advance(&mut rhs, &mut t, &mut y, 2.0, |_, _, _| ControlFlow::Continue(()))
            .unwrap_err();
        match err {
            OdeError::StepUnderflow { t, .. } => assert!((t - 1.0).abs() < 1e-3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
