//! Second-order cumulant equations for two pumped ensembles sharing a
//! collective decay channel.
//!
//! The closed set tracks three symmetric expectation values: the inversion
//! `sz = <σ1^z>`, the coherence between two atoms of the same ensemble
//! `intra = <σ1^+ σ2^->` and the coherence between ensembles
//! `cross = <σA1^+ σB1^->`. Third-order cumulants are dropped and both
//! `<σ^z σ^z>` correlators (intra- and cross-ensemble) are closed as `sz²`.

use std::ops::ControlFlow;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;
use crate::ode::{Dopri5, OdeError, Tolerances};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CumulantError {
    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),
    #[error("tolerance and end time must be positive (tol = {tol:e}, t_end = {t_end:e})")]
    BadHorizon { tol: f64, t_end: f64 },
    #[error("steady state not converged: scaled residual {residual:e} after {iterations} Newton iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("pump rate must be positive for the thermodynamic formula")]
    ZeroPump,
    #[error("thermodynamic inversion {sz} is not below 1; pump too strong for the leading-order formula")]
    OutOfValidity { sz: f64 },
}

/// The closed second-order cumulant set. Also used for its time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantState {
    pub sz: f64,
    pub intra: C64,
    pub cross: C64,
}

pub type CumulantDerivative = CumulantState;

impl CumulantState {
    pub fn new(sz: f64, intra: C64, cross: C64) -> Self {
        Self { sz, intra, cross }
    }

    /// Every atom in the ground state, no coherence.
    pub fn ground() -> Self {
        Self::new(-1.0, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// Default starting point for time marching: zero inversion plus a small
    /// real coherence seed that moves the flow off the incoherent manifold.
    pub fn seed() -> Self {
        Self::new(0.0, C64::new(1e-3, 0.0), C64::new(1e-3, 0.0))
    }

    fn to_vec(self) -> [f64; 5] {
        [self.sz, self.intra.re, self.intra.im, self.cross.re, self.cross.im]
    }

    fn from_vec(v: &[f64]) -> Self {
        Self::new(v[0], C64::new(v[1], v[2]), C64::new(v[3], v[4]))
    }

    fn newton_vec(self) -> Vector4<f64> {
        Vector4::new(self.sz, self.intra.re, self.cross.re, self.cross.im)
    }

    fn from_newton(v: &Vector4<f64>) -> Self {
        Self::new(v[0], C64::new(v[1], 0.0), C64::new(v[2], v[3]))
    }

    /// Euclidean norm over the five real components.
    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn conj(self) -> Self {
        Self::new(self.sz, self.intra.conj(), self.cross.conj())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let a = self.to_vec();
        let b = other.to_vec();
        a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

/// Time derivative of the cumulant set.
pub fn cumulant_rhs(state: &CumulantState, params: &ModelParams) -> CumulantDerivative {
    let g = params.gamma_c;
    let n = params.n_f64();
    let w = params.w;
    let CumulantState { sz, intra, cross } = *state;
    let cross_sum = cross + cross.conj();
    let sz_source = 0.5 * g * (sz * sz + sz);

    let d_sz = -g * (sz + 1.0) - w * (sz - 1.0) - 2.0 * g * (n - 1.0) * intra.re - g * n * cross_sum.re;
    let d_intra = -(w + g) * intra
        + sz_source
        + g * (n - 2.0) * sz * intra
        + 0.5 * g * n * sz * cross_sum;
    let d_cross = -C64::new(w + g, -params.delta) * cross + sz_source + g * (n - 1.0) * sz * (cross + intra);

    CumulantState::new(d_sz, d_intra, d_cross)
}

/// Residual norm in units of the system's rate scale.
pub fn scaled_residual(state: &CumulantState, params: &ModelParams) -> f64 {
    cumulant_rhs(state, params).norm() / params.rate_scale()
}

/// Analytic Jacobian of the right-hand side with respect to
/// `(sz, Re intra, Re cross, Im cross)`, assuming a real `intra`.
pub fn jacobian(state: &CumulantState, params: &ModelParams) -> Matrix4<f64> {
    let g = params.gamma_c;
    let n = params.n_f64();
    let w = params.w;
    let d = params.delta;
    let s = state.sz;
    let x = state.intra.re;
    let a = state.cross.re;
    let b = state.cross.im;
    let diag = -(w + g) + g * (n - 1.0) * s;

    #[rustfmt::skip]
    let jac = Matrix4::new(
        -g - w,                                          -2.0 * g * (n - 1.0),        -2.0 * g * n,  0.0,
        0.5 * g * (2.0 * s + 1.0) + g * (n - 2.0) * x + g * n * a,
                                                         -(w + g) + g * (n - 2.0) * s, g * n * s,    0.0,
        0.5 * g * (2.0 * s + 1.0) + g * (n - 1.0) * (a + x),
                                                         g * (n - 1.0) * s,           diag,          -d,
        g * (n - 1.0) * b,                               0.0,                         d,             diag,
    );
    jac
}

/// Largest real part among the linearization's eigenvalues, including the
/// decoupled `Im intra` direction. Negative means linearly stable.
pub fn max_growth_rate(state: &CumulantState, params: &ModelParams) -> f64 {
    let jac = jacobian(state, params);
    let im_intra = -(params.w + params.gamma_c) + params.gamma_c * (params.n_f64() - 2.0) * state.sz;
    jac.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(im_intra, f64::max)
}

/// Ways a cumulant solution can step outside the approximation's validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Diagnostic {
    /// `sz` outside `[-1, 1]`.
    Unphysical { sz: f64 },
    /// A coherence larger than the spin-1/2 bound `(1 + sz) / 2`.
    CoherenceBound {
        which: String,
        magnitude: f64,
        bound: f64,
    },
    /// The converged root is not linearly stable.
    UnstableRoot { max_growth_rate: f64 },
    /// Newton from another seed landed on a different root.
    AlternateRoot { state: CumulantState },
}

/// Physicality and Cauchy–Schwarz checks on a state.
pub fn check_invariants(state: &CumulantState, tol: f64) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !(state.sz >= -1.0 - tol && state.sz <= 1.0 + tol) {
        out.push(Diagnostic::Unphysical { sz: state.sz });
    }
    let bound = 0.5 * (1.0 + state.sz);
    for (which, value) in [("intra", state.intra), ("cross", state.cross)] {
        if value.norm() > bound + tol {
            out.push(Diagnostic::CoherenceBound {
                which: which.to_string(),
                magnitude: value.norm(),
                bound,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CumulantState>,
    /// Invariant violations of the final state, if any.
    pub breakdown: Vec<Diagnostic>,
}

impl Trajectory {
    pub fn last(&self) -> &CumulantState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

fn rhs_vec(params: &ModelParams) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    move |_t, y, dy| {
        let d = cumulant_rhs(&CumulantState::from_vec(y), params).to_vec();
        dy.copy_from_slice(&d);
    }
}

/// Adaptive explicit integration, recording every accepted step.
pub fn integrate(
    initial: CumulantState,
    params: &ModelParams,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory, CumulantError> {
    if !(tol > 0.0 && t_end > 0.0) {
        return Err(CumulantError::BadHorizon { tol, t_end });
    }
    let mut y = initial.to_vec();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![initial];
    let mut stepper = Dopri5::new(5, Tolerances::uniform(tol));
    stepper.advance(&mut rhs_vec(params), &mut t, &mut y, t_end, |t, y, _| {
        times.push(t);
        states.push(CumulantState::from_vec(y));
        ControlFlow::Continue(())
    })?;
    let breakdown = check_invariants(states.last().unwrap(), 1e3 * tol);
    Ok(Trajectory {
        times,
        states,
        breakdown,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateOptions {
    /// Required scaled residual (see [`scaled_residual`]).
    pub tol: f64,
    /// Scaled residual of the first hand-over from time marching to Newton.
    pub first_handover: f64,
    /// Tightest planned hand-over; one further attempt is made at 1e-3 of it
    /// if every earlier Newton solve landed on an unstable root.
    pub march_tol: f64,
    /// Local error tolerance of the time marcher. The march only has to reach
    /// the right basin; Newton does the polishing.
    pub integrator_tol: f64,
    /// Marching horizon in units of 1/γc.
    pub max_march_time: f64,
    pub max_steps: usize,
    pub max_newton: usize,
    pub seed: CumulantState,
    /// Further starting points whose roots are compared with the primary one.
    pub extra_seeds: Vec<CumulantState>,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            first_handover: 1e-1,
            march_tol: 1e-8,
            integrator_tol: 1e-6,
            max_march_time: 1e4,
            max_steps: 20_000_000,
            max_newton: 60,
            seed: CumulantState::seed(),
            extra_seeds: Vec::new(),
        }
    }
}

impl SteadyStateOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub state: CumulantState,
    /// Scaled residual of the returned state.
    pub residual: f64,
    /// Marching time used before Newton, in the caller's time units.
    pub march_time: f64,
    pub newton_iterations: usize,
    pub max_growth_rate: f64,
    pub stable: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Steady state with default options and the given residual tolerance.
pub fn steady_state(params: &ModelParams, tol: f64) -> Result<SteadyState, CumulantError> {
    steady_state_with(params, &SteadyStateOptions::with_tol(tol))
}

pub fn steady_state_with(
    params: &ModelParams,
    opts: &SteadyStateOptions,
) -> Result<SteadyState, CumulantError> {
    let p = params.reduced();

    if p.w == 0.0 {
        let state = CumulantState::ground();
        let growth = max_growth_rate(&state, &p);
        return Ok(SteadyState {
            state,
            residual: scaled_residual(&state, &p),
            march_time: 0.0,
            newton_iterations: 0,
            max_growth_rate: growth,
            stable: growth <= 0.0,
            diagnostics: Vec::new(),
        });
    }

    let (state, march_time, iterations) = march_and_refine(&p, opts.seed, opts)?;
    let growth = max_growth_rate(&state, &p);

    let mut diagnostics = check_invariants(&state, 1e-9);
    if growth > 0.0 {
        diagnostics.push(Diagnostic::UnstableRoot {
            max_growth_rate: growth,
        });
    }
    for seed in &opts.extra_seeds {
        if let Ok((other, _, _)) = march_and_refine(&p, *seed, opts) {
            if other.distance(&state) > 1e-6 {
                diagnostics.push(Diagnostic::AlternateRoot { state: other });
            }
        }
    }

    Ok(SteadyState {
        state,
        residual: scaled_residual(&state, &p),
        march_time: march_time / params.gamma_c,
        newton_iterations: iterations,
        max_growth_rate: growth * params.gamma_c,
        stable: growth <= 0.0,
        diagnostics,
    })
}

/// Marches from `seed` and tries Newton at successively tighter hand-over
/// residuals, continuing the same trajectory between attempts. The first
/// linearly stable root is returned; the last root found otherwise.
fn march_and_refine(
    p: &ModelParams,
    seed: CumulantState,
    opts: &SteadyStateOptions,
) -> Result<(CumulantState, f64, usize), CumulantError> {
    let scale = p.rate_scale();
    let mut y = seed.to_vec();
    let mut t = 0.0;
    let mut stepper = Dopri5::new(
        5,
        Tolerances {
            rtol: opts.integrator_tol,
            atol: opts.integrator_tol,
            max_steps: opts.max_steps,
        },
    );
    if let Some((state, t, it)) = pseudo_transient(p, seed, opts) {
        if max_growth_rate(&state, p) <= 0.0 {
            return Ok((state, t, it));
        }
    }

    let last_handover = opts.march_tol * 1e-3;
    let mut handover = opts.first_handover.max(last_handover);
    let mut iterations = 0;
    let mut found: Option<CumulantState> = None;
    let mut last_err = None;
    loop {
        let march = stepper.advance(&mut rhs_vec(p), &mut t, &mut y, opts.max_march_time, |_, _, dy| {
            let norm = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= handover * scale {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        let exhausted = match march {
            Ok(crate::ode::Outcome::Stopped) => false,
            Ok(_) | Err(OdeError::Budget { .. }) => true,
            Err(e) => return Err(e.into()),
        };

        let mut marched = CumulantState::from_vec(&y);
        // Im intra decays independently of the Newton unknowns.
        marched.intra.im = 0.0;
        match newton(p, marched, opts) {
            Ok((state, it)) => {
                iterations += it;
                if max_growth_rate(&state, p) <= 0.0 {
                    return Ok((state, t, iterations));
                }
                found = Some(state);
            }
            Err(e) => last_err = Some(e),
        }
        if exhausted || handover <= last_handover {
            break;
        }
        handover = (handover * 1e-2).max(last_handover);
    }
    match (found, last_err) {
        (Some(state), _) => Ok((state, t, iterations)),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("every attempt either finds a root or fails"),
    }
}

const PTC_MAX_STEPS: usize = 2000;

/// Pseudo-transient continuation from `seed`: implicit Euler steps
/// `(I/dt − J)·Δv = F(v)` whose step size grows as the residual falls, so the
/// iteration follows the flow at first and turns into Newton near the root.
/// Returns the root, the pseudo-time covered and the number of steps.
fn pseudo_transient(
    p: &ModelParams,
    seed: CumulantState,
    opts: &SteadyStateOptions,
) -> Option<(CumulantState, f64, usize)> {
    let scale = p.rate_scale();
    let residual_vec = |v: &Vector4<f64>| {
        let d = cumulant_rhs(&CumulantState::from_newton(v), p);
        Vector4::new(d.sz, d.intra.re, d.cross.re, d.cross.im)
    };
    let mut v = seed.newton_vec();
    let mut f = residual_vec(&v);
    let mut res = f.norm() / scale;
    let mut dt = 1.0 / scale;
    let mut t = 0.0;
    for it in 0..PTC_MAX_STEPS {
        if res <= opts.tol {
            return Some((CumulantState::from_newton(&v), t, it));
        }
        let jac = jacobian(&CumulantState::from_newton(&v), p);
        let lhs = Matrix4::identity() / dt - jac;
        let step = lhs.lu().solve(&f)?;
        let trial = v + step;
        let ft = residual_vec(&trial);
        let rt = ft.norm() / scale;
        if !(rt.is_finite() && rt < 2.0 * res) {
            dt *= 0.25;
            continue;
        }
        t += dt;
        // the flow may pass through regions of growing residual; hold dt there
        dt *= (res / rt).clamp(1.0, 2.0);
        v = trial;
        f = ft;
        res = rt;
    }
    None
}

fn newton(
    p: &ModelParams,
    start: CumulantState,
    opts: &SteadyStateOptions,
) -> Result<(CumulantState, usize), CumulantError> {
    let scale = p.rate_scale();
    let residual_vec = |v: &Vector4<f64>| {
        let d = cumulant_rhs(&CumulantState::from_newton(v), p);
        Vector4::new(d.sz, d.intra.re, d.cross.re, d.cross.im)
    };
    let mut v = start.newton_vec();
    let mut f = residual_vec(&v);
    let mut res = f.norm() / scale;
    for it in 0..opts.max_newton {
        if res <= opts.tol {
            return Ok((CumulantState::from_newton(&v), it));
        }
        let jac = jacobian(&CumulantState::from_newton(&v), p);
        let Some(step) = jac.lu().solve(&f) else {
            break;
        };
        // backtracking on the residual norm
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = v - step * lambda;
            let ft = residual_vec(&trial);
            let rt = ft.norm() / scale;
            if rt.is_finite() && rt < res {
                v = trial;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res <= opts.tol {
        Ok((CumulantState::from_newton(&v), opts.max_newton))
    } else {
        Err(CumulantError::NonConvergence {
            residual: res,
            iterations: opts.max_newton,
        })
    }
}

/// Leading-order-in-1/N inversion:
/// `w/(2Nγc)` at zero detuning, `(w²+δ²)/(2wNγc)` for `0 < |δ| < w` and
/// `w/(Nγc)` for `|δ| ≥ w`.
pub fn thermodynamic_sz(params: &ModelParams) -> Result<f64, CumulantError> {
    let p = params.reduced();
    if !(p.w > 0.0) {
        return Err(CumulantError::ZeroPump);
    }
    let n = p.n_f64();
    let d = p.delta.abs();
    let sz = if d == 0.0 {
        p.w / (2.0 * n)
    } else if d < p.w {
        (p.w * p.w + d * d) / (2.0 * p.w * n)
    } else {
        p.w / n
    };
    if sz >= 1.0 {
        return Err(CumulantError::OutOfValidity { sz });
    }
    Ok(sz)
}
