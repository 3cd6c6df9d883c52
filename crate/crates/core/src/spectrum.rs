//! Linewidth Γ and relative precession frequency Δ of the emitted light.
//!
//! By the quantum regression theorem the correlations
//! `<σA1^+(τ) σB1^-(0)>` and `<σB1^+(τ) σB2^-(0)>` evolve under the 2×2
//! generator `½·[[X, Y], [Y, X*]]` with `X = γc(N−1)sz − γc − w + iδ` and
//! `Y = Nγc·sz`. Its slowest eigenvalue, written `−(Γ + iΔ)/2`, sets the
//! long-time decay of the field correlation and hence the spectrum: two
//! Lorentzians of half-width Γ/2 centred at ±Δ/2.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;

/// Relative threshold below which Δ counts as zero.
pub const SYNC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("linewidth must be positive to build a spectrum, got {0}")]
    NonPositiveLinewidth(f64),
    #[error("frequency grid contains a non-finite value")]
    NonFiniteGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMatrix {
    pub x: C64,
    pub y: f64,
}

impl RegressionMatrix {
    /// Entries of the generator `½·[[X, Y], [Y, X*]]`, row-major.
    pub fn generator(&self) -> [[C64; 2]; 2] {
        let y = C64::new(0.5 * self.y, 0.0);
        [[0.5 * self.x, y], [y, 0.5 * self.x.conj()]]
    }

    /// Both eigenvalues of twice the generator, slowest-decaying first.
    pub fn eigenvalues(&self) -> [C64; 2] {
        let root = C64::new(self.y * self.y - self.x.im * self.x.im, 0.0).sqrt();
        let plus = self.x.re + root;
        let minus = self.x.re - root;
        if plus.re >= minus.re {
            [plus, minus]
        } else {
            [minus, plus]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Linewidth Γ: decay rate of the first-order correlation.
    pub gamma: f64,
    /// Modulation frequency Δ ≥ 0.
    pub delta_mod: f64,
    pub synchronized: bool,
    /// Dominant eigenvalue λ of twice the generator; `Γ = −Re λ`.
    pub dominant: C64,
    /// Set when Γ < 0, i.e. the correlation would grow and the
    /// linearization has broken down.
    pub unstable: bool,
}

impl SpectrumResult {
    /// Builds a result directly from (Γ, Δ), e.g. from a fit.
    pub fn from_rates(gamma: f64, delta_mod: f64, scale: f64) -> Self {
        let delta_mod = delta_mod.abs();
        Self {
            gamma,
            delta_mod,
            synchronized: delta_mod < SYNC_TOLERANCE * scale,
            dominant: C64::new(-gamma, delta_mod),
            unstable: gamma < 0.0,
        }
    }
}

pub fn regression_matrix(params: &ModelParams, sz: f64) -> RegressionMatrix {
    let g = params.gamma_c;
    let n = params.n_f64();
    RegressionMatrix {
        x: C64::new(g * (n - 1.0) * sz - g - params.w, params.delta),
        y: n * g * sz,
    }
}

/// Γ and Δ from the slowest eigenvalue of the regression generator.
pub fn gamma_delta(params: &ModelParams, sz: f64) -> SpectrumResult {
    let m = regression_matrix(params, sz);
    let [dominant, _] = m.eigenvalues();
    let gamma = -dominant.re;
    let delta_mod = dominant.im.abs();
    let scale = params.gamma_c.max(params.delta.abs());
    SpectrumResult {
        gamma,
        delta_mod,
        synchronized: delta_mod < SYNC_TOLERANCE * scale,
        dominant,
        unstable: gamma < 0.0,
    }
}

fn lorentzian(detuning: f64, half_width: f64) -> f64 {
    let x = detuning / half_width;
    1.0 / (1.0 + x * x)
}

/// Photon spectrum: unit-height Lorentzians of half-width Γ/2 at ±Δ/2.
/// When Δ = 0 the two lines coincide and the peak reaches 2.
pub fn spectrum_profile(
    result: &SpectrumResult,
    omega_grid: &[f64],
) -> Result<Vec<(f64, f64)>, SpectrumError> {
    if !(result.gamma > 0.0) {
        return Err(SpectrumError::NonPositiveLinewidth(result.gamma));
    }
    if omega_grid.iter().any(|w| !w.is_finite()) {
        return Err(SpectrumError::NonFiniteGrid);
    }
    let hw = 0.5 * result.gamma;
    let centre = 0.5 * result.delta_mod;
    Ok(omega_grid
        .iter()
        .map(|&omega| {
            (
                omega,
                lorentzian(omega - centre, hw) + lorentzian(omega + centre, hw),
            )
        })
        .collect())
}

/// Thermodynamic-limit precession `sqrt(δ² − w²)` for `|δ| > w`, zero in the
/// synchronized phase.
pub fn delta_thermo(params: &ModelParams) -> f64 {
    let d = params.delta.abs();
    if d > params.w {
        ((d - params.w) * (d + params.w)).sqrt()
    } else {
        0.0
    }
}
