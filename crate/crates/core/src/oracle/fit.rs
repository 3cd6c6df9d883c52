//! Extraction of (Γ, Δ) from a sampled field correlation.
//!
//! The total-field correlation of two ensembles with opposite detunings is
//! real, `g(τ) ∝ e^{−Γτ/2}·cos(Δτ/2)` on the dominant branch, so a fit on
//! `|g|` and the phase slope cannot see Δ. Instead the series is modelled as
//! a short sum of damped exponentials by linear prediction: the samples on a
//! uniform grid satisfy `v_k = Σ_m a_m v_{k−m}`, and the roots `z_j` of the
//! prediction polynomial give the rates `−(Γ + iΔ)/2 = ln(z_j)/h`. The slowest
//! root carrying non-negligible amplitude is the dominant branch.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CorrelationSeries;
use crate::spectrum::SpectrumResult;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("correlation samples must lie on a uniform, increasing grid")]
    NonUniformGrid,
    #[error("fit window holds {have} samples, need at least {need}")]
    TooShort { have: usize, need: usize },
    #[error("series does not decay inside the window (dominant |z| = {modulus})")]
    InsufficientDecay { modulus: f64 },
    #[error("fit residual {residual:e} exceeds threshold {threshold:e}")]
    FitQuality { residual: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fraction of the series dropped at the start of the window.
    pub discard_fraction: f64,
    /// Highest prediction order tried.
    pub max_order: usize,
    /// The lowest order reaching this relative residual is accepted.
    pub accept_residual: f64,
    /// Fits worse than this are reported as failures.
    pub max_residual: f64,
    /// Roots whose amplitude is below this fraction of the largest one are
    /// ignored when picking the dominant branch.
    pub amplitude_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            discard_fraction: 0.2,
            max_order: 4,
            accept_residual: 1e-7,
            max_residual: 1e-2,
            amplitude_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub result: SpectrumResult,
    /// Relative RMS residual of the reconstruction over the window.
    pub residual: f64,
    /// First and last τ of the window used.
    pub window: (f64, f64),
    pub order: usize,
    /// Continuous-time rates `ln(z_j)/h` of every fitted component.
    pub rates: Vec<(f64, f64)>,
}

pub fn fit_gamma_delta(series: &CorrelationSeries) -> Result<FitReport, FitError> {
    fit_gamma_delta_with(series, &FitOptions::default())
}

pub fn fit_gamma_delta_with(series: &CorrelationSeries, opts: &FitOptions) -> Result<FitReport, FitError> {
    let taus = &series.taus;
    if taus.len() < 2 || taus.len() != series.values.len() {
        return Err(FitError::TooShort {
            have: taus.len().min(series.values.len()),
            need: 2,
        });
    }
    let h = taus[1] - taus[0];
    let span = taus[taus.len() - 1] - taus[0];
    if !(h > 0.0) || taus.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * span.max(h)) {
        return Err(FitError::NonUniformGrid);
    }

    let start = (opts.discard_fraction * taus.len() as f64).floor() as usize;
    let window = &series.values[start..];
    let mut best: Option<Candidate> = None;
    for order in 1..=opts.max_order {
        if window.len() < 3 * order + 1 {
            break;
        }
        let Some(candidate) = fit_order(window, order) else {
            continue;
        };
        let accept = candidate.residual <= opts.accept_residual;
        if best.as_ref().map_or(true, |b| candidate.residual < b.residual) {
            best = Some(candidate);
        }
        if accept {
            break;
        }
    }
    let Some(best) = best else {
        return Err(FitError::TooShort {
            have: window.len(),
            need: 4,
        });
    };
    if !(best.residual <= opts.max_residual) {
        return Err(FitError::FitQuality {
            residual: best.residual,
            threshold: opts.max_residual,
        });
    }

    let largest = best.amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let dominant = best
        .roots
        .iter()
        .zip(&best.amplitudes)
        .filter(|(_, a)| a.norm() >= opts.amplitude_floor * largest)
        .map(|(z, _)| *z)
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("at least one component carries the largest amplitude");
    if !(dominant.norm() < 1.0) {
        return Err(FitError::InsufficientDecay {
            modulus: dominant.norm(),
        });
    }

    let rate = |z: C64| {
        let l = z.ln() / h;
        (-2.0 * l.re, 2.0 * l.im.abs())
    };
    let (gamma, delta_mod) = rate(dominant);
    Ok(FitReport {
        result: SpectrumResult::from_rates(gamma, delta_mod, gamma.abs().max(delta_mod)),
        residual: best.residual,
        window: (taus[start], taus[taus.len() - 1]),
        order: best.order,
        rates: best.roots.iter().map(|&z| rate(z)).collect(),
    })
}

struct Candidate {
    order: usize,
    roots: Vec<C64>,
    amplitudes: Vec<C64>,
    residual: f64,
}

fn least_squares(a: DMatrix<C64>, b: DVector<C64>) -> Option<DVector<C64>> {
    let x = a.svd(true, true).solve(&b, 1e-14).ok()?;
    x.iter().all(|v| v.re.is_finite() && v.im.is_finite()).then_some(x)
}

fn fit_order(v: &[C64], order: usize) -> Option<Candidate> {
    let rows = v.len() - order;
    let a = DMatrix::from_fn(rows, order, |r, m| v[r + order - 1 - m]);
    let b = DVector::from_fn(rows, |r, _| v[r + order]);
    let coeffs = least_squares(a, b)?;

    // z^p − a_1 z^{p−1} − … − a_p, highest degree first
    let mut poly = vec![C64::new(1.0, 0.0)];
    poly.extend(coeffs.iter().map(|c| -c));
    let roots = polynomial_roots(&poly)?;

    let vander = DMatrix::from_fn(v.len(), order, |k, j| roots[j].powu(k as u32));
    let target = DVector::from_column_slice(v);
    let amplitudes = least_squares(vander.clone(), target.clone())?;
    let recon = vander * &amplitudes;
    let scale = target.norm();
    let residual = if scale > 0.0 { (recon - target).norm() / scale } else { 0.0 };
    Some(Candidate {
        order,
        roots,
        amplitudes: amplitudes.iter().copied().collect(),
        residual,
    })
}

/// Roots of a monic complex polynomial (coefficients highest degree first)
/// by Durand–Kerner iteration.
fn polynomial_roots(poly: &[C64]) -> Option<Vec<C64>> {
    let degree = poly.len() - 1;
    let eval = |z: C64| poly.iter().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c);
    let radius = 1.0 + poly[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let seed = C64::new(0.4, 0.9);
    let mut roots: Vec<C64> = (0..degree).map(|k| seed.powu(k as u32) * radius.min(2.0)).collect();
    if degree == 1 {
        return Some(vec![-poly[1]]);
    }
    for _ in 0..500 {
        let mut shift: f64 = 0.0;
        for i in 0..degree {
            let zi = roots[i];
            let denom = (0..degree)
                .filter(|&j| j != i)
                .fold(C64::new(1.0, 0.0), |acc, j| acc * (zi - roots[j]));
            if denom.norm() == 0.0 {
                roots[i] += C64::new(1e-8, 1e-8);
                shift = f64::INFINITY;
                continue;
            }
            let step = eval(zi) / denom;
            roots[i] -= step;
            shift = shift.max(step.norm());
        }
        if shift <= 1e-15 * radius {
            break;
        }
    }
    roots
        .iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
        .then_some(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize, h: f64, f: impl Fn(f64) -> C64) -> CorrelationSeries {
        let taus: Vec<f64> = (0..n).map(|k| h * k as f64).collect();
        let values = taus.iter().map(|&t| f(t)).collect();
        CorrelationSeries { taus, values }
    }

    #[test]
    fn complex_exponential() {
        let s = series(200, 0.05, |t| (-C64::new(1.0, 2.0) * t / 2.0).exp());
        let fit = fit_gamma_delta(&s).unwrap();
        assert_eq!(fit.order, 1);
        assert!((fit.result.gamma - 1.0).abs() < 1e-10);
        assert!((fit.result.delta_mod - 2.0).abs() < 1e-10);
        assert!(!fit.result.synchronized);
    }

    #[test]
    fn real_exponential_with_amplitude() {
        let s = series(200, 0.1, |t| C64::new(0.7 * (-0.25 * t).exp(), 0.0));
        let fit = fit_gamma_delta(&s).unwrap();
        assert!((fit.result.gamma - 0.5).abs() < 1e-10);
        assert!(fit.result.delta_mod < 1e-10);
        assert!(fit.result.synchronized);
    }

    #[test]
    fn real_cosine_modulation_needs_two_roots() {
        let s = series(300, 0.02, |t| C64::new(3.0 * (-0.75 * t).exp() * (1.5 * t).cos(), 0.0));
        let fit = fit_gamma_delta(&s).unwrap();
        assert_eq!(fit.order, 2);
        assert!((fit.result.gamma - 1.5).abs() < 1e-9);
        assert!((fit.result.delta_mod - 3.0).abs() < 1e-9);
    }

    #[test]
    fn fast_transient_is_not_dominant() {
        let s = series(400, 0.02, |t| C64::new((-0.5 * t).exp() + 2.0 * (-6.0 * t).exp(), 0.0));
        let fit = fit_gamma_delta(&s).unwrap();
        assert!((fit.result.gamma - 1.0).abs() < 1e-8, "{:?}", fit);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut s = series(50, 0.1, |t| C64::new((-t).exp(), 0.0));
        s.taus[10] += 0.03;
        assert_eq!(fit_gamma_delta(&s).unwrap_err(), FitError::NonUniformGrid);

        let s = series(3, 0.1, |t| C64::new((-t).exp(), 0.0));
        assert!(matches!(fit_gamma_delta(&s), Err(FitError::TooShort { .. })));
    }

    #[test]
    fn growing_series_is_rejected() {
        let s = series(100, 0.1, |t| C64::new((0.3 * t).exp(), 0.0));
        assert!(matches!(
            fit_gamma_delta(&s),
            Err(FitError::InsufficientDecay { .. })
        ));
    }

    #[test]
    fn noise_fails_quality_check() {
        // deterministic pseudo-noise with no exponential structure
        let s = series(100, 0.1, |t| C64::new(((t * 1234.567).sin() * 9876.5).fract(), 0.0));
        assert!(fit_gamma_delta(&s).is_err());
    }

    #[test]
    fn cubic_roots() {
        let roots = [C64::new(0.5, 0.1), C64::new(-0.3, 0.0), C64::new(0.9, -0.2)];
        // (z − r0)(z − r1)(z − r2)
        let mut poly = vec![C64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![C64::new(0.0, 0.0); poly.len() + 1];
            for (k, c) in poly.iter().enumerate() {
                next[k] += c;
                next[k + 1] -= c * r;
            }
            poly = next;
        }
        let found = polynomial_roots(&poly).unwrap();
        for r in roots {
            assert!(found.iter().any(|z| (z - r).norm() < 1e-12));
        }
    }
}
