//! Parameter scans over the cumulant model: detuning curves, (w, δ) and
//! (w, N) planes, critical-pump location and power-law fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cumulant::{self, CumulantError};
use crate::model::{ModelError, ModelParams};
use crate::spectrum;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid parameters: {0}")]
    Params(#[from] ModelError),
    #[error("solver failed: {0}")]
    Solver(#[from] CumulantError),
    #[error("{criterion:?} bracket [{lo}, {hi}] failed: {reason}")]
    Bracket {
        criterion: Criterion,
        lo: f64,
        hi: f64,
        reason: String,
        scan: Vec<PointSample>,
    },
    #[error("regression failed: {0}")]
    Regression(String),
    #[error("worker pool: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    W,
    Delta,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// One grid axis. Values are materialized at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub parameter: Parameter,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(parameter: Parameter, min: f64, max: f64, points: usize, spacing: Spacing) -> Result<Self, SweepError> {
        if points < 2 {
            return Err(SweepError::Grid(format!("{parameter:?} axis needs at least 2 points, got {points}")));
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(SweepError::Grid(format!("{parameter:?} axis needs finite min < max, got [{min}, {max}]")));
        }
        let last = (points - 1) as f64;
        let values = match spacing {
            Spacing::Linear => (0..points).map(|k| min + (max - min) * k as f64 / last).collect(),
            Spacing::Log => {
                if min <= 0.0 {
                    return Err(SweepError::Grid(format!("log spacing needs positive bounds, got min = {min}")));
                }
                let (a, b) = (min.ln(), max.ln());
                (0..points).map(|k| (a + (b - a) * k as f64 / last).exp()).collect()
            }
        };
        Ok(Self { parameter, values })
    }

    pub fn linear(parameter: Parameter, min: f64, max: f64, points: usize) -> Result<Self, SweepError> {
        Self::new(parameter, min, max, points, Spacing::Linear)
    }

    pub fn log(parameter: Parameter, min: f64, max: f64, points: usize) -> Result<Self, SweepError> {
        Self::new(parameter, min, max, points, Spacing::Log)
    }

    /// An axis through explicitly listed values.
    pub fn explicit(parameter: Parameter, values: Vec<f64>) -> Result<Self, SweepError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(SweepError::Grid(format!("{parameter:?} axis values must be finite and non-empty")));
        }
        Ok(Self { parameter, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One or two axes over a base parameter set. Point `k` of a two-axis grid
/// has `i = k % len(axis0)` and `j = k / len(axis0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub base: ModelParams,
}

fn with_parameter(p: ModelParams, parameter: Parameter, value: f64) -> Result<ModelParams, SweepError> {
    let out = match parameter {
        Parameter::W => p.with_w(value),
        Parameter::Delta => p.with_delta(value),
        Parameter::N => {
            if !(value >= 1.0) {
                return Err(SweepError::Grid(format!("atom number {value} below 1")));
            }
            p.with_n(value.round() as u64)
        }
    };
    out.validate()?;
    Ok(out)
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>, base: ModelParams) -> Result<Self, SweepError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(SweepError::Grid(format!("expected 1 or 2 axes, got {}", axes.len())));
        }
        if axes.len() == 2 && axes[0].parameter == axes[1].parameter {
            return Err(SweepError::Grid("both axes vary the same parameter".into()));
        }
        base.validate()?;
        let spec = Self { axes, base };
        spec.points()?;
        Ok(spec)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid coordinates and parameters of every point, in index order.
    pub fn points(&self) -> Result<Vec<(Vec<f64>, ModelParams)>, SweepError> {
        let first = &self.axes[0];
        let second = self.axes.get(1);
        let outer = second.map_or(1, Axis::len);
        let mut out = Vec::with_capacity(self.len());
        for j in 0..outer {
            for &x in &first.values {
                let mut p = with_parameter(self.base, first.parameter, x)?;
                let mut coords = vec![x];
                if let Some(axis) = second {
                    let y = axis.values[j];
                    p = with_parameter(p, axis.parameter, y)?;
                    coords.push(y);
                }
                out.push((coords, p));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Scaled residual required of every steady state.
    pub tol: f64,
    /// Worker threads; `None` uses the machine's parallelism.
    pub workers: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            workers: None,
        }
    }
}

/// Solution at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub params: ModelParams,
    pub sz: f64,
    pub gamma: f64,
    pub delta_mod: f64,
    pub synchronized: bool,
    pub residual: f64,
    pub newton_iterations: usize,
    pub stable: bool,
    pub diagnostics: usize,
}

pub fn solve_point(params: &ModelParams, tol: f64) -> Result<PointSample, CumulantError> {
    let ss = cumulant::steady_state(params, tol)?;
    let sp = spectrum::gamma_delta(params, ss.state.sz);
    Ok(PointSample {
        params: *params,
        sz: ss.state.sz,
        gamma: sp.gamma,
        delta_mod: sp.delta_mod,
        synchronized: sp.synchronized,
        residual: ss.residual,
        newton_iterations: ss.newton_iterations,
        stable: ss.stable,
        diagnostics: ss.diagnostics.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub index: usize,
    pub coords: Vec<f64>,
    pub params: ModelParams,
    pub sample: Option<PointSample>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    /// Record at axis indices `(i, j)`; `j` is ignored for one-axis sweeps.
    pub fn at(&self, i: usize, j: usize) -> &SweepRecord {
        &self.records[j * self.axes[0].len() + i]
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(|r| r.error.is_some())
    }

    fn slices(&self) -> usize {
        self.axes.get(1).map_or(1, Axis::len)
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, SweepError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| SweepError::Workers(e.to_string()))
}

/// Solves every grid point; the result is ordered by grid index whatever the
/// completion order.
pub fn run_grid(grid: &GridSpec, opts: &SweepOptions) -> Result<SweepResult, SweepError> {
    let points = grid.points()?;
    let records = pool(opts.workers)?.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(index, (coords, params))| {
                let (sample, error) = match solve_point(&params, opts.tol) {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                SweepRecord {
                    index,
                    coords,
                    params,
                    sample,
                    error,
                }
            })
            .collect()
    });
    Ok(SweepResult {
        axes: grid.axes.clone(),
        records,
    })
}

/// Δ and Γ along a list of detunings at fixed N and w.
pub fn delta_vs_detuning(params: &ModelParams, delta_grid: &[f64], opts: &SweepOptions) -> Result<SweepResult, SweepError> {
    let grid = GridSpec::new(vec![Axis::explicit(Parameter::Delta, delta_grid.to_vec())?], *params)?;
    run_grid(&grid, opts)
}

/// Where the synchronized flag switches on along one slice of a plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    /// Value of the second axis for this slice.
    pub slice: f64,
    /// Last unsynchronized and first synchronized first-axis values.
    pub below: f64,
    pub above: f64,
    pub index_above: usize,
}

/// Γ maximum along one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgePoint {
    pub slice: f64,
    pub at: f64,
    pub index: usize,
    pub gamma: f64,
    /// False when the maximum sits on the first or last grid point.
    pub interior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub sweep: SweepResult,
    pub boundary: Vec<BoundaryPoint>,
    pub ridge: Vec<RidgePoint>,
}

/// Sweeps a plane whose first axis is the pump rate and extracts the
/// synchronization boundary and the Γ ridge slice by slice.
pub fn phase_diagram(grid: &GridSpec, opts: &SweepOptions) -> Result<PhaseDiagram, SweepError> {
    if grid.axes[0].parameter != Parameter::W {
        return Err(SweepError::Grid("the first phase-diagram axis must be w".into()));
    }
    let sweep = run_grid(grid, opts)?;
    let nx = grid.axes[0].len();
    let wv = &grid.axes[0].values;
    let mut boundary = Vec::new();
    let mut ridge = Vec::new();
    for j in 0..sweep.slices() {
        let slice = grid.axes.get(1).map_or(f64::NAN, |a| a.values[j]);
        let samples: Vec<Option<&PointSample>> = (0..nx).map(|i| sweep.at(i, j).sample.as_ref()).collect();
        if let Some(i) = (1..nx).find(|&i| {
            matches!((samples[i - 1], samples[i]), (Some(a), Some(b)) if !a.synchronized && b.synchronized)
        }) {
            boundary.push(BoundaryPoint {
                slice,
                below: wv[i - 1],
                above: wv[i],
                index_above: i,
            });
        }
        let best = samples
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s.gamma)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((index, gamma)) = best {
            ridge.push(RidgePoint {
                slice,
                at: wv[index],
                index,
                gamma,
                interior: index > 0 && index + 1 < nx,
            });
        }
    }
    Ok(PhaseDiagram { sweep, boundary, ridge })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Smallest pump rate at which Δ vanishes.
    DeltaOnset,
    /// Pump rate maximizing Γ.
    GammaPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalOptions {
    pub rtol: f64,
    /// Points of the coarse scan preceding refinement.
    pub scan_points: usize,
    pub tol: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-4,
            scan_points: 41,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub criterion: Criterion,
    pub w: f64,
    /// Solution at `w`.
    pub sample: PointSample,
    pub evaluations: usize,
}

fn sample_at(params: &ModelParams, w: f64, tol: f64) -> Result<PointSample, SweepError> {
    let p = params.with_w(w);
    p.validate()?;
    Ok(solve_point(&p, tol)?)
}

fn coarse_scan(params: &ModelParams, lo: f64, hi: f64, opts: &CriticalOptions) -> Result<Vec<PointSample>, SweepError> {
    let m = opts.scan_points.max(3);
    (0..m)
        .map(|k| sample_at(params, lo + (hi - lo) * k as f64 / (m - 1) as f64, opts.tol))
        .collect()
}

/// Critical pump rate inside `w_bracket`.
pub fn critical_pump(
    params: &ModelParams,
    w_bracket: (f64, f64),
    criterion: Criterion,
) -> Result<CriticalPoint, SweepError> {
    critical_pump_with(params, w_bracket, criterion, &CriticalOptions::default())
}

pub fn critical_pump_with(
    params: &ModelParams,
    w_bracket: (f64, f64),
    criterion: Criterion,
    opts: &CriticalOptions,
) -> Result<CriticalPoint, SweepError> {
    let (lo, hi) = w_bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(SweepError::Grid(format!("pump bracket must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let fail = |reason: &str, scan| SweepError::Bracket {
        criterion,
        lo,
        hi,
        reason: reason.to_string(),
        scan,
    };
    match criterion {
        Criterion::DeltaOnset => {
            let (mut a, mut b) = (lo, hi);
            let mut sa = sample_at(params, a, opts.tol)?;
            let mut sb = sample_at(params, b, opts.tol)?;
            if sa.synchronized || !sb.synchronized {
                return Err(fail(
                    "no transition from unsynchronized to synchronized",
                    coarse_scan(params, lo, hi, opts)?,
                ));
            }
            let mut evaluations = 2;
            while b - a > opts.rtol * b {
                let m = 0.5 * (a + b);
                let sm = sample_at(params, m, opts.tol)?;
                evaluations += 1;
                if sm.synchronized {
                    (b, sb) = (m, sm);
                } else {
                    (a, sa) = (m, sm);
                }
            }
            let _ = sa;
            Ok(CriticalPoint {
                criterion,
                w: b,
                sample: sb,
                evaluations,
            })
        }
        Criterion::GammaPeak => {
            let scan = coarse_scan(params, lo, hi, opts)?;
            let m = scan.len();
            let k = scan
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.gamma.total_cmp(&y.1.gamma))
                .map(|(k, _)| k)
                .unwrap();
            if k == 0 || k + 1 == m {
                return Err(fail("Γ maximum lies on the bracket edge", scan));
            }
            let (mut a, mut b) = (scan[k - 1].params.w, scan[k + 1].params.w);
            let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let mut sc = sample_at(params, c, opts.tol)?;
            let mut sd = sample_at(params, d, opts.tol)?;
            let mut evaluations = m + 2;
            while b - a > opts.rtol * b {
                if sc.gamma >= sd.gamma {
                    b = d;
                    (d, sd) = (c, sc);
                    c = b - inv_phi * (b - a);
                    sc = sample_at(params, c, opts.tol)?;
                } else {
                    a = c;
                    (c, sc) = (d, sd);
                    d = a + inv_phi * (b - a);
                    sd = sample_at(params, d, opts.tol)?;
                }
                evaluations += 1;
            }
            let best = [sc, sd, scan[k].clone()]
                .into_iter()
                .max_by(|x, y| x.gamma.total_cmp(&y.gamma))
                .unwrap();
            Ok(CriticalPoint {
                criterion,
                w: best.params.w,
                sample: best,
                evaluations,
            })
        }
    }
}

/// `value ≈ prefactor · x^exponent` fitted on log-log axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

pub const MIN_FIT_POINTS: usize = 3;

/// Least-squares line through `(ln x, ln y)`.
pub fn power_law_fit(points: &[(f64, f64)], min_points: usize) -> Result<ScalingFit, SweepError> {
    if points.len() < min_points.max(2) {
        return Err(SweepError::Regression(format!(
            "{} points given, at least {} required",
            points.len(),
            min_points.max(2)
        )));
    }
    if let Some(bad) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(SweepError::Regression(format!("point {bad:?} is not positive and finite")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 1e-300 * n {
        return Err(SweepError::Regression("abscissae have zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ScalingFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared,
        points: points.to_vec(),
    })
}

/// Parameters of the finite-size scan: `δ = delta_over_n · N·γc`, with the
/// critical pump searched in `[lo, hi]·δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRule {
    pub delta_over_n: f64,
    pub bracket: (f64, f64),
    pub gamma_c: f64,
}

impl Default for ScalingRule {
    fn default() -> Self {
        Self {
            delta_over_n: 0.5,
            bracket: (1.0, 2.0),
            gamma_c: 1.0,
        }
    }
}

impl ScalingRule {
    pub fn params(&self, n: u64) -> Result<ModelParams, SweepError> {
        let delta = self.delta_over_n * n as f64 * self.gamma_c;
        Ok(ModelParams::with_gamma_c(n, delta, self.gamma_c, delta)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u64,
    pub w_n: f64,
    /// Thermodynamic critical pump, equal to δ.
    pub w_c: f64,
    pub offset_rel: f64,
    pub gamma_at_wn: f64,
    /// The same location found with the other criterion.
    pub w_n_other: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub criterion: Criterion,
    pub rows: Vec<ScalingRow>,
    pub offset: ScalingFit,
    pub gamma_peak: ScalingFit,
}

/// Locates `w_N` for every N and fits the offset `(w_N − w_c)/w_c` and
/// `Γ(w_N)/γc` against N.
pub fn scaling_fit(
    n_values: &[u64],
    rule: &ScalingRule,
    criterion: Criterion,
    opts: &SweepOptions,
) -> Result<ScalingReport, SweepError> {
    if n_values.len() < MIN_FIT_POINTS {
        return Err(SweepError::Regression(format!(
            "{} values of N given, at least {MIN_FIT_POINTS} required",
            n_values.len()
        )));
    }
    let other = match criterion {
        Criterion::DeltaOnset => Criterion::GammaPeak,
        Criterion::GammaPeak => Criterion::DeltaOnset,
    };
    let copts = CriticalOptions {
        tol: opts.tol,
        ..CriticalOptions::default()
    };
    let rows: Result<Vec<ScalingRow>, SweepError> = pool(opts.workers)?.install(|| {
        n_values
            .par_iter()
            .map(|&n| {
                let p = rule.params(n)?;
                let w_c = p.delta.abs();
                let bracket = (rule.bracket.0 * w_c, rule.bracket.1 * w_c);
                let main = critical_pump_with(&p, bracket, criterion, &copts)?;
                let cross = critical_pump_with(&p, bracket, other, &copts)?;
                Ok(ScalingRow {
                    n,
                    w_n: main.w,
                    w_c,
                    offset_rel: (main.w - w_c) / w_c,
                    gamma_at_wn: main.sample.gamma / rule.gamma_c,
                    w_n_other: cross.w,
                })
            })
            .collect()
    });
    let rows = rows?;
    let offset = power_law_fit(
        &rows.iter().map(|r| (r.n as f64, r.offset_rel)).collect::<Vec<_>>(),
        MIN_FIT_POINTS,
    )?;
    let gamma_peak = power_law_fit(
        &rows.iter().map(|r| (r.n as f64, r.gamma_at_wn)).collect::<Vec<_>>(),
        MIN_FIT_POINTS,
    )?;
    Ok(ScalingReport {
        criterion,
        rows,
        offset,
        gamma_peak,
    })
}

/// Which critical pump anchors the β window and the distance `w_c − w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaReference {
    /// `w_c = |δ|`, the infinite-N critical point.
    Thermodynamic,
    /// The finite-N delta-onset pump located by bisection.
    DeltaOnset,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaOptions {
    /// Window `[lo, hi]·w_c`.
    pub window: (f64, f64),
    pub points: usize,
    pub spacing: Spacing,
    pub reference: BetaReference,
    /// Bracket for locating the finite-N onset, relative to |δ|.
    pub bracket: (f64, f64),
}

impl Default for BetaOptions {
    fn default() -> Self {
        Self {
            window: (0.8, 0.99),
            points: 20,
            spacing: Spacing::Linear,
            reference: BetaReference::Thermodynamic,
            bracket: (0.5, 3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaReport {
    pub fit: ScalingFit,
    pub w_c: f64,
    /// Finite-N delta-onset pump; the whole grid lies below it.
    pub w_onset: f64,
    /// Exponents refitted on sub-windows `(lo, hi, exponent)`, with the
    /// bounds as fractions of `w_c`.
    pub window_sensitivity: Vec<(f64, f64, f64)>,
}

/// Fits `Δ ∝ (w_c − w)^β` below the critical pump.
pub fn beta_fit(params: &ModelParams, opts: &BetaOptions, sweep: &SweepOptions) -> Result<BetaReport, SweepError> {
    let d = params.delta.abs();
    let w_onset = critical_pump_with(
        params,
        (opts.bracket.0 * d, opts.bracket.1 * d),
        Criterion::DeltaOnset,
        &CriticalOptions {
            rtol: 1e-9,
            tol: sweep.tol,
            ..CriticalOptions::default()
        },
    )?
    .w;
    let w_c = match opts.reference {
        BetaReference::Thermodynamic => d,
        BetaReference::DeltaOnset => w_onset,
        BetaReference::Fixed(w) => w,
    };
    let (lo, hi) = opts.window;
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err(SweepError::Grid(format!(
            "window [{lo}, {hi}]·w_c must lie strictly below w_c"
        )));
    }
    if hi * w_c >= w_onset {
        return Err(SweepError::Grid(format!(
            "window top {} reaches the synchronization onset {w_onset}",
            hi * w_c
        )));
    }
    let axis = Axis::new(Parameter::W, lo * w_c, hi * w_c, opts.points, opts.spacing)?;
    let grid = GridSpec::new(vec![axis], *params)?;
    let result = run_grid(&grid, sweep)?;
    let mut points = Vec::with_capacity(result.records.len());
    for r in &result.records {
        let s = r.sample.as_ref().ok_or_else(|| {
            SweepError::Regression(format!("solver failed at w = {}: {}", r.params.w, r.error.as_deref().unwrap_or("")))
        })?;
        points.push((w_c - s.params.w, s.delta_mod));
    }
    let fit = power_law_fit(&points, MIN_FIT_POINTS)?;

    let mut window_sensitivity = Vec::new();
    let n = points.len();
    for (a, b) in [(0, n / 2), (n / 2, n), (n / 4, 3 * n / 4)] {
        if b - a >= MIN_FIT_POINTS {
            let sub = power_law_fit(&points[a..b], MIN_FIT_POINTS)?;
            window_sensitivity.push((1.0 - points[a].0 / w_c, 1.0 - points[b - 1].0 / w_c, sub.exponent));
        }
    }
    Ok(BetaReport {
        fit,
        w_c,
        w_onset,
        window_sensitivity,
    })
}
