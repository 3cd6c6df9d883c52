use std::path::Path;

use serde_json::{json, Value};

use srsync::cumulant::{self, thermodynamic_sz};
use srsync::model::{collective_decay_rate, regime_check_with_margin, CavityParams, ModelParams};
use srsync::oracle::{compare_with_cumulant, DEFAULT_MAX_N};
use srsync::spectrum::{delta_thermo, gamma_delta, spectrum_profile};
use srsync::sweep::{
    self, Axis, BetaOptions, BetaReference, Criterion, GridSpec, Parameter, ScalingFit, ScalingRule, Spacing,
    SweepOptions, SweepResult,
};

use crate::args::{
    BetaArgs, Cli, Command, CriterionArg, Fig2Args, OracleArgs, PhaseArgs, PointArgs, ReferenceArg, RegimeArgs,
    ScalingArgs, SpacingArg, SpectrumArgs, WRule, YAxis,
};
use crate::schema::{self, Fig2Row, OracleRow, PhaseRow, ScalingRow, SpectrumRow, SCHEMA_VERSION};
use crate::{sink, write_json, CliError, Io};

/// Settings shared by every subcommand, validated once.
struct Common<'a> {
    gamma_c: f64,
    sweep: SweepOptions,
    output: Option<&'a Path>,
}

fn workers(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>, CliError> {
    let parsed = match env.map(str::trim).filter(|s| !s.is_empty()) {
        Some(s) => Some(
            s.parse::<usize>()
                .map_err(|_| CliError::validation(format!("{}={s:?} is not a worker count", crate::WORKERS_ENV)))?,
        ),
        None => flag,
    };
    if parsed == Some(0) {
        return Err(CliError::validation("worker count must be at least 1"));
    }
    Ok(parsed)
}

pub(crate) fn dispatch(cli: &Cli, env_workers: Option<&str>, io: &mut Io) -> Result<(), CliError> {
    if !(cli.gamma_c.is_finite() && cli.gamma_c > 0.0) {
        return Err(CliError::validation(format!("--gamma-c must be positive, got {}", cli.gamma_c)));
    }
    if !(cli.tol.is_finite() && cli.tol > 0.0) {
        return Err(CliError::validation(format!("--tol must be positive, got {}", cli.tol)));
    }
    let common = Common {
        gamma_c: cli.gamma_c,
        sweep: SweepOptions {
            tol: cli.tol,
            workers: workers(cli.workers, env_workers)?,
        },
        output: cli.output.as_deref(),
    };
    match &cli.command {
        Command::Steady(a) => steady(a, &common, io),
        Command::Spectrum(a) => spectrum(a, &common, io),
        Command::Fig2(a) => fig2(a, &common, io),
        Command::PhaseDiagram(a) => phase(a, &common, io),
        Command::Scaling(a) => scaling(a, &common, io),
        Command::Beta(a) => beta(a, &common, io),
        Command::OracleCompare(a) => oracle(a, &common, io),
        Command::RegimeCheck(a) => regime(a, &common, io),
    }
}

fn point_params(a: &PointArgs) -> Result<ModelParams, CliError> {
    Ok(ModelParams::new(a.n, a.w, a.delta)?)
}

fn points_at_least(name: &str, points: usize, min: usize) -> Result<(), CliError> {
    if points < min {
        return Err(CliError::validation(format!("{name} must be at least {min}, got {points}")));
    }
    Ok(())
}

fn steady(a: &PointArgs, c: &Common, io: &mut Io) -> Result<(), CliError> {
    let p = point_params(a)?;
    let ss = cumulant::steady_state(&p, c.sweep.tol)?;
    let sp = gamma_delta(&p, ss.state.sz);
    let g = c.gamma_c;
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "steady",
        "n": p.n,
        "w": p.w * g,
        "delta": p.delta * g,
        "gamma_c": g,
        "sz": ss.state.sz,
        "intra": { "re": ss.state.intra.re, "im": ss.state.intra.im },
        "cross": { "re": ss.state.cross.re, "im": ss.state.cross.im },
        "gamma": sp.gamma * g,
        "delta_mod": sp.delta_mod * g,
        "synchronized": sp.synchronized,
        "stable": ss.stable,
        "residual": ss.residual,
        "newton_iterations": ss.newton_iterations,
        "sz_thermodynamic": thermodynamic_sz(&p).ok(),
        "delta_mod_thermodynamic": delta_thermo(&p) * g,
        "diagnostics": ss.diagnostics,
    });
    write_json(&mut *sink(c.output, io.stdout)?, &value)
}

fn spectrum(a: &SpectrumArgs, c: &Common, io: &mut Io) -> Result<(), CliError> {
    let p = point_params(&a.point)?;
    points_at_least("--points", a.points, 2)?;
    let ss = cumulant::steady_state(&p, c.sweep.tol)?;
    let sp = gamma_delta(&p, ss.state.sz);
    let half = 0.5 * sp.delta_mod + 10.0 * sp.gamma.abs();
    let lo = a.omega_min.unwrap_or(-half);
    let hi = a.omega_max.unwrap_or(half);
    if !(lo < hi) {
        return Err(CliError::validation(format!("frequency window [{lo}, {hi}] is empty")));
    }
    let grid: Vec<f64> = (0..a.points)
        .map(|k| lo + (hi - lo) * k as f64 / (a.points - 1) as f64)
        .collect();
    let rows: Vec<SpectrumRow> = spectrum_profile(&sp, &grid)?
        .into_iter()
        .map(|(omega, intensity)| SpectrumRow {
            omega: omega * c.gamma_c,
            intensity,
        })
        .collect();
    schema::write_csv(&rows, sink(c.output, io.stdout)?)?;
    Ok(())
}

/// Turns per-point failures into a solver error after the table is written.
fn check_failures(result: &SweepResult) -> Result<(), CliError> {
    let failed: Vec<Value> = result
        .failures()
        .map(|r| json!({ "index": r.index, "coords": r.coords, "error": r.error }))
        .collect();
    if failed.is_empty() {
        return Ok(());
    }
    let mut e = CliError::solver(format!("{} of {} grid points failed", failed.len(), result.records.len()));
    e.details = Some(json!({ "failures": failed }));
    Err(e)
}

fn fig2(a: &Fig2Args, c: &Common, io: &mut Io) -> Result<(), CliError> {
    let w = match (a.w, a.w_rule) {
        (Some(w), _) => w,
        (None, Some(WRule::HalfNGamma)) => 0.5 * a.n as f64,
        (None, None) => return Err(CliError::validation("give --w or --w-rule")),
    };
    let p = ModelParams::new(a.n, w, a.delta_min)?;
    let axis = Axis::linear(Parameter::Delta, a.delta_min, a.delta_max, a.points)?;
    let result = sweep::delta_vs_detuning(&p, &axis.values, &c.sweep)?;
    let g = c.gamma_c;
    let rows: Vec<Fig2Row> = result
        .records
        .iter()
        .map(|r| Fig2Row {
            delta: r.params.delta * g,
            sz: r.sample.as_ref().map(|s| s.sz),
            gamma: r.sample.as_ref().map(|s| s.gamma * g),
            delta_mod: r.sample.as_ref().map(|s| s.delta_mod * g),
        })
        .collect();
    schema::write_csv(&rows, sink(c.output, io.stdout)?)?;
    check_failures(&result)
}

fn spacing(s: SpacingArg) -> Spacing {
    match s {
        SpacingArg::Linear => Spacing::Linear,
        SpacingArg::Log => Spacing::Log,
    }
}

fn phase(a: &PhaseArgs, c: &Common, io: &mut Io) -> Result<(), CliError> {
    let w_axis = Axis::new(Parameter::W, a.w_min, a.w_max, a.w_points, spacing(a.w_spacing))?;
    let y_param = match a.y_axis {
        YAxis::Delta => Parameter::Delta,
        YAxis::N => Parameter::N,
    };
    let y_axis = Axis::new(y_param, a.y_min, a.y_max, a.y_points, spacing(a.y_spacing))?;
    let base = ModelParams::new(a.n, a.w_min.max(0.0), a.delta)?;
    let grid = GridSpec::new(vec![w_axis, y_axis], base)?;
    let diagram = sweep::phase_diagram(&grid, &c.sweep)?;
    let g = c.gamma_c;
    let rows: Vec<PhaseRow> = diagram
        .sweep
        .records
        .iter()
        .map(|r| PhaseRow {
            w: r.params.w * g,
            delta: r.params.delta * g,
            n: r.params.n,
            sz: r.sample.as_ref().map(|s| s.sz),
            gamma: r.sample.as_ref().map(|s| s.gamma * g),
            delta_mod: r.sample.as_ref().map(|s| s.delta_mod * g),
            synchronized: r.sample.as_ref().map(|s| s.synchronized),
        })
        .collect();
    schema::write_csv(&rows, sink(c.output, io.stdout)?)?;

    if let Some(path) = &a.boundary_output {
        // the slice coordinate is a rate only along a δ axis
        let slice_scale = if y_param == Parameter::Delta { g } else { 1.0 };
        let value = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "phase-diagram",
            "y_axis": y_param,
            "gamma_c": g,
            "boundary": diagram.boundary.iter().map(|b| json!({
                "slice": b.slice * slice_scale,
                "w_below": b.below * g,
                "w_above": b.above * g,
            })).collect::<Vec<_>>(),
            "ridge": diagram.ridge.iter().map(|r| json!({
                "slice": r.slice * slice_scale,
                "w": r.at * g,
                "gamma": r.gamma * g,
                "interior": r.interior,
            })).collect::<Vec<_>>(),
        });
        write_json(&mut *sink(Some(path), io.stdout)?, &value)?;
    }
    check_failures(&diagram.sweep)
}

fn criterion(c: CriterionArg) -> Criterion {
    match c {
        CriterionArg::GammaPeak => Criterion::GammaPeak,
        CriterionArg::DeltaOnset => Criterion::DeltaOnset,
    }
}

fn fit_json(fit: &ScalingFit) -> Value {
    json!({ "exponent": fit.exponent, "prefactor": fit.prefactor, "r_squared": fit.r_squared })
}

fn scaling(a: &ScalingArgs, c: &Common, io: &mut Io) -> Result<(), CliError> {
    if !(a.delta_over_n.is_finite() && a.delta_over_n > 0.0) {
        return Err(CliError::validation(format!("--delta-over-n must be positive, got {}", a.delta_over_n)));
    }
    let rule = ScalingRule {
        delta_over_n: a.delta_over_n,
        ..ScalingRule::default()
    };
    let crit = criterion(a.criterion);
    let report = sweep::scaling_fit(&a.n_values, &rule, crit, &c.sweep).map_err(|e| match e {
        sweep::SweepError::Regression(m) if a.n_values.len() < sweep::MIN_FIT_POINTS => CliError::validation(m),
        other => other.into(),
    })?;
    let g = c.gamma_c;
    let rows: Vec<ScalingRow> = report
        .rows
        .iter()
        .map(|r| ScalingRow {
            n: r.n,
            w_n: r.w_n * g,
            w_c: r.w_c * g,
            offset_rel: r.offset_rel,
            gamma_at_wn: r.gamma_at_wn * g,
        })
        .collect();
    schema::write_csv(&rows, sink(c.output, io.stdout)?)?;

    let other = match crit {
        Criterion::GammaPeak => Criterion::DeltaOnset,
        Criterion::DeltaOnset => Criterion::GammaPeak,
    };
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "scaling",
        "criterion": crit,
        "delta_over_n": a.delta_over_n,
        "offset": fit_json(&report.offset),
        "gamma_peak": fit_json(&report.gamma_peak),
        "cross_check": {
            "criterion": other,
            "w_n": report.rows.iter().map(|r| r.w_n_other * g).collect::<Vec<_>>(),
        },
    });
    match (&a.fit_output, c.output) {
        (Some(path), _) => write_json(&mut *sink(Some(path), io.stdout)?, &value),
        (None, Some(_)) => write_json(io.stdout, &value),
        (None, None) => write_json(io.stderr, &value),
    }
}

fn beta(a: &BetaArgs, c: &Common, io: &mut Io) -> Result<(), CliError> {
    let delta = a.delta.unwrap_or(0.5 * a.n as f64);
    if delta == 0.0 {
        return Err(CliError::validation("β fit needs a non-zero detuning"));
    }
    let p = ModelParams::new(a.n, delta.abs(), delta)?;
    points_at_least("--points", a.points, sweep::MIN_FIT_POINTS)?;
    let reference = match (a.w_c, a.reference) {
        (Some(w), _) => BetaReference::Fixed(w),
        (None, ReferenceArg::Thermodynamic) => BetaReference::Thermodynamic,
        (None, ReferenceArg::DeltaOnset) => BetaReference::DeltaOnset,
    };
    let opts = BetaOptions {
        window: (a.window_lo, a.window_hi),
        points: a.points,
        reference,
        ..BetaOptions::default()
    };
    let report = sweep::beta_fit(&p, &opts, &c.sweep)?;
    let g = c.gamma_c;
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "beta",
        "n": p.n,
        "delta": p.delta * g,
        "exponent": report.fit.exponent,
        "prefactor": report.fit.prefactor * g.powf(1.0 - report.fit.exponent),
        "r_squared": report.fit.r_squared,
        "w_c": report.w_c * g,
        "w_onset": report.w_onset * g,
        "window": [a.window_lo, a.window_hi],
        "points": report.fit.points.iter()
            .map(|(x, y)| json!({ "w_c_minus_w": x * g, "delta_mod": y * g }))
            .collect::<Vec<_>>(),
        "window_sensitivity": report.window_sensitivity.iter()
            .map(|(lo, hi, e)| json!({ "lo": lo, "hi": hi, "exponent": e }))
            .collect::<Vec<_>>(),
    });
    write_json(&mut *sink(c.output, io.stdout)?, &value)
}

fn oracle(a: &OracleArgs, c: &Common, io: &mut Io) -> Result<(), CliError> {
    if a.n_values.is_empty() {
        return Err(CliError::validation("--n-values is empty"));
    }
    // validate everything before the first (slow) solve
    let params = a
        .n_values
        .iter()
        .map(|&n| {
            if n > DEFAULT_MAX_N {
                return Err(CliError::validation(format!(
                    "oracle supports at most {DEFAULT_MAX_N} atoms per ensemble, got {n}"
                )));
            }
            let nf = n as f64;
            Ok(ModelParams::new(n, a.w_over_n * nf, a.delta_over_n * nf)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let g = c.gamma_c;
    let mut rows = Vec::with_capacity(params.len());
    for p in &params {
        let cmp = compare_with_cumulant(p)?;
        rows.push(OracleRow {
            n: p.n,
            w: p.w * g,
            delta: p.delta * g,
            sz_oracle: cmp.sz_oracle,
            sz_cumulant: cmp.sz_cumulant,
            gamma_oracle: cmp.gamma_oracle * g,
            gamma_cumulant: cmp.gamma_cumulant * g,
            delta_oracle: cmp.delta_oracle * g,
            delta_cumulant: cmp.delta_cumulant * g,
        });
    }
    schema::write_csv(&rows, sink(c.output, io.stdout)?)?;
    Ok(())
}

fn regime(a: &RegimeArgs, c: &Common, io: &mut Io) -> Result<(), CliError> {
    if !(a.margin.is_finite() && a.margin > 0.0) {
        return Err(CliError::validation(format!("--margin must be positive, got {}", a.margin)));
    }
    let cavity = CavityParams::new(a.omega, a.kappa, a.gamma_s, a.t2_inv)?;
    let gamma_c = collective_decay_rate(&cavity)?;
    if gamma_c <= 0.0 {
        return Err(CliError::validation("collective decay Ω²/κ vanishes; give a positive --omega"));
    }
    let model = ModelParams::with_gamma_c(a.n, a.w, gamma_c, a.delta)?;
    let report = regime_check_with_margin(&model, &cavity, a.margin);
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "regime-check",
        "gamma_c": gamma_c,
        "ok": report.ok,
        "margin": report.margin,
        "warnings": report.warnings,
    });
    write_json(&mut *sink(c.output, io.stdout)?, &value)
}
