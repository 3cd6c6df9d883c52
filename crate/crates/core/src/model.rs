//! Model parameters, the cavity-to-collective-decay conversion and checks on
//! the regime in which the atoms-only superradiance description holds.
//!
//! All solver modules work in units of the collective decay rate: a
//! [`ModelParams`] with `gamma_c != 1` is reduced with
//! [`ModelParams::reduced`] before any equation is evaluated, so absolute
//! rates only matter at I/O boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default factor used to decide that one rate is "much larger" than another.
pub const DEFAULT_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("atom number must be at least 1, got {0}")]
    AtomNumber(u64),
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("{name} must be {bound}, got {value}")]
    OutOfRange {
        name: &'static str,
        bound: &'static str,
        value: f64,
    },
}

fn finite(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NotFinite { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if finite(name, value)? < 0.0 {
        return Err(ModelError::OutOfRange {
            name,
            bound: ">= 0",
            value,
        });
    }
    Ok(value)
}

fn positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if finite(name, value)? <= 0.0 {
        return Err(ModelError::OutOfRange {
            name,
            bound: "> 0",
            value,
        });
    }
    Ok(value)
}

/// Parameters of two ensembles of `n` atoms each, pumped at rate `w`,
/// coupled through collective decay `gamma_c` and split by detuning `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u64,
    pub w: f64,
    pub gamma_c: f64,
    pub delta: f64,
}

impl ModelParams {
    /// Validated constructor with `gamma_c = 1`.
    pub fn new(n: u64, w: f64, delta: f64) -> Result<Self, ModelError> {
        Self::with_gamma_c(n, w, 1.0, delta)
    }

    pub fn with_gamma_c(n: u64, w: f64, gamma_c: f64, delta: f64) -> Result<Self, ModelError> {
        let params = Self {
            n,
            w,
            gamma_c,
            delta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n < 1 {
            return Err(ModelError::AtomNumber(self.n));
        }
        non_negative("pump rate w", self.w)?;
        positive("collective decay gamma_c", self.gamma_c)?;
        finite("detuning delta", self.delta)?;
        Ok(())
    }

    /// Same physics expressed with `gamma_c = 1`.
    pub fn reduced(&self) -> Self {
        Self {
            n: self.n,
            w: self.w / self.gamma_c,
            gamma_c: 1.0,
            delta: self.delta / self.gamma_c,
        }
    }

    pub fn n_f64(&self) -> f64 {
        self.n as f64
    }

    /// The dissipative coupling N·γc.
    pub fn collective_coupling(&self) -> f64 {
        self.n_f64() * self.gamma_c
    }

    /// Characteristic magnitude of the cumulant right-hand side, used to
    /// make residuals comparable across atom numbers.
    pub fn rate_scale(&self) -> f64 {
        self.gamma_c * (1.0 + self.n_f64()) + self.w + self.delta.abs()
    }

    pub fn with_w(self, w: f64) -> Self {
        Self { w, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    pub fn with_n(self, n: u64) -> Self {
        Self { n, ..self }
    }
}

/// Cavity-QED rates. Only used for the γc conversion and regime checks; none
/// of them enter the equations of motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub omega: f64,
    pub kappa: f64,
    pub gamma_s: f64,
    pub t2_inv: f64,
}

impl CavityParams {
    pub fn new(omega: f64, kappa: f64, gamma_s: f64, t2_inv: f64) -> Result<Self, ModelError> {
        let cavity = Self {
            omega,
            kappa,
            gamma_s,
            t2_inv,
        };
        cavity.validate()?;
        Ok(cavity)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("cavity decay kappa", self.kappa)?;
        non_negative("coupling omega", self.omega)?;
        non_negative("spontaneous emission gamma_s", self.gamma_s)?;
        non_negative("dephasing 1/T2", self.t2_inv)?;
        Ok(())
    }
}

/// Collective decay rate γc = Ω²/κ obtained by adiabatically eliminating
/// the cavity mode.
pub fn collective_decay_rate(cavity: &CavityParams) -> Result<f64, ModelError> {
    positive("cavity decay kappa", cavity.kappa)?;
    finite("coupling omega", cavity.omega)?;
    Ok(cavity.omega * cavity.omega / cavity.kappa)
}

/// One failed "≫" (or weak-pump) condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeWarning {
    /// Which inequality failed, e.g. `"kappa >> delta"`.
    pub condition: String,
    pub large: f64,
    pub small: f64,
    /// `large / small`; the condition requires this to reach the margin.
    pub ratio: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub ok: bool,
    pub margin: f64,
    pub warnings: Vec<RegimeWarning>,
}

/// Checks every validity inequality of the atoms-only description with the
/// default margin of 10.
pub fn regime_check(model: &ModelParams, cavity: &CavityParams) -> RegimeReport {
    regime_check_with_margin(model, cavity, DEFAULT_MARGIN)
}

pub fn regime_check_with_margin(
    model: &ModelParams,
    cavity: &CavityParams,
    margin: f64,
) -> RegimeReport {
    let mut warnings = Vec::new();
    let mut much_larger = |condition: &str, large: f64, small: f64| {
        let ratio = if small == 0.0 { f64::INFINITY } else { large / small };
        // NaN ratios (0/0 never happens here, but invalid input might) are
        // reported rather than passed.
        if !(ratio >= margin) {
            warnings.push(RegimeWarning {
                condition: condition.to_string(),
                large,
                small,
                ratio,
                required: margin,
            });
        }
    };

    let n_gamma = model.collective_coupling();
    much_larger("kappa >> |delta|", cavity.kappa, model.delta.abs());
    much_larger("N*gamma_c >> gamma_s", n_gamma, cavity.gamma_s);
    much_larger("N*gamma_c >> 1/T2", n_gamma, cavity.t2_inv);
    much_larger("kappa >> w", cavity.kappa, model.w);
    much_larger("kappa >> gamma_s", cavity.kappa, cavity.gamma_s);
    much_larger("kappa >> 1/T2", cavity.kappa, cavity.t2_inv);

    // The <sz sz> ~ <sz>^2 closure is unreliable below w ~ gamma_c, where a
    // subradiant dark state dominates. Not a "≫" condition, so no margin.
    if model.w < model.gamma_c {
        warnings.push(RegimeWarning {
            condition: "w >= gamma_c (weak pump: sz-sz factorization unreliable)".to_string(),
            large: model.w,
            small: model.gamma_c,
            ratio: model.w / model.gamma_c,
            required: 1.0,
        });
    }

    RegimeReport {
        ok: warnings.is_empty(),
        margin,
        warnings,
    }
}
