use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Steady states, spectra and sweeps for two superradiant ensembles.
///
/// Rates are given in units of the collective decay rate γc. With
/// `--gamma-c` every rate in the output is multiplied by that value.
#[derive(Debug, Parser)]
#[command(name = "srsync", version, about)]
pub struct Cli {
    /// Worker threads for sweeps (default: machine parallelism). The
    /// SRSYNC_WORKERS environment variable takes precedence.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Absolute γc applied to every rate in the output.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub gamma_c: f64,

    /// Scaled residual required of every steady state.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub tol: f64,

    /// Write the main result here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,

    /// Reserved; every solver is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady state and (Γ, Δ) at one parameter point (JSON).
    Steady(PointArgs),
    /// Photon spectrum S(ω) at one parameter point (CSV).
    Spectrum(SpectrumArgs),
    /// Δ against detuning at fixed pump (CSV).
    Fig2(Fig2Args),
    /// Two-axis sweep over w and either δ or N (CSV).
    PhaseDiagram(PhaseArgs),
    /// Finite-size scaling of the critical pump (CSV plus fit JSON).
    Scaling(ScalingArgs),
    /// Critical exponent of Δ below the critical pump (JSON).
    Beta(BetaArgs),
    /// Exact small-N master equation against the cumulant solver (CSV).
    OracleCompare(OracleArgs),
    /// Validity conditions of the atoms-only description (JSON).
    RegimeCheck(RegimeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    /// Atoms per ensemble.
    #[arg(long)]
    pub n: u64,
    /// Pump rate.
    #[arg(long, allow_negative_numbers = true)]
    pub w: f64,
    /// Detuning between the ensembles.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Lower end of the frequency grid (default: centred window of ±(Δ/2 + 10Γ)).
    #[arg(long, allow_negative_numbers = true)]
    pub omega_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega_max: Option<f64>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WRule {
    /// w = Nγc/2.
    HalfNGamma,
}

#[derive(Debug, Args)]
pub struct Fig2Args {
    #[arg(long)]
    pub n: u64,
    /// Fixed pump rate.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "w_rule", required_unless_present = "w_rule")]
    pub w: Option<f64>,
    /// Pump rate derived from N.
    #[arg(long, value_enum)]
    pub w_rule: Option<WRule>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub delta_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub delta_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum YAxis {
    Delta,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpacingArg {
    Linear,
    Log,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    /// Atoms per ensemble (ignored along an N axis).
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    /// Detuning (ignored along a δ axis).
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub w_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub w_max: f64,
    #[arg(long, default_value_t = 50)]
    pub w_points: usize,
    #[arg(long, value_enum, default_value_t = SpacingArg::Linear)]
    pub w_spacing: SpacingArg,
    /// Parameter varied along the second axis.
    #[arg(long, value_enum, default_value_t = YAxis::Delta)]
    pub y_axis: YAxis,
    #[arg(long, allow_negative_numbers = true)]
    pub y_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub y_max: f64,
    #[arg(long, default_value_t = 50)]
    pub y_points: usize,
    #[arg(long, value_enum, default_value_t = SpacingArg::Linear)]
    pub y_spacing: SpacingArg,
    /// Also write the extracted boundary and Γ ridge as JSON.
    #[arg(long)]
    pub boundary_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    GammaPeak,
    DeltaOnset,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    /// Atom numbers, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [100u64, 1_000, 10_000, 100_000, 1_000_000])]
    pub n_values: Vec<u64>,
    #[arg(long, value_enum, default_value_t = CriterionArg::GammaPeak)]
    pub criterion: CriterionArg,
    /// δ in units of Nγc.
    #[arg(long, default_value_t = 0.5)]
    pub delta_over_n: f64,
    /// Where the fitted exponents go (default: stdout when --output is a
    /// file, stderr otherwise).
    #[arg(long)]
    pub fit_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    /// w_c = |δ|.
    Thermodynamic,
    /// The finite-N onset of synchronization.
    DeltaOnset,
}

#[derive(Debug, Args)]
pub struct BetaArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub n: u64,
    /// Detuning (default Nγc/2).
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub window_lo: f64,
    #[arg(long, default_value_t = 0.99)]
    pub window_hi: f64,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = ReferenceArg::Thermodynamic, conflicts_with = "w_c")]
    pub reference: ReferenceArg,
    /// Use this critical pump instead of a computed one.
    #[arg(long)]
    pub w_c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Atom numbers per ensemble, comma separated (at most 3).
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    pub n_values: Vec<u64>,
    /// w in units of Nγc.
    #[arg(long, default_value_t = 0.5)]
    pub w_over_n: f64,
    /// δ in units of Nγc.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.25)]
    pub delta_over_n: f64,
}

/// All rates here are absolute, in the same unit as κ; γc is derived as Ω²/κ.
#[derive(Debug, Args)]
pub struct RegimeArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub w: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
    /// Atom–cavity coupling Ω.
    #[arg(long, allow_negative_numbers = true)]
    pub omega: f64,
    /// Cavity decay κ.
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: f64,
    /// Free-space spontaneous emission.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gamma_s: f64,
    /// Dephasing 1/T2.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t2_inv: f64,
    /// Factor required by every "much larger than" condition.
    #[arg(long, default_value_t = srsync::model::DEFAULT_MARGIN)]
    pub margin: f64,
}
