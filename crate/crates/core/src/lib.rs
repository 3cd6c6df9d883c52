//! Synchronization of two detuned superradiant ensembles: second-order
//! cumulant model, spectral analysis, exact small-N oracle and parameter
//! sweeps.

pub mod cumulant;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod spectrum;
pub mod sweep;

pub use cumulant::{steady_state, CumulantState, SteadyState};
pub use model::{ModelParams, ModelError};
pub use spectrum::{gamma_delta, SpectrumResult};
