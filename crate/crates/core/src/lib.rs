//! Finite-time-singularity models of hyperinflation.
//!
//! * [`series`]: annual series and the inflation / CPI / log-CPI / GRI transforms.
//! * [`model`]: closed-form Cagan, linear-feedback and nonlinear-feedback curves
//!   and the relations among their parameters.
//! * [`fitter`]: Levenberg-Marquardt fits with multi-start, frozen parameters
//!   and covariance-based uncertainties.
//! * [`simulator`]: the discrete recursions and synthetic closed-form series.
//! * [`datasets`]: bundled annual inflation data.

pub mod datasets;
pub mod fitter;
pub mod model;
pub mod series;
pub mod simulator;

pub use fitter::{compare_models, fit, profile_beta_tc, FitConfig, FitError, FitResult, ParamName};
pub use model::{ModelError, ModelFamily, ModelSpec, Objective, ParameterSet, StzParameterSet};
pub use series::{ObservationSeries, SeriesError, SeriesKind, SeriesMeta};
