//! Synthetic series: the discrete feedback recursions and noisy samples of
//! the continuum closed forms.
//!
//! The recursions advance on a stride of two periods,
//! `r(t + dt) = r(t - dt) + 2 a_p r(t - dt)^(1 + beta)`, so a series is two
//! interleaved sublattices each seeded by one of the `r_init` values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelError, ModelFamily, ParameterSet};
use crate::series::{self, ObservationSeries, SeriesError, SeriesKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid recursion spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecursionFamily {
    Cagan,
    LinearFeedback,
    NonlinearFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionSpec {
    pub family: RecursionFamily,
    /// GRI at the first two lattice points.
    pub r_init: (f64, f64),
    pub a_p: f64,
    pub beta: f64,
    /// Number of recursion applications; the series has `steps + 2` values.
    pub steps: usize,
    /// Observation noise added to each emitted rate (not fed back).
    pub noise_sigma: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub start_year: i32,
    /// Internal sub-steps per period. Each sub-step advances `dt/refinement`
    /// with strength `a_p/refinement`; only every `refinement`-th value is
    /// emitted. `1` is the literal recursion.
    #[serde(default = "one")]
    pub refinement: u32,
}

fn one() -> u32 {
    1
}

impl RecursionSpec {
    pub fn new(family: RecursionFamily, r_init: (f64, f64), a_p: f64, beta: f64, steps: usize) -> Self {
        RecursionSpec {
            family,
            r_init,
            a_p,
            beta,
            steps,
            noise_sigma: None,
            seed: 0,
            start_year: 0,
            refinement: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.r_init;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(SimError::Spec(format!("seed rates must be positive, got ({a}, {b})")));
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SimError::Spec(format!("noise scale must be >= 0, got {s}")));
            }
        }
        if self.refinement == 0 {
            return Err(SimError::Spec("refinement must be at least 1".into()));
        }
        if self.family != RecursionFamily::Cagan && !(self.a_p >= 0.0 && self.a_p.is_finite()) {
            return Err(SimError::Spec(format!("feedback strength must be >= 0, got {}", self.a_p)));
        }
        if self.family == RecursionFamily::NonlinearFeedback && !(self.beta > 0.0) {
            return Err(SimError::Spec(format!("nonlinear feedback needs beta > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    pub series: ObservationSeries,
    /// Lattice index at which the recursion overflowed; the series stops
    /// just before it.
    pub blowup_step: Option<usize>,
}

/// Runs the discrete recursion of `spec.family`.
pub fn iterate_rates(spec: &RecursionSpec) -> Result<RateSeries> {
    spec.validate()?;
    let m = spec.refinement as usize;
    let strength = spec.a_p / m as f64;
    let exponent = match spec.family {
        RecursionFamily::NonlinearFeedback => 1.0 + spec.beta,
        _ => 1.0,
    };
    let total = spec.steps + 2;
    let internal_len = (total - 1) * m + 1;

    let mut internal = Vec::with_capacity(internal_len);
    internal.push(spec.r_init.0);
    internal.push(spec.r_init.1);
    let mut blowup = None;
    while internal.len() < internal_len {
        let prev = internal[internal.len() - 2];
        let next = match spec.family {
            RecursionFamily::Cagan => prev,
            _ => prev + 2.0 * strength * prev.powf(exponent),
        };
        if !next.is_finite() {
            // first emitted lattice point that cannot be reached
            blowup = Some(internal.len().div_ceil(m));
            break;
        }
        internal.push(next);
    }

    // With refinement the second seed sits one sub-step after the first and
    // is not itself emitted.
    let mut values: Vec<f64> = internal.iter().step_by(m).copied().collect();
    values.truncate(total);

    if let Some(sigma) = spec.noise_sigma.filter(|&s| s > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| SimError::Spec(e.to_string()))?;
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }

    let series = ObservationSeries::new(spec.start_year, values, SeriesKind::Gri)?;
    Ok(RateSeries {
        series,
        blowup_step: blowup,
    })
}

/// Accumulates a GRI series into a price index starting at `p_base`.
pub fn integrate_prices(rates: &ObservationSeries, p_base: f64) -> Result<ObservationSeries> {
    Ok(series::gri_to_cpi(rates, p_base)?)
}

/// Samples the closed-form log-price of `family` at every year in
/// `[from_year, to_year]`, adds i.i.d. Gaussian noise of scale
/// `noise_sigma` in log space and exponentiates.
pub fn synthesize(
    ps: &ParameterSet,
    family: ModelFamily,
    from_year: i32,
    to_year: i32,
    noise_sigma: f64,
    seed: u64,
) -> Result<ObservationSeries> {
    if family == ModelFamily::StzDirect {
        return Err(SimError::Spec("raw-price formula has no log-price dynamics to sample".into()));
    }
    if from_year > to_year {
        return Err(SimError::Spec(format!("empty year range {from_year}..{to_year}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SimError::Spec(format!("noise scale must be >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (noise_sigma > 0.0)
        .then(|| Normal::new(0.0, noise_sigma))
        .transpose()
        .map_err(|e| SimError::Spec(e.to_string()))?;
    let values = (from_year..=to_year)
        .map(|year| {
            let mut p = model::log_price(family, ps, year as f64)?;
            if let Some(n) = &normal {
                p += n.sample(&mut rng);
            }
            let price = p.exp();
            if !(price.is_finite() && price > 0.0) {
                return Err(ModelError::Range { t: year as f64 }.into());
            }
            Ok(price)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationSeries::new(from_year, values, SeriesKind::PriceIndex)?)
}
