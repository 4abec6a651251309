//! Closed-form model curves and parameter relations.
//!
//! Time enters every curve through `tau = (t - t0) / dt`. Three families:
//!
//! * Cagan: constant GRI, `p(t) = p0 + r0 tau`.
//! * Linear feedback (LF): `r = r0 exp(a_p tau)`, so the CPI grows as a
//!   double exponential.
//! * Nonlinear feedback (NLF): `dr/dtau = a_p r^(1+beta)`, whose solution
//!   diverges at a finite critical time `t_c` with
//!   `(t_c - t0)/dt = 1 / (beta a_p r0^beta)`.
//!
//! NLF curves are evaluated through `L = ln((t_c - t0)/(t_c - t))`, computed
//! with `ln_1p`, so they stay accurate when `t_c` is very far away
//! (`beta -> 0`, where NLF reduces to LF).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Curves are only evaluated for `t <= t_c - SINGULARITY_GUARD * dt`.
pub const SINGULARITY_GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("t = {t} is at or beyond the critical time t_c = {t_c}")]
    Singularity { t: f64, t_c: f64 },
    #[error("pole at t = {t}: the log-price curve vanishes")]
    Pole { t: f64 },
    #[error("beta = {beta} >= 1 is not supported by the log-price solution")]
    UnsupportedBranch { beta: f64 },
    #[error("beta = 0 has no finite-time singularity")]
    NoSingularity,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric overflow at t = {t}")]
    Range { t: f64 },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Cagan,
    LinearFeedback,
    NonlinearFeedback,
    /// NLF log-price formula fitted directly to raw prices.
    StzDirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    LogCpi,
    RawCpi,
    JointGriLogCpi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub objective: Objective,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, objective: Objective) -> Result<Self> {
        if family == ModelFamily::StzDirect && objective != Objective::RawCpi {
            return Err(ModelError::InvalidArgument(
                "the raw-price formula family is only fitted against raw prices".into(),
            ));
        }
        Ok(ModelSpec { family, objective })
    }

    pub fn log_cpi(family: ModelFamily) -> Self {
        ModelSpec {
            family,
            objective: Objective::LogCpi,
        }
    }

    pub fn stz_direct() -> Self {
        ModelSpec {
            family: ModelFamily::StzDirect,
            objective: Objective::RawCpi,
        }
    }
}

/// Which of the two mutually determined quantities `a_p` and `t_c` is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    Strength(f64),
    CriticalTime(f64),
}

/// Model parameters. For NLF the critical time is normally stored and the
/// feedback strength derived from it; for LF and Cagan `a_p` is stored
/// (zero for Cagan) and there is no critical time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParameterRecord", try_from = "ParameterRecord")]
pub struct ParameterSet {
    pub t0: f64,
    pub dt: f64,
    pub p0: f64,
    pub r0: f64,
    pub beta: f64,
    pub coupling: Coupling,
}

impl ParameterSet {
    pub fn cagan(t0: f64, dt: f64, p0: f64, r0: f64) -> Self {
        ParameterSet {
            t0,
            dt,
            p0,
            r0,
            beta: 0.0,
            coupling: Coupling::Strength(0.0),
        }
    }

    pub fn linear(t0: f64, dt: f64, p0: f64, r0: f64, a_p: f64) -> Self {
        ParameterSet {
            t0,
            dt,
            p0,
            r0,
            beta: 0.0,
            coupling: Coupling::Strength(a_p),
        }
    }

    pub fn nonlinear(t0: f64, dt: f64, p0: f64, r0: f64, beta: f64, t_c: f64) -> Self {
        ParameterSet {
            t0,
            dt,
            p0,
            r0,
            beta,
            coupling: Coupling::CriticalTime(t_c),
        }
    }

    /// NLF parameters given by strength rather than critical time.
    pub fn nonlinear_with_strength(t0: f64, dt: f64, p0: f64, r0: f64, beta: f64, a_p: f64) -> Self {
        ParameterSet {
            t0,
            dt,
            p0,
            r0,
            beta,
            coupling: Coupling::Strength(a_p),
        }
    }

    pub fn tau(&self, t: f64) -> f64 {
        (t - self.t0) / self.dt
    }

    /// Feedback strength, derived from `t_c` when that is what is stored.
    pub fn a_p(&self) -> f64 {
        match self.coupling {
            Coupling::Strength(a) => a,
            Coupling::CriticalTime(t_c) => {
                feedback_strength(self.t0, self.dt, self.r0, self.beta, t_c).unwrap_or(f64::NAN)
            }
        }
    }

    /// Critical time, `None` when `beta == 0` or it cannot be formed.
    pub fn t_c(&self) -> Option<f64> {
        if self.beta <= 0.0 {
            return None;
        }
        match self.coupling {
            Coupling::CriticalTime(t_c) => Some(t_c),
            Coupling::Strength(a) => critical_time(self.t0, self.dt, self.r0, self.beta, a).ok(),
        }
    }

    /// `(t_c - t0)/dt` in periods.
    fn critical_span(&self) -> Result<f64> {
        if !(self.beta > 0.0) {
            return Err(ModelError::NoSingularity);
        }
        let span = match self.coupling {
            Coupling::CriticalTime(t_c) => (t_c - self.t0) / self.dt,
            Coupling::Strength(a) => 1.0 / (self.beta * a * self.r0.powf(self.beta)),
        };
        if !(span.is_finite() && span > 0.0) {
            return Err(ModelError::InvalidArgument(format!(
                "critical time must lie after t0 (span {span})"
            )));
        }
        Ok(span)
    }

    /// Checks the `t_c`/`a_p` closure relation, `tau_c beta a_p r0^beta = 1`.
    pub fn closure_residual(&self) -> Option<f64> {
        let t_c = self.t_c()?;
        Some((t_c - self.t0) / self.dt * self.beta * self.a_p() * self.r0.powf(self.beta) - 1.0)
    }
}

/// JSON form with explicit field names; `a_p_derived` tells which of
/// `a_p` and `t_c` is the stored one.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParameterRecord {
    t0: f64,
    dt: f64,
    p0: f64,
    r0: f64,
    beta: f64,
    t_c: Option<f64>,
    a_p: Option<f64>,
    #[serde(default)]
    a_p_derived: bool,
}

impl From<ParameterSet> for ParameterRecord {
    fn from(ps: ParameterSet) -> Self {
        let a_p = ps.a_p();
        ParameterRecord {
            t0: ps.t0,
            dt: ps.dt,
            p0: ps.p0,
            r0: ps.r0,
            beta: ps.beta,
            t_c: ps.t_c(),
            a_p: a_p.is_finite().then_some(a_p),
            a_p_derived: matches!(ps.coupling, Coupling::CriticalTime(_)),
        }
    }
}

impl TryFrom<ParameterRecord> for ParameterSet {
    type Error = String;

    fn try_from(r: ParameterRecord) -> std::result::Result<Self, String> {
        let coupling = match (r.t_c, r.a_p) {
            (Some(t_c), _) if r.beta > 0.0 && (r.a_p_derived || r.a_p.is_none()) => {
                Coupling::CriticalTime(t_c)
            }
            (_, Some(a)) => Coupling::Strength(a),
            (Some(t_c), None) => Coupling::CriticalTime(t_c),
            (None, None) => return Err("one of `a_p` or `t_c` is required".into()),
        };
        Ok(ParameterSet {
            t0: r.t0,
            dt: r.dt,
            p0: r.p0,
            r0: r.r0,
            beta: r.beta,
            coupling,
        })
    }
}

/// Raw-price parameterization `P(t) = A + B (t_c - t)^(-alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StzParameterSet {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub t_c: f64,
}

pub fn cagan_log_price(ps: &ParameterSet, t: f64) -> f64 {
    ps.p0 + ps.r0 * ps.tau(t)
}

fn lf_strength(ps: &ParameterSet) -> Result<f64> {
    let a = ps.a_p();
    if !(a.is_finite() && a >= 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "feedback strength must be non-negative, got {a}"
        )));
    }
    Ok(a)
}

/// Double-exponential log-price of the linear-feedback model. `a_p = 0`
/// reduces exactly to the Cagan line.
pub fn lf_log_price(ps: &ParameterSet, t: f64) -> Result<f64> {
    let a = lf_strength(ps)?;
    let tau = ps.tau(t);
    let x = a * tau;
    // (exp(a tau) - 1)/a, continuous through a = 0.
    let growth = if x == 0.0 { tau } else { x.exp_m1() / a };
    let p = ps.p0 + ps.r0 * growth;
    if !p.is_finite() {
        return Err(ModelError::Range { t });
    }
    Ok(p)
}

pub fn lf_rate(ps: &ParameterSet, t: f64) -> Result<f64> {
    let a = lf_strength(ps)?;
    let r = ps.r0 * (a * ps.tau(t)).exp();
    if !r.is_finite() {
        return Err(ModelError::Range { t });
    }
    Ok(r)
}

/// `(tau_c, L)` with `L = ln(tau_c / (tau_c - tau))`.
fn nlf_log_ratio(ps: &ParameterSet, t: f64) -> Result<(f64, f64)> {
    if !(ps.r0 > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "initial rate must be positive, got {}",
            ps.r0
        )));
    }
    let span = ps.critical_span()?;
    let tau = ps.tau(t);
    if tau > span - SINGULARITY_GUARD {
        return Err(ModelError::Singularity {
            t,
            t_c: ps.t0 + span * ps.dt,
        });
    }
    Ok((span, -(-tau / span).ln_1p()))
}

/// NLF growth rate `r0 ((t_c - t0)/(t_c - t))^(1/beta)`.
pub fn nlf_rate(ps: &ParameterSet, t: f64) -> Result<f64> {
    let (_, l) = nlf_log_ratio(ps, t)?;
    let r = ps.r0 * (l / ps.beta).exp();
    if !r.is_finite() {
        return Err(ModelError::Range { t });
    }
    Ok(r)
}

/// NLF log-price, the integral of [`nlf_rate`] over `t/dt`; valid for
/// `0 < beta < 1`.
pub fn nlf_log_price(ps: &ParameterSet, t: f64) -> Result<f64> {
    if ps.beta >= 1.0 {
        return Err(ModelError::UnsupportedBranch { beta: ps.beta });
    }
    let (span, l) = nlf_log_ratio(ps, t)?;
    let alpha = (1.0 - ps.beta) / ps.beta;
    let p = ps.p0 + ps.r0 * span * (alpha * l).exp_m1() / alpha;
    if !p.is_finite() {
        return Err(ModelError::Range { t });
    }
    Ok(p)
}

/// `t_c = t0 + dt / (beta a_p r0^beta)`.
pub fn critical_time(t0: f64, dt: f64, r0: f64, beta: f64, a_p: f64) -> Result<f64> {
    if beta == 0.0 {
        return Err(ModelError::NoSingularity);
    }
    if !(beta > 0.0 && r0 > 0.0 && a_p > 0.0 && dt > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "critical time needs positive beta, r0, a_p, dt (got {beta}, {r0}, {a_p}, {dt})"
        )));
    }
    Ok(t0 + dt / (beta * a_p * r0.powf(beta)))
}

/// Inverse of [`critical_time`]: `a_p = dt / (beta r0^beta (t_c - t0))`.
pub fn feedback_strength(t0: f64, dt: f64, r0: f64, beta: f64, t_c: f64) -> Result<f64> {
    if beta == 0.0 {
        return Err(ModelError::NoSingularity);
    }
    if !(beta > 0.0 && r0 > 0.0 && dt > 0.0 && t_c > t0) {
        return Err(ModelError::InvalidArgument(format!(
            "feedback strength needs positive beta, r0, dt and t_c > t0 (got {beta}, {r0}, {dt}, {t_c})"
        )));
    }
    Ok(dt / (beta * r0.powf(beta) * (t_c - t0)))
}

/// `alpha = (1 - beta)/beta`.
pub fn alpha_from_beta(beta: f64) -> Result<f64> {
    if beta == 0.0 {
        return Err(ModelError::NoSingularity);
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(ModelError::InvalidArgument(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok((1.0 - beta) / beta)
}

/// `beta = 1/(1 + alpha)`.
pub fn beta_from_alpha(alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(ModelError::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(1.0 / (1.0 + alpha))
}

pub fn stz_to_native(stz: &StzParameterSet, t0: f64, dt: f64) -> Result<ParameterSet> {
    let span = stz.t_c - t0;
    if !(span > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "critical time {} must lie after t0 = {t0}",
            stz.t_c
        )));
    }
    if !(stz.b.is_finite() && stz.b != 0.0) {
        return Err(ModelError::InvalidArgument("amplitude B must be finite and nonzero".into()));
    }
    let beta = beta_from_alpha(stz.alpha)?;
    let r0 = dt * stz.alpha * stz.b / span.powf(1.0 + stz.alpha);
    let p0 = stz.a + stz.b / span.powf(stz.alpha);
    Ok(ParameterSet::nonlinear(t0, dt, p0, r0, beta, stz.t_c))
}

pub fn native_to_stz(ps: &ParameterSet) -> Result<StzParameterSet> {
    let t_c = ps.t_c().ok_or(ModelError::NoSingularity)?;
    let span = t_c - ps.t0;
    if !(span > 0.0) {
        return Err(ModelError::InvalidArgument("critical time must lie after t0".into()));
    }
    let alpha = alpha_from_beta(ps.beta)?;
    let b = ps.r0 * span.powf(1.0 + alpha) / (alpha * ps.dt);
    let a = ps.p0 - b / span.powf(alpha);
    Ok(StzParameterSet { alpha, a, b, t_c })
}

/// Growth rate implied when the raw price (not its logarithm) follows the
/// NLF log-price formula: `r = (dP/dtau)/P`.
pub fn stz_derived_rate(ps: &ParameterSet, t: f64) -> Result<f64> {
    let numerator = nlf_rate(ps, t)?;
    let denominator = nlf_log_price(ps, t)?;
    if denominator.abs() < f64::MIN_POSITIVE {
        return Err(ModelError::Pole { t });
    }
    Ok(numerator / denominator)
}

/// Straight line `ln(r0/a_p) + a_p tau` approached from below by
/// `ln ln(P/P0)` of the LF model.
pub fn lnln_asymptote(ps: &ParameterSet, t: f64) -> Result<f64> {
    let a = ps.a_p();
    if !(a > 0.0 && ps.r0 > 0.0) {
        return Err(ModelError::InvalidArgument(
            "asymptote needs positive r0 and a_p".into(),
        ));
    }
    Ok((ps.r0 / a).ln() + a * ps.tau(t))
}

/// Tsallis q-exponential `[1 + (1-q) x]^(1/(1-q))`, `exp(x)` at `q = 1`.
/// Returns `+inf` past the singular point for `q > 1` and `0` past the
/// cut-off for `q < 1`.
pub fn q_exponential(x: f64, q: f64) -> f64 {
    let k = 1.0 - q;
    if k == 0.0 {
        return x.exp();
    }
    q_exponential_of_base(k * x, k)
}

// e_q written in terms of `base = (1 - q) x` and `k = 1 - q`
fn q_exponential_of_base(base: f64, k: f64) -> f64 {
    if base <= -1.0 {
        return if k < 0.0 { f64::INFINITY } else { 0.0 };
    }
    (base.ln_1p() / k).exp()
}

/// `r0 e_q(a_p r0^beta tau)` with `q = 1 + beta`; coincides with
/// [`nlf_rate`] for `beta > 0` and with [`lf_rate`] for `beta = 0`.
pub fn q_exponential_rate(ps: &ParameterSet, t: f64) -> Result<f64> {
    if !(ps.beta >= 0.0) {
        return Err(ModelError::InvalidArgument(format!("beta must be >= 0, got {}", ps.beta)));
    }
    if ps.beta == 0.0 {
        return finite_rate(ps.r0 * q_exponential(ps.a_p() * ps.tau(t), 1.0), t);
    }
    // beta x = beta a_p r0^beta tau = tau / (t_c - t0) in units of dt
    let (span, tau) = (ps.critical_span()?, ps.tau(t));
    if tau > span - SINGULARITY_GUARD {
        return Err(ModelError::Singularity {
            t,
            t_c: ps.t_c().unwrap_or(f64::NAN),
        });
    }
    let beta_x = tau / span;
    finite_rate(ps.r0 * q_exponential_of_base(-beta_x, -ps.beta), t)
}

fn finite_rate(r: f64, t: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(ModelError::Range { t });
    }
    Ok(r)
}

/// Log-price curve of a family. For [`ModelFamily::StzDirect`] this is the
/// value fitted to raw prices.
pub fn log_price(family: ModelFamily, ps: &ParameterSet, t: f64) -> Result<f64> {
    match family {
        ModelFamily::Cagan => Ok(cagan_log_price(ps, t)),
        ModelFamily::LinearFeedback => lf_log_price(ps, t),
        ModelFamily::NonlinearFeedback | ModelFamily::StzDirect => nlf_log_price(ps, t),
    }
}

/// Growth-rate curve of a family.
pub fn rate(family: ModelFamily, ps: &ParameterSet, t: f64) -> Result<f64> {
    match family {
        ModelFamily::Cagan => Ok(ps.r0),
        ModelFamily::LinearFeedback => lf_rate(ps, t),
        ModelFamily::NonlinearFeedback => nlf_rate(ps, t),
        ModelFamily::StzDirect => stz_derived_rate(ps, t),
    }
}
