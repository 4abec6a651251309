//! Residual vectors for each objective and the internal coordinates the
//! optimizer works in.

use nalgebra::DVector;

use super::lm::LeastSquares;
use super::ParamName;
use crate::model::{self, ModelFamily, Objective, ParameterSet};

/// Every parameter any family uses; each family reads the subset it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NativeParams {
    pub p0: f64,
    pub r0: f64,
    pub a_p: f64,
    pub beta: f64,
    pub t_c: f64,
}

impl NativeParams {
    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::P0 => self.p0,
            ParamName::R0 => self.r0,
            ParamName::Ap => self.a_p,
            ParamName::Beta => self.beta,
            ParamName::Tc => self.t_c,
        }
    }

    pub fn set(&mut self, name: ParamName, v: f64) {
        match name {
            ParamName::P0 => self.p0 = v,
            ParamName::R0 => self.r0 = v,
            ParamName::Ap => self.a_p = v,
            ParamName::Beta => self.beta = v,
            ParamName::Tc => self.t_c = v,
        }
    }

    pub fn to_parameter_set(self, family: ModelFamily, t0: f64, dt: f64) -> ParameterSet {
        match family {
            ModelFamily::Cagan => ParameterSet::cagan(t0, dt, self.p0, self.r0),
            ModelFamily::LinearFeedback => ParameterSet::linear(t0, dt, self.p0, self.r0, self.a_p),
            ModelFamily::NonlinearFeedback | ModelFamily::StzDirect => {
                ParameterSet::nonlinear(t0, dt, self.p0, self.r0, self.beta, self.t_c)
            }
        }
    }

    pub fn from_parameter_set(ps: &ParameterSet) -> Self {
        NativeParams {
            p0: ps.p0,
            r0: ps.r0,
            a_p: ps.a_p(),
            beta: ps.beta,
            t_c: ps.t_c().unwrap_or(f64::NAN),
        }
    }
}

pub(crate) struct Problem {
    pub family: ModelFamily,
    pub objective: Objective,
    pub t0: f64,
    pub dt: f64,
    /// Last observation time; the critical time is kept beyond it.
    pub last_time: f64,
    /// `(t, ln P)` or, for the raw-price objective, `(t, P)`.
    pub level_points: Vec<(f64, f64)>,
    /// `(interval end, GRI)` for the joint objective.
    pub rate_points: Vec<(f64, f64)>,
    pub free: Vec<ParamName>,
    pub base: NativeParams,
    floor: f64,
}

impl Problem {
    pub fn new(
        family: ModelFamily,
        objective: Objective,
        t0: f64,
        dt: f64,
        level_points: Vec<(f64, f64)>,
        rate_points: Vec<(f64, f64)>,
        free: Vec<ParamName>,
        base: NativeParams,
    ) -> Self {
        let last_time = level_points
            .iter()
            .chain(&rate_points)
            .map(|p| p.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let scale: f64 = level_points
            .iter()
            .chain(&rate_points)
            .map(|p| p.1 * p.1)
            .sum::<f64>()
            .max(1.0);
        Problem {
            family,
            objective,
            t0,
            dt,
            last_time,
            level_points,
            rate_points,
            free,
            base,
            floor: 1e-28 * scale,
        }
    }

    pub fn n_points(&self) -> usize {
        self.level_points.len() + self.rate_points.len()
    }

    pub fn to_internal(&self, name: ParamName, v: f64) -> f64 {
        match name {
            ParamName::Beta => v.ln(),
            ParamName::Tc => (v - self.last_time).ln(),
            _ => v,
        }
    }

    pub fn from_internal(&self, name: ParamName, u: f64) -> f64 {
        match name {
            ParamName::Beta => u.exp(),
            ParamName::Tc => self.last_time + u.exp(),
            _ => u,
        }
    }

    pub fn native(&self, x: &DVector<f64>) -> NativeParams {
        let mut p = self.base;
        for (i, &name) in self.free.iter().enumerate() {
            p.set(name, self.from_internal(name, x[i]));
        }
        p
    }

    pub fn internal(&self, p: &NativeParams) -> DVector<f64> {
        DVector::from_iterator(
            self.free.len(),
            self.free.iter().map(|&n| self.to_internal(n, p.get(n))),
        )
    }

    pub fn parameter_set(&self, p: NativeParams) -> ParameterSet {
        p.to_parameter_set(self.family, self.t0, self.dt)
    }

    /// Residuals `model - data` at native parameters.
    pub fn native_residuals(&self, p: NativeParams) -> Option<DVector<f64>> {
        let ps = self.parameter_set(p);
        let mut out = Vec::with_capacity(self.n_points());
        for &(t, y) in &self.level_points {
            let level = model::log_price(self.family, &ps, t).ok()?;
            let m = match (self.objective, self.family) {
                (Objective::RawCpi, ModelFamily::StzDirect) => level,
                (Objective::RawCpi, _) => level.exp(),
                _ => level,
            };
            out.push(m - y);
        }
        // a GRI labelled with its interval's end year measures the rate at
        // the interval midpoint
        for &(t, y) in &self.rate_points {
            out.push(model::rate(self.family, &ps, t - 0.5 * self.dt).ok()? - y);
        }
        out.iter()
            .all(|v| v.is_finite())
            .then(|| DVector::from_vec(out))
    }

    /// Residuals as a function of the free parameters in native units.
    pub fn free_native_residuals(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let mut p = self.base;
        for (i, &name) in self.free.iter().enumerate() {
            p.set(name, theta[i]);
        }
        self.native_residuals(p)
    }
}

impl LeastSquares for Problem {
    fn residuals(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        self.native_residuals(self.native(x))
    }

    fn chi2_floor(&self) -> f64 {
        self.floor
    }
}

/// View of a [`Problem`] in native free-parameter units, used for the
/// covariance so uncertainties come out in the reported units.
pub(crate) struct NativeView<'a>(pub &'a Problem);

impl LeastSquares for NativeView<'_> {
    fn residuals(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        self.0.free_native_residuals(theta)
    }

    fn chi2_floor(&self) -> f64 {
        self.0.floor
    }
}
