//! Nonlinear least-squares fits of the model families to price data.
//!
//! Each fit runs Levenberg-Marquardt from every point of a start grid and
//! keeps the lowest chi-square. The goodness of fit is reported as the
//! unweighted r.m.s. residue `chi = sqrt(sum(res^2) / N)`; parameter
//! uncertainties are the square roots of the diagonal of
//! `(J^T J)^-1 * chi2 / (N - k)` evaluated at the optimum in native units.
//!
//! Internally `beta` and `t_c - last_time` are optimized in log space, so
//! trial points never put the critical time inside the fitted window.

mod lm;
mod objective;
mod profile;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lm::{LmStatus, LmStep, PENALTY_CHI2};
pub use profile::{profile_beta_tc, ProfileIterate};

use crate::model::{ModelError, ModelFamily, ModelSpec, Objective, ParameterSet};
use crate::series::{self, ObservationSeries, SeriesError, SeriesKind};
use lm::LeastSquares;
use objective::{NativeParams, NativeView, Problem};

/// Default relative chi-square change that ends a fit (0.1 %).
pub const STANDARD_STOP: f64 = 1e-3;
/// Threshold used when iterations are continued past the standard stop (0.001 %).
pub const EXTENDED_STOP: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 500;

pub const DEFAULT_BETA_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.7];
/// Critical-time starts, in years after the last observation.
pub const DEFAULT_TC_OFFSETS: [f64; 5] = [1.0, 3.0, 10.0, 30.0, 100.0];
pub const DEFAULT_AP_GRID: [f64; 5] = [0.02, 0.05, 0.1, 0.2, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "p0")]
    P0,
    #[serde(rename = "r0")]
    R0,
    #[serde(rename = "a_p")]
    Ap,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "t_c")]
    Tc,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::P0 => "p0",
            ParamName::R0 => "r0",
            ParamName::Ap => "a_p",
            ParamName::Beta => "beta",
            ParamName::Tc => "t_c",
        }
    }

    /// Parameters a family estimates. For NLF `a_p` is always derived.
    pub fn for_family(family: ModelFamily) -> &'static [ParamName] {
        match family {
            ModelFamily::Cagan => &[ParamName::P0, ParamName::R0],
            ModelFamily::LinearFeedback => &[ParamName::P0, ParamName::R0, ParamName::Ap],
            ModelFamily::NonlinearFeedback | ModelFamily::StzDirect => {
                &[ParamName::P0, ParamName::R0, ParamName::Beta, ParamName::Tc]
            }
        }
    }
}

impl std::str::FromStr for ParamName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "p0" => Ok(ParamName::P0),
            "r0" => Ok(ParamName::R0),
            "a_p" | "ap" => Ok(ParamName::Ap),
            "beta" => Ok(ParamName::Beta),
            "t_c" | "tc" => Ok(ParamName::Tc),
            other => Err(format!("unknown parameter `{other}`")),
        }
    }
}

impl std::fmt::Display for ParamName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Start grid. Empty lists fall back to the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartGrid {
    pub beta: Vec<f64>,
    /// Years after the last observation.
    pub t_c_offsets: Vec<f64>,
    pub a_p: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Default grid, with `p0` and `r0` taken from the first observations.
    #[default]
    Auto,
    Point(ParameterSet),
    Grid(StartGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: ModelSpec,
    /// Inclusive year range; the whole series when absent.
    pub window: Option<(i32, i32)>,
    pub frozen: BTreeMap<ParamName, f64>,
    pub initial: InitialGuess,
    pub stop_rel_chi2: f64,
    /// When set, the best start is iterated further until the relative
    /// chi-square change drops below this threshold.
    pub extended_stop: Option<f64>,
    pub max_iter: usize,
    /// Reference time of the parameters; the first fitted year by default.
    pub t0: Option<f64>,
    pub label: Option<String>,
}

impl FitConfig {
    pub fn new(model: ModelSpec) -> Self {
        FitConfig {
            model,
            window: None,
            frozen: BTreeMap::new(),
            initial: InitialGuess::Auto,
            stop_rel_chi2: STANDARD_STOP,
            extended_stop: None,
            max_iter: DEFAULT_MAX_ITER,
            t0: None,
            label: None,
        }
    }

    pub fn window(mut self, from_year: i32, to_year: i32) -> Self {
        self.window = Some((from_year, to_year));
        self
    }

    pub fn freeze(mut self, name: ParamName, value: f64) -> Self {
        self.frozen.insert(name, value);
        self
    }

    pub fn initial(mut self, initial: InitialGuess) -> Self {
        self.initial = initial;
        self
    }

    pub fn extended(mut self, threshold: f64) -> Self {
        self.extended_stop = Some(threshold);
        self
    }

    pub fn max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    fn validate(&self) -> Result<(), FitError> {
        for t in std::iter::once(self.stop_rel_chi2).chain(self.extended_stop) {
            if !(t > 0.0 && t < 1.0) {
                return Err(FitError::Argument(format!("stopping threshold {t} must lie in (0, 1)")));
            }
        }
        ModelSpec::new(self.model.family, self.model.objective)?;
        let allowed = ParamName::for_family(self.model.family);
        for (name, v) in &self.frozen {
            if !allowed.contains(name) {
                return Err(FitError::Argument(format!(
                    "`{name}` is not a free parameter of {:?}",
                    self.model.family
                )));
            }
            if !v.is_finite() {
                return Err(FitError::Argument(format!("frozen `{name}` must be finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    pub params: ParameterSet,
    /// Order of the rows/columns of `covariance` and entries of `sigma`.
    pub free: Vec<ParamName>,
    pub sigma: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Unweighted r.m.s. residue.
    pub chi: f64,
    pub chi2: f64,
    /// Chi-square after each accepted step, starting at the initial point.
    pub chi2_trace: Vec<f64>,
    pub steps: Vec<LmStep>,
    pub status: LmStatus,
    pub converged: bool,
    pub iterations: usize,
    pub n_points: usize,
    pub window: (i32, i32),
    pub starts: usize,
}

impl FitResult {
    pub fn sigma_of(&self, name: ParamName) -> Option<f64> {
        self.free.iter().position(|&n| n == name).map(|i| self.sigma[i])
    }

    pub fn value_of(&self, name: ParamName) -> f64 {
        NativeParams::from_parameter_set(&self.params).get(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid fit configuration: {0}")]
    Argument(String),
    #[error("a {found} series cannot be fitted with the {objective:?} objective")]
    IncompatibleData {
        found: &'static str,
        objective: Objective,
    },
    #[error("no start converged (best chi2 = {:.6e})", best.chi2)]
    NoConvergence { best: Box<FitResult> },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Windowed data turned into residual targets.
struct Prepared {
    level_points: Vec<(f64, f64)>,
    rate_points: Vec<(f64, f64)>,
    dt: f64,
    window: (i32, i32),
}

fn prepare(data: &ObservationSeries, cfg: &FitConfig) -> Result<Prepared, FitError> {
    let data = match cfg.window {
        Some((a, b)) => series::window(data, a, b)?,
        None => data.clone(),
    };
    let window = (data.start_year, data.last_year().round() as i32);
    let incompatible = || FitError::IncompatibleData {
        found: data.kind.label(),
        objective: cfg.model.objective,
    };
    let (level_points, rate_points) = match (cfg.model.objective, data.kind) {
        (Objective::LogCpi, SeriesKind::PriceIndex) => {
            (series::log_transform(&data)?.points().collect(), Vec::new())
        }
        (Objective::LogCpi, SeriesKind::LogPrice) => (data.points().collect(), Vec::new()),
        (Objective::RawCpi, SeriesKind::PriceIndex) => (data.points().collect(), Vec::new()),
        (Objective::JointGriLogCpi, SeriesKind::PriceIndex) => {
            let rates = if data.len() >= 2 {
                series::cpi_to_gri(&data)?.points().collect()
            } else {
                Vec::new()
            };
            (series::log_transform(&data)?.points().collect(), rates)
        }
        _ => return Err(incompatible()),
    };
    Ok(Prepared {
        level_points,
        rate_points,
        dt: data.dt,
        window,
    })
}

impl Prepared {
    /// First observed growth rate and mean growth rate, in log-price units.
    fn rate_guesses(&self, objective: Objective) -> (f64, f64) {
        let pts = &self.level_points;
        let level = |y: f64| if objective == Objective::RawCpi { y.max(f64::MIN_POSITIVE).ln() } else { y };
        if pts.len() < 2 {
            return (0.0, 0.0);
        }
        let first = level(pts[1].1) - level(pts[0].1);
        let periods = (pts[pts.len() - 1].0 - pts[0].0) / self.dt;
        let mean = (level(pts[pts.len() - 1].1) - level(pts[0].1)) / periods;
        (first, mean)
    }
}

fn starting_points(cfg: &FitConfig, prep: &Prepared, last_time: f64) -> Vec<NativeParams> {
    let family = cfg.model.family;
    let (first_rate, mean_rate) = prep.rate_guesses(cfg.model.objective);
    let positive_rate = if first_rate > 0.0 {
        first_rate
    } else if mean_rate > 0.0 {
        mean_rate
    } else {
        1e-2
    };
    let p0 = prep.level_points[0].1;
    let r0 = match (family, cfg.model.objective) {
        (ModelFamily::Cagan, _) => mean_rate,
        // raw-price formula: dP/dtau at t0 plays the role of r0
        (ModelFamily::StzDirect, _) if prep.level_points.len() >= 2 => {
            let d = (prep.level_points[1].1 - prep.level_points[0].1) / prep.dt;
            if d > 0.0 { d } else { positive_rate * p0.abs().max(1e-3) }
        }
        _ => positive_rate,
    };
    let base = NativeParams {
        p0,
        r0,
        a_p: 0.0,
        beta: 0.0,
        t_c: f64::NAN,
    };

    let grid = match &cfg.initial {
        InitialGuess::Point(ps) => {
            let mut p = NativeParams::from_parameter_set(ps);
            if family == ModelFamily::LinearFeedback {
                p.beta = 0.0;
            }
            return vec![p];
        }
        InitialGuess::Auto => StartGrid::default(),
        InitialGuess::Grid(g) => g.clone(),
    };
    let or_default = |v: &[f64], d: &[f64]| if v.is_empty() { d.to_vec() } else { v.to_vec() };
    match family {
        ModelFamily::Cagan => vec![base],
        ModelFamily::LinearFeedback => or_default(&grid.a_p, &DEFAULT_AP_GRID)
            .into_iter()
            .map(|a_p| NativeParams { a_p, ..base })
            .collect(),
        ModelFamily::NonlinearFeedback | ModelFamily::StzDirect => {
            let betas = or_default(&grid.beta, &DEFAULT_BETA_GRID);
            let offsets = or_default(&grid.t_c_offsets, &DEFAULT_TC_OFFSETS);
            betas
                .iter()
                .flat_map(|&beta| {
                    offsets.iter().map(move |&off| NativeParams {
                        beta,
                        t_c: last_time + off,
                        ..base
                    })
                })
                .collect()
        }
    }
}

/// Everything needed to run and report one configured fit.
pub(crate) struct Setup {
    problem: Problem,
    starts: Vec<NativeParams>,
    window: (i32, i32),
}

pub(crate) fn setup(data: &ObservationSeries, cfg: &FitConfig) -> Result<Setup, FitError> {
    cfg.validate()?;
    let prep = prepare(data, cfg)?;
    let family = cfg.model.family;
    let free: Vec<ParamName> = ParamName::for_family(family)
        .iter()
        .copied()
        .filter(|n| !cfg.frozen.contains_key(n))
        .collect();
    let n_points = prep.level_points.len() + prep.rate_points.len();
    if n_points < free.len() + 1 {
        return Err(FitError::Argument(format!(
            "{n_points} data points cannot constrain {} free parameters",
            free.len()
        )));
    }
    let t0 = cfg.t0.unwrap_or(prep.level_points[0].0);
    let mut problem = Problem::new(
        family,
        cfg.model.objective,
        t0,
        prep.dt,
        prep.level_points.clone(),
        prep.rate_points.clone(),
        free,
        NativeParams {
            p0: 0.0,
            r0: 0.0,
            a_p: 0.0,
            beta: 0.0,
            t_c: f64::NAN,
        },
    );
    let mut starts = starting_points(cfg, &prep, problem.last_time);
    for s in &mut starts {
        for (&name, &v) in &cfg.frozen {
            s.set(name, v);
        }
    }
    problem.base = starts[0];
    Ok(Setup {
        problem,
        starts,
        window: prep.window,
    })
}

pub(crate) struct StartRun {
    start: NativeParams,
    run: lm::LmRun,
}

impl Setup {
    fn problem_for(&self, start: &NativeParams) -> Problem {
        let mut p = Problem::new(
            self.problem.family,
            self.problem.objective,
            self.problem.t0,
            self.problem.dt,
            self.problem.level_points.clone(),
            self.problem.rate_points.clone(),
            self.problem.free.clone(),
            *start,
        );
        p.base = *start;
        p
    }

    /// Runs every start and returns the best, chosen by chi-square with the
    /// final parameter vector as tie-break so the choice does not depend on
    /// start order.
    pub(crate) fn best_start(&self, stop: f64, max_iter: usize) -> StartRun {
        let runs: Vec<StartRun> = self
            .starts
            .par_iter()
            .map(|start| {
                let problem = self.problem_for(start);
                let x0 = problem.internal(start);
                StartRun {
                    start: *start,
                    run: lm::minimize(&problem, x0, stop, max_iter, None),
                }
            })
            .collect();
        runs.into_iter()
            .min_by(compare_runs)
            .expect("at least one start")
    }
}

fn compare_runs(a: &StartRun, b: &StartRun) -> Ordering {
    let rank = |s: &StartRun| (s.run.status == LmStatus::InvalidStart) as u8;
    rank(a)
        .cmp(&rank(b))
        .then(a.run.chi2.total_cmp(&b.run.chi2))
        .then_with(|| {
            a.run
                .x
                .iter()
                .zip(b.run.x.iter())
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Covariance in native units, `(J^T J)^-1 chi2 / (N - k)`.
fn covariance(problem: &Problem, params: &NativeParams, chi2: f64) -> DMatrix<f64> {
    let k = problem.free.len();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    let theta = DVector::from_iterator(k, problem.free.iter().map(|&n| params.get(n)));
    let view = NativeView(problem);
    let Some(r) = view.residuals(&theta) else {
        return DMatrix::from_element(k, k, f64::NAN);
    };
    let jac = lm::jacobian(&view, &theta, &r, 1e-7);
    let a = jac.transpose() * &jac;
    let inv = a
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| a.clone().pseudo_inverse(1e-14 * a.norm()).ok())
        .unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    let dof = (problem.n_points() - k) as f64;
    let mut cov = inv * (chi2 / dof);
    cov = (&cov + cov.transpose()) * 0.5;
    cov
}

pub(crate) fn assemble(
    setup: &Setup,
    start: &NativeParams,
    x: &DVector<f64>,
    chi2: f64,
    chi2_trace: Vec<f64>,
    steps: Vec<LmStep>,
    status: LmStatus,
    iterations: usize,
    model: ModelSpec,
) -> FitResult {
    let problem = setup.problem_for(start);
    let native = problem.native(x);
    let n = problem.n_points();
    let cov = if chi2 < PENALTY_CHI2 {
        covariance(&problem, &native, chi2)
    } else {
        DMatrix::from_element(problem.free.len(), problem.free.len(), f64::NAN)
    };
    let k = problem.free.len();
    FitResult {
        model,
        params: problem.parameter_set(native),
        free: problem.free.clone(),
        sigma: (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        covariance: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
        chi: (chi2 / n as f64).sqrt(),
        chi2,
        chi2_trace,
        steps,
        status,
        converged: status.converged(),
        iterations,
        n_points: n,
        window: setup.window,
        starts: setup.starts.len(),
    }
}

/// Fits `data` according to `cfg`, returning the best of all starts.
pub fn fit(data: &ObservationSeries, cfg: &FitConfig) -> Result<FitResult, FitError> {
    let setup = setup(data, cfg)?;
    let best = setup.best_start(cfg.stop_rel_chi2, cfg.max_iter);
    let mut run = best.run;
    let mut trace: Vec<f64> = run.path.iter().map(|p| p.1).collect();

    if let Some(ext) = cfg.extended_stop {
        if run.status.converged() && run.status != LmStatus::ExactFit && run.iterations < cfg.max_iter {
            let problem = setup.problem_for(&best.start);
            let more = lm::minimize(
                &problem,
                run.x.clone(),
                ext,
                cfg.max_iter - run.iterations,
                Some(run.lambda),
            );
            trace.extend(more.path.iter().skip(1).map(|p| p.1));
            run.steps.extend(more.steps.iter().map(|s| LmStep {
                iteration: s.iteration + run.iterations,
                ..*s
            }));
            run.iterations += more.iterations;
            run.x = more.x;
            run.chi2 = more.chi2;
            run.status = more.status;
        }
    }

    let result = assemble(
        &setup,
        &best.start,
        &run.x,
        run.chi2,
        trace,
        run.steps,
        run.status,
        run.iterations,
        cfg.model,
    );
    if !result.converged {
        return Err(FitError::NoConvergence {
            best: Box::new(result),
        });
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonOutcome {
    Fitted(Box<FitResult>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    /// Position of the configuration in the input list.
    pub index: usize,
    pub label: String,
    pub outcome: ComparisonOutcome,
}

impl ComparisonEntry {
    pub fn result(&self) -> Option<&FitResult> {
        match &self.outcome {
            ComparisonOutcome::Fitted(r) => Some(r),
            ComparisonOutcome::Failed(_) => None,
        }
    }
}

/// Fits every configuration and ranks the successes by `chi` (fewer free
/// parameters first on ties). Failures are kept, flagged, and listed last.
pub fn compare_models(data: &ObservationSeries, cfgs: &[FitConfig]) -> Result<Vec<ComparisonEntry>, FitError> {
    if cfgs.is_empty() {
        return Err(FitError::Argument("no model configurations to compare".into()));
    }
    let mut entries: Vec<ComparisonEntry> = cfgs
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| {
            let label = cfg
                .label
                .clone()
                .unwrap_or_else(|| format!("{:?}/{:?}", cfg.model.family, cfg.model.objective));
            let outcome = match fit(data, cfg) {
                Ok(r) => ComparisonOutcome::Fitted(Box::new(r)),
                Err(e) => ComparisonOutcome::Failed(e.to_string()),
            };
            ComparisonEntry { index, label, outcome }
        })
        .collect();
    entries.sort_by(|a, b| match (a.result(), b.result()) {
        (Some(x), Some(y)) => x
            .chi
            .total_cmp(&y.chi)
            .then(x.free.len().cmp(&y.free.len()))
            .then(a.index.cmp(&b.index)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    Ok(entries)
}
