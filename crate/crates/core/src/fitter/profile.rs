//! Iteration path of an NLF fit continued past the standard stop, exposing
//! how `beta` and `t_c` trade off along the valley where
//! `beta * (t_c - t0)` is nearly constant.

use serde::{Deserialize, Serialize};

use super::{lm, setup, FitConfig, FitError, EXTENDED_STOP};
use crate::model::ModelFamily;
use crate::series::ObservationSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileIterate {
    pub iter: usize,
    pub beta: f64,
    pub t_c: f64,
    /// `beta * (t_c - t0)`; tends to `dt / a_p` as `beta -> 0`.
    pub beta_times_span: f64,
    pub a_p: f64,
    pub chi2: f64,
    /// Whether the standard threshold had already stopped a plain fit.
    pub past_standard_stop: bool,
}

/// Picks the best start with the standard threshold, then re-runs it down
/// to the extended threshold and returns every accepted iterate.
pub fn profile_beta_tc(data: &ObservationSeries, cfg: &FitConfig) -> Result<Vec<ProfileIterate>, FitError> {
    if cfg.model.family != ModelFamily::NonlinearFeedback {
        return Err(FitError::Argument(
            "the beta/t_c profile needs the nonlinear-feedback family".into(),
        ));
    }
    let setup = setup(data, cfg)?;
    let best = setup.best_start(cfg.stop_rel_chi2, cfg.max_iter);
    let standard_len = best.run.path.len();
    let problem = setup.problem_for(&best.start);
    let ext = cfg.extended_stop.unwrap_or(EXTENDED_STOP);
    let run = lm::minimize(&problem, problem.internal(&best.start), ext, cfg.max_iter, None);

    let t0 = problem.t0;
    Ok(run
        .path
        .iter()
        .enumerate()
        .map(|(iter, (x, chi2))| {
            let ps = problem.parameter_set(problem.native(x));
            let t_c = ps.t_c().unwrap_or(f64::NAN);
            ProfileIterate {
                iter,
                beta: ps.beta,
                t_c,
                beta_times_span: ps.beta * (t_c - t0),
                a_p: ps.a_p(),
                chi2: *chi2,
                past_standard_stop: iter >= standard_len,
            }
        })
        .collect())
}
