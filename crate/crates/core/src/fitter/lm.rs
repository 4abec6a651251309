//! Levenberg-Marquardt with Marquardt's diagonal scaling, in the
//! accept/reject form of the classic `curfit` routine: the damping is cut
//! tenfold after every step that lowers chi-square and raised tenfold after
//! every step that does not.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Chi-square assigned to trial points outside the model domain. Large but
/// finite, so the optimizer simply rejects the step and retreats.
pub const PENALTY_CHI2: f64 = 1e100;

const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;

pub(crate) trait LeastSquares: Sync {
    /// `None` when `x` is outside the model domain.
    fn residuals(&self, x: &DVector<f64>) -> Option<DVector<f64>>;
    /// Chi-square level treated as an exact fit.
    fn chi2_floor(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmStep {
    pub iteration: usize,
    pub chi2: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmStatus {
    /// Relative chi-square decrease fell below the threshold.
    Converged,
    /// Chi-square reached the exact-fit floor.
    ExactFit,
    /// No step lowers chi-square even at maximal damping.
    Stalled,
    MaxIterations,
    /// The starting point is outside the model domain.
    InvalidStart,
}

impl LmStatus {
    pub fn converged(self) -> bool {
        matches!(self, LmStatus::Converged | LmStatus::ExactFit | LmStatus::Stalled)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmRun {
    pub x: DVector<f64>,
    pub chi2: f64,
    pub status: LmStatus,
    /// Accepted points, starting with the initial one.
    pub path: Vec<(DVector<f64>, f64)>,
    pub steps: Vec<LmStep>,
    pub iterations: usize,
    pub lambda: f64,
}

/// Central-difference Jacobian, falling back to one-sided differences next
/// to the domain boundary.
pub(crate) fn jacobian<P: LeastSquares + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    r: &DVector<f64>,
    rel_step: f64,
) -> DMatrix<f64> {
    let n = r.len();
    let k = x.len();
    let mut jac = DMatrix::zeros(n, k);
    for j in 0..k {
        let h = rel_step * (1.0 + x[j].abs());
        let mut up = x.clone();
        up[j] += h;
        let mut down = x.clone();
        down[j] -= h;
        let col = match (problem.residuals(&up), problem.residuals(&down)) {
            (Some(a), Some(b)) => (a - b) / (2.0 * h),
            (Some(a), None) => (a - r) / h,
            (None, Some(b)) => (r - b) / h,
            (None, None) => continue,
        };
        if col.iter().all(|v| v.is_finite()) {
            jac.set_column(j, &col);
        }
    }
    jac
}

fn damped_step(a: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let k = a.nrows();
    let scale = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let mut m = a.clone();
    for i in 0..k {
        let d = a[(i, i)].max(1e-12 * scale);
        m[(i, i)] += lambda * d;
    }
    let rhs = -g;
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(&rhs));
    }
    m.lu().solve(&rhs)
}

/// Minimizes the sum of squared residuals from `x0`.
///
/// An iteration is one Jacobian evaluation followed by damped trial steps
/// until one is accepted. The run stops once an accepted step lowers
/// chi-square by a relative amount below `stop_rel_chi2`.
pub(crate) fn minimize<P: LeastSquares + ?Sized>(
    problem: &P,
    x0: DVector<f64>,
    stop_rel_chi2: f64,
    max_iter: usize,
    lambda0: Option<f64>,
) -> LmRun {
    let mut x = x0;
    let mut lambda = lambda0.unwrap_or(LAMBDA_START);
    let mut steps = Vec::new();
    let Some(mut r) = problem.residuals(&x).filter(|r| r.iter().all(|v| v.is_finite())) else {
        return LmRun {
            path: vec![(x.clone(), PENALTY_CHI2)],
            x,
            chi2: PENALTY_CHI2,
            status: LmStatus::InvalidStart,
            steps,
            iterations: 0,
            lambda,
        };
    };
    let mut chi2 = r.norm_squared();
    let mut path = vec![(x.clone(), chi2)];
    let floor = problem.chi2_floor();
    let mut status = LmStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < max_iter {
        if chi2 <= floor {
            status = LmStatus::ExactFit;
            break;
        }
        iterations += 1;
        let jac = jacobian(problem, &x, &r, 1e-6);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;

        let mut accepted = None;
        while lambda <= LAMBDA_MAX {
            let trial = damped_step(&a, &g, lambda).map(|d| &x + d);
            let outcome = trial.and_then(|xt| {
                let rt = problem.residuals(&xt)?;
                let c = rt.norm_squared();
                c.is_finite().then_some((xt, rt, c))
            });
            match outcome {
                Some((xt, rt, c)) if c < chi2 => {
                    steps.push(LmStep {
                        iteration: iterations,
                        chi2: c,
                        lambda,
                        accepted: true,
                    });
                    lambda = (lambda * 0.1).max(LAMBDA_MIN);
                    accepted = Some((xt, rt, c));
                    break;
                }
                other => {
                    steps.push(LmStep {
                        iteration: iterations,
                        chi2: other.map(|o| o.2).unwrap_or(PENALTY_CHI2),
                        lambda,
                        accepted: false,
                    });
                    lambda *= 10.0;
                }
            }
        }

        let Some((xt, rt, c)) = accepted else {
            status = LmStatus::Stalled;
            lambda = LAMBDA_MAX;
            break;
        };
        let rel = (chi2 - c) / chi2;
        x = xt;
        r = rt;
        chi2 = c;
        path.push((x.clone(), chi2));
        if chi2 <= floor {
            status = LmStatus::ExactFit;
            break;
        }
        if rel < stop_rel_chi2 {
            status = LmStatus::Converged;
            break;
        }
    }

    LmRun {
        x,
        chi2,
        status,
        path,
        steps,
        iterations,
        lambda,
    }
}
