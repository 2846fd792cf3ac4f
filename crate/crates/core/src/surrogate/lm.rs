//! Levenberg-Marquardt on the stacked (weighted) residual vector.
//!
//! The damped normal equations `(J^T J + lambda I) delta = -J^T r` are
//! solved in whichever form is cheaper: the primal `W x W` system when the
//! weight count is below the row count, otherwise the equivalent dual
//! `R x R` system `delta = -J^T (J J^T + lambda I)^{-1} r`.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::network;
use super::NetworkArchitecture;
use crate::error::{Error, Result};

/// Optimizer settings. The defaults are the reference configuration; the
/// benchmark harness may substitute a cheaper budget through its own config.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LmConfig {
    /// Maximum accept-or-reject cycles per start.
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than this
    /// relative amount.
    pub relative_tolerance: f64,
    /// Initial damping.
    pub lambda_init: f64,
    /// Damping divisor after an accepted step.
    pub lambda_decrease: f64,
    /// Damping multiplier after a rejected step.
    pub lambda_increase: f64,
    /// Give up once damping exceeds this value.
    pub lambda_max: f64,
    /// Multi-starts per fit: one all-zero start plus `starts - 1` random
    /// starts.
    pub starts: usize,
    /// Random starts are uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_tolerance: 1e-9,
            lambda_init: 1e-3,
            lambda_decrease: 10.0,
            lambda_increase: 10.0,
            lambda_max: 1e12,
            starts: 5,
            init_range: 0.5,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "optimizer needs at least one start and one iteration".into(),
            ));
        }
        if !(self.lambda_init > 0.0) || self.lambda_decrease <= 1.0 || self.lambda_increase <= 1.0
        {
            return Err(Error::InvalidArgument("invalid damping schedule".into()));
        }
        Ok(())
    }
}

/// A weighted least-squares problem over one network architecture:
/// residual i is `sqrt_weights[i] * (f(x_i) - targets[i])`, and the
/// objective is the sum of squared residuals (the weights absorb any `1/n`
/// normalization).
pub(crate) struct ResidualProblem<'a> {
    pub arch: &'a NetworkArchitecture,
    /// Row-major `rows x input_dim` inputs.
    pub inputs: &'a [f64],
    pub targets: &'a [f64],
    pub sqrt_weights: &'a [f64],
}

impl<'a> ResidualProblem<'a> {
    fn rows(&self) -> usize {
        self.targets.len()
    }

    fn input(&self, i: usize) -> &[f64] {
        let d = self.arch.input_dim;
        &self.inputs[i * d..(i + 1) * d]
    }

    fn residuals_into(&self, weights: &[f64], out: &mut DVector<f64>) {
        for i in 0..self.rows() {
            out[i] =
                self.sqrt_weights[i] * (network::eval(self.arch, weights, self.input(i)) - self.targets[i]);
        }
    }

    fn objective(&self, weights: &[f64]) -> f64 {
        (0..self.rows())
            .map(|i| {
                let r = self.sqrt_weights[i]
                    * (network::eval(self.arch, weights, self.input(i)) - self.targets[i]);
                r * r
            })
            .sum()
    }

    /// Jacobian transpose (`W x rows`), each column the weighted gradient of
    /// one residual.
    fn jacobian_transpose_into(&self, weights: &[f64], jt: &mut DMatrix<f64>) {
        let w_count = weights.len();
        let mut grad = vec![0.0; w_count];
        for i in 0..self.rows() {
            network::eval_grad(self.arch, weights, self.input(i), &mut grad);
            let sw = self.sqrt_weights[i];
            let mut col = jt.column_mut(i);
            for k in 0..w_count {
                col[k] = sw * grad[k];
            }
        }
    }
}

pub(crate) struct LmRun {
    pub weights: Vec<f64>,
    pub objective: f64,
    /// Objective after the initial point and after every accepted step.
    pub accepted_trace: Vec<f64>,
}

fn clamp_weights(weights: &mut [f64], bound: f64) {
    if bound.is_finite() {
        for w in weights.iter_mut() {
            *w = w.clamp(-bound, bound);
        }
    }
}

/// Minimizes the problem from one start.
pub(crate) fn minimize(problem: &ResidualProblem, start: &[f64], config: &LmConfig) -> LmRun {
    let rows = problem.rows();
    let w_count = start.len();
    let bound = problem.arch.weight_bound;

    let mut weights = start.to_vec();
    clamp_weights(&mut weights, bound);
    let mut objective = problem.objective(&weights);
    let mut trace = vec![objective];

    let mut jt = DMatrix::zeros(w_count, rows);
    let mut residuals = DVector::zeros(rows);
    let primal = w_count <= rows;
    let mut gram = if primal {
        DMatrix::zeros(w_count, w_count)
    } else {
        DMatrix::zeros(rows, rows)
    };
    let mut jt_r = DVector::zeros(w_count);

    let mut lambda = config.lambda_init;
    let mut need_jacobian = true;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        if need_jacobian {
            problem.residuals_into(&weights, &mut residuals);
            problem.jacobian_transpose_into(&weights, &mut jt);
            if primal {
                // J^T J = jt * jt^T
                jt.mul_to(&jt.transpose(), &mut gram);
            } else {
                // J J^T = jt^T * jt
                jt.tr_mul_to(&jt, &mut gram);
            }
            jt.mul_to(&residuals, &mut jt_r);
            need_jacobian = false;
        }
        iterations += 1;

        let mut damped = gram.clone();
        let n = damped.nrows();
        for i in 0..n {
            damped[(i, i)] += lambda;
        }
        let step = match Cholesky::new(damped) {
            Some(chol) => {
                if primal {
                    -chol.solve(&jt_r)
                } else {
                    let alpha = chol.solve(&residuals);
                    -(&jt * alpha)
                }
            }
            None => {
                lambda *= config.lambda_increase;
                if lambda > config.lambda_max {
                    break;
                }
                continue;
            }
        };

        let mut candidate = weights.clone();
        for (w, d) in candidate.iter_mut().zip(step.iter()) {
            *w += d;
        }
        clamp_weights(&mut candidate, bound);
        let candidate_objective = problem.objective(&candidate);

        if candidate_objective.is_finite() && candidate_objective <= objective {
            let improvement = objective - candidate_objective;
            weights = candidate;
            objective = candidate_objective;
            trace.push(objective);
            lambda = (lambda / config.lambda_decrease).max(1e-14);
            need_jacobian = true;
            if improvement <= config.relative_tolerance * objective.max(f64::MIN_POSITIVE) {
                break;
            }
        } else {
            lambda *= config.lambda_increase;
            if lambda > config.lambda_max {
                break;
            }
        }
    }

    LmRun {
        weights,
        objective,
        accepted_trace: trace,
    }
}
