//! Dense Levenberg-Marquardt for small nonlinear least-squares problems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A residual vector `r(params)` with its Jacobian.
pub trait LeastSquaresProblem {
    type Error;

    fn num_params(&self) -> usize;

    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>, Self::Error>;

    fn jacobian(&self, params: &DVector<f64>) -> Result<DMatrix<f64>, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub initial_damping: f64,
    /// Damping multiplier on a rejected step.
    pub damping_increase: f64,
    /// Damping divisor on an accepted step.
    pub damping_decrease: f64,
    /// Stop once an accepted step changes the cost by less than this fraction.
    pub relative_tolerance: f64,
    /// Stop once the cost is at or below this absolute value.
    pub cost_tolerance: f64,
    pub max_iterations: usize,
    /// Damping beyond this value means no descent step exists.
    pub max_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            relative_tolerance: 1e-12,
            cost_tolerance: 1e-20,
            max_iterations: 200,
            max_damping: 1e16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    CostTolerance,
    RelativeCostChange,
    DampingSaturated,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub termination: Termination,
}

impl LmReport {
    /// False when the iteration budget ran out first.
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

#[derive(Debug, Error)]
pub enum LmError<E> {
    #[error(transparent)]
    Problem(E),
    #[error("normal equations could not be solved at any damping")]
    NumericalFailure,
    #[error("residuals are not finite at the starting point")]
    NonFiniteStart,
}

fn sum_sq(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Minimizes `|r(p)|^2` starting from `start`. Cost is the plain sum of
/// squared residuals.
pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    start: DVector<f64>,
    opts: &LmOptions,
) -> Result<(DVector<f64>, LmReport), LmError<P::Error>> {
    let n = problem.num_params();
    assert_eq!(start.len(), n, "parameter vector length mismatch");

    let mut params = start;
    let mut residuals = problem.residuals(&params).map_err(LmError::Problem)?;
    let mut cost = sum_sq(&residuals);
    if !cost.is_finite() {
        return Err(LmError::NonFiniteStart);
    }
    let initial_cost = cost;
    let mut history = vec![cost];
    let mut damping = opts.initial_damping;
    let mut iterations = 0;
    let mut accepted = 0;

    let termination = 'outer: loop {
        if cost <= opts.cost_tolerance {
            break Termination::CostTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let jac = problem.jacobian(&params).map_err(LmError::Problem)?;
        let jtj = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&residuals);
        let diag: DVector<f64> = jtj.diagonal().map(|d| d.max(1e-12));

        let mut solved_any = false;
        loop {
            if damping > opts.max_damping {
                if !solved_any {
                    return Err(LmError::NumericalFailure);
                }
                break 'outer Termination::DampingSaturated;
            }
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += damping * diag[i];
            }
            let Some(chol) = lhs.cholesky() else {
                damping *= opts.damping_increase;
                continue;
            };
            solved_any = true;
            let step = chol.solve(&(-&grad));
            let candidate = &params + &step;
            let trial = match problem.residuals(&candidate) {
                Ok(r) => r,
                Err(_) => {
                    damping *= opts.damping_increase;
                    continue;
                }
            };
            let trial_cost = sum_sq(&trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let change = (cost - trial_cost) / cost;
                params = candidate;
                residuals = trial;
                cost = trial_cost;
                history.push(cost);
                accepted += 1;
                damping = (damping / opts.damping_decrease).max(1e-15);
                if change < opts.relative_tolerance {
                    break 'outer Termination::RelativeCostChange;
                }
                break;
            }
            damping *= opts.damping_increase;
        }
    };

    Ok((
        params,
        LmReport {
            initial_cost,
            final_cost: cost,
            iterations,
            accepted_steps: accepted,
            cost_history: history,
            termination,
        },
    ))
}

/// Central finite-difference Jacobian, for checking analytic derivatives.
pub fn numeric_jacobian<P: LeastSquaresProblem>(
    problem: &P,
    params: &DVector<f64>,
    steps: &DVector<f64>,
) -> Result<DMatrix<f64>, P::Error> {
    let r0 = problem.residuals(params)?;
    let mut jac = DMatrix::zeros(r0.len(), params.len());
    for j in 0..params.len() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        plus[j] += steps[j];
        minus[j] -= steps[j];
        let rp = problem.residuals(&plus)?;
        let rm = problem.residuals(&minus)?;
        jac.set_column(j, &((rp - rm) / (2.0 * steps[j])));
    }
    Ok(jac)
}
