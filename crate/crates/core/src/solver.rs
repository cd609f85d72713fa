//! Cubic-regularized affine-scaling Newton method and its first-order variant.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::problem::{residuals, ConicProgram, IndependentRows, NullBasis};
use crate::subproblem::{scaled_reduction, solve_ball_cubic};
use crate::{CrnasError, Result};

/// Which local model drives the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Cubic-regularized second-order model.
    Crnas,
    /// Quadratically regularized first-order model.
    Foas,
}

impl std::str::FromStr for Method {
    type Err = CrnasError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crnas" => Ok(Method::Crnas),
            "foas" => Ok(Method::Foas),
            other => Err(CrnasError::Config(format!("unknown solver '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Crnas => "crnas",
            Method::Foas => "foas",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    /// Initial regularization weight.
    pub m0: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Double `M` on insufficient decrease, halve it after success.
    pub adaptive: bool,
    pub m_min: f64,
    pub m_max: f64,
    /// Also stop on small projected gradient or small Euclidean step.
    pub practical_stops: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            m0: 1.0,
            eta: 1e-8,
            epsilon: 1e-6,
            max_iter: 500,
            adaptive: true,
            m_min: 1e-6,
            m_max: 1e12,
            practical_stops: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CrnasError::Config(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0,1), got {}", self.alpha));
        }
        if !(self.m0 > 0.0 && self.m0.is_finite()) {
            return bad(format!("M0 must be positive and finite, got {}", self.m0));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0 - self.alpha) {
            return bad(format!(
                "eta must lie in (0, 1-alpha] = (0, {}], got {}",
                1.0 - self.alpha,
                self.eta
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if self.adaptive && !(self.m_min > 0.0 && self.m_min <= self.m0 && self.m0 <= self.m_max) {
            return bad(format!(
                "need 0 < M_min <= M0 <= M_max, got {} / {} / {}",
                self.m_min, self.m0, self.m_max
            ));
        }
        Ok(())
    }
}

/// Step size guaranteeing the complexity bound for fixed `M`.
pub fn theorem_eta(epsilon: f64, alpha: f64, m: f64) -> f64 {
    let a = 1.0 - alpha;
    let b = (epsilon * alpha / m).sqrt();
    let c = std::f64::consts::FRAC_1_SQRT_2 * epsilon.sqrt() * alpha * alpha / m;
    a.min(b).min(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Local-norm step fell below `η`.
    StepBelowEta,
    /// Projected gradient fell below `ε`.
    SmallGradient,
    /// Euclidean step fell below `ε`.
    SmallStep,
    MaxIterations,
    /// `M` exceeded its ceiling without achieving sufficient decrease.
    RegularizationLimit,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::StepBelowEta => "step_below_eta",
            Termination::SmallGradient => "small_gradient",
            Termination::SmallStep => "small_step",
            Termination::MaxIterations => "max_iterations",
            Termination::RegularizationLimit => "regularization_limit",
        })
    }
}

/// One accepted step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub objective_before: f64,
    pub objective_after: f64,
    /// `‖θᵏ⁺¹ - θᵏ‖_θᵏ`.
    pub local_norm: f64,
    pub euclidean_norm: f64,
    /// Regularization weight used for the step.
    pub m: f64,
    /// `‖Aθᵏ⁺¹ - b‖`.
    pub equality_residual: f64,
    pub min_coordinate: f64,
}

impl StepRecord {
    /// Decrease demanded by the acceptance test for `method`.
    pub fn required_decrease(&self, method: Method) -> f64 {
        required_decrease(method, self.m, self.local_norm)
    }

    pub fn decrease(&self) -> f64 {
        self.objective_before - self.objective_after
    }
}

fn required_decrease(method: Method, m: f64, step: f64) -> f64 {
    match method {
        Method::Crnas => m / 12.0 * step.powi(3),
        Method::Foas => m / 4.0 * step * step,
    }
}

/// First- and second-order stationarity measures in the scaled null space.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Stationarity {
    /// Norm of the scaled reduced gradient.
    pub fosp: f64,
    /// Smallest eigenvalue of the scaled reduced Hessian.
    pub sosp: f64,
    /// `‖Tᵀ∇L‖`, unscaled.
    pub projected_gradient: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub theta: DVector<f64>,
    pub objective: f64,
    pub best_theta: DVector<f64>,
    pub best_objective: f64,
    /// Accepted-iteration index at which the best value was reached.
    pub best_iteration: usize,
    /// Objective at `θ⁰, θ¹, ...`.
    pub objectives: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Regularization weight at the start of each iteration.
    pub m_history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub wall_time_s: f64,
    pub stationarity: Stationarity,
}

impl SolveReport {
    pub fn fosp(&self) -> f64 {
        self.stationarity.fosp
    }

    pub fn sosp(&self) -> f64 {
        self.stationarity.sosp
    }
}

/// Stationarity measures of `program` at interior feasible `θ`.
pub fn check_stationarity(
    program: &ConicProgram,
    theta: &DVector<f64>,
    basis: &NullBasis,
) -> Result<Stationarity> {
    let eval = program.objective().evaluate(theta);
    stationarity_from(theta, &eval.gradient, &eval.hessian, basis)
}

fn stationarity_from(
    theta: &DVector<f64>,
    gradient: &DVector<f64>,
    hessian: &DMatrix<f64>,
    basis: &NullBasis,
) -> Result<Stationarity> {
    let red = scaled_reduction(theta, gradient, hessian, basis)?;
    let sosp = if red.p.nrows() == 0 {
        0.0
    } else {
        SymmetricEigen::new(red.p.clone()).eigenvalues.min()
    };
    Ok(Stationarity {
        fosp: red.g.norm(),
        sosp,
        projected_gradient: (basis.t.transpose() * gradient).norm(),
    })
}

pub fn crnas_solve(
    program: &ConicProgram,
    theta0: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolveReport> {
    solve(program, theta0, config, Method::Crnas)
}

pub fn foas_solve(
    program: &ConicProgram,
    theta0: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolveReport> {
    solve(program, theta0, config, Method::Foas)
}

fn foas_step(g: &DVector<f64>, m: f64, rho: f64) -> DVector<f64> {
    let norm = g.norm();
    if norm == 0.0 {
        return DVector::zeros(g.len());
    }
    g * (-(norm / m).min(rho) / norm)
}

pub fn solve(
    program: &ConicProgram,
    theta0: &DVector<f64>,
    config: &SolverConfig,
    method: Method,
) -> Result<SolveReport> {
    let start = Instant::now();
    config.validate()?;
    let n = program.dim();
    if theta0.len() != n {
        return Err(CrnasError::DimensionMismatch {
            expected: n,
            got: theta0.len(),
        });
    }
    let tol = program.feasibility_tolerance();
    let (eq0, min0) = residuals(program, theta0);
    if !(min0 > 0.0) {
        return Err(CrnasError::Contract(format!(
            "initial point is not interior: min coordinate {min0}"
        )));
    }
    if !(eq0 <= tol) {
        return Err(CrnasError::Contract(format!(
            "initial point violates equalities: residual {eq0} > {tol}"
        )));
    }
    let basis = program.null_basis()?;
    let rows = IndependentRows::new(program.a(), program.b())?;
    let objective = program.objective();
    let rho = 1.0 - config.alpha;

    let mut theta = theta0.clone();
    let mut eval = objective.evaluate(&theta);
    if !eval.value.is_finite() {
        return Err(CrnasError::Contract(
            "objective is not finite at the initial point".into(),
        ));
    }
    let mut m = config.m0;
    let mut objectives = vec![eval.value];
    let mut steps = Vec::new();
    let mut m_history = Vec::new();
    let mut best = (eval.value, theta.clone(), 0usize);
    let mut termination = Termination::MaxIterations;

    'outer: for iter in 0..config.max_iter {
        m_history.push(m);
        let red = scaled_reduction(&theta, &eval.gradient, &eval.hessian, &basis)?;
        let backmap = &basis.t * &red.r_inv;
        let (candidate, value, step_local, full) = loop {
            let step = match method {
                Method::Crnas => solve_ball_cubic(&red.g, &red.p, m, rho).step,
                Method::Foas => foas_step(&red.g, m, rho),
            };
            let step_local = step.norm();
            let mut candidate = &theta + &backmap * &step;
            if residuals(program, &candidate).0 > 0.1 * tol {
                candidate = rows.project(&candidate);
            }
            let interior = candidate.iter().all(|&c| c > 0.0);
            let value = if interior {
                objective.value(&candidate)
            } else {
                f64::NAN
            };
            let decrease = eval.value - value;
            let enough = value.is_finite()
                && (!config.adaptive || decrease >= required_decrease(method, m, step_local));
            let accepted = if enough && (step_local >= config.eta || decrease > 0.0) {
                let full = objective.evaluate(&candidate);
                let finite = full.gradient.iter().all(|v| v.is_finite())
                    && full.hessian.iter().all(|v| v.is_finite());
                finite.then_some(full)
            } else {
                None
            };
            if let Some(full) = accepted {
                break (candidate, value, step_local, full);
            }
            if step_local < config.eta {
                termination = Termination::StepBelowEta;
                break 'outer;
            }
            m *= 2.0;
            if m > config.m_max {
                termination = Termination::RegularizationLimit;
                break 'outer;
            }
        };

        let euclidean = (&candidate - &theta).norm();
        let (eq, min) = residuals(program, &candidate);
        steps.push(StepRecord {
            objective_before: eval.value,
            objective_after: value,
            local_norm: step_local,
            euclidean_norm: euclidean,
            m,
            equality_residual: eq,
            min_coordinate: min,
        });
        theta = candidate;
        eval = full;
        objectives.push(eval.value);
        if eval.value < best.0 {
            best = (eval.value, theta.clone(), iter + 1);
        }
        if config.adaptive {
            m = (m * 0.5).max(config.m_min);
        }

        if step_local < config.eta {
            termination = Termination::StepBelowEta;
            break;
        }
        if config.practical_stops {
            let projected = (basis.t.transpose() * &eval.gradient).norm();
            if projected < config.epsilon {
                termination = Termination::SmallGradient;
                break;
            }
            if euclidean < config.epsilon {
                termination = Termination::SmallStep;
                break;
            }
        }
    }

    let stationarity = stationarity_from(&theta, &eval.gradient, &eval.hessian, &basis)?;
    Ok(SolveReport {
        method,
        objective: eval.value,
        theta,
        best_objective: best.0,
        best_theta: best.1,
        best_iteration: best.2,
        iterations: steps.len(),
        objectives,
        steps,
        m_history,
        termination,
        wall_time_s: start.elapsed().as_secs_f64(),
        stationarity,
    })
}
