//! Logarithmic barrier calculus for the nonnegative orthant.
//!
//! The barrier `B(θ) = -Σ log θᵢ` has a diagonal Hessian, so every local
//! norm reduces to an O(n) weighted Euclidean norm. The barrier Hessian is
//! never materialized as a dense matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{CrnasError, Result};

/// Barrier interface for a closed convex cone.
///
/// Only the orthant is implemented; other cones would plug in here.
pub trait ConeBarrier {
    /// Barrier parameter `D` in `B(τθ) = B(θ) - D ln τ`.
    fn parameter(&self, dim: usize) -> f64;
    fn value(&self, theta: &DVector<f64>) -> Result<f64>;
    fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;
    fn metric(&self, theta: &DVector<f64>) -> Result<LocalMetric>;
    fn is_interior(&self, theta: &DVector<f64>) -> bool;
}

/// The barrier for `ℝⁿ₊`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrthantBarrier;

impl ConeBarrier for OrthantBarrier {
    fn parameter(&self, dim: usize) -> f64 {
        dim as f64
    }

    fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        barrier_value(theta)
    }

    fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        barrier_grad(theta)
    }

    fn metric(&self, theta: &DVector<f64>) -> Result<LocalMetric> {
        barrier_hess(theta)
    }

    fn is_interior(&self, theta: &DVector<f64>) -> bool {
        theta.iter().all(|&t| t > 0.0)
    }
}

/// A point strictly inside the orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierPoint {
    theta: DVector<f64>,
}

impl BarrierPoint {
    pub fn new(theta: DVector<f64>) -> Result<Self> {
        check_interior(&theta)?;
        Ok(Self { theta })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn value(&self) -> f64 {
        -self.theta.iter().map(|t| t.ln()).sum::<f64>()
    }

    pub fn gradient(&self) -> DVector<f64> {
        self.theta.map(|t| -1.0 / t)
    }

    pub fn metric(&self) -> LocalMetric {
        LocalMetric {
            diag_hess: self.theta.map(|t| 1.0 / (t * t)),
        }
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.theta
    }
}

/// Diagonal of the barrier Hessian, `1/θᵢ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMetric {
    pub diag_hess: DVector<f64>,
}

impl LocalMetric {
    pub fn dim(&self) -> usize {
        self.diag_hess.len()
    }

    /// `∇²B(θ)·v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.diag_hess.component_mul(v)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag_hess)
    }
}

fn check_interior(theta: &DVector<f64>) -> Result<()> {
    match theta.iter().position(|&t| !(t > 0.0)) {
        Some(index) => Err(CrnasError::Domain {
            index,
            value: theta[index],
        }),
        None => Ok(()),
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CrnasError::DimensionMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

pub fn barrier_value(theta: &DVector<f64>) -> Result<f64> {
    check_interior(theta)?;
    Ok(-theta.iter().map(|t| t.ln()).sum::<f64>())
}

pub fn barrier_grad(theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_interior(theta)?;
    Ok(theta.map(|t| -1.0 / t))
}

pub fn barrier_hess(theta: &DVector<f64>) -> Result<LocalMetric> {
    check_interior(theta)?;
    Ok(LocalMetric {
        diag_hess: theta.map(|t| 1.0 / (t * t)),
    })
}

/// `‖v‖_θ = sqrt(Σ vᵢ²/θᵢ²)`.
pub fn local_norm(theta: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_dims(theta.len(), v.len())?;
    check_interior(theta)?;
    Ok(theta
        .iter()
        .zip(v.iter())
        .map(|(t, x)| (x / t) * (x / t))
        .sum::<f64>()
        .sqrt())
}

/// `‖v‖*_θ = sqrt(Σ vᵢ²θᵢ²)`.
pub fn dual_local_norm(theta: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_dims(theta.len(), v.len())?;
    check_interior(theta)?;
    Ok(theta
        .iter()
        .zip(v.iter())
        .map(|(t, x)| (x * t) * (x * t))
        .sum::<f64>()
        .sqrt())
}

/// `‖C‖*_θ`: the spectral norm of `H^{-1/2} C H^{-1/2}` with `H = ∇²B(θ)`.
pub fn local_matrix_norm(theta: &DVector<f64>, c: &DMatrix<f64>) -> Result<f64> {
    let n = theta.len();
    if c.nrows() != n || c.ncols() != n {
        return Err(CrnasError::DimensionMismatch {
            expected: n,
            got: c.nrows().max(c.ncols()),
        });
    }
    check_interior(theta)?;
    let scale = c.amax().max(1.0);
    if (c - c.transpose()).amax() > 1e-10 * scale {
        return Err(CrnasError::Contract("matrix is not symmetric".into()));
    }
    let mut scaled = c.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= theta[i] * theta[j];
        }
    }
    let scaled = (&scaled + scaled.transpose()) * 0.5;
    let eig = scaled.symmetric_eigenvalues();
    Ok(eig.iter().fold(0.0_f64, |m, l| m.max(l.abs())))
}

/// True iff `‖θ - θ₀‖_{θ₀} ≤ radius`.
pub fn dikin_contains(theta0: &DVector<f64>, theta: &DVector<f64>, radius: f64) -> bool {
    if theta0.len() != theta.len() || theta0.iter().any(|&t| !(t > 0.0)) {
        return false;
    }
    let d = theta - theta0;
    match local_norm(theta0, &d) {
        Ok(r) => r <= radius,
        Err(_) => false,
    }
}
