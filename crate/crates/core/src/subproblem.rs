//! The ball-constrained cubic subproblem in scaled null-space coordinates.
//!
//! With `T` an orthonormal basis of `ker A` and `W = Tᵀ∇²B(θ)T = R²`, the
//! substitution `s̄ = R·y`, `θ⁺ = θ + T·y` turns the Dikin ball into the
//! Euclidean ball `‖s̄‖ ≤ 1 - α` and the subproblem into
//!
//! ```text
//! min  gᵀs̄ + ½ s̄ᵀPs̄ + (M/6)‖s̄‖³   s.t. ‖s̄‖ ≤ ρ
//! ```
//!
//! The unconstrained cubic minimizer is computed first. If it lies outside
//! the ball, the minimizer over the ball sits on the boundary and coincides
//! with the trust-region minimizer of the quadratic part.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::barrier::LocalMetric;
use crate::error::{CrnasError, Result};
use crate::problem::NullBasis;

const SECULAR_RTOL: f64 = 1e-12;
const HARD_CASE_RTOL: f64 = 1e-12;
const MAX_SECULAR_ITERS: usize = 500;

/// Subproblem data `(g, P, M, ρ)` plus the map back to cone coordinates.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub g: DVector<f64>,
    pub p: DMatrix<f64>,
    pub m: f64,
    pub rho: f64,
    /// Current iterate `θᵏ`.
    pub origin: DVector<f64>,
    /// `T·R⁻¹`, so that `θ = θᵏ + backmap·s̄`.
    pub backmap: DMatrix<f64>,
}

impl ReducedModel {
    pub fn k(&self) -> usize {
        self.g.len()
    }

    pub fn to_cone(&self, step: &DVector<f64>) -> DVector<f64> {
        &self.origin + &self.backmap * step
    }

    pub fn model_value(&self, step: &DVector<f64>) -> f64 {
        cubic_model_value(&self.g, &self.p, self.m, step)
    }
}

/// Scaled reduced gradient and Hessian at `θ`, without the regularization data.
#[derive(Debug, Clone)]
pub struct ScaledReduction {
    pub g: DVector<f64>,
    pub p: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
}

/// `R⁻¹` for some `R` with `RᵀR = W = Tᵀ diag(h) T`.
///
/// Factors `diag(√h)·T` by Householder QR after sorting rows by decreasing
/// norm, which stays accurate when coordinates span many orders of magnitude.
/// The cubic model is invariant under rotations of the scaled step, so any
/// such `R` gives the same iterate.
fn inverse_sqrt_metric(metric: &LocalMetric, basis: &NullBasis) -> Result<DMatrix<f64>> {
    let t = &basis.t;
    let (n, k) = t.shape();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let weight: Vec<f64> = (0..n)
        .map(|i| metric.diag_hess[i].sqrt() * t.row(i).norm())
        .collect();
    order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]));
    let scaled = DMatrix::from_fn(n, k, |r, c| {
        let i = order[r];
        metric.diag_hess[i].sqrt() * t[(i, c)]
    });
    let mut r = scaled.qr().r();
    for i in 0..k {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
        }
    }
    let diag = r.diagonal();
    let dmax = diag.amax();
    if !(diag.min() > 1e-300 && dmax.is_finite()) {
        return Err(CrnasError::Contract(
            "scaled null-space metric is not positive definite".into(),
        ));
    }
    r.solve_upper_triangular(&DMatrix::identity(k, k)).ok_or_else(|| {
        CrnasError::Contract("scaled null-space metric is not positive definite".into())
    })
}

pub fn scaled_reduction(
    theta: &DVector<f64>,
    gradient: &DVector<f64>,
    hessian: &DMatrix<f64>,
    basis: &NullBasis,
) -> Result<ScaledReduction> {
    let metric = crate::barrier::barrier_hess(theta)?;
    let r_inv = inverse_sqrt_metric(&metric, basis)?;
    let tr = &basis.t * &r_inv;
    let g = tr.transpose() * gradient;
    let p = tr.transpose() * hessian * &tr;
    let p = (&p + p.transpose()) * 0.5;
    Ok(ScaledReduction { g, p, r_inv })
}

/// Builds the scaled reduced model at an interior feasible `θᵏ`.
pub fn build_reduced_model(
    theta: &DVector<f64>,
    gradient: &DVector<f64>,
    hessian: &DMatrix<f64>,
    basis: &NullBasis,
    m: f64,
    alpha: f64,
) -> Result<ReducedModel> {
    if !(m > 0.0) {
        return Err(CrnasError::Contract(format!("M must be positive, got {m}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CrnasError::Contract(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let n = theta.len();
    if gradient.len() != n || hessian.nrows() != n || basis.t.nrows() != n {
        return Err(CrnasError::DimensionMismatch {
            expected: n,
            got: gradient.len(),
        });
    }
    let red = scaled_reduction(theta, gradient, hessian, basis)?;
    Ok(ReducedModel {
        backmap: &basis.t * &red.r_inv,
        g: red.g,
        p: red.p,
        m,
        rho: 1.0 - alpha,
        origin: theta.clone(),
    })
}

pub fn cubic_model_value(g: &DVector<f64>, p: &DMatrix<f64>, m: f64, s: &DVector<f64>) -> f64 {
    let n = s.norm();
    g.dot(s) + 0.5 * s.dot(&(p * s)) + m / 6.0 * n * n * n
}

pub fn quadratic_model_value(g: &DVector<f64>, p: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
    g.dot(s) + 0.5 * s.dot(&(p * s))
}

/// Eigen-coordinates of the model: `P = Q diag(λ) Qᵀ`, `γ = Qᵀg`.
struct Spectral {
    lambda: DVector<f64>,
    q: DMatrix<f64>,
    gamma: DVector<f64>,
    lambda_min: f64,
    /// Indices of the minimal eigenspace.
    min_space: Vec<usize>,
    g_norm: f64,
}

impl Spectral {
    fn new(g: &DVector<f64>, p: &DMatrix<f64>) -> Self {
        let sym = (p + p.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let lambda = eig.eigenvalues;
        let q = eig.eigenvectors;
        let gamma = q.transpose() * g;
        let lambda_min = if lambda.is_empty() { 0.0 } else { lambda.min() };
        let scale = lambda.amax().max(f64::MIN_POSITIVE);
        let min_space = (0..lambda.len())
            .filter(|&i| lambda[i] - lambda_min <= 1e-12 * scale)
            .collect();
        Self {
            lambda,
            q,
            gamma,
            lambda_min,
            min_space,
            g_norm: g.norm(),
        }
    }

    fn gradient_misses_min_space(&self) -> bool {
        self.min_space
            .iter()
            .all(|&i| self.gamma[i].abs() <= HARD_CASE_RTOL * self.g_norm)
    }

    /// Coefficients of `-(Λ + shift·I)⁻¹γ`, skipping `skip` indices.
    fn shifted_coeffs(&self, shift: f64, skip: &[usize]) -> DVector<f64> {
        DVector::from_fn(self.lambda.len(), |i, _| {
            if skip.contains(&i) {
                0.0
            } else {
                -self.gamma[i] / (self.lambda[i] + shift)
            }
        })
    }

    /// `‖s(shift)‖` and `d‖s‖/d shift`.
    fn norm_and_slope(&self, shift: f64) -> (f64, f64) {
        let mut sq = 0.0;
        let mut d = 0.0;
        for i in 0..self.lambda.len() {
            let den = self.lambda[i] + shift;
            let c = self.gamma[i] / den;
            sq += c * c;
            d -= c * c / den;
        }
        let norm = sq.sqrt();
        let slope = if norm > 0.0 { d / norm } else { 0.0 };
        (norm, slope)
    }

    fn to_step(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.q * coeffs
    }

    fn min_vector(&self) -> DVector<f64> {
        self.q.column(self.min_space[0]).into_owned()
    }
}

/// Safeguarded Newton on `φ(x) = 1/‖s(shift(x))‖ - 1/target(x)`.
///
/// `lo` must have `φ < 0` (step too long) and `hi` `φ ≥ 0`.
fn secular_root<F>(mut lo: f64, mut hi: f64, phi: F) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let mut x = hi;
    for _ in 0..MAX_SECULAR_ITERS {
        let (f, df) = phi(x);
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= SECULAR_RTOL * hi.abs().max(f64::MIN_POSITIVE) {
            return hi;
        }
        let newton = if df != 0.0 && df.is_finite() { x - f / df } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= SECULAR_RTOL * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Result of the unconstrained cubic solve.
#[derive(Debug, Clone)]
pub struct CubicSolution {
    pub step: DVector<f64>,
    /// `λ* = (M/2)‖s*‖`.
    pub multiplier: f64,
    pub hard_case: bool,
}

/// Global minimizer of `gᵀs + ½sᵀPs + (M/6)‖s‖³`.
pub fn solve_unconstrained_cubic(g: &DVector<f64>, p: &DMatrix<f64>, m: f64) -> CubicSolution {
    let k = g.len();
    let sigma = 0.5 * m;
    if k == 0 {
        return CubicSolution {
            step: DVector::zeros(0),
            multiplier: 0.0,
            hard_case: false,
        };
    }
    let sp = Spectral::new(g, p);
    let r_low = (-sp.lambda_min / sigma).max(0.0);

    if sp.g_norm == 0.0 || sp.gradient_misses_min_space() {
        if sp.lambda_min >= 0.0 && sp.g_norm == 0.0 {
            return CubicSolution {
                step: DVector::zeros(k),
                multiplier: 0.0,
                hard_case: false,
            };
        }
        if r_low > 0.0 {
            let coeffs = sp.shifted_coeffs(sigma * r_low, &sp.min_space);
            let rest = coeffs.norm();
            if rest <= r_low {
                let tau = (r_low * r_low - rest * rest).max(0.0).sqrt();
                let step = sp.to_step(&coeffs) + sp.min_vector() * tau;
                return CubicSolution {
                    step,
                    multiplier: sigma * r_low,
                    hard_case: true,
                };
            }
        }
    }

    // r(x): x is the step length r; want ‖s(σr)‖ = r.
    let phi = |r: f64| {
        let (norm, slope) = sp.norm_and_slope(sigma * r);
        let f = 1.0 / norm - 1.0 / r;
        let df = -sigma * slope / (norm * norm) + 1.0 / (r * r);
        (f, df)
    };
    let mut hi = (2.0 * r_low).max((sp.g_norm / sigma).sqrt()).max(1e-300);
    let mut grow = 0;
    while phi(hi).0 < 0.0 && grow < 2000 {
        hi *= 2.0;
        grow += 1;
    }
    let r = secular_root(r_low, hi, phi);
    let coeffs = sp.shifted_coeffs(sigma * r, &[]);
    let step = sp.to_step(&coeffs);
    CubicSolution {
        multiplier: sigma * step.norm(),
        step,
        hard_case: false,
    }
}

/// Result of the trust-region solve.
#[derive(Debug, Clone)]
pub struct TrustRegionSolution {
    pub step: DVector<f64>,
    pub multiplier: f64,
    pub on_boundary: bool,
    pub hard_case: bool,
}

/// Global minimizer of `gᵀs + ½sᵀPs` over `‖s‖ ≤ ρ`.
pub fn solve_trust_region(g: &DVector<f64>, p: &DMatrix<f64>, rho: f64) -> TrustRegionSolution {
    let k = g.len();
    if k == 0 {
        return TrustRegionSolution {
            step: DVector::zeros(0),
            multiplier: 0.0,
            on_boundary: false,
            hard_case: false,
        };
    }
    let sp = Spectral::new(g, p);
    let lam_low = (-sp.lambda_min).max(0.0);

    if sp.lambda_min > 0.0 {
        let coeffs = sp.shifted_coeffs(0.0, &[]);
        if coeffs.norm() <= rho {
            return TrustRegionSolution {
                step: sp.to_step(&coeffs),
                multiplier: 0.0,
                on_boundary: false,
                hard_case: false,
            };
        }
    } else if sp.gradient_misses_min_space() {
        let coeffs = sp.shifted_coeffs(lam_low, &sp.min_space);
        let rest = coeffs.norm();
        if rest <= rho {
            let tau = if lam_low > 0.0 {
                (rho * rho - rest * rest).max(0.0).sqrt()
            } else {
                0.0
            };
            return TrustRegionSolution {
                step: sp.to_step(&coeffs) + sp.min_vector() * tau,
                multiplier: lam_low,
                on_boundary: tau > 0.0,
                hard_case: true,
            };
        }
    }

    let phi = |lam: f64| {
        let (norm, slope) = sp.norm_and_slope(lam);
        let f = 1.0 / norm - 1.0 / rho;
        let df = -slope / (norm * norm);
        (f, df)
    };
    let mut hi = (sp.g_norm / rho - sp.lambda_min).max(lam_low) * (1.0 + 1e-12) + 1e-300;
    let mut grow = 0;
    while phi(hi).0 < 0.0 && grow < 2000 {
        hi = 2.0 * hi + 1e-300;
        grow += 1;
    }
    let lam = secular_root(lam_low, hi, phi);
    let coeffs = sp.shifted_coeffs(lam, &[]);
    let mut step = sp.to_step(&coeffs);
    let norm = step.norm();
    if norm > 0.0 {
        step *= rho / norm;
    }
    TrustRegionSolution {
        step,
        multiplier: lam,
        on_boundary: true,
        hard_case: false,
    }
}

/// Minimizer of the cubic model over the ball `‖s̄‖ ≤ ρ`.
#[derive(Debug, Clone)]
pub struct BallStep {
    pub step: DVector<f64>,
    pub on_boundary: bool,
    pub model_value: f64,
}

pub fn solve_ball_constrained_cubic(model: &ReducedModel) -> BallStep {
    solve_ball_cubic(&model.g, &model.p, model.m, model.rho)
}

pub fn solve_ball_cubic(g: &DVector<f64>, p: &DMatrix<f64>, m: f64, rho: f64) -> BallStep {
    let cubic = solve_unconstrained_cubic(g, p, m);
    if cubic.step.norm() <= rho {
        let model_value = cubic_model_value(g, p, m, &cubic.step);
        return BallStep {
            step: cubic.step,
            on_boundary: false,
            model_value,
        };
    }
    let tr = solve_trust_region(g, p, rho);
    let mut step = tr.step;
    let norm = step.norm();
    if norm > rho {
        step *= rho / norm;
    }
    BallStep {
        model_value: cubic_model_value(g, p, m, &step),
        on_boundary: tr.on_boundary,
        step,
    }
}

/// `‖(P + λI)s + g‖`, scaled by `1 + ‖g‖`.
pub fn stationarity_residual(
    g: &DVector<f64>,
    p: &DMatrix<f64>,
    multiplier: f64,
    s: &DVector<f64>,
) -> f64 {
    (p * s + s * multiplier + g).norm() / (1.0 + g.norm())
}
