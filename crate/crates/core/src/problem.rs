//! Conic programs `min L(θ) s.t. Aθ = b, θ ∈ ℝⁿ₊`.
//!
//! Box-constrained problems `l < x < u` are rewritten over the orthant with
//! `θ₁ = x - l` and, for finite `u`, a paired slack `θ₂ = u - x` tied by
//! `θ₁ + θ₂ = u - l`. The objective is pulled back through the affine map.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{CrnasError, Result};

/// Value, gradient and Hessian at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A smooth objective with exact first and second derivatives.
///
/// Implementations must be reentrant. Points outside the domain yield a
/// non-finite value rather than an error.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.evaluate(x).gradient
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.evaluate(x).hessian
    }

    fn evaluate(&self, x: &DVector<f64>) -> Evaluation;
}

/// Objective built from closures, mostly for tests and small programs.
pub struct FnObjective<V, G, H> {
    dim: usize,
    value: V,
    gradient: G,
    hessian: H,
}

impl<V, G, H> FnObjective<V, G, H>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    H: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
{
    pub fn new(dim: usize, value: V, gradient: G, hessian: H) -> Self {
        Self {
            dim,
            value,
            gradient,
            hessian,
        }
    }
}

impl<V, G, H> Objective for FnObjective<V, G, H>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    H: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.hessian)(x)
    }

    fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
        Evaluation {
            value: (self.value)(x),
            gradient: (self.gradient)(x),
            hessian: (self.hessian)(x),
        }
    }
}

/// Map between original box coordinates and cone coordinates.
///
/// Cone layout: `[x - l (one per original variable), u - x (one per finite u)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMap {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cone index of the slack paired with each original variable.
    pub slack_index: Vec<Option<usize>>,
}

impl BoxMap {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(CrnasError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        let n = lower.len();
        let mut slack_index = Vec::with_capacity(n);
        let mut next = n;
        for (i, (&l, &u)) in lower.iter().zip(upper).enumerate() {
            if !l.is_finite() || u.is_nan() || !(l < u) {
                return Err(CrnasError::Contract(format!(
                    "invalid bounds for variable {i}: ({l}, {u})"
                )));
            }
            if u.is_finite() {
                slack_index.push(Some(next));
                next += 1;
            } else {
                slack_index.push(None);
            }
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            slack_index,
        })
    }

    pub fn original_dim(&self) -> usize {
        self.lower.len()
    }

    pub fn cone_dim(&self) -> usize {
        self.original_dim() + self.slack_index.iter().filter(|s| s.is_some()).count()
    }

    pub fn to_cone(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut theta = DVector::zeros(self.cone_dim());
        for i in 0..self.original_dim() {
            theta[i] = x[i] - self.lower[i];
            if let Some(s) = self.slack_index[i] {
                theta[s] = self.upper[i] - x[i];
            }
        }
        theta
    }

    pub fn to_original(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.original_dim(), |i, _| theta[i] + self.lower[i])
    }
}

struct PulledBack {
    inner: Arc<dyn Objective>,
    map: BoxMap,
}

impl Objective for PulledBack {
    fn dim(&self) -> usize {
        self.map.cone_dim()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.inner.value(&self.map.to_original(theta))
    }

    fn evaluate(&self, theta: &DVector<f64>) -> Evaluation {
        let n0 = self.map.original_dim();
        let n = self.dim();
        let inner = self.inner.evaluate(&self.map.to_original(theta));
        let mut gradient = DVector::zeros(n);
        gradient.rows_mut(0, n0).copy_from(&inner.gradient);
        let mut hessian = DMatrix::zeros(n, n);
        hessian.view_mut((0, 0), (n0, n0)).copy_from(&inner.hessian);
        Evaluation {
            value: inner.value,
            gradient,
            hessian,
        }
    }
}

/// `min L(θ) s.t. Aθ = b, θ ≥ 0`.
#[derive(Clone)]
pub struct ConicProgram {
    objective: Arc<dyn Objective>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    provenance: Option<BoxMap>,
}

impl std::fmt::Debug for ConicProgram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConicProgram")
            .field("n", &self.dim())
            .field("m", &self.a.nrows())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ConicProgram {
    pub fn new(objective: Arc<dyn Objective>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = objective.dim();
        if a.ncols() != n && a.nrows() > 0 {
            return Err(CrnasError::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        if a.nrows() != b.len() {
            return Err(CrnasError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(CrnasError::Contract("constraint data must be finite".into()));
        }
        let a = if a.nrows() == 0 { DMatrix::zeros(0, n) } else { a };
        Ok(Self {
            objective,
            a,
            b,
            provenance: None,
        })
    }

    /// Rewrites `min f(x) s.t. A x = b, l < x < u` as a conic program.
    pub fn from_box_constrained(
        objective: Arc<dyn Objective>,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Self> {
        let map = BoxMap::new(lower, upper)?;
        let n0 = map.original_dim();
        if objective.dim() != n0 {
            return Err(CrnasError::DimensionMismatch {
                expected: n0,
                got: objective.dim(),
            });
        }
        if a.nrows() > 0 && a.ncols() != n0 {
            return Err(CrnasError::DimensionMismatch {
                expected: n0,
                got: a.ncols(),
            });
        }
        if a.nrows() != b.len() {
            return Err(CrnasError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let n = map.cone_dim();
        let slacks: Vec<(usize, usize)> = map
            .slack_index
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s)))
            .collect();
        let m = a.nrows() + slacks.len();
        let mut big_a = DMatrix::zeros(m, n);
        let mut big_b = DVector::zeros(m);
        let l = DVector::from_row_slice(lower);
        if a.nrows() > 0 {
            big_a.view_mut((0, 0), (a.nrows(), n0)).copy_from(a);
            big_b.rows_mut(0, a.nrows()).copy_from(&(b - a * &l));
        }
        for (row, &(i, s)) in slacks.iter().enumerate() {
            let r = a.nrows() + row;
            big_a[(r, i)] = 1.0;
            big_a[(r, s)] = 1.0;
            big_b[r] = upper[i] - lower[i];
        }
        let pulled = PulledBack {
            inner: objective,
            map: map.clone(),
        };
        let mut program = Self::new(Arc::new(pulled), big_a, big_b)?;
        program.provenance = Some(map);
        Ok(program)
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn provenance(&self) -> Option<&BoxMap> {
        self.provenance.as_ref()
    }

    /// Original-coordinate view of a cone point (identity without provenance).
    pub fn to_original(&self, theta: &DVector<f64>) -> DVector<f64> {
        match &self.provenance {
            Some(map) => map.to_original(theta),
            None => theta.clone(),
        }
    }

    pub fn to_cone(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.provenance {
            Some(map) => map.to_cone(x),
            None => x.clone(),
        }
    }

    /// Tolerance used for equality feasibility: `1e-8·(1 + ‖b‖)`.
    pub fn feasibility_tolerance(&self) -> f64 {
        1e-8 * (1.0 + self.b.norm())
    }

    /// Minimum-norm correction of `θ` onto `{Aθ = b}`.
    pub fn project_to_affine(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let rows = IndependentRows::new(&self.a, &self.b)?;
        Ok(rows.project(theta))
    }

    pub fn null_basis(&self) -> Result<NullBasis> {
        null_space_basis(&self.a)
    }
}

/// `(‖Aθ - b‖, min θᵢ)`.
pub fn residuals(program: &ConicProgram, theta: &DVector<f64>) -> (f64, f64) {
    let eq = if program.a.nrows() == 0 {
        0.0
    } else {
        (&program.a * theta - &program.b).norm()
    };
    let min = theta.iter().copied().fold(f64::INFINITY, f64::min);
    (eq, min)
}

/// Orthonormal basis of `ker A`.
#[derive(Debug, Clone)]
pub struct NullBasis {
    pub t: DMatrix<f64>,
    pub rank: usize,
}

impl NullBasis {
    pub fn k(&self) -> usize {
        self.t.ncols()
    }
}

fn rank_tolerance(a: &DMatrix<f64>) -> f64 {
    1e-10 * a.norm().max(f64::MIN_POSITIVE)
}

pub fn null_space_basis(a: &DMatrix<f64>) -> Result<NullBasis> {
    let n = a.ncols();
    if a.nrows() == 0 || a.amax() == 0.0 {
        return Ok(NullBasis {
            t: DMatrix::identity(n, n),
            rank: 0,
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(CrnasError::Contract("constraint matrix must be finite".into()));
    }
    // Pad to a square matrix so the SVD returns a full right singular basis.
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let tol = rank_tolerance(a);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank == n {
        return Err(CrnasError::FullyDetermined { rank });
    }
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| vt.row(i).transpose())
        .collect();
    let t = DMatrix::from_columns(&cols);
    Ok(NullBasis { t, rank })
}

/// Orthonormal-row system equivalent to `Aθ = b` after dropping redundant rows.
#[derive(Debug, Clone)]
pub struct IndependentRows {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl IndependentRows {
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let n = a.ncols();
        if a.nrows() == 0 || a.amax() == 0.0 {
            if b.amax() > 0.0 {
                return Err(CrnasError::Infeasible("0 = b with b ≠ 0".into()));
            }
            return Ok(Self {
                q: DMatrix::zeros(0, n),
                c: DVector::zeros(0),
            });
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.as_ref().expect("svd u");
        let vt = svd.v_t.as_ref().expect("svd v_t");
        let tol = rank_tolerance(a);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > tol)
            .collect();
        let mut q = DMatrix::zeros(keep.len(), n);
        let mut c = DVector::zeros(keep.len());
        let mut explained = DVector::zeros(a.nrows());
        for (r, &i) in keep.iter().enumerate() {
            q.set_row(r, &vt.row(i));
            let ub = u.column(i).dot(b);
            c[r] = ub / svd.singular_values[i];
            explained += u.column(i) * ub;
        }
        if (b - explained).norm() > 1e-8 * (1.0 + b.norm()) {
            return Err(CrnasError::Infeasible(
                "equality constraints are inconsistent".into(),
            ));
        }
        Ok(Self { q, c })
    }

    pub fn project(&self, theta: &DVector<f64>) -> DVector<f64> {
        if self.q.nrows() == 0 {
            return theta.clone();
        }
        let r = &self.q * theta - &self.c;
        theta - self.q.transpose() * r
    }
}

const MAX_HINT_ATTEMPTS: usize = 1000;
const ANALYTIC_CENTER_ITERS: usize = 100;

/// A strictly interior, equality-feasible point.
///
/// With `box_hint` (ranges in cone coordinates), samples the hint interior and
/// projects onto the affine set. Without it, computes the analytic center.
pub fn feasible_interior_point<R: Rng + ?Sized>(
    program: &ConicProgram,
    box_hint: Option<&[(f64, f64)]>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = program.dim();
    let rows = IndependentRows::new(&program.a, &program.b)?;
    let tol = program.feasibility_tolerance();
    if let Some(hint) = box_hint {
        if hint.len() != n {
            return Err(CrnasError::DimensionMismatch {
                expected: n,
                got: hint.len(),
            });
        }
        for _ in 0..MAX_HINT_ATTEMPTS {
            let raw = DVector::from_fn(n, |i, _| {
                let (lo, hi) = hint[i];
                lo + (hi - lo) * rng.random::<f64>()
            });
            let theta = rows.project(&raw);
            let (eq, min) = residuals(program, &theta);
            if min > 0.0 && eq <= tol {
                return Ok(theta);
            }
        }
        return Err(CrnasError::Infeasible(format!(
            "no interior point after {MAX_HINT_ATTEMPTS} attempts"
        )));
    }
    analytic_center(program, &rows)
}

/// Infeasible-start damped Newton on `min -Σ log θ s.t. Qθ = c`.
fn analytic_center(program: &ConicProgram, rows: &IndependentRows) -> Result<DVector<f64>> {
    let n = program.dim();
    let m = rows.q.nrows();
    let tol = program.feasibility_tolerance();
    let mut theta = DVector::from_element(n, 1.0);
    let mut nu = DVector::<f64>::zeros(m);
    let residual = |theta: &DVector<f64>, nu: &DVector<f64>| -> f64 {
        let dual = theta.map(|t| -1.0 / t) + rows.q.transpose() * nu;
        let primal = &rows.q * theta - &rows.c;
        (dual.norm_squared() + primal.norm_squared()).sqrt()
    };
    for _ in 0..ANALYTIC_CENTER_ITERS {
        let grad = theta.map(|t| -1.0 / t);
        let primal = &rows.q * &theta - &rows.c;
        let dual = &grad + rows.q.transpose() * &nu;
        let r0 = (dual.norm_squared() + primal.norm_squared()).sqrt();
        if primal.norm() <= 0.1 * tol && dual.norm() <= 1e-10 * (1.0 + grad.norm()) {
            break;
        }
        let mut kkt = DMatrix::zeros(n + m, n + m);
        for i in 0..n {
            kkt[(i, i)] = 1.0 / (theta[i] * theta[i]);
        }
        kkt.view_mut((0, n), (n, m)).copy_from(&rows.q.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(&rows.q);
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-&dual));
        rhs.rows_mut(n, m).copy_from(&(-&primal));
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| CrnasError::Infeasible("singular analytic-center system".into()))?;
        let dtheta = sol.rows(0, n).into_owned();
        let dnu = sol.rows(n, m).into_owned();
        let mut step = 1.0;
        while (0..n).any(|i| theta[i] + step * dtheta[i] <= 0.0) {
            step *= 0.5;
        }
        loop {
            let cand = &theta + &dtheta * step;
            let cnu = &nu + &dnu * step;
            if residual(&cand, &cnu) <= (1.0 - 0.01 * step) * r0 || step < 1e-12 {
                theta = cand;
                nu = cnu;
                break;
            }
            step *= 0.5;
        }
    }
    let theta = rows.project(&theta);
    let (eq, min) = residuals(program, &theta);
    if min > 0.0 && eq <= tol {
        Ok(theta)
    } else {
        Err(CrnasError::Infeasible(
            "analytic center did not reach a strictly interior feasible point".into(),
        ))
    }
}
