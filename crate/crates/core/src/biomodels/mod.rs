//! Parameter-estimation objectives for heterogeneous cell populations.
//!
//! Optimization coordinates per subpopulation, in order:
//!
//! | model     | coordinates                  |
//! |-----------|------------------------------|
//! | PhenoPop  | `p, α, b, 𝓔, n`              |
//! | LBD       | `p, β, ν, b, 𝓔, n`, then `c` |
//! | logistic  | `p, α, β`                    |
//!
//! The proportion `p` is dropped when `S = 1`.

mod dataset;
mod hill;
pub mod jet;
mod lbd;
mod logistic;
mod phenopop;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, GridSpec};
pub use hill::{hill, hill_original, HillParams};
pub use lbd::{lbd_moments, lbd_nll, variance_factor, LbdObjective, LbdParams, LbdSubpop};
pub use logistic::{
    logistic_objective, logistic_predict, LogisticObjective, LogisticParams, LogisticSubpop,
};
pub use phenopop::{
    phenopop_objective, phenopop_predict, PhenoPopObjective, PhenoPopParams, PhenoPopSubpop,
};

use crate::problem::{ConicProgram, Evaluation, Objective};
use crate::{CrnasError, Result};
use jet::Jet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "phenopop")]
    PhenoPop,
    #[serde(rename = "lbd")]
    BirthDeath,
    #[serde(rename = "logistic")]
    Logistic,
}

impl std::str::FromStr for ModelKind {
    type Err = CrnasError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phenopop" | "pp" => Ok(ModelKind::PhenoPop),
            "lbd" | "birth-death" | "birthdeath" => Ok(ModelKind::BirthDeath),
            "logistic" | "lg" => Ok(ModelKind::Logistic),
            other => Err(CrnasError::Config(format!("unknown model '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::PhenoPop => "phenopop",
            ModelKind::BirthDeath => "lbd",
            ModelKind::Logistic => "logistic",
        })
    }
}

/// Meaning of one optimization coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "role", content = "subpop")]
pub enum ParamRole {
    Proportion(usize),
    Growth(usize),
    Birth(usize),
    Death(usize),
    MaxEffect(usize),
    Ecal(usize),
    HillCoefficient(usize),
    Shift(usize),
    Noise,
}

impl ParamRole {
    pub fn name(&self) -> String {
        match self {
            ParamRole::Proportion(i) => format!("p{}", i + 1),
            ParamRole::Growth(i) => format!("alpha{}", i + 1),
            ParamRole::Birth(i) => format!("beta{}", i + 1),
            ParamRole::Death(i) => format!("nu{}", i + 1),
            ParamRole::MaxEffect(i) => format!("b{}", i + 1),
            ParamRole::Ecal(i) => format!("Ecal{}", i + 1),
            ParamRole::HillCoefficient(i) => format!("n{}", i + 1),
            ParamRole::Shift(i) => format!("shift{}", i + 1),
            ParamRole::Noise => "c".into(),
        }
    }
}

/// Coordinate roles of the optimization vector for `(kind, S)`.
pub fn parameter_layout(kind: ModelKind, s: usize) -> Vec<ParamRole> {
    let mut out = Vec::new();
    for i in 0..s {
        if s > 1 {
            out.push(ParamRole::Proportion(i));
        }
        match kind {
            ModelKind::PhenoPop => out.push(ParamRole::Growth(i)),
            ModelKind::BirthDeath => {
                out.push(ParamRole::Birth(i));
                out.push(ParamRole::Death(i));
            }
            ModelKind::Logistic => {
                out.push(ParamRole::Growth(i));
                out.push(ParamRole::Shift(i));
                continue;
            }
        }
        out.push(ParamRole::MaxEffect(i));
        out.push(ParamRole::Ecal(i));
        out.push(ParamRole::HillCoefficient(i));
    }
    if kind == ModelKind::BirthDeath {
        out.push(ParamRole::Noise);
    }
    out
}

/// Global index of local coordinate `local` of subpopulation `i`; local 0 is `p`.
fn local_map<const N: usize>(s: usize, i: usize) -> [Option<usize>; N] {
    let width = if s > 1 { N } else { N - 1 };
    std::array::from_fn(|local| {
        if s == 1 {
            (local > 0).then(|| local - 1)
        } else {
            Some(i * width + local)
        }
    })
}

/// Any of the three parameter sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    #[serde(rename = "phenopop")]
    PhenoPop(PhenoPopParams),
    #[serde(rename = "lbd")]
    BirthDeath(LbdParams),
    #[serde(rename = "logistic")]
    Logistic(LogisticParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::PhenoPop(_) => ModelKind::PhenoPop,
            ModelParams::BirthDeath(_) => ModelKind::BirthDeath,
            ModelParams::Logistic(_) => ModelKind::Logistic,
        }
    }

    pub fn s(&self) -> usize {
        match self {
            ModelParams::PhenoPop(p) => p.subpops.len(),
            ModelParams::BirthDeath(p) => p.subpops.len(),
            ModelParams::Logistic(p) => p.subpops.len(),
        }
    }

    pub fn x0(&self) -> f64 {
        match self {
            ModelParams::PhenoPop(p) => p.x0,
            ModelParams::BirthDeath(p) => p.x0,
            ModelParams::Logistic(p) => p.f0,
        }
    }

    /// Optimization-coordinate vector.
    pub fn to_vector(&self) -> DVector<f64> {
        let roles = parameter_layout(self.kind(), self.s());
        DVector::from_iterator(roles.len(), roles.iter().map(|r| self.get(*r)))
    }

    fn get(&self, role: ParamRole) -> f64 {
        use ParamRole::*;
        match (self, role) {
            (ModelParams::PhenoPop(p), Proportion(i)) => p.subpops[i].p,
            (ModelParams::PhenoPop(p), Growth(i)) => p.subpops[i].alpha,
            (ModelParams::PhenoPop(p), MaxEffect(i)) => p.subpops[i].hill.b,
            (ModelParams::PhenoPop(p), Ecal(i)) => p.subpops[i].hill.ecal,
            (ModelParams::PhenoPop(p), HillCoefficient(i)) => p.subpops[i].hill.n,
            (ModelParams::BirthDeath(p), Proportion(i)) => p.subpops[i].p,
            (ModelParams::BirthDeath(p), Birth(i)) => p.subpops[i].beta,
            (ModelParams::BirthDeath(p), Death(i)) => p.subpops[i].nu,
            (ModelParams::BirthDeath(p), MaxEffect(i)) => p.subpops[i].hill.b,
            (ModelParams::BirthDeath(p), Ecal(i)) => p.subpops[i].hill.ecal,
            (ModelParams::BirthDeath(p), HillCoefficient(i)) => p.subpops[i].hill.n,
            (ModelParams::BirthDeath(p), Noise) => p.c,
            (ModelParams::Logistic(p), Proportion(i)) => p.subpops[i].p,
            (ModelParams::Logistic(p), Growth(i)) => p.subpops[i].alpha,
            (ModelParams::Logistic(p), Shift(i)) => p.subpops[i].beta,
            _ => f64::NAN,
        }
    }

    /// Inverse of [`ModelParams::to_vector`].
    pub fn from_vector(kind: ModelKind, s: usize, x0: f64, v: &DVector<f64>) -> Result<Self> {
        let roles = parameter_layout(kind, s);
        if v.len() != roles.len() {
            return Err(CrnasError::DimensionMismatch {
                expected: roles.len(),
                got: v.len(),
            });
        }
        let at = |role: ParamRole| -> f64 {
            match role {
                ParamRole::Proportion(_) if s == 1 => 1.0,
                _ => roles.iter().position(|r| *r == role).map(|k| v[k]).unwrap_or(f64::NAN),
            }
        };
        let hill_of = |i| HillParams {
            b: at(ParamRole::MaxEffect(i)),
            ecal: at(ParamRole::Ecal(i)),
            n: at(ParamRole::HillCoefficient(i)),
        };
        Ok(match kind {
            ModelKind::PhenoPop => ModelParams::PhenoPop(PhenoPopParams {
                x0,
                subpops: (0..s)
                    .map(|i| PhenoPopSubpop {
                        p: at(ParamRole::Proportion(i)),
                        alpha: at(ParamRole::Growth(i)),
                        hill: hill_of(i),
                    })
                    .collect(),
            }),
            ModelKind::BirthDeath => ModelParams::BirthDeath(LbdParams {
                x0,
                c: at(ParamRole::Noise),
                subpops: (0..s)
                    .map(|i| LbdSubpop {
                        p: at(ParamRole::Proportion(i)),
                        beta: at(ParamRole::Birth(i)),
                        nu: at(ParamRole::Death(i)),
                        hill: hill_of(i),
                    })
                    .collect(),
            }),
            ModelKind::Logistic => ModelParams::Logistic(LogisticParams {
                f0: x0,
                subpops: (0..s)
                    .map(|i| LogisticSubpop {
                        p: at(ParamRole::Proportion(i)),
                        alpha: at(ParamRole::Growth(i)),
                        beta: at(ParamRole::Shift(i)),
                    })
                    .collect(),
            }),
        })
    }
}

/// Objective of the dataset's model in optimization coordinates.
pub fn objective_for(dataset: &Dataset) -> Arc<dyn Objective> {
    let data = Arc::new(dataset.clone());
    match dataset.model {
        ModelKind::PhenoPop => Arc::new(PhenoPopObjective::new(data)),
        ModelKind::BirthDeath => Arc::new(LbdObjective::new(data)),
        ModelKind::Logistic => Arc::new(LogisticObjective::new(data)),
    }
}

/// Smallest admissible observation-noise level for initial count `x0`.
pub fn noise_floor(x0: f64) -> f64 {
    1e-3 * x0
}

/// Box-constrained program for `dataset` with `Σp = 1` when `S > 1`.
///
/// `bounds[j]` is the open interval of optimization coordinate `j`.
pub fn as_conic_program(dataset: &Dataset, bounds: &[(f64, f64)]) -> Result<ConicProgram> {
    let roles = parameter_layout(dataset.model, dataset.s);
    if bounds.len() != roles.len() {
        return Err(CrnasError::DimensionMismatch {
            expected: roles.len(),
            got: bounds.len(),
        });
    }
    let n = roles.len();
    let props: Vec<usize> = (0..n)
        .filter(|&j| matches!(roles[j], ParamRole::Proportion(_)))
        .collect();
    let (a, b) = if props.is_empty() {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    } else {
        let mut a = DMatrix::zeros(1, n);
        for &j in &props {
            a[(0, j)] = 1.0;
        }
        (a, DVector::from_element(1, 1.0))
    };
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    ConicProgram::from_box_constrained(objective_for(dataset), &a, &b, &lower, &upper)
}

/// Dense accumulator for per-cell losses of aggregated quantities.
///
/// Each cell contributes `φ(u₁, …, u_K)` where every `u_k` is a sum of jets
/// over small local blocks scattered into the global coordinates.
pub(crate) struct Assembly {
    n: usize,
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
    scratch: Vec<Vec<f64>>,
}

pub(crate) type Piece<'a, const N: usize> = (Jet<N>, &'a [Option<usize>; N]);

impl Assembly {
    pub(crate) fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            value: 0.0,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
            scratch: vec![vec![0.0; n]; k],
        }
    }

    pub(crate) fn add<const N: usize, const K: usize>(
        &mut self,
        aggregates: [&[Piece<'_, N>]; K],
        phi: f64,
        dphi: [f64; K],
        d2phi: [[f64; K]; K],
    ) {
        let n = self.n;
        self.value += phi;
        for (k, pieces) in aggregates.iter().enumerate() {
            let gk = &mut self.scratch[k];
            gk.iter_mut().for_each(|v| *v = 0.0);
            for (jet, map) in pieces.iter() {
                for a in 0..N {
                    let Some(ga) = map[a] else { continue };
                    gk[ga] += jet.g[a];
                    for b in 0..N {
                        if let Some(gb) = map[b] {
                            self.hess[ga * n + gb] += dphi[k] * jet.h[a][b];
                        }
                    }
                }
            }
            for i in 0..n {
                self.grad[i] += dphi[k] * gk[i];
            }
        }
        for k in 0..K {
            for l in 0..K {
                let w = d2phi[k][l];
                if w == 0.0 {
                    continue;
                }
                let (gk, gl) = (&self.scratch[k], &self.scratch[l]);
                for i in 0..n {
                    if gk[i] == 0.0 {
                        continue;
                    }
                    let wi = w * gk[i];
                    for j in 0..n {
                        self.hess[i * n + j] += wi * gl[j];
                    }
                }
            }
        }
    }

    pub(crate) fn finish(self) -> Evaluation {
        let n = self.n;
        let h = DMatrix::from_row_slice(n, n, &self.hess);
        Evaluation {
            value: self.value,
            gradient: DVector::from_vec(self.grad),
            hessian: (&h + h.transpose()) * 0.5,
        }
    }
}

/// Central finite-difference check of an objective's gradient and Hessian.
///
/// Returns `‖approx - exact‖ / max(1, ‖exact‖)` for the gradient and for the
/// Hessian (Frobenius norm).
pub fn finite_difference_error(objective: &dyn Objective, x: &DVector<f64>) -> (f64, f64) {
    let eval = objective.evaluate(x);
    let n = x.len();
    let mut g_fd = DVector::zeros(n);
    let mut h_fd = DMatrix::zeros(n, n);
    for i in 0..n {
        // Relative step: interior coordinates can sit many decades below one.
        let h = 1e-6 * if x[i] != 0.0 { x[i].abs() } else { 1e-3 };
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g_fd[i] = (objective.value(&xp) - objective.value(&xm)) / (2.0 * h);
        let gp = objective.gradient(&xp);
        let gm = objective.gradient(&xm);
        h_fd.set_column(i, &((gp - gm) / (2.0 * h)));
    }
    let rel = |a: f64, b: f64| a / b.max(1.0);
    let g_err = rel((&g_fd - &eval.gradient).norm(), eval.gradient.norm());
    let h_err = rel((&h_fd - &eval.hessian).norm(), eval.hessian.norm());
    (g_err, h_err)
}
