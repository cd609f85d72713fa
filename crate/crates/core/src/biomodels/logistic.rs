//! Heterogeneous logistic growth of the total count.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::hill::sigmoid_neg;
use super::jet::{Jet, Scalar};
use super::{local_map, parameter_layout, Assembly, Dataset, ModelKind, Piece};
use crate::problem::{Evaluation, Objective};
use crate::{CrnasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticSubpop {
    pub p: f64,
    /// Growth rate.
    pub alpha: f64,
    /// Time shift of the sigmoid.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    #[serde(rename = "F0")]
    pub f0: f64,
    pub subpops: Vec<LogisticSubpop>,
}

/// `F0·p / (1 + exp(β - αt))`.
fn subpop_count<T: Scalar>(t: f64, f0: f64, p: T, alpha: T, beta: T) -> T {
    p * sigmoid_neg(beta - alpha * t) * f0
}

pub fn logistic_predict(t: f64, params: &LogisticParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(CrnasError::Contract(format!("time must be nonnegative, got {t}")));
    }
    Ok(params
        .subpops
        .iter()
        .map(|s| subpop_count(t, params.f0, s.p, s.alpha, s.beta))
        .sum())
}

/// Least-squares misfit over `(t, r)`.
pub struct LogisticObjective {
    data: Arc<Dataset>,
    dim: usize,
}

impl LogisticObjective {
    pub fn new(data: Arc<Dataset>) -> Self {
        let dim = parameter_layout(ModelKind::Logistic, data.s).len();
        Self { data, dim }
    }

    fn unpack(&self, x: &DVector<f64>, i: usize) -> [f64; 3] {
        let map: [Option<usize>; 3] = local_map(self.data.s, i);
        std::array::from_fn(|k| map[k].map(|j| x[j]).unwrap_or(1.0))
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let d = &*self.data;
        let blocks: Vec<[f64; 3]> = (0..d.s).map(|i| self.unpack(x, i)).collect();
        let mut total = 0.0;
        for (ti, &t) in d.grids.times.iter().enumerate() {
            let f: f64 = blocks.iter().map(|b| subpop_count(t, d.x0, b[0], b[1], b[2])).sum();
            total += d.cell(ti, 0).iter().map(|x| (x - f).powi(2)).sum::<f64>();
        }
        total
    }

    fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
        let d = &*self.data;
        let maps: Vec<[Option<usize>; 3]> = (0..d.s).map(|i| local_map(d.s, i)).collect();
        let vars: Vec<[Jet<3>; 3]> = (0..d.s)
            .map(|i| {
                let v = self.unpack(x, i);
                std::array::from_fn(|k| Jet::variable(v[k], k))
            })
            .collect();
        let r = d.replicates() as f64;
        let mut acc = Assembly::new(self.dim, 1);
        let mut pieces: Vec<Piece<'_, 3>> = Vec::with_capacity(d.s);
        for (ti, &t) in d.grids.times.iter().enumerate() {
            pieces.clear();
            for (i, v) in vars.iter().enumerate() {
                pieces.push((subpop_count(t, d.x0, v[0], v[1], v[2]), &maps[i]));
            }
            let f: f64 = pieces.iter().map(|p| p.0.v).sum();
            let obs = d.cell(ti, 0);
            let phi: f64 = obs.iter().map(|x| (x - f).powi(2)).sum();
            let sum_resid: f64 = obs.iter().map(|x| x - f).sum();
            acc.add([&pieces[..]], phi, [-2.0 * sum_resid], [[2.0 * r]]);
        }
        acc.finish()
    }
}

pub fn logistic_objective(dataset: &Dataset, params: &LogisticParams) -> Result<Evaluation> {
    if dataset.model != ModelKind::Logistic || dataset.s != params.subpops.len() {
        return Err(CrnasError::DimensionMismatch {
            expected: dataset.s,
            got: params.subpops.len(),
        });
    }
    let v = super::ModelParams::Logistic(params.clone()).to_vector();
    Ok(LogisticObjective::new(Arc::new(dataset.clone())).evaluate(&v))
}
