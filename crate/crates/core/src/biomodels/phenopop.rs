//! Mixture of exponentially growing subpopulations under a Hill drug effect.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::hill::hill_bar;
use super::jet::{Jet, Scalar};
use super::{local_map, parameter_layout, Assembly, Dataset, HillParams, ModelKind, Piece};
use crate::problem::{Evaluation, Objective};
use crate::{CrnasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhenoPopSubpop {
    pub p: f64,
    pub alpha: f64,
    pub hill: HillParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenoPopParams {
    #[serde(rename = "X0")]
    pub x0: f64,
    pub subpops: Vec<PhenoPopSubpop>,
}

/// `log H̄(d)` for one subpopulation.
fn log_hill<T: Scalar>(d: f64, b: T, ecal: T, n: T) -> T {
    if d == 0.0 {
        return T::constant(0.0);
    }
    hill_bar(d, b, ecal, n).ln()
}

/// `p·X0·exp(t(α + log H̄))`.
fn subpop_count<T: Scalar>(t: f64, x0: f64, p: T, alpha: T, log_h: T) -> T {
    p * ((alpha + log_h) * t).exp() * x0
}

/// Expected total count at `(t, d)`.
pub fn phenopop_predict(t: f64, d: f64, params: &PhenoPopParams) -> Result<f64> {
    if !(t >= 0.0 && d >= 0.0) {
        return Err(CrnasError::Contract(format!(
            "time and dose must be nonnegative, got t={t}, d={d}"
        )));
    }
    Ok(params
        .subpops
        .iter()
        .map(|s| {
            let lh = log_hill(d, s.hill.b, s.hill.ecal, s.hill.n);
            subpop_count(t, params.x0, s.p, s.alpha, lh)
        })
        .sum())
}

/// Least-squares misfit over every `(t, d, r)`.
pub struct PhenoPopObjective {
    data: Arc<Dataset>,
    dim: usize,
}

impl PhenoPopObjective {
    pub fn new(data: Arc<Dataset>) -> Self {
        let dim = parameter_layout(ModelKind::PhenoPop, data.s).len();
        Self { data, dim }
    }

    fn unpack(&self, x: &DVector<f64>, i: usize) -> [f64; 5] {
        let map: [Option<usize>; 5] = local_map(self.data.s, i);
        std::array::from_fn(|k| map[k].map(|j| x[j]).unwrap_or(1.0))
    }
}

impl Objective for PhenoPopObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let d = &*self.data;
        let blocks: Vec<[f64; 5]> = (0..d.s).map(|i| self.unpack(x, i)).collect();
        let mut total = 0.0;
        for (di, &dose) in d.grids.doses.iter().enumerate() {
            let log_h: Vec<f64> = blocks.iter().map(|b| log_hill(dose, b[2], b[3], b[4])).collect();
            for (ti, &t) in d.grids.times.iter().enumerate() {
                let f: f64 = blocks
                    .iter()
                    .zip(&log_h)
                    .map(|(b, &lh)| subpop_count(t, d.x0, b[0], b[1], lh))
                    .sum();
                total += d.cell(ti, di).iter().map(|x| (x - f).powi(2)).sum::<f64>();
            }
        }
        total
    }

    fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
        let d = &*self.data;
        let maps: Vec<[Option<usize>; 5]> = (0..d.s).map(|i| local_map(d.s, i)).collect();
        let vars: Vec<[Jet<5>; 5]> = (0..d.s)
            .map(|i| {
                let v = self.unpack(x, i);
                std::array::from_fn(|k| Jet::variable(v[k], k))
            })
            .collect();
        let r = d.replicates() as f64;
        let mut acc = Assembly::new(self.dim, 1);
        let mut pieces: Vec<Piece<'_, 5>> = Vec::with_capacity(d.s);
        for (di, &dose) in d.grids.doses.iter().enumerate() {
            let log_h: Vec<Jet<5>> = vars.iter().map(|v| log_hill(dose, v[2], v[3], v[4])).collect();
            for (ti, &t) in d.grids.times.iter().enumerate() {
                pieces.clear();
                for (i, v) in vars.iter().enumerate() {
                    pieces.push((subpop_count(t, d.x0, v[0], v[1], log_h[i]), &maps[i]));
                }
                let f: f64 = pieces.iter().map(|p| p.0.v).sum();
                let obs = d.cell(ti, di);
                let phi: f64 = obs.iter().map(|x| (x - f).powi(2)).sum();
                let sum_resid: f64 = obs.iter().map(|x| x - f).sum();
                acc.add([&pieces[..]], phi, [-2.0 * sum_resid], [[2.0 * r]]);
            }
        }
        acc.finish()
    }
}

/// `(value, gradient, Hessian)` of the PhenoPop misfit at `params`.
pub fn phenopop_objective(dataset: &Dataset, params: &PhenoPopParams) -> Result<Evaluation> {
    if dataset.model != ModelKind::PhenoPop || dataset.s != params.subpops.len() {
        return Err(CrnasError::DimensionMismatch {
            expected: dataset.s,
            got: params.subpops.len(),
        });
    }
    let v = super::ModelParams::PhenoPop(params.clone()).to_vector();
    Ok(PhenoPopObjective::new(Arc::new(dataset.clone())).evaluate(&v))
}
