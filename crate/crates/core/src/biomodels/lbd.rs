//! Linear birth–death mixture with a Gaussian likelihood on total counts.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::hill::hill_bar;
use super::jet::{Jet, Scalar};
use super::{local_map, parameter_layout, Assembly, Dataset, HillParams, ModelKind, Piece};
use crate::problem::{Evaluation, Objective};
use crate::{CrnasError, Result};

/// Below this `|λt|` the variance factor uses its power series.
pub const SERIES_THRESHOLD: f64 = 1e-5;

/// Below this `|λt|` the factor's derivatives use the power series.
const DERIVATIVE_SERIES_THRESHOLD: f64 = 0.25;
const SERIES_TERMS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbdSubpop {
    pub p: f64,
    pub beta: f64,
    pub nu: f64,
    pub hill: HillParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbdParams {
    #[serde(rename = "X0")]
    pub x0: f64,
    pub subpops: Vec<LbdSubpop>,
    /// Observation-noise standard deviation.
    pub c: f64,
}

/// `φ(x) = (e²ˣ - eˣ)/x` and its first two derivatives, with `φ(0) = 1`.
pub fn variance_factor(x: f64) -> (f64, f64, f64) {
    let value = if x.abs() < SERIES_THRESHOLD {
        1.0 + x * (1.5 + x * (7.0 / 6.0 + x * 0.625))
    } else {
        ((2.0 * x).exp() - x.exp()) / x
    };
    if x.abs() < DERIVATIVE_SERIES_THRESHOLD {
        // coefficient k: (2^{k+1} - 1)/(k+1)!
        let (mut d1, mut d2) = (0.0, 0.0);
        let mut fact = 1.0;
        let mut pow2 = 2.0;
        let mut coeffs = [0.0; SERIES_TERMS];
        for (k, c) in coeffs.iter_mut().enumerate() {
            fact *= (k + 1) as f64;
            *c = (pow2 - 1.0) / fact;
            pow2 *= 2.0;
        }
        for k in (1..SERIES_TERMS).rev() {
            d1 = d1 * x + k as f64 * coeffs[k];
        }
        for k in (2..SERIES_TERMS).rev() {
            d2 = d2 * x + (k * (k - 1)) as f64 * coeffs[k];
        }
        (value, d1, d2)
    } else {
        let (e1, e2) = (x.exp(), (2.0 * x).exp());
        let num = e2 - e1;
        let num1 = 2.0 * e2 - e1;
        let num2 = 4.0 * e2 - e1;
        let d1 = (num1 * x - num) / (x * x);
        let d2 = (num2 * x * x - 2.0 * num1 * x + 2.0 * num) / (x * x * x);
        (value, d1, d2)
    }
}

/// Per-initial-cell mean and variance of one subpopulation at `(t, d)`.
fn moments<T: Scalar>(t: f64, log_h: T, beta: T, nu: T) -> (T, T) {
    let lambda = beta - nu + log_h;
    let total_rate = beta + nu - log_h;
    let x = lambda * t;
    let (f, df, d2f) = variance_factor(x.value());
    let mean = x.exp();
    let var = total_rate * x.lift(f, df, d2f) * t;
    (mean, var)
}

fn log_hill<T: Scalar>(d: f64, b: T, ecal: T, n: T) -> T {
    if d == 0.0 {
        return T::constant(0.0);
    }
    hill_bar(d, b, ecal, n).ln()
}

/// `(μᵢ, σᵢ²)` for a single initial cell of `subpop`.
pub fn lbd_moments(t: f64, d: f64, subpop: &LbdSubpop) -> Result<(f64, f64)> {
    if !(t >= 0.0 && d >= 0.0) {
        return Err(CrnasError::Contract(format!(
            "time and dose must be nonnegative, got t={t}, d={d}"
        )));
    }
    let lh = log_hill(d, subpop.hill.b, subpop.hill.ecal, subpop.hill.n);
    let (m, v) = moments(t, lh, subpop.beta, subpop.nu);
    Ok((m, v.max(0.0)))
}

/// Gaussian negative log-likelihood of the replicate counts.
pub struct LbdObjective {
    data: Arc<Dataset>,
    dim: usize,
}

/// Cell loss `(R/2)log(2πV) + Q/(2V)` with its partials in `(μ, V)`.
fn cell_loss(obs: &[f64], mu: f64, var: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let r = obs.len() as f64;
    let q: f64 = obs.iter().map(|x| (x - mu).powi(2)).sum();
    let dq = -2.0 * obs.iter().map(|x| x - mu).sum::<f64>();
    let value = 0.5 * r * (2.0 * PI * var).ln() + q / (2.0 * var);
    let v2 = var * var;
    let cross = -dq / (2.0 * v2);
    (
        value,
        [dq / (2.0 * var), r / (2.0 * var) - q / (2.0 * v2)],
        [[r / var, cross], [cross, -r / (2.0 * v2) + q / (v2 * var)]],
    )
}

impl LbdObjective {
    pub fn new(data: Arc<Dataset>) -> Self {
        let dim = parameter_layout(ModelKind::BirthDeath, data.s).len();
        Self { data, dim }
    }

    fn unpack(&self, x: &DVector<f64>, i: usize) -> [f64; 6] {
        let map: [Option<usize>; 6] = local_map(self.data.s, i);
        std::array::from_fn(|k| map[k].map(|j| x[j]).unwrap_or(1.0))
    }

    fn smallest_variance(&self, x: &DVector<f64>) -> f64 {
        let d = &*self.data;
        let c = x[self.dim - 1];
        let blocks: Vec<[f64; 6]> = (0..d.s).map(|i| self.unpack(x, i)).collect();
        let mut min = f64::INFINITY;
        for &dose in &d.grids.doses {
            for &t in &d.grids.times {
                let v: f64 = blocks
                    .iter()
                    .map(|b| {
                        let lh = log_hill(dose, b[3], b[4], b[5]);
                        d.x0 * b[0] * moments(t, lh, b[1], b[2]).1
                    })
                    .sum();
                min = min.min(v + c * c);
            }
        }
        min
    }
}

impl Objective for LbdObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let d = &*self.data;
        let c = x[self.dim - 1];
        let blocks: Vec<[f64; 6]> = (0..d.s).map(|i| self.unpack(x, i)).collect();
        let mut total = 0.0;
        for (di, &dose) in d.grids.doses.iter().enumerate() {
            let log_h: Vec<f64> = blocks.iter().map(|b| log_hill(dose, b[3], b[4], b[5])).collect();
            for (ti, &t) in d.grids.times.iter().enumerate() {
                let (mut mu, mut var) = (0.0, c * c);
                for (b, &lh) in blocks.iter().zip(&log_h) {
                    let (m, v) = moments(t, lh, b[1], b[2]);
                    mu += d.x0 * b[0] * m;
                    var += d.x0 * b[0] * v;
                }
                if !(var > 0.0) {
                    return f64::NAN;
                }
                total += cell_loss(d.cell(ti, di), mu, var).0;
            }
        }
        total
    }

    fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
        let d = &*self.data;
        let maps: Vec<[Option<usize>; 6]> = (0..d.s).map(|i| local_map(d.s, i)).collect();
        let mut noise_map = [None; 6];
        noise_map[0] = Some(self.dim - 1);
        let c = Jet::<6>::variable(x[self.dim - 1], 0);
        let noise_var = c * c;
        let vars: Vec<[Jet<6>; 6]> = (0..d.s)
            .map(|i| {
                let v = self.unpack(x, i);
                std::array::from_fn(|k| Jet::variable(v[k], k))
            })
            .collect();
        let mut acc = Assembly::new(self.dim, 2);
        let mut means: Vec<Piece<'_, 6>> = Vec::with_capacity(d.s);
        let mut variances: Vec<Piece<'_, 6>> = Vec::with_capacity(d.s + 1);
        for (di, &dose) in d.grids.doses.iter().enumerate() {
            let log_h: Vec<Jet<6>> = vars.iter().map(|v| log_hill(dose, v[3], v[4], v[5])).collect();
            for (ti, &t) in d.grids.times.iter().enumerate() {
                means.clear();
                variances.clear();
                for (i, v) in vars.iter().enumerate() {
                    let (m, s2) = moments(t, log_h[i], v[1], v[2]);
                    let scale = v[0] * d.x0;
                    means.push((scale * m, &maps[i]));
                    variances.push((scale * s2, &maps[i]));
                }
                variances.push((noise_var, &noise_map));
                let mu: f64 = means.iter().map(|p| p.0.v).sum();
                let var: f64 = variances.iter().map(|p| p.0.v).sum();
                let (phi, dphi, d2phi) = cell_loss(d.cell(ti, di), mu, var);
                acc.add([&means[..], &variances[..]], phi, dphi, d2phi);
            }
        }
        let mut eval = acc.finish();
        if !eval.value.is_finite() {
            eval.value = f64::NAN;
        }
        eval
    }
}

/// `(value, gradient, Hessian)` of the birth–death NLL at `params`.
pub fn lbd_nll(dataset: &Dataset, params: &LbdParams) -> Result<Evaluation> {
    if dataset.model != ModelKind::BirthDeath || dataset.s != params.subpops.len() {
        return Err(CrnasError::DimensionMismatch {
            expected: dataset.s,
            got: params.subpops.len(),
        });
    }
    let v = super::ModelParams::BirthDeath(params.clone()).to_vector();
    let obj = LbdObjective::new(Arc::new(dataset.clone()));
    let min_var = obj.smallest_variance(&v);
    if !(min_var > 0.0) {
        return Err(CrnasError::Domain {
            index: v.len() - 1,
            value: min_var,
        });
    }
    Ok(obj.evaluate(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomodels::{finite_difference_error, GridSpec, ModelParams};
    use approx::assert_relative_eq;

    fn subpop(beta: f64, nu: f64) -> LbdSubpop {
        LbdSubpop {
            p: 1.0,
            beta,
            nu,
            hill: HillParams::from_ec50(0.85, 0.08, 2.0),
        }
    }

    fn params() -> LbdParams {
        LbdParams {
            x0: 1000.0,
            c: 8.0,
            subpops: vec![
                LbdSubpop {
                    p: 0.36,
                    beta: 0.41,
                    nu: 0.31,
                    hill: HillParams::from_ec50(0.8, 0.08, 2.05),
                },
                LbdSubpop {
                    p: 0.64,
                    beta: 0.72,
                    nu: 0.67,
                    hill: HillParams::from_ec50(0.95, 0.81, 4.39),
                },
            ],
        }
    }

    fn dataset(p: &LbdParams, shift: f64) -> Dataset {
        let grids = GridSpec {
            times: (0..13).map(|i| 3.0 * i as f64).collect(),
            doses: vec![0.0, 0.0313, 0.0625, 0.125, 0.25, 0.375, 0.5, 1.25, 2.5, 3.75, 5.0],
            replicates: 3,
        };
        let mut obs = Vec::new();
        for &t in &grids.times {
            for &d in &grids.doses {
                let mu: f64 = p
                    .subpops
                    .iter()
                    .map(|s| p.x0 * s.p * lbd_moments(t, d, s).unwrap().0)
                    .sum();
                for r in 0..3 {
                    obs.push(mu + shift * (r as f64 - 1.0) + 0.3 * t);
                }
            }
        }
        Dataset::new(
            ModelKind::BirthDeath,
            p.subpops.len(),
            p.x0,
            grids,
            obs,
            Some(ModelParams::BirthDeath(p.clone())),
        )
        .unwrap()
    }

    #[test]
    fn moments_reference_values() {
        let s = subpop(0.4, 0.3);
        assert_eq!(lbd_moments(0.0, 1.0, &s).unwrap(), (1.0, 0.0));
        let (m, v) = lbd_moments(5.0, 0.0, &s).unwrap();
        let lam: f64 = 0.1;
        assert_relative_eq!(m, (lam * 5.0).exp(), max_relative = 1e-14);
        let direct = 0.7 / lam * ((2.0 * lam * 5.0).exp() - (lam * 5.0).exp());
        assert_relative_eq!(v, direct, max_relative = 1e-13);
        let crit = subpop(0.3, 0.3);
        let (m, v) = lbd_moments(7.0, 0.0, &crit).unwrap();
        assert_eq!(m, 1.0);
        assert_relative_eq!(v, 0.6 * 7.0, max_relative = 1e-15);
        assert!(lbd_moments(1.0, -0.1, &s).is_err());
    }

    #[test]
    fn series_branch_is_accurate_and_continuous() {
        // exact φ(x) = Σ (2^{k+1}-1) x^k/(k+1)! summed in extended terms
        let exact = |x: f64| {
            let mut sum = 0.0;
            let mut fact = 1.0;
            for k in 0..30 {
                fact *= (k + 1) as f64;
                sum += (2f64.powi(k + 1) - 1.0) * x.powi(k) / fact;
            }
            sum
        };
        let x = 1e-6;
        assert_relative_eq!(variance_factor(x).0, exact(x), max_relative = 1e-9);
        let mut worst: f64 = 0.0;
        for sign in [-1.0, 1.0] {
            let lo = variance_factor(sign * SERIES_THRESHOLD * (1.0 - 1e-9)).0;
            let hi = variance_factor(sign * SERIES_THRESHOLD * (1.0 + 1e-9)).0;
            worst = worst.max((hi - lo).abs() / lo.abs());
        }
        assert!(worst < 1e-8, "jump {worst}");
        for x in [-0.3, -0.2, -1e-3, 1e-3, 0.1, 0.24, 0.26, 2.0] {
            let (_, d1, d2) = variance_factor(x);
            let h = 1e-5;
            let fd1 = (exact(x + h) - exact(x - h)) / (2.0 * h);
            let fd2 = (exact(x + h) - 2.0 * exact(x) + exact(x - h)) / (h * h);
            assert_relative_eq!(d1, fd1, max_relative = 1e-8);
            assert_relative_eq!(d2, fd2, max_relative = 1e-4);
        }
    }

    #[test]
    fn variance_is_nonnegative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let s = LbdSubpop {
                p: 1.0,
                beta: rng.random_range(0.0..1.0),
                nu: rng.random_range(0.0..1.0),
                hill: HillParams::from_ec50(
                    rng.random_range(0.01..0.99),
                    rng.random_range(0.01..5.0),
                    rng.random_range(0.1..6.0),
                ),
            };
            let (_, v) = lbd_moments(rng.random_range(0.0..40.0), rng.random_range(0.0..10.0), &s)
                .unwrap();
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = params();
        let obj = LbdObjective::new(Arc::new(dataset(&p, 25.0)));
        let probe = DVector::from_vec(vec![
            0.3, 0.45, 0.35, 0.7, 0.01, 1.8, 0.7, 0.6, 0.5, 0.9, 0.5, 3.0, 12.0,
        ]);
        let (g, h) = finite_difference_error(&obj, &probe);
        assert!(g < 1e-5 && h < 1e-5, "gradient {g}, hessian {h}");
        // critical process on one subpopulation exercises the series branch
        let probe = DVector::from_vec(vec![
            0.3, 0.45, 0.45, 0.7, 0.01, 1.8, 0.7, 0.6, 0.5, 0.9, 0.5, 3.0, 12.0,
        ]);
        let (g, h) = finite_difference_error(&obj, &probe);
        assert!(g < 1e-5 && h < 1e-5, "gradient {g}, hessian {h}");
    }

    #[test]
    fn large_noise_is_dominated_by_normalizer() {
        let p = params();
        let data = dataset(&p, 25.0);
        let cells = (13 * 11 * 3) as f64;
        let mut q = p.clone();
        q.c = 1e7;
        let v = lbd_nll(&data, &q).unwrap().value;
        let asymptote = cells * ((2.0 * PI).sqrt() * q.c).ln();
        assert!((v - asymptote).abs() < 1.0, "{v} vs {asymptote}");
    }

    #[test]
    fn nonpositive_variance_is_a_domain_error() {
        let mut p = params();
        p.c = 0.0;
        let data = dataset(&params(), 25.0);
        assert!(matches!(lbd_nll(&data, &p), Err(CrnasError::Domain { .. })));
    }

    #[test]
    fn value_paths_agree() {
        let p = params();
        let obj = LbdObjective::new(Arc::new(dataset(&p, 25.0)));
        let v = ModelParams::BirthDeath(p).to_vector();
        assert_relative_eq!(obj.value(&v), obj.evaluate(&v).value, max_relative = 1e-12);
    }
}
