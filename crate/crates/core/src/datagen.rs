//! Synthetic datasets: parameter ranges, grids, truth sampling and simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::biomodels::{
    lbd_moments, logistic_predict, noise_floor, parameter_layout, phenopop_predict, Dataset,
    HillParams, LbdParams, LbdSubpop, LogisticParams, LogisticSubpop, ModelKind, ModelParams,
    ParamRole, PhenoPopParams, PhenoPopSubpop,
};
pub use crate::biomodels::GridSpec;
use crate::{CrnasError, Result};

/// Default initial total count.
pub const DEFAULT_X0: f64 = 1000.0;
/// Replicates per cell for stochastic data.
pub const STOCHASTIC_REPLICATES: usize = 13;

/// Open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn within(&self, outer: &Interval) -> bool {
        self.lo >= outer.lo && self.hi <= outer.hi
    }

    /// Uniform draw strictly inside the interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.lo + (self.hi - self.lo) * rng.random::<f64>();
            if self.contains(x) {
                return x;
            }
        }
    }
}

/// Ranges used to draw true parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRanges {
    /// Growth rate per subpopulation.
    pub growth: Vec<Interval>,
    /// Logistic shift per subpopulation.
    pub shift: Vec<Interval>,
    pub death: Interval,
    /// Birth rate minus death rate.
    pub birth_excess: Interval,
    pub max_effect: Interval,
    /// EC50 band per subpopulation.
    pub ec50: Vec<Interval>,
    pub hill_coefficient: Interval,
    pub noise: Interval,
}

/// Biologically feasible ranges and optimization bounds for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTable {
    pub model: ModelKind,
    pub s: usize,
    pub truth: TruthRanges,
    /// Open bounds per optimization coordinate.
    pub bounds: Vec<Interval>,
}

const UNIT: Interval = Interval::new(0.0, 1.0);
const POSITIVE: Interval = Interval::new(0.0, f64::INFINITY);

/// EC50 bands per subpopulation.
pub fn ec50_bands(s: usize) -> Vec<Interval> {
    match s {
        1 => vec![Interval::new(0.05, 0.1)],
        2 => vec![Interval::new(0.05, 0.1), Interval::new(0.5, 2.5)],
        3 => vec![
            Interval::new(0.005, 0.0299),
            Interval::new(0.119, 0.4736),
            Interval::new(1.8854, 7.5059),
        ],
        _ => {
            let h = 3.0 / (4 * s - 2) as f64;
            (0..s)
                .map(|i| {
                    let center = -2.0 + h * (4.0 * i as f64 + 0.585);
                    Interval::new(10f64.powf(center - h), 10f64.powf(center + h))
                })
                .collect()
        }
    }
}

impl RangeTable {
    /// Standard table for `(model, S)` with initial count `x0`.
    pub fn standard(model: ModelKind, s: usize, x0: f64) -> Result<Self> {
        if s == 0 {
            return Err(CrnasError::Config("S must be at least 1".into()));
        }
        let truth = match model {
            ModelKind::PhenoPop | ModelKind::BirthDeath => TruthRanges {
                growth: vec![Interval::new(0.0, 0.1); s],
                shift: vec![],
                death: Interval::new(0.0, 0.9),
                birth_excess: Interval::new(0.0, 0.1),
                max_effect: Interval::new(0.8, 1.0),
                ec50: ec50_bands(s),
                hill_coefficient: Interval::new(1.5, 5.0),
                noise: Interval::new(5.0 * noise_floor(x0), 20.0 * noise_floor(x0)),
            },
            ModelKind::Logistic => TruthRanges {
                growth: (0..s).map(|i| Interval::new(2.0 * i as f64, 2.0 * i as f64 + 1.0)).collect(),
                shift: (0..s).map(|i| Interval::new(2.0 * i as f64, 2.0 * i as f64 + 1.0)).collect(),
                death: UNIT,
                birth_excess: UNIT,
                max_effect: UNIT,
                ec50: vec![],
                hill_coefficient: UNIT,
                noise: UNIT,
            },
        };
        let bounds = parameter_layout(model, s)
            .into_iter()
            .map(|role| match (model, role) {
                (_, ParamRole::Ecal(_) | ParamRole::HillCoefficient(_)) => POSITIVE,
                (_, ParamRole::Noise) => Interval::new(noise_floor(x0), f64::INFINITY),
                (ModelKind::Logistic, ParamRole::Growth(_) | ParamRole::Shift(_)) => {
                    Interval::new(0.0, 10.0)
                }
                _ => UNIT,
            })
            .collect();
        let table = Self {
            model,
            s,
            truth,
            bounds,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn bounds_as_pairs(&self) -> Vec<(f64, f64)> {
        self.bounds.iter().map(|b| (b.lo, b.hi)).collect()
    }

    /// Truth ranges mapped to optimization coordinates, per coordinate.
    fn truth_in_coordinates(&self) -> Vec<Interval> {
        let t = &self.truth;
        parameter_layout(self.model, self.s)
            .into_iter()
            .map(|role| match role {
                ParamRole::Proportion(_) => UNIT,
                ParamRole::Growth(i) => t.growth[i],
                ParamRole::Shift(i) => t.shift[i],
                ParamRole::Death(_) => t.death,
                ParamRole::Birth(_) => Interval::new(
                    t.death.lo + t.birth_excess.lo,
                    t.death.hi + t.birth_excess.hi,
                ),
                ParamRole::MaxEffect(_) => t.max_effect,
                ParamRole::Ecal(i) => {
                    let e = t.ec50[i];
                    let (nl, nh) = (t.hill_coefficient.lo, t.hill_coefficient.hi);
                    let c = [e.lo.powf(nl), e.lo.powf(nh), e.hi.powf(nl), e.hi.powf(nh)];
                    Interval::new(
                        c.iter().copied().fold(f64::INFINITY, f64::min),
                        c.iter().copied().fold(0.0, f64::max),
                    )
                }
                ParamRole::HillCoefficient(_) => t.hill_coefficient,
                ParamRole::Noise => t.noise,
            })
            .collect()
    }

    /// Checks nonempty intervals and truth-inside-bounds per coordinate.
    pub fn validate(&self) -> Result<()> {
        let layout = parameter_layout(self.model, self.s);
        if self.bounds.len() != layout.len() {
            return Err(CrnasError::DimensionMismatch {
                expected: layout.len(),
                got: self.bounds.len(),
            });
        }
        let t = &self.truth;
        let needs_ec50 = self.model != ModelKind::Logistic;
        if (needs_ec50 && t.ec50.len() != self.s)
            || t.growth.len() != self.s
            || (!needs_ec50 && t.shift.len() != self.s)
        {
            return Err(CrnasError::Config("range table has the wrong subpopulation count".into()));
        }
        for (j, (truth, bound)) in self.truth_in_coordinates().iter().zip(&self.bounds).enumerate() {
            if !(bound.lo < bound.hi) || !(truth.lo < truth.hi) {
                return Err(CrnasError::Config(format!(
                    "empty interval for {}",
                    layout[j].name()
                )));
            }
            if !truth.within(bound) {
                return Err(CrnasError::Config(format!(
                    "truth range ({}, {}) of {} is not inside bounds ({}, {})",
                    truth.lo,
                    truth.hi,
                    layout[j].name(),
                    bound.lo,
                    bound.hi
                )));
            }
        }
        Ok(())
    }
}

/// Fixed experiment grid; `stochastic` selects the replicate count.
pub fn default_grids(stochastic: bool) -> GridSpec {
    GridSpec {
        times: (0..13).map(|i| 3.0 * i as f64).collect(),
        doses: vec![0.0, 0.0313, 0.0625, 0.125, 0.25, 0.375, 0.5, 1.25, 2.5, 3.75, 5.0],
        replicates: if stochastic { STOCHASTIC_REPLICATES } else { 1 },
    }
}

/// Ten equally spaced times on `[0, 10]`, no doses.
pub fn logistic_grids() -> GridSpec {
    GridSpec {
        times: (0..10).map(|i| 10.0 * i as f64 / 9.0).collect(),
        doses: vec![],
        replicates: 1,
    }
}

/// `{0}` plus `4S - 1` log-spaced doses from 0.01 to 10.
pub fn dynamic_dose_grid(s: usize) -> Result<Vec<f64>> {
    if s < 2 {
        return Err(CrnasError::Config(format!("dynamic dose grid needs S >= 2, got {s}")));
    }
    let m = 4 * s - 2;
    let mut out = vec![0.0];
    out.extend((0..=m).map(|j| 10f64.powf(-2.0 + 3.0 * j as f64 / m as f64)));
    Ok(out)
}

/// Grid used for `(model, S)` experiments.
pub fn grids_for(model: ModelKind, s: usize) -> Result<GridSpec> {
    Ok(match model {
        ModelKind::Logistic => logistic_grids(),
        ModelKind::BirthDeath => default_grids(true),
        ModelKind::PhenoPop if s > 2 => GridSpec {
            doses: dynamic_dose_grid(s)?,
            ..default_grids(false)
        },
        ModelKind::PhenoPop => default_grids(false),
    })
}

fn sample_proportions<R: Rng + ?Sized>(s: usize, rng: &mut R) -> Vec<f64> {
    match s {
        1 => vec![1.0],
        2 => {
            let p = UNIT.sample(rng);
            vec![p, 1.0 - p]
        }
        _ => loop {
            let w: Vec<f64> = (0..s).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            if p.iter().all(|&x| x > 0.0 && x < 1.0) {
                break p;
            }
        },
    }
}

/// Draws a true parameter set from `table.truth`.
pub fn sample_true_params<R: Rng + ?Sized>(
    table: &RangeTable,
    x0: f64,
    rng: &mut R,
) -> Result<ModelParams> {
    table.validate()?;
    let t = &table.truth;
    let s = table.s;
    let props = sample_proportions(s, rng);
    let hill = |i: usize, rng: &mut R| {
        let b = t.max_effect.sample(rng);
        let e = t.ec50[i].sample(rng);
        let n = t.hill_coefficient.sample(rng);
        HillParams::from_ec50(b, e, n)
    };
    Ok(match table.model {
        ModelKind::PhenoPop => ModelParams::PhenoPop(PhenoPopParams {
            x0,
            subpops: (0..s)
                .map(|i| PhenoPopSubpop {
                    p: props[i],
                    alpha: t.growth[i].sample(rng),
                    hill: hill(i, rng),
                })
                .collect(),
        }),
        ModelKind::BirthDeath => {
            let subpops = (0..s)
                .map(|i| {
                    let nu = t.death.sample(rng);
                    LbdSubpop {
                        p: props[i],
                        beta: nu + t.birth_excess.sample(rng),
                        nu,
                        hill: hill(i, rng),
                    }
                })
                .collect();
            ModelParams::BirthDeath(LbdParams {
                x0,
                subpops,
                c: t.noise.sample(rng),
            })
        }
        ModelKind::Logistic => ModelParams::Logistic(LogisticParams {
            f0: x0,
            subpops: (0..s)
                .map(|i| LogisticSubpop {
                    p: props[i],
                    alpha: t.growth[i].sample(rng),
                    beta: t.shift[i].sample(rng),
                })
                .collect(),
        }),
    })
}

/// Noise-free data with one replicate.
pub fn simulate_deterministic(params: &ModelParams, grids: &GridSpec) -> Result<Dataset> {
    let grids = GridSpec {
        replicates: 1,
        ..grids.clone()
    };
    let mut obs = Vec::with_capacity(grids.times.len() * grids.dose_slots());
    for &t in &grids.times {
        match params {
            ModelParams::PhenoPop(p) => {
                for &d in &grids.doses {
                    obs.push(phenopop_predict(t, d, p)?);
                }
            }
            ModelParams::Logistic(p) => obs.push(logistic_predict(t, p)?),
            ModelParams::BirthDeath(p) => {
                for &d in &grids.doses {
                    let mut mu = 0.0;
                    for s in &p.subpops {
                        mu += p.x0 * s.p * lbd_moments(t, d, s)?.0;
                    }
                    obs.push(mu);
                }
            }
        }
    }
    Dataset::new(params.kind(), params.s(), params.x0(), grids, obs, Some(params.clone()))
}

/// Exact birth–death simulation observed at increasing `times`.
pub fn gillespie_bd<R: Rng + ?Sized>(
    initial: u64,
    birth: f64,
    death: f64,
    times: &[f64],
    rng: &mut R,
) -> Vec<u64> {
    let mut x = initial;
    let mut now = 0.0;
    let total = birth + death;
    let p_birth = if total > 0.0 { birth / total } else { 0.0 };
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while x > 0 && total > 0.0 {
            let wait: f64 = Exp1.sample(rng);
            let next = now + wait / (x as f64 * total);
            if next > target {
                // memoryless: the pending event is redrawn after `target`
                break;
            }
            now = next;
            if rng.random::<f64>() < p_birth {
                x += 1;
            } else {
                x -= 1;
            }
        }
        now = now.max(target);
        out.push(x);
    }
    out
}

/// Replicated counts: independent runs per `(t, d, r)` and subpopulation,
/// summed, plus Gaussian noise of standard deviation `c`.
pub fn simulate_lbd<R: Rng + ?Sized>(
    params: &LbdParams,
    grids: &GridSpec,
    rng: &mut R,
) -> Result<Dataset> {
    grids.validate()?;
    let noise = Normal::new(0.0, params.c.max(0.0))
        .map_err(|e| CrnasError::Config(format!("invalid noise level: {e}")))?;
    let starts: Vec<u64> = params
        .subpops
        .iter()
        .map(|s| (params.x0 * s.p).round().max(0.0) as u64)
        .collect();
    let mut obs = Vec::with_capacity(grids.times.len() * grids.doses.len() * grids.replicates);
    for &t in &grids.times {
        for &d in &grids.doses {
            let deaths: Vec<f64> = params
                .subpops
                .iter()
                .map(|s| s.nu - crate::biomodels::hill(d, &s.hill).map(f64::ln).unwrap_or(0.0))
                .collect();
            for _ in 0..grids.replicates {
                let mut total = 0.0;
                for (k, s) in params.subpops.iter().enumerate() {
                    total += gillespie_bd(starts[k], s.beta, deaths[k], &[t], rng)[0] as f64;
                }
                let z = if params.c > 0.0 { noise.sample(rng) } else { 0.0 };
                obs.push(total + z);
            }
        }
    }
    Dataset::new(
        ModelKind::BirthDeath,
        params.subpops.len(),
        params.x0,
        grids.clone(),
        obs,
        Some(ModelParams::BirthDeath(params.clone())),
    )
}

/// Independent generator for task `index` under `master` seed.
pub fn stream_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Truth plus data for dataset `index` of an experiment.
pub fn generate_dataset(model: ModelKind, s: usize, x0: f64, master: u64, index: u64) -> Result<Dataset> {
    let table = RangeTable::standard(model, s, x0)?;
    let mut rng = stream_rng(master, index);
    let truth = sample_true_params(&table, x0, &mut rng)?;
    let grids = grids_for(model, s)?;
    match &truth {
        ModelParams::BirthDeath(p) => simulate_lbd(p, &grids, &mut rng),
        other => simulate_deterministic(other, &grids),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_grid_shape() {
        let g = default_grids(false);
        assert_eq!(g.times.len(), 13);
        assert_eq!(g.doses.len(), 11);
        assert!(g.times.windows(2).all(|w| (w[1] - w[0] - 3.0).abs() < 1e-15));
        assert_eq!(default_grids(true).replicates, 13);
        let l = logistic_grids();
        assert_eq!(l.times.len(), 10);
        assert_eq!(l.times[9], 10.0);
    }

    #[test]
    fn dynamic_grid_reference_list() {
        let printed = [
            0.0, 0.01, 0.02, 0.0398, 0.0794, 0.1585, 0.3162, 0.631, 1.2589, 2.5119, 5.0119, 10.0,
        ];
        let g = dynamic_dose_grid(3).unwrap();
        assert_eq!(g.len(), printed.len());
        for (a, b) in g.iter().zip(printed) {
            assert!((a - b).abs() < 5e-5, "{a} vs {b}");
        }
        let g5 = dynamic_dose_grid(5).unwrap();
        assert_eq!(g5.len(), 20);
        assert_relative_eq!(g5[1], 0.01, max_relative = 1e-14);
        assert_relative_eq!(g5[19], 10.0, max_relative = 1e-14);
        let ratio = 10f64.powf(3.0 / 18.0);
        for w in g5[1..].windows(2) {
            assert_relative_eq!(w[1] / w[0], ratio, max_relative = 1e-12);
        }
        assert!(dynamic_dose_grid(1).is_err());
    }

    #[test]
    fn truth_samples_lie_in_ranges() {
        let mut rng = stream_rng(5, 0);
        for s in [1, 2, 3, 5] {
            let table = RangeTable::standard(ModelKind::PhenoPop, s, DEFAULT_X0).unwrap();
            for _ in 0..200 {
                let ModelParams::PhenoPop(p) = sample_true_params(&table, DEFAULT_X0, &mut rng).unwrap() else {
                    unreachable!()
                };
                let sum: f64 = p.subpops.iter().map(|q| q.p).sum();
                assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
                for (i, q) in p.subpops.iter().enumerate() {
                    assert!(q.p > 0.0 && q.p < 1.0 || s == 1);
                    assert!(table.truth.growth[i].contains(q.alpha));
                    assert!(table.truth.max_effect.contains(q.hill.b));
                    assert!(table.truth.hill_coefficient.contains(q.hill.n));
                    let e = q.hill.ec50();
                    let band = table.truth.ec50[i];
                    assert!(e > band.lo * (1.0 - 1e-12) && e < band.hi * (1.0 + 1e-12));
                }
            }
        }
        let table = RangeTable::standard(ModelKind::BirthDeath, 2, DEFAULT_X0).unwrap();
        for _ in 0..200 {
            let ModelParams::BirthDeath(p) = sample_true_params(&table, DEFAULT_X0, &mut rng).unwrap() else {
                unreachable!()
            };
            for q in &p.subpops {
                assert!(q.beta > q.nu && q.beta < q.nu + 0.1 && q.beta < 1.0);
            }
            assert!(p.c > noise_floor(DEFAULT_X0));
        }
    }

    #[test]
    fn band_tables() {
        let b3 = ec50_bands(3);
        assert_eq!(b3[2], Interval::new(1.8854, 7.5059));
        let b5 = ec50_bands(5);
        assert_eq!(b5.len(), 5);
        assert!(b5.windows(2).all(|w| w[0].hi < w[1].lo));
        let g = dynamic_dose_grid(5).unwrap();
        assert!(b5[4].hi < *g.last().unwrap() && b5[0].lo > g[1] * 0.5);
    }

    #[test]
    fn deterministic_data_and_reproducibility() {
        let a = generate_dataset(ModelKind::PhenoPop, 2, DEFAULT_X0, 9, 3).unwrap();
        let b = generate_dataset(ModelKind::PhenoPop, 2, DEFAULT_X0, 9, 3).unwrap();
        assert_eq!(a, b);
        for di in 0..11 {
            assert_relative_eq!(a.cell(0, di)[0], DEFAULT_X0, max_relative = 1e-12);
        }
        let c = generate_dataset(ModelKind::PhenoPop, 2, DEFAULT_X0, 9, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gillespie_degenerate_cases() {
        let mut rng = stream_rng(1, 1);
        assert_eq!(gillespie_bd(50, 0.0, 0.0, &[1.0, 5.0], &mut rng), vec![50, 50]);
        assert_eq!(gillespie_bd(0, 1.0, 0.5, &[1.0, 5.0], &mut rng), vec![0, 0]);
        let p = LbdParams {
            x0: 1000.0,
            c: 0.0,
            subpops: vec![LbdSubpop {
                p: 1.0,
                beta: 0.0,
                nu: 0.0,
                hill: HillParams::from_ec50(0.999_999_999, 1.0, 1.0),
            }],
        };
        let grids = GridSpec {
            replicates: 2,
            ..default_grids(true)
        };
        let data = simulate_lbd(&p, &grids, &mut rng).unwrap();
        assert!(data.observations().iter().all(|&x| x == 1000.0 || x == 999.0));
        assert!(data.cell(0, 5).iter().all(|&x| x == 1000.0));
    }

    #[test]
    fn pure_death_mean() {
        let mut rng = stream_rng(2, 0);
        let (x0, nu, t) = (40u64, 0.3, 2.0);
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| gillespie_bd(x0, 0.0, nu, &[t], &mut rng)[0] as f64)
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = x0 as f64 * (-nu * t).exp();
        assert!((mean - expected).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn json_and_csv_round_trip() {
        let data = generate_dataset(ModelKind::PhenoPop, 2, DEFAULT_X0, 1, 0).unwrap();
        let back = Dataset::from_json(&data.to_json().unwrap()).unwrap();
        assert_eq!(back.observations(), data.observations());
        assert_eq!(back.grids, data.grids);
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,d,r,x\n"));
        let csv = Dataset::read_csv(&buf[..], ModelKind::PhenoPop, 2, DEFAULT_X0).unwrap();
        assert_eq!(csv.observations(), data.observations());

        let lg = generate_dataset(ModelKind::Logistic, 2, DEFAULT_X0, 1, 0).unwrap();
        let json = lg.to_json().unwrap();
        let back = Dataset::from_json(&json).unwrap();
        assert_eq!(back.observations(), lg.observations());
        let mut buf = Vec::new();
        lg.write_csv(&mut buf).unwrap();
        let csv = Dataset::read_csv(&buf[..], ModelKind::Logistic, 2, DEFAULT_X0).unwrap();
        assert_eq!(csv.observations(), lg.observations());
    }
}
