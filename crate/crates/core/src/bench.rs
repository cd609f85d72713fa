//! Multi-start experiments: start sampling, orchestration, metrics and export.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biomodels::{as_conic_program, objective_for, Dataset, ModelKind, ModelParams};
use crate::datagen::{generate_dataset, stream_rng, RangeTable, DEFAULT_X0};
use crate::problem::{residuals, ConicProgram, IndependentRows};
use crate::solver::{solve, Method, SolverConfig};
use crate::{CrnasError, Result};

/// Upper end of the log-uniform draw for unbounded coordinates.
pub const UNBOUNDED_SAMPLING_CAP: f64 = 100.0;
/// Offset above the lower bound for unbounded coordinates.
pub const UNBOUNDED_SAMPLING_OFFSET: f64 = 1e-3;
const MAX_START_ATTEMPTS: usize = 1000;
/// Stream offset separating start sampling from dataset generation.
pub const START_STREAM: u64 = 1 << 32;

/// Verbatim CSV header of exported results.
pub const CSV_HEADER: &str =
    "dataset_id,solver,start_id,objective,iterations,wall_time_s,termination,fosp,sosp";

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "CRNAS_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(rename = "S")]
    pub s: usize,
    pub datasets: usize,
    pub starts: usize,
    pub seed: u64,
    pub solvers: Vec<Method>,
    pub solver: SolverConfig,
    #[serde(rename = "X0")]
    pub x0: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::PhenoPop,
            s: 1,
            datasets: 100,
            starts: 20,
            seed: 0,
            solvers: vec![Method::Crnas, Method::Foas],
            solver: SolverConfig::default(),
            x0: DEFAULT_X0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.datasets == 0 || self.starts == 0 {
            return Err(CrnasError::Config("datasets and starts must be at least 1".into()));
        }
        if self.s == 0 {
            return Err(CrnasError::Config("S must be at least 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(CrnasError::Config("no solver selected".into()));
        }
        if !(self.x0 > 0.0) {
            return Err(CrnasError::Config("X0 must be positive".into()));
        }
        self.solver.validate()?;
        RangeTable::standard(self.model, self.s, self.x0)?;
        Ok(())
    }
}

/// Interior feasible starts drawn inside the table's bounds.
///
/// Finite intervals are sampled uniformly; coordinates without an upper bound
/// are log-uniform on `(lower + 1e-3, 100]`.
pub fn sample_initial_points<R: Rng + ?Sized>(
    table: &RangeTable,
    program: &ConicProgram,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    table.validate()?;
    let rows = IndependentRows::new(program.a(), program.b())?;
    let tol = program.feasibility_tolerance();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..MAX_START_ATTEMPTS {
            let x = DVector::from_iterator(
                table.bounds.len(),
                table.bounds.iter().map(|b| {
                    if b.hi.is_finite() {
                        b.sample(rng)
                    } else {
                        let lo = (b.lo + UNBOUNDED_SAMPLING_OFFSET).ln();
                        let hi = UNBOUNDED_SAMPLING_CAP.ln();
                        (lo + (hi - lo) * (1.0 - rng.random::<f64>())).exp()
                    }
                }),
            );
            let theta = rows.project(&program.to_cone(&x));
            let (eq, min) = residuals(program, &theta);
            if min > 0.0 && eq <= tol {
                found = Some(theta);
                break;
            }
        }
        out.push(found.ok_or_else(|| {
            CrnasError::Infeasible(format!(
                "no interior start after {MAX_START_ATTEMPTS} attempts"
            ))
        })?);
    }
    Ok(out)
}

/// `NLL(estimate) / NLL(truth)` on `dataset`.
pub fn relative_likelihood(estimate: &ModelParams, truth: &ModelParams, dataset: &Dataset) -> Result<f64> {
    for p in [estimate, truth] {
        if p.kind() != dataset.model || p.s() != dataset.s {
            return Err(CrnasError::DimensionMismatch {
                expected: dataset.s,
                got: p.s(),
            });
        }
    }
    let objective = objective_for(dataset);
    let num = objective.value(&estimate.to_vector());
    let den = objective.value(&truth.to_vector());
    if !(num.is_finite() && den.is_finite()) {
        return Err(CrnasError::Domain {
            index: 0,
            value: if num.is_finite() { den } else { num },
        });
    }
    if den == 0.0 {
        return Err(CrnasError::Contract("objective vanishes at the truth".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset_id: usize,
    pub solver: Method,
    pub start_id: usize,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// Termination reason, or `error` when the solve failed.
    pub termination: String,
    pub fosp: Option<f64>,
    pub sosp: Option<f64>,
    /// Final estimate with EC50 reported as `E`.
    pub estimate: Option<ModelParams>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset_id: usize,
    pub solver: Method,
    pub best_value: Option<f64>,
    pub best_start: Option<usize>,
    pub iterations_to_best: Option<usize>,
    pub total_time_s: f64,
    pub relative_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config: ExperimentConfig,
    pub start_distribution: String,
    pub truths: Vec<Option<ModelParams>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub metadata: Metadata,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
}

fn start_distribution() -> String {
    format!(
        "finite bounds: uniform; unbounded above: log-uniform on (lower+{UNBOUNDED_SAMPLING_OFFSET}, {UNBOUNDED_SAMPLING_CAP}]; then projected onto the equality constraints"
    )
}

/// Worker count from the environment, if set.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse().ok().filter(|&n| n > 0)
}

struct Prepared {
    dataset: Dataset,
    program: ConicProgram,
    starts: Vec<DVector<f64>>,
}

fn prepare(config: &ExperimentConfig, table: &RangeTable, id: usize) -> Result<Prepared> {
    let dataset = generate_dataset(config.model, config.s, config.x0, config.seed, id as u64)?;
    let program = as_conic_program(&dataset, &table.bounds_as_pairs())?;
    let mut rng = stream_rng(config.seed, START_STREAM + id as u64);
    let starts = sample_initial_points(table, &program, config.starts, &mut rng)?;
    Ok(Prepared {
        dataset,
        program,
        starts,
    })
}

fn run_one(p: &Prepared, id: usize, start_id: usize, method: Method, cfg: &SolverConfig) -> ResultRow {
    let d = &p.dataset;
    match solve(&p.program, &p.starts[start_id], cfg, method) {
        Ok(report) => {
            let original = p.program.to_original(&report.theta);
            ResultRow {
                dataset_id: id,
                solver: method,
                start_id,
                objective: Some(report.objective),
                iterations: report.iterations,
                wall_time_s: report.wall_time_s,
                termination: report.termination.to_string(),
                fosp: Some(report.fosp()),
                sosp: Some(report.sosp()),
                estimate: ModelParams::from_vector(d.model, d.s, d.x0, &original).ok(),
                error: None,
            }
        }
        Err(e) => error_row(id, method, start_id, &e),
    }
}

fn error_row(id: usize, method: Method, start_id: usize, e: &CrnasError) -> ResultRow {
    ResultRow {
        dataset_id: id,
        solver: method,
        start_id,
        objective: None,
        iterations: 0,
        wall_time_s: 0.0,
        termination: "error".into(),
        fosp: None,
        sosp: None,
        estimate: None,
        error: Some(e.to_string()),
    }
}

/// Runs every `(dataset, start, solver)` combination.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CrnasError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ExperimentConfig) -> Result<ResultsTable> {
    let table = RangeTable::standard(config.model, config.s, config.x0)?;
    let prepared: Vec<Result<Prepared>> = (0..config.datasets)
        .into_par_iter()
        .map(|id| prepare(config, &table, id))
        .collect();
    let tasks: Vec<(usize, usize, Method)> = (0..config.datasets)
        .flat_map(|id| {
            (0..config.starts)
                .flat_map(move |s| config.solvers.iter().map(move |&m| (id, s, m)))
        })
        .collect();
    let mut rows: Vec<ResultRow> = tasks
        .par_iter()
        .map(|&(id, start, method)| match &prepared[id] {
            Ok(p) => run_one(p, id, start, method, &config.solver),
            Err(e) => error_row(id, method, start, e),
        })
        .collect();
    rows.sort_by_key(|r| (r.dataset_id, r.solver.to_string(), r.start_id));

    let truths: Vec<Option<ModelParams>> = prepared
        .iter()
        .map(|p| p.as_ref().ok().and_then(|p| p.dataset.true_params.clone()))
        .collect();
    let aggregates = aggregate(&rows, |id, est| {
        let p = prepared[id].as_ref().ok()?;
        let truth = p.dataset.true_params.as_ref()?;
        if p.dataset.model != ModelKind::BirthDeath {
            return None;
        }
        relative_likelihood(est, truth, &p.dataset).ok()
    });
    Ok(ResultsTable {
        metadata: Metadata {
            config: config.clone(),
            start_distribution: start_distribution(),
            truths,
        },
        rows,
        aggregates,
    })
}

/// Per `(dataset, solver)` best value, iterations of the best start and summed time.
pub fn aggregate<F>(rows: &[ResultRow], rl: F) -> Vec<Aggregate>
where
    F: Fn(usize, &ModelParams) -> Option<f64>,
{
    let mut groups: BTreeMap<(usize, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.dataset_id, r.solver.to_string())).or_default().push(r);
    }
    groups
        .into_values()
        .map(|group| {
            let best = group
                .iter()
                .filter(|r| r.objective.is_some_and(f64::is_finite))
                .min_by(|a, b| a.objective.unwrap().total_cmp(&b.objective.unwrap()));
            Aggregate {
                dataset_id: group[0].dataset_id,
                solver: group[0].solver,
                best_value: best.and_then(|r| r.objective),
                best_start: best.map(|r| r.start_id),
                iterations_to_best: best.map(|r| r.iterations),
                total_time_s: group.iter().map(|r| r.wall_time_s).sum(),
                relative_likelihood: best
                    .and_then(|r| r.estimate.as_ref())
                    .and_then(|est| rl(group[0].dataset_id, est)),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultsTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.dataset_id.to_string(),
                r.solver.to_string(),
                r.start_id.to_string(),
                opt(r.objective),
                r.iterations.to_string(),
                r.wall_time_s.to_string(),
                r.termination.clone(),
                opt(r.fosp),
                opt(r.sosp),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `results.csv` and `results.json` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        if self.rows.is_empty() {
            return Err(CrnasError::Contract("no results to export".into()));
        }
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join("results.csv");
        let json_path = dir.join("results.json");
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        std::fs::write(&json_path, self.to_json()?)?;
        Ok((csv_path, json_path))
    }

    /// Copy with wall times zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> Self {
        let mut t = self.clone();
        t.rows.iter_mut().for_each(|r| r.wall_time_s = 0.0);
        t.aggregates.iter_mut().for_each(|a| a.total_time_s = 0.0);
        t
    }
}

/// Worst finite-difference errors of one model's oracle over random probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub model: ModelKind,
    #[serde(rename = "S")]
    pub s: usize,
    pub points: usize,
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
}

impl DerivativeCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_gradient_error < tolerance && self.max_hessian_error < tolerance
    }
}

/// Central-difference check at `points` probes drawn from the truth ranges,
/// against data simulated from an independent truth.
pub fn check_derivatives(model: ModelKind, s: usize, points: usize, seed: u64) -> Result<DerivativeCheck> {
    let table = RangeTable::standard(model, s, DEFAULT_X0)?;
    let dataset = generate_dataset(model, s, DEFAULT_X0, seed, 0)?;
    let objective = objective_for(&dataset);
    let mut rng = stream_rng(seed, 2 * START_STREAM);
    let mut out = DerivativeCheck {
        model,
        s,
        points,
        max_gradient_error: 0.0,
        max_hessian_error: 0.0,
    };
    for _ in 0..points {
        let probe = crate::datagen::sample_true_params(&table, DEFAULT_X0, &mut rng)?.to_vector();
        let (g, h) = crate::biomodels::finite_difference_error(objective.as_ref(), &probe);
        out.max_gradient_error = out.max_gradient_error.max(g);
        out.max_hessian_error = out.max_hessian_error.max(h);
    }
    Ok(out)
}
