//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails. Every tolerance and budget is pinned below.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crnas::bench::{
    check_derivatives, run_experiment, sample_initial_points, ExperimentConfig, ResultsTable,
    START_STREAM,
};
use crnas::biomodels::{as_conic_program, hill, lbd_moments, HillParams, LbdSubpop, ModelKind};
use crnas::datagen::{generate_dataset, gillespie_bd, stream_rng, RangeTable};
use crnas::problem::{residuals, ConicProgram, FnObjective};
use crnas::solver::{
    check_stationarity, solve, theorem_eta, Method, SolveReport, SolverConfig, Termination,
};
use crnas::subproblem::{cubic_model_value, solve_ball_cubic, solve_unconstrained_cubic};

// Subproblem oracle.
const ORACLE_INSTANCES: usize = 200;
const ORACLE_TOL: f64 = 1e-6;
const ORACLE_BUDGET: Duration = Duration::from_secs(120);
const GRID_POINTS: [usize; 3] = [4001, 301, 81];
const POLISH_SEEDS: usize = 8;
const POLISH_ITERS: usize = 20_000;

// Boundary law.
const BOUNDARY_INSTANCES: usize = 500;
const BOUNDARY_TOL: f64 = 1e-10;

// Run invariants.
const DECREASE_SLACK: f64 = 1e-12;
const FEASIBILITY_REL: f64 = 1e-8;

// Derivatives.
const DERIVATIVE_POINTS: usize = 100;
const DERIVATIVE_TOL: f64 = 1e-5;
const DERIVATIVE_BUDGET: Duration = Duration::from_secs(60);

// Case studies.
const CASE_SEED: u64 = 1;
const CASE_STARTS: usize = 10;
const NOISELESS_TOL: f64 = 1e-6;
const PHENOPOP_S1_BUDGET: Duration = Duration::from_secs(5 * 60);
const PHENOPOP_S2_LOOSE: f64 = 1.0;
const PHENOPOP_S2_TIGHT: f64 = 1e-4;
const PHENOPOP_S2_BUDGET: Duration = Duration::from_secs(15 * 60);
const LOGISTIC_BUDGET: Duration = Duration::from_secs(5 * 60);
const LBD_DATASETS: usize = 5;
const LBD_BUDGET: Duration = Duration::from_secs(20 * 60);
/// FOAS replays per case study: first datasets × first starts.
const FOAS_REPLAY: (usize, usize) = (2, 3);

// Saddle.
const SADDLE_RUNS: usize = 50;
const SADDLE_CURVATURE: f64 = -0.1;
const SADDLE_PERTURBATION: f64 = 1e-6;

// Gillespie moments.
const GILLESPIE_REPLICATES: usize = 10_000;
const GILLESPIE_SE: f64 = 3.0;

// Iteration bound.
const BOUND_ALPHA: f64 = 0.5;
const BOUND_EPSILON: f64 = 1e-3;
const BOUND_M: f64 = 4.0;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Accumulates step-level invariants over every solver run in this suite.
#[derive(Default)]
struct Invariants {
    runs: usize,
    crnas_steps: usize,
    foas_steps: usize,
    decrease_violations: usize,
    worst_decrease_margin: f64,
    interior_violations: usize,
    feasibility_violations: usize,
    smallest_coordinate: f64,
    worst_feasibility_ratio: f64,
}

impl Invariants {
    fn new() -> Self {
        Self {
            worst_decrease_margin: f64::INFINITY,
            smallest_coordinate: f64::INFINITY,
            ..Default::default()
        }
    }

    fn check_point(&mut self, program: &ConicProgram, theta: &DVector<f64>) {
        let (eq, min) = residuals(program, theta);
        self.note(program, eq, min);
    }

    fn note(&mut self, program: &ConicProgram, eq: f64, min: f64) {
        let limit = FEASIBILITY_REL * (1.0 + program.b().norm());
        if !(min > 0.0) {
            self.interior_violations += 1;
        }
        if !(eq <= limit) {
            self.feasibility_violations += 1;
        }
        self.smallest_coordinate = self.smallest_coordinate.min(min);
        self.worst_feasibility_ratio = self.worst_feasibility_ratio.max(eq / limit);
    }

    fn record(&mut self, program: &ConicProgram, start: &DVector<f64>, report: &SolveReport) {
        self.runs += 1;
        self.check_point(program, start);
        for step in &report.steps {
            match report.method {
                Method::Crnas => self.crnas_steps += 1,
                Method::Foas => self.foas_steps += 1,
            }
            let margin = step.decrease() - step.required_decrease(report.method);
            self.worst_decrease_margin = self.worst_decrease_margin.min(margin);
            if margin < -DECREASE_SLACK {
                self.decrease_violations += 1;
            }
            self.note(program, step.equality_residual, step.min_coordinate);
        }
        self.check_point(program, &report.theta);
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

fn normal_vector<R: Rng>(rng: &mut R, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
}

/// Random cubic subproblem data; `hard` removes the gradient's component on
/// the lowest eigenvector and forces negative curvature there.
fn random_model<R: Rng>(rng: &mut R, k: usize, hard: bool) -> (DVector<f64>, DMatrix<f64>, f64, f64) {
    let b = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    let mut p = (&b + b.transpose()) * (0.5 * log_uniform(rng, 0.1, 10.0));
    let mut g = normal_vector(rng, k) * log_uniform(rng, 1e-2, 10.0);
    if hard {
        let eig = SymmetricEigen::new(p.clone());
        let i = eig.eigenvalues.imin();
        let lmin = eig.eigenvalues[i];
        if lmin >= 0.0 {
            p -= DMatrix::identity(k, k) * (lmin + log_uniform(rng, 0.1, 5.0));
        }
        let v = eig.eigenvectors.column(i).into_owned();
        g -= &v * v.dot(&g);
    }
    let m = log_uniform(rng, 0.1, 10.0);
    let rho = 1.0 - rng.random_range(0.05..0.95);
    (g, p, m, rho)
}

fn project_ball(s: &mut DVector<f64>, rho: f64) {
    let n = s.norm();
    if n > rho {
        *s *= rho / n;
    }
}

/// Dense grid over the ball, then projected-gradient polish of the best cells.
fn brute_force_ball_min(g: &DVector<f64>, p: &DMatrix<f64>, m: f64, rho: f64) -> f64 {
    let k = g.len();
    let per = GRID_POINTS[k - 1];
    let h = 2.0 * rho / (per - 1) as f64;
    let mut best: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let s = DVector::from_fn(k, |i, _| -rho + h * idx[i] as f64);
        if s.norm() <= rho {
            let v = cubic_model_value(g, p, m, &s);
            if best.len() < POLISH_SEEDS || v < best[POLISH_SEEDS - 1].0 {
                best.push((v, s));
                best.sort_by(|a, b| a.0.total_cmp(&b.0));
                best.truncate(POLISH_SEEDS);
            }
        }
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < per {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == k {
                return best
                    .into_iter()
                    .map(|(_, s)| polish(g, p, m, rho, s))
                    .fold(f64::INFINITY, f64::min);
            }
        }
    }
}

fn polish(g: &DVector<f64>, p: &DMatrix<f64>, m: f64, rho: f64, mut s: DVector<f64>) -> f64 {
    let f = |s: &DVector<f64>| cubic_model_value(g, p, m, s);
    let mut val = f(&s);
    let mut t = 1.0;
    for _ in 0..POLISH_ITERS {
        let grad = g + p * &s + &s * (0.5 * m * s.norm());
        let mut accepted = false;
        while t > 1e-20 {
            let mut trial = &s - &grad * t;
            project_ball(&mut trial, rho);
            let tv = f(&trial);
            let moved = (&trial - &s).norm_squared();
            if tv <= val - 1e-4 * moved / t {
                let done = moved < 1e-32;
                s = trial;
                val = tv;
                t *= 2.0;
                accepted = !done;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    val
}

fn criterion_oracle() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut infeasible = 0;
    for i in 0..ORACLE_INSTANCES {
        let k = 1 + i % 3;
        let (g, p, m, rho) = random_model(&mut rng, k, i % 4 == 3);
        let ours = solve_ball_cubic(&g, &p, m, rho);
        if ours.step.norm() > rho * (1.0 + 1e-12) {
            infeasible += 1;
        }
        let oracle = brute_force_ball_min(&g, &p, m, rho);
        worst = worst.max((cubic_model_value(&g, &p, m, &ours.step) - oracle).abs());
    }
    let elapsed = t0.elapsed();
    Verdict {
        id: 1,
        name: "subproblem matches grid+polish oracle",
        pass: worst <= ORACLE_TOL && infeasible == 0 && elapsed < ORACLE_BUDGET,
        detail: format!(
            "{ORACLE_INSTANCES} models, worst |gap| {worst:.2e} (tol {ORACLE_TOL:e}), {infeasible} outside ball, {:.1}s (budget {}s)",
            elapsed.as_secs_f64(),
            ORACLE_BUDGET.as_secs()
        ),
    }
}

fn criterion_boundary() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for i in 0..BOUNDARY_INSTANCES {
        let k = 1 + i % 3;
        let hard = k > 1 && i % 5 == 4;
        let (mut g, mut p, m, rho) = random_model(&mut rng, k, hard);
        while solve_unconstrained_cubic(&g, &p, m).step.norm() <= rho {
            if hard {
                p *= 2.0;
            } else {
                g *= 4.0;
            }
        }
        let step = solve_ball_cubic(&g, &p, m, rho).step;
        worst = worst.max((step.norm() - rho).abs());
    }
    Verdict {
        id: 2,
        name: "boundary steps have norm equal to the radius",
        pass: worst <= BOUNDARY_TOL,
        detail: format!("{BOUNDARY_INSTANCES} instances, worst |‖s‖-ρ| {worst:.2e} (tol {BOUNDARY_TOL:e})"),
    }
}

fn criterion_derivatives() -> Verdict {
    let t0 = Instant::now();
    let mut worst_g: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    let mut errors = Vec::new();
    for model in [ModelKind::PhenoPop, ModelKind::BirthDeath, ModelKind::Logistic] {
        for s in [1, 2] {
            match check_derivatives(model, s, DERIVATIVE_POINTS, 7) {
                Ok(c) => {
                    worst_g = worst_g.max(c.max_gradient_error);
                    worst_h = worst_h.max(c.max_hessian_error);
                }
                Err(e) => errors.push(format!("{model} S={s}: {e}")),
            }
        }
    }
    let elapsed = t0.elapsed();
    Verdict {
        id: 5,
        name: "model derivatives match central differences",
        pass: errors.is_empty()
            && worst_g < DERIVATIVE_TOL
            && worst_h < DERIVATIVE_TOL
            && elapsed < DERIVATIVE_BUDGET,
        detail: format!(
            "3 models x S in {{1,2}} x {DERIVATIVE_POINTS} points, gradient {worst_g:.2e}, hessian {worst_h:.2e} (tol {DERIVATIVE_TOL:e}), {:.1}s (budget {}s){}",
            elapsed.as_secs_f64(),
            DERIVATIVE_BUDGET.as_secs(),
            if errors.is_empty() { String::new() } else { format!(", errors {errors:?}") }
        ),
    }
}

/// Runs the harness and, separately, replays each run to collect step records.
fn case_study(model: ModelKind, s: usize, datasets: usize, inv: &mut Invariants) -> (ResultsTable, Duration) {
    let config = ExperimentConfig {
        model,
        s,
        datasets,
        starts: CASE_STARTS,
        seed: CASE_SEED,
        solvers: vec![Method::Crnas],
        ..Default::default()
    };
    let t0 = Instant::now();
    let table = run_experiment(&config).expect("experiment runs");
    let elapsed = t0.elapsed();

    let ranges = RangeTable::standard(model, s, config.x0).unwrap();
    for id in 0..datasets {
        let data = generate_dataset(model, s, config.x0, CASE_SEED, id as u64).unwrap();
        let program = as_conic_program(&data, &ranges.bounds_as_pairs()).unwrap();
        let mut rng = stream_rng(CASE_SEED, START_STREAM + id as u64);
        let starts = sample_initial_points(&ranges, &program, CASE_STARTS, &mut rng).unwrap();
        for (j, start) in starts.iter().enumerate() {
            let mut methods = vec![Method::Crnas];
            if id < FOAS_REPLAY.0 && j < FOAS_REPLAY.1 {
                methods.push(Method::Foas);
            }
            for method in methods {
                if let Ok(report) = solve(&program, start, &config.solver, method) {
                    inv.record(&program, start, &report);
                }
            }
        }
    }
    (table, elapsed)
}

fn best_values(table: &ResultsTable) -> Vec<f64> {
    table
        .aggregates
        .iter()
        .map(|a| a.best_value.unwrap_or(f64::INFINITY))
        .collect()
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" ")
}

fn criterion_noiseless(
    id: usize,
    name: &'static str,
    model: ModelKind,
    s: usize,
    budget: Duration,
    inv: &mut Invariants,
) -> Verdict {
    let (table, elapsed) = case_study(model, s, 10, inv);
    let best = best_values(&table);
    let hits = best.iter().filter(|&&v| v < NOISELESS_TOL).count();
    Verdict {
        id,
        name,
        pass: best.len() == 10 && hits >= 9 && elapsed < budget,
        detail: format!(
            "best < {NOISELESS_TOL:e} in {hits}/10 (need 9) [{}], {:.1}s (budget {}s)",
            fmt_values(&best),
            elapsed.as_secs_f64(),
            budget.as_secs()
        ),
    }
}

fn criterion_phenopop_two(inv: &mut Invariants) -> Verdict {
    let (table, elapsed) = case_study(ModelKind::PhenoPop, 2, 10, inv);
    let best = best_values(&table);
    let loose = best.iter().filter(|&&v| v < PHENOPOP_S2_LOOSE).count();
    let tight = best.iter().filter(|&&v| v < PHENOPOP_S2_TIGHT).count();
    Verdict {
        id: 7,
        name: "PhenoPop S=2 with unbounded Hill parameters",
        pass: best.len() == 10 && loose == 10 && tight >= 8 && elapsed < PHENOPOP_S2_BUDGET,
        detail: format!(
            "best < {PHENOPOP_S2_LOOSE} in {loose}/10 (need 10), < {PHENOPOP_S2_TIGHT:e} in {tight}/10 (need 8) [{}], {:.1}s (budget {}s)",
            fmt_values(&best),
            elapsed.as_secs_f64(),
            PHENOPOP_S2_BUDGET.as_secs()
        ),
    }
}

fn criterion_lbd(inv: &mut Invariants) -> Verdict {
    let (table, elapsed) = case_study(ModelKind::BirthDeath, 2, LBD_DATASETS, inv);
    let rl: Vec<f64> = table
        .aggregates
        .iter()
        .map(|a| a.relative_likelihood.unwrap_or(f64::INFINITY))
        .collect();
    let hits = rl.iter().filter(|&&r| r < 1.0).count();
    Verdict {
        id: 9,
        name: "birth-death MLE beats the truth's likelihood",
        pass: rl.len() == LBD_DATASETS && hits >= 4 && elapsed < LBD_BUDGET,
        detail: format!(
            "relative likelihood < 1 in {hits}/{LBD_DATASETS} (need 4) [{}], {:.1}s (budget {}s)",
            rl.iter().map(|r| format!("{r:.5}")).collect::<Vec<_>>().join(" "),
            elapsed.as_secs_f64(),
            LBD_BUDGET.as_secs()
        ),
    }
}

/// `½u² - ½v²` on the simplex in ℝ³ with `u = x₀ - x₁`, `v = x₀ + x₁ - 2x₂`:
/// the barycenter is a saddle, convex along `u` and concave along `v`.
fn saddle_program() -> ConicProgram {
    let a = DVector::from_vec(vec![1.0, -1.0, 0.0]);
    let c = DVector::from_vec(vec![1.0, 1.0, -2.0]);
    let hess = &a * a.transpose() - &c * c.transpose();
    let (a1, c1, h1, h2) = (a.clone(), c.clone(), hess.clone(), hess);
    let objective = FnObjective::new(
        3,
        move |x: &DVector<f64>| 0.5 * a1.dot(x).powi(2) - 0.5 * c1.dot(x).powi(2),
        move |x: &DVector<f64>| &h1 * x,
        move |_: &DVector<f64>| h2.clone(),
    );
    ConicProgram::new(
        Arc::new(objective),
        DMatrix::from_element(1, 3, 1.0),
        DVector::from_element(1, 1.0),
    )
    .unwrap()
}

fn criterion_saddle(inv: &mut Invariants) -> Verdict {
    let program = saddle_program();
    let basis = program.null_basis().unwrap();
    let saddle = DVector::from_element(3, 1.0 / 3.0);
    let at_saddle = check_stationarity(&program, &saddle, &basis).unwrap();
    let config = SolverConfig::default();
    let floor = -config.epsilon.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::INFINITY;
    let mut escaped = 0;
    let mut failures = 0;
    for run in 0..SADDLE_RUNS {
        let start = if run == 0 {
            saddle.clone()
        } else {
            &saddle + &basis.t * normal_vector(&mut rng, basis.t.ncols()) * SADDLE_PERTURBATION
        };
        match solve(&program, &start, &config, Method::Crnas) {
            Ok(report) => {
                inv.record(&program, &start, &report);
                worst = worst.min(report.sosp());
                if report.sosp() >= floor {
                    escaped += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    Verdict {
        id: 10,
        name: "saddle is escaped",
        pass: at_saddle.sosp <= SADDLE_CURVATURE && escaped == SADDLE_RUNS && failures == 0,
        detail: format!(
            "saddle curvature {:.3} (need <= {SADDLE_CURVATURE}), {escaped}/{SADDLE_RUNS} runs end with curvature >= {floor:.1e}, worst {worst:.2e}",
            at_saddle.sosp
        ),
    }
}

fn criterion_gillespie() -> Verdict {
    let subpop = LbdSubpop {
        p: 1.0,
        beta: 0.6,
        nu: 0.5,
        hill: HillParams::from_ec50(0.85, 0.5, 2.0),
    };
    let initial = 50u64;
    let cells = [(3.0, 0.0), (6.0, 0.5), (9.0, 2.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut lines = Vec::new();
    let mut pass = true;
    for &(t, d) in &cells {
        let death = subpop.nu - hill(d, &subpop.hill).unwrap().ln();
        let samples: Vec<f64> = (0..GILLESPIE_REPLICATES)
            .map(|_| gillespie_bd(initial, subpop.beta, death, &[t], &mut rng)[0] as f64)
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let (mu, sigma2) = lbd_moments(t, d, &subpop).unwrap();
        let (mu, sigma2) = (mu * initial as f64, sigma2 * initial as f64);
        let z_mean = (mean - mu) / (var / n).sqrt();
        let z_var = (var - sigma2) / ((m4 - var * var) / n).sqrt();
        pass &= z_mean.abs() <= GILLESPIE_SE && z_var.abs() <= GILLESPIE_SE;
        lines.push(format!("(t={t},d={d}) z_mean {z_mean:+.2} z_var {z_var:+.2}"));
    }
    Verdict {
        id: 11,
        name: "Gillespie moments match the analytic moments",
        pass,
        detail: format!(
            "{GILLESPIE_REPLICATES} replicates, |z| <= {GILLESPIE_SE}: {}",
            lines.join(", ")
        ),
    }
}

/// Convex quadratic with a known interior minimizer on `{x > 0, Ax = b}`.
fn convex_instance<R: Rng>(rng: &mut R, a: DMatrix<f64>, b: DVector<f64>) -> (ConicProgram, f64, DVector<f64>) {
    let n = a.ncols();
    let basis: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let q: DMatrix<f64> = &basis * basis.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1;
    // Interior feasible target: the start plus a small null-space move.
    let start = crnas::problem::feasible_interior_point(
        &ConicProgram::new(
            Arc::new(FnObjective::new(
                n,
                |_: &DVector<f64>| 0.0,
                move |_: &DVector<f64>| DVector::zeros(n),
                move |_: &DVector<f64>| DMatrix::zeros(n, n),
            )),
            a.clone(),
            b.clone(),
        )
        .unwrap(),
        None,
        rng,
    )
    .unwrap();
    let null = crnas::problem::null_space_basis(&a).unwrap().t;
    let mut target = start.clone();
    let mut scale = 0.5 * start.min();
    loop {
        let candidate = &start + &null * normal_vector(rng, null.ncols()) * scale;
        if candidate.min() > 0.0 {
            target = candidate;
            break;
        }
        scale *= 0.5;
        if scale < 1e-6 {
            break;
        }
    }
    let lambda = normal_vector(rng, a.nrows());
    let c: DVector<f64> = a.transpose() * lambda - &q * &target;
    let lstar = 0.5 * target.dot(&(&q * &target)) + c.dot(&target);
    let (q1, q2, q3, c1, c2) = (q.clone(), q.clone(), q, c.clone(), c);
    let objective = FnObjective::new(
        n,
        move |x: &DVector<f64>| 0.5 * x.dot(&(&q1 * x)) + c1.dot(x),
        move |x: &DVector<f64>| &q2 * x + &c2,
        move |_: &DVector<f64>| q3.clone(),
    );
    (ConicProgram::new(Arc::new(objective), a, b).unwrap(), lstar, start)
}

fn criterion_iteration_bound(inv: &mut Invariants) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let eta = theorem_eta(BOUND_EPSILON, BOUND_ALPHA, BOUND_M);
    let config = SolverConfig {
        alpha: BOUND_ALPHA,
        m0: BOUND_M,
        eta,
        epsilon: BOUND_EPSILON,
        adaptive: false,
        practical_stops: false,
        max_iter: 10_000_000,
        ..Default::default()
    };
    let simplex = |n: usize| (DMatrix::from_element(1, n, 1.0), DVector::from_element(1, 1.0));
    let two_blocks = (
        DMatrix::from_row_slice(2, 6, &[1., 1., 1., 0., 0., 0., 0., 0., 0., 1., 1., 1.]),
        DVector::from_vec(vec![1.0, 2.0]),
    );
    let shapes = vec![simplex(2), simplex(3), simplex(4), simplex(5), two_blocks];
    let mut pass = true;
    let mut lines = Vec::new();
    for (a, b) in shapes {
        let (program, lstar, start) = convex_instance(&mut rng, a, b);
        let report = solve(&program, &start, &config, Method::Crnas).unwrap();
        inv.record(&program, &start, &report);
        let l0 = report.objectives[0];
        let bound = 12.0 * (l0 - lstar) / eta.powi(3) + 1.0;
        let ok = report.termination == Termination::StepBelowEta
            && (report.iterations as f64) <= bound
            && report.objective >= lstar - 1e-9;
        pass &= ok;
        lines.push(format!(
            "n={} K={} bound {:.2e}{}",
            program.dim(),
            report.iterations,
            bound,
            if ok { "" } else { " (violated)" }
        ));
    }
    Verdict {
        id: 12,
        name: "iteration count within the worst-case bound",
        pass,
        detail: format!("eta {eta:.3e}, M {BOUND_M} fixed: {}", lines.join(", ")),
    }
}

fn criterion_decrease(inv: &Invariants) -> Verdict {
    Verdict {
        id: 3,
        name: "accepted steps satisfy sufficient decrease",
        pass: inv.decrease_violations == 0 && inv.crnas_steps > 0 && inv.foas_steps > 0,
        detail: format!(
            "{} runs, {} CRNAS + {} FOAS steps, {} violations, worst margin {:.2e} (slack {DECREASE_SLACK:e})",
            inv.runs, inv.crnas_steps, inv.foas_steps, inv.decrease_violations, inv.worst_decrease_margin
        ),
    }
}

fn criterion_interiority(inv: &Invariants) -> Verdict {
    Verdict {
        id: 4,
        name: "iterates stay interior and feasible",
        pass: inv.interior_violations == 0 && inv.feasibility_violations == 0 && inv.runs > 0,
        detail: format!(
            "{} runs, smallest coordinate {:.2e}, worst residual / (1e-8(1+‖b‖)) {:.2e}, {} interior + {} feasibility violations",
            inv.runs,
            inv.smallest_coordinate,
            inv.worst_feasibility_ratio,
            inv.interior_violations,
            inv.feasibility_violations
        ),
    }
}

fn report(v: &Verdict) {
    println!(
        "criterion {:>2} {} {}: {}",
        v.id,
        if v.pass { "PASS" } else { "FAIL" },
        v.name,
        v.detail
    );
}

fn main() -> ExitCode {
    let mut inv = Invariants::new();
    let mut verdicts = Vec::new();
    let mut run = |v: Verdict| {
        report(&v);
        verdicts.push(v);
    };
    run(criterion_oracle());
    run(criterion_boundary());
    run(criterion_derivatives());
    run(criterion_noiseless(6, "PhenoPop S=1 noiseless fit", ModelKind::PhenoPop, 1, PHENOPOP_S1_BUDGET, &mut inv));
    run(criterion_phenopop_two(&mut inv));
    run(criterion_noiseless(8, "logistic S=2 noiseless fit", ModelKind::Logistic, 2, LOGISTIC_BUDGET, &mut inv));
    run(criterion_lbd(&mut inv));
    run(criterion_saddle(&mut inv));
    run(criterion_gillespie());
    run(criterion_iteration_bound(&mut inv));
    run(criterion_decrease(&inv));
    run(criterion_interiority(&inv));

    verdicts.sort_by_key(|v| v.id);
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        for v in verdicts.iter().filter(|v| !v.pass) {
            println!("failed: criterion {} {}", v.id, v.name);
        }
        ExitCode::FAILURE
    }
}
