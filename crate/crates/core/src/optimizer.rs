//! Multistart search for designs minimizing the Bayesian criterion.
//!
//! A design with `k` points is encoded as `k` scaled positions
//! `u_i = (x_i - a) / (b - a)` followed by the first `k - 1` weights; the last
//! weight is implied. The feasible set `{0 <= u <= 1, w >= 0, sum w <= 1}` is
//! handed to the solver as linear inequalities.
//!
//! Starts are independent: [`start_plan`] fixes every start up front from the
//! seed, [`run_start`] optimizes one, and [`finish`] picks the winner by
//! `(phi, start_index)` and verifies it. [`optimize_design`] chains the three
//! sequentially; callers may run the starts in parallel instead.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::criterion::MavProblem;
use crate::error::{DesignError, Result};
use crate::model::{normalize_design, Design, DesignSpace, ModelFamily, NormalizeOptions};
use crate::sensitivity::{SensitivityReport, DEFAULT_GRID};
use crate::solver::{minimize, LinearConstraints, SolverOptions, SolverStatus};

/// Weight given to a support point inserted during refinement.
pub const INSERT_WEIGHT: f64 = 0.05;
/// Scaled positions this close to an end of the space are put on it.
const SNAP: f64 = 1e-12;
/// Upper bound on successive small-radius polishing passes.
const POLISH_ROUNDS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    pub k_init: usize,
    pub max_k: usize,
    pub n_starts: usize,
    pub max_evals_per_start: usize,
    pub rng_seed: u64,
    /// Merge distance as a fraction of the design-space width.
    pub merge_tol: f64,
    pub drop_tol: f64,
    /// Verification tolerance relative to the criterion value.
    pub eq_tol: f64,
    pub grid_size: usize,
    pub rho_begin: f64,
    pub rho_end: f64,
}

impl OptimizerOptions {
    /// Defaults for a family: `k_init = p + q`, `max_k = p + q + 3`.
    pub fn for_family(family: &ModelFamily) -> Self {
        let k = family.p() + family.q();
        Self {
            k_init: k,
            max_k: k + 3,
            n_starts: 20,
            max_evals_per_start: 2000,
            rng_seed: 0,
            merge_tol: 1e-3,
            drop_tol: 1e-4,
            eq_tol: 1e-4,
            grid_size: DEFAULT_GRID,
            rho_begin: 0.1,
            rho_end: 1e-7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DesignError::InvalidOptions(m.into()));
        if self.k_init < 1 || self.k_init > self.max_k {
            return bad("need 1 <= k_init <= max_k");
        }
        if self.n_starts < 1 {
            return bad("need at least one start");
        }
        if self.max_evals_per_start < 2 {
            return bad("evaluation budget too small");
        }
        if self.grid_size < 2 {
            return bad("verification grid needs at least 2 points");
        }
        if !(self.eq_tol > 0.0) || !(self.merge_tol >= 0.0) || !(self.drop_tol >= 0.0) {
            return bad("tolerances must be nonnegative (eq_tol positive)");
        }
        if !(self.rho_begin > self.rho_end && self.rho_end > 0.0) {
            return bad("need rho_begin > rho_end > 0");
        }
        Ok(())
    }

    fn normalize_opts(&self, space: &DesignSpace) -> NormalizeOptions {
        NormalizeOptions {
            merge_tol: self.merge_tol * space.width(),
            drop_tol: self.drop_tol,
        }
    }

    fn solver(&self, rho_begin: f64) -> SolverOptions {
        SolverOptions {
            rho_begin,
            rho_end: self.rho_end.min(0.5 * rho_begin),
            max_evals: self.max_evals_per_start,
        }
    }
}

/// Initial support list of one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPoint {
    pub index: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Result of the local search from one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub index: usize,
    /// Criterion at the start, `None` when it was singular.
    pub initial_phi: Option<f64>,
    /// Optimized support list and criterion, `None` when the start failed.
    pub best: Option<(Vec<f64>, Vec<f64>, f64)>,
    pub evals: usize,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub design: Design,
    pub phi: f64,
    pub sensitivity: SensitivityReport,
    /// `(start_index, final phi)` of every start that produced a design.
    pub trace: Vec<(usize, f64)>,
    pub converged: bool,
    pub evals: usize,
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    // 53 random bits in [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Deterministic starts: Latin-hypercube points (one stratum per start in
/// every coordinate, sorted within a start) with Dirichlet(1) weights.
///
/// The stratum permutations come from stream 0 of the seeded generator;
/// start `s` draws its jitter and weights from stream `s + 1`.
pub fn start_plan(space: &DesignSpace, k: usize, n_starts: usize, seed: u64) -> Vec<StartPoint> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..k)
        .map(|_| {
            let mut p: Vec<usize> = (0..n_starts).collect();
            for i in (1..n_starts).rev() {
                p.swap(i, below(&mut master, i + 1));
            }
            p
        })
        .collect();
    (0..n_starts)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            let mut points: Vec<f64> = perms
                .iter()
                .map(|p| {
                    let u = (p[s] as f64 + unit(&mut rng)) / n_starts as f64;
                    space.lower() + u.min(1.0) * space.width()
                })
                .collect();
            points.sort_by(f64::total_cmp);
            // 1 - U lies in (0, 1], so the logarithm is finite
            let e: Vec<f64> = (0..k).map(|_| -libm::log(1.0 - unit(&mut rng))).collect();
            let total: f64 = e.iter().sum();
            let weights = e.iter().map(|v| v / total).collect();
            StartPoint {
                index: s,
                points,
                weights,
            }
        })
        .collect()
}

struct Encoding {
    k: usize,
    space: DesignSpace,
}

impl Encoding {
    fn dim(&self) -> usize {
        2 * self.k - 1
    }

    fn encode(&self, points: &[f64], weights: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        for i in 0..self.k {
            x[i] = (points[i] - self.space.lower()) / self.space.width();
        }
        for i in 0..self.k - 1 {
            x[self.k + i] = weights[i];
        }
        x
    }

    fn decode(&self, x: &DVector<f64>, points: &mut Vec<f64>, weights: &mut Vec<f64>) {
        points.clear();
        weights.clear();
        for i in 0..self.k {
            let u = x[i].clamp(0.0, 1.0);
            points.push(if u >= 1.0 - SNAP {
                self.space.upper()
            } else if u <= SNAP {
                self.space.lower()
            } else {
                self.space.lower() + u * self.space.width()
            });
        }
        let mut rest = 1.0;
        for i in 0..self.k - 1 {
            let w = x[self.k + i].max(0.0);
            weights.push(w);
            rest -= w;
        }
        weights.push(rest.max(0.0));
    }

    fn constraints(&self) -> LinearConstraints {
        let (k, n) = (self.k, self.dim());
        let m = 2 * k + k;
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        for i in 0..k {
            a[(2 * i, i)] = -1.0;
            a[(2 * i + 1, i)] = 1.0;
            b[2 * i + 1] = 1.0;
        }
        for i in 0..k - 1 {
            a[(2 * k + i, k + i)] = -1.0;
        }
        for i in 0..k - 1 {
            a[(3 * k - 1, k + i)] = 1.0;
        }
        b[3 * k - 1] = 1.0;
        LinearConstraints { a, b }
    }

    fn project(&self, x: &mut DVector<f64>) {
        let k = self.k;
        for i in 0..k {
            x[i] = x[i].clamp(0.0, 1.0);
        }
        let mut w: Vec<f64> = (0..k - 1).map(|i| x[k + i].max(0.0)).collect();
        if w.iter().sum::<f64>() > 1.0 {
            project_simplex(&mut w);
        }
        for (i, v) in w.into_iter().enumerate() {
            x[k + i] = v;
        }
    }
}

/// Euclidean projection onto `{w >= 0, sum w = 1}`.
fn project_simplex(w: &mut [f64]) {
    let mut sorted = w.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    for v in w.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Best `(points, weights, phi)` found, evaluations used, budget exhausted.
type SearchOutcome = (Option<(Vec<f64>, Vec<f64>, f64)>, usize, bool);

fn local_search(
    problem: &MavProblem,
    points: &[f64],
    weights: &[f64],
    solver: &SolverOptions,
) -> SearchOutcome {
    let enc = Encoding {
        k: points.len(),
        space: *problem.space(),
    };
    let (mut pts, mut wts) = (Vec::new(), Vec::new());
    let f = |x: &DVector<f64>| {
        let (mut p, mut w) = (Vec::new(), Vec::new());
        enc.decode(x, &mut p, &mut w);
        problem.evaluate(&p, &w).ok().map(|r| r.phi)
    };
    let x0 = enc.encode(points, weights);
    match minimize(f, |x| enc.project(x), &enc.constraints(), &x0, solver) {
        Some(r) => {
            enc.decode(&r.x, &mut pts, &mut wts);
            (
                Some((pts, wts, r.f)),
                r.evals,
                r.status == SolverStatus::BudgetExhausted,
            )
        }
        None => (None, 1, false),
    }
}

/// Local search from one start of the plan.
pub fn run_start(problem: &MavProblem, start: &StartPoint, opts: &OptimizerOptions) -> StartOutcome {
    let initial_phi = problem.evaluate(&start.points, &start.weights).ok().map(|r| r.phi);
    let (best, evals, budget_exhausted) =
        local_search(problem, &start.points, &start.weights, &opts.solver(opts.rho_begin));
    StartOutcome {
        index: start.index,
        initial_phi,
        best,
        evals,
        budget_exhausted,
    }
}

fn clean(
    problem: &MavProblem,
    points: &[f64],
    weights: &[f64],
    opts: &OptimizerOptions,
) -> Option<(Design, f64)> {
    let norm = opts.normalize_opts(problem.space());
    let design = normalize_design(points, weights, problem.space(), &norm).ok()?;
    let phi = problem.phi(&design).ok()?;
    Some((design, phi))
}

/// Restart the local search with a small radius from a cleaned design while
/// that still lowers the criterion.
fn polish(
    problem: &MavProblem,
    mut design: Design,
    mut phi: f64,
    opts: &OptimizerOptions,
) -> (Design, f64, usize) {
    let solver = opts.solver(1e-3);
    let mut evals = 0;
    for _ in 0..POLISH_ROUNDS {
        let (res, used, _) = local_search(problem, design.points(), design.weights(), &solver);
        evals += used;
        match res.and_then(|(p, w, _)| clean(problem, &p, &w, opts)) {
            Some((d2, phi2)) if phi2 < phi => {
                let small = phi - phi2 <= 1e-14 * phi;
                design = d2;
                phi = phi2;
                if small {
                    break;
                }
            }
            _ => break,
        }
    }
    (design, phi, evals)
}

/// Pick the winning start, normalize it, verify it and refine the support
/// while verification fails and `k < max_k`.
pub fn finish(
    problem: &MavProblem,
    outcomes: &[StartOutcome],
    opts: &OptimizerOptions,
) -> Result<OptimResult> {
    let mut trace = Vec::new();
    let mut evals = 0;
    let mut winner: Option<(&StartOutcome, f64)> = None;
    for o in outcomes {
        evals += o.evals;
        if let Some((_, _, phi)) = &o.best {
            trace.push((o.index, *phi));
            let better = match winner {
                None => true,
                Some((w, wphi)) => (*phi, o.index) < (wphi, w.index),
            };
            if better {
                winner = Some((o, *phi));
            }
        }
    }
    let (win, _) = winner.ok_or(DesignError::AllStartsFailed)?;
    let (p, w, _) = win.best.as_ref().expect("winner has a design");
    let (design, phi) = clean(problem, p, w, opts).ok_or_else(|| {
        DesignError::InvalidDesign(format!("start {} produced an unusable design", win.index))
    })?;
    let (mut design, mut phi, extra) = polish(problem, design, phi, opts);
    evals += extra;

    let mut report = problem.check_optimality(&design, opts.grid_size, opts.eq_tol * phi)?;
    while !report.passed && design.len() < opts.max_k {
        let (arg, _) = report
            .grid
            .iter()
            .zip(&report.d_values)
            .fold((report.grid[0], f64::NEG_INFINITY), |acc, (&x, &d)| {
                if d > acc.1 {
                    (x, d)
                } else {
                    acc
                }
            });
        let mut pts = design.points().to_vec();
        let mut wts: Vec<f64> = design.weights().iter().map(|w| w * (1.0 - INSERT_WEIGHT)).collect();
        pts.push(arg);
        wts.push(INSERT_WEIGHT);
        let (res, used, _) = local_search(problem, &pts, &wts, &opts.solver(opts.rho_begin));
        evals += used;
        let candidate = res.and_then(|(p, w, _)| clean(problem, &p, &w, opts));
        match candidate {
            Some((d2, phi2)) if phi2 < phi => {
                let (d3, phi3, extra) = polish(problem, d2, phi2, opts);
                evals += extra;
                design = d3;
                phi = phi3;
                report = problem.check_optimality(&design, opts.grid_size, opts.eq_tol * phi)?;
            }
            _ => break,
        }
    }

    Ok(OptimResult {
        converged: report.passed,
        design,
        phi,
        sensitivity: report,
        trace,
        evals,
    })
}

/// Sequential multistart optimization.
pub fn optimize_design(problem: &MavProblem, opts: &OptimizerOptions) -> Result<OptimResult> {
    opts.validate()?;
    let plan = start_plan(problem.space(), opts.k_init, opts.n_starts, opts.rng_seed);
    let outcomes: Vec<StartOutcome> = plan.iter().map(|s| run_start(problem, s, opts)).collect();
    finish(problem, &outcomes, opts)
}

/// One row of a design comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub index: usize,
    pub phi: Result<f64>,
    /// `phi(best) / phi(this)`; `None` for failed rows.
    pub efficiency: Option<f64>,
}

/// Criterion values of several designs and their efficiency relative to the best.
pub fn evaluate_and_compare(problem: &MavProblem, designs: &[Design]) -> Vec<ComparisonRow> {
    let phis: Vec<Result<f64>> = designs.iter().map(|d| problem.phi(d)).collect();
    let best = phis
        .iter()
        .filter_map(|p| p.as_ref().ok().copied())
        .fold(f64::INFINITY, f64::min);
    phis.into_iter()
        .enumerate()
        .map(|(index, phi)| {
            let efficiency = phi.as_ref().ok().map(|&v| best / v);
            ComparisonRow {
                index,
                phi,
                efficiency,
            }
        })
        .collect()
}

/// Pairwise ratios `phi_i / phi_j` of the successful rows (NaN otherwise).
pub fn pairwise_ratios(rows: &[ComparisonRow]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|a| {
            rows.iter()
                .map(|b| match (&a.phi, &b.phi) {
                    (Ok(x), Ok(y)) => x / y,
                    _ => f64::NAN,
                })
                .collect()
        })
        .collect()
}
