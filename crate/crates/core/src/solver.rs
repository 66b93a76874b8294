//! Derivative-free minimization under linear inequality constraints.
//!
//! The objective is modelled by linear interpolation on `n + 1` vertices, in
//! the manner of Powell's COBYLA. The constraints `A x <= b` are linear and
//! known exactly, so they are not interpolated: every trial step solves
//! `min g.d` subject to the true constraints and `|d| <= rho`, which keeps all
//! iterates feasible.
//!
//! Two radii are kept. `rho` is the resolution of the interpolation set and
//! only decreases. The step radius `delta >= rho` doubles after steps that
//! agree well with the model and falls back toward `rho` after poor ones;
//! `rho` shrinks once `delta` has reached it and the simplex is well shaped.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Linear inequality constraints `a x <= b`, one row per constraint.
#[derive(Debug, Clone)]
pub struct LinearConstraints {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearConstraints {
    pub fn slack(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * x
    }

    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.slack(x).iter().all(|&s| s >= -tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rho_begin: f64,
    pub rho_end: f64,
    pub max_evals: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho_begin: 0.1,
            rho_end: 1e-7,
            max_evals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    /// `rho` reached `rho_end`.
    Converged,
    /// Evaluation budget used up first.
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub evals: usize,
    pub status: SolverStatus,
}

// geometry thresholds relative to rho
const ALPHA: f64 = 0.25;
const BETA: f64 = 2.1;
const GAMMA: f64 = 0.5;
const SHORT_STEP: f64 = 0.5;
const POOR_RATIO: f64 = 0.1;
const GOOD_RATIO: f64 = 0.7;
/// Cap on the step radius as a multiple of the initial `rho`.
const MAX_EXPANSION: f64 = 10.0;
const FEAS_TOL: f64 = 1e-12;

/// Minimize `f` from the feasible point `x0`.
///
/// `f` returns `None` where the objective is undefined; such points are
/// treated as infinitely bad. `project` maps an arbitrary point onto the
/// feasible set and is used only to place interpolation vertices.
///
/// Returns `None` if `f(x0)` is undefined.
pub fn minimize<F, P>(
    mut f: F,
    project: P,
    constraints: &LinearConstraints,
    x0: &DVector<f64>,
    opts: &SolverOptions,
) -> Option<SolverResult>
where
    F: FnMut(&DVector<f64>) -> Option<f64>,
    P: Fn(&mut DVector<f64>),
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &DVector<f64>, evals: &mut usize| -> f64 {
        *evals += 1;
        match f(x) {
            Some(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };

    let mut base = x0.clone();
    project(&mut base);
    let f0 = eval(&base, &mut evals);
    if !f0.is_finite() {
        return None;
    }
    if n == 0 {
        return Some(SolverResult {
            x: base,
            f: f0,
            evals,
            status: SolverStatus::Converged,
        });
    }

    let mut rho = opts.rho_begin;
    let mut fbase = f0;
    // columns are vertex offsets from `base`
    let mut sim = DMatrix::zeros(n, n);
    let mut fval = vec![0.0; n];
    build_simplex(&mut sim, &mut fval, &base, rho, &project, &mut |x| eval(x, &mut evals));

    let mut delta = rho;
    let mut check_geometry = false;
    let mut at_floor = false;
    let status = loop {
        if evals >= opts.max_evals {
            break SolverStatus::BudgetExhausted;
        }

        // move the best vertex to the base
        if let Some((jbest, &fb)) = fval
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
        {
            if fb < fbase {
                let shift = sim.column(jbest).into_owned();
                base += &shift;
                for j in 0..n {
                    if j == jbest {
                        sim.column_mut(j).copy_from(&(-&shift));
                    } else {
                        let col = sim.column(j) - &shift;
                        sim.column_mut(j).copy_from(&col);
                    }
                }
                fval[jbest] = fbase;
                fbase = fb;
            }
        }

        let simi = match sim.clone().try_inverse() {
            Some(m) => m,
            None => {
                build_simplex(&mut sim, &mut fval, &base, rho, &project, &mut |x| {
                    eval(x, &mut evals)
                });
                continue;
            }
        };

        if check_geometry {
            check_geometry = false;
            if let Some(j) = worst_vertex(&sim, &simi, rho, delta) {
                // replace vertex j by a step normal to the opposite face
                let row = simi.row(j).transpose();
                let norm = row.norm();
                let dir = row / norm;
                let g = model_gradient(&simi, &fval, fbase);
                let sign = if g.dot(&dir) > 0.0 { -1.0 } else { 1.0 };
                let mut x = &base + dir * (sign * GAMMA * delta);
                project(&mut x);
                let d = &x - &base;
                if d.norm() > 0.0 {
                    let fx = eval(&x, &mut evals);
                    sim.column_mut(j).copy_from(&d);
                    fval[j] = fx;
                    continue;
                }
            }
            if !at_floor {
                continue;
            }
            // geometry acceptable and delta at rho: this rho is exhausted
            if rho <= opts.rho_end {
                break SolverStatus::Converged;
            }
            rho *= 0.5;
            if rho <= 1.5 * opts.rho_end {
                rho = opts.rho_end;
            }
            delta = rho;
            continue;
        }

        let g = model_gradient(&simi, &fval, fbase);
        let d = trust_step(&g, constraints, &base, delta);
        let dnorm = d.norm();
        if dnorm < SHORT_STEP * delta {
            // the linearized problem is solved inside the region
            if dnorm < SHORT_STEP * rho {
                delta = rho;
                at_floor = true;
                check_geometry = true;
                continue;
            }
            delta = dnorm.max(rho);
        }
        let predicted = -g.dot(&d);
        let x = &base + &d;
        let fx = eval(&x, &mut evals);
        let actual = fbase - fx;

        if fx.is_finite() {
            if let Some(j) = vertex_to_drop(&sim, &simi, &d, actual > 0.0, delta) {
                sim.column_mut(j).copy_from(&d);
                fval[j] = fx;
            }
        }
        if !(predicted > 0.0) || actual < POOR_RATIO * predicted {
            at_floor = delta <= rho;
            delta = (0.5 * delta).max(rho);
            check_geometry = true;
        } else if actual >= GOOD_RATIO * predicted && dnorm >= 0.9 * delta {
            delta = (2.0 * delta).min(MAX_EXPANSION * opts.rho_begin);
        }
    };

    // the best vertex may not have been moved to the base yet
    let (mut xbest, mut fbest) = (base.clone(), fbase);
    for (j, &fj) in fval.iter().enumerate().take(n) {
        if fj < fbest {
            fbest = fj;
            xbest = &base + sim.column(j);
        }
    }
    Some(SolverResult {
        x: xbest,
        f: fbest,
        evals,
        status,
    })
}

fn build_simplex<P, E>(
    sim: &mut DMatrix<f64>,
    fval: &mut [f64],
    base: &DVector<f64>,
    rho: f64,
    project: &P,
    eval: &mut E,
) where
    P: Fn(&mut DVector<f64>),
    E: FnMut(&DVector<f64>) -> f64,
{
    let n = base.len();
    for j in 0..n {
        let mut chosen = None;
        for sign in [1.0, -1.0] {
            let mut x = base.clone();
            x[j] += sign * rho;
            let mut y = x.clone();
            project(&mut y);
            if (&y - &x).norm() <= FEAS_TOL {
                chosen = Some(y);
                break;
            }
        }
        let x = chosen.unwrap_or_else(|| {
            let mut y = base.clone();
            y[j] += rho;
            project(&mut y);
            y
        });
        sim.column_mut(j).copy_from(&(&x - base));
        fval[j] = eval(&x);
    }
}

/// `g` with `g . sim_j = f_j - f_base` for every vertex.
fn model_gradient(simi: &DMatrix<f64>, fval: &[f64], fbase: f64) -> DVector<f64> {
    let n = fval.len();
    let mut diff = DVector::zeros(n);
    for j in 0..n {
        // an undefined vertex is treated as a large value to steer away from it
        diff[j] = if fval[j].is_finite() {
            fval[j] - fbase
        } else {
            1e30
        };
    }
    simi.transpose() * diff
}

/// Vertex whose position spoils the simplex, if any.
fn worst_vertex(sim: &DMatrix<f64>, simi: &DMatrix<f64>, rho: f64, delta: f64) -> Option<usize> {
    let n = sim.ncols();
    let mut far = None;
    let mut far_len = BETA * delta;
    for j in 0..n {
        let len = sim.column(j).norm();
        if len > far_len {
            far_len = len;
            far = Some(j);
        }
    }
    if far.is_some() {
        return far;
    }
    let mut flat = None;
    let mut flat_dist = ALPHA * rho;
    for j in 0..n {
        // distance from vertex j to the face spanned by the others
        let dist = 1.0 / simi.row(j).norm();
        if dist < flat_dist {
            flat_dist = dist;
            flat = Some(j);
        }
    }
    flat
}

fn vertex_to_drop(
    sim: &DMatrix<f64>,
    simi: &DMatrix<f64>,
    d: &DVector<f64>,
    improved: bool,
    rho: f64,
) -> Option<usize> {
    let n = sim.ncols();
    let sigma = simi * d;
    let mut best = None;
    let mut best_sigma = 0.0;
    for j in 0..n {
        if sigma[j].abs() > best_sigma {
            best_sigma = sigma[j].abs();
            best = Some(j);
        }
    }
    // prefer dropping a far vertex whose removal keeps the volume reasonable
    let mut far = None;
    let mut far_len = 1.1 * rho;
    for j in 0..n {
        let vsig = 1.0 / simi.row(j).norm();
        if sigma[j].abs() * vsig >= 0.2 * rho || sigma[j].abs() >= vsig {
            let len = if improved {
                (d - sim.column(j)).norm()
            } else {
                sim.column(j).norm()
            };
            if len > far_len {
                far_len = len;
                far = Some(j);
            }
        }
    }
    if far.is_some() {
        return far;
    }
    if improved || best_sigma > 0.1 {
        best
    } else {
        None
    }
}

/// Approximate solution of `min g.d` subject to `a (x + d) <= b`, `|d| <= rho`.
///
/// Follows the projected steepest-descent path, adding constraints as they
/// become active and releasing those whose multiplier has the wrong sign,
/// until the trust-region boundary is reached or no descent direction remains.
pub fn trust_step(
    g: &DVector<f64>,
    constraints: &LinearConstraints,
    x: &DVector<f64>,
    rho: f64,
) -> DVector<f64> {
    let n = g.len();
    let m = constraints.a.nrows();
    let mut d = DVector::zeros(n);
    let slack0 = constraints.slack(x);
    let scale = |i: usize| constraints.a.row(i).norm().max(f64::MIN_POSITIVE);
    let mut active: Vec<usize> = (0..m)
        .filter(|&i| slack0[i] <= 1e-12 * scale(i).max(1.0))
        .collect();

    for _ in 0..(2 * (n + m) + 4) {
        let (s, lambda) = project_descent(g, &constraints.a, &active);
        // release the constraint with the most negative multiplier and retry
        if let Some((pos, &l)) = lambda
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
        {
            if l < -1e-14 * g.norm() {
                active.remove(pos);
                continue;
            }
        }
        let snorm = s.norm();
        if snorm <= 1e-14 * g.norm().max(1e-300) {
            break;
        }
        // step to the sphere |d + t s| = rho
        let ds = d.dot(&s);
        let ss = snorm * snorm;
        let rem = rho * rho - d.norm_squared();
        if rem <= 0.0 {
            break;
        }
        let t_sphere = (-ds + (ds * ds + ss * rem).sqrt()) / ss;
        let mut t = t_sphere;
        let mut hit = None;
        let slack = constraints.slack(&(x + &d));
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let rate = constraints.a.row(i).dot(&s.transpose());
            if rate > 0.0 {
                let ti = slack[i].max(0.0) / rate;
                if ti < t {
                    t = ti;
                    hit = Some(i);
                }
            }
        }
        d += &s * t;
        match hit {
            Some(i) => active.push(i),
            None => break,
        }
    }
    d
}

/// Component of `-g` orthogonal to the active constraint normals, with the
/// least-squares multipliers `lambda` in `-g = s + A_W^T lambda`.
fn project_descent(g: &DVector<f64>, a: &DMatrix<f64>, active: &[usize]) -> (DVector<f64>, Vec<f64>) {
    let neg = -g;
    if active.is_empty() {
        return (neg, Vec::new());
    }
    let n = g.len();
    let aw = DMatrix::from_fn(active.len(), n, |r, c| a[(active[r], c)]);
    // multipliers from the normal equations, pseudo-inverse for dependent rows
    let gram = &aw * aw.transpose();
    let rhs = &aw * &neg;
    let lambda = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .pseudo_inverse(1e-12)
            .map(|pinv| pinv * &rhs)
            .unwrap_or_else(|_| DVector::zeros(active.len())),
    };
    let s = &neg - aw.transpose() * &lambda;
    (s, lambda.iter().copied().collect())
}
