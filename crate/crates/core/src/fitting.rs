//! Maximum-likelihood fitting of candidate models and the averaging estimators.
//!
//! The Gaussian likelihood is profiled: the mean parameters minimize the
//! residual sum of squares and `sigma2_hat = RSS / n`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{DesignError, Result};
use crate::model::{Candidate, ModelFamily, ParamVector};
use crate::targets::{eval_target, TargetFunctional};

/// Lower bound on the profiled variance.
pub const SIGMA2_FLOOR: f64 = 1e-8;
/// Multiplicative perturbations of the nominal mean parameters used as starts.
pub const START_FACTORS: [[f64; 2]; 5] = [[1.0, 1.0], [1.2, 1.2], [0.8, 0.8], [1.2, 0.8], [0.8, 1.2]];

const MAX_ITER: usize = 1000;
/// Parameters this many times larger than the start count as diverged.
const DIVERGED: f64 = 1e8;
const MAX_LAMBDA: f64 = 1e16;

/// Responses `y[i]` observed at doses `x[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(DesignError::EmptyDataset);
        }
        if x.len() != y.len() {
            return Err(DesignError::Dimension {
                what: "responses",
                got: y.len(),
                expected: x.len(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Free coordinates of the candidate, `(sigma2, vartheta, gamma_S)`.
    pub free: Vec<f64>,
    /// Full parameter vector with the non-free `gamma` at their fixed values.
    pub params: ParamVector,
    pub rss: f64,
    pub loglik: f64,
    /// `2 loglik - 2 (p + |S|)`; larger is better.
    pub aic: f64,
    pub converged: bool,
}

/// Maps the candidate's free mean coordinates `(vartheta, gamma_S)` to
/// positions in the mean-gradient vector `(vartheta, gamma)`.
fn mean_slots(candidate: &Candidate) -> Vec<usize> {
    candidate.free_indices()[1..].iter().map(|&i| i - 1).collect()
}

fn embed_mean(candidate: &Candidate, beta: &[f64]) -> ParamVector {
    let mut free = Vec::with_capacity(beta.len() + 1);
    free.push(1.0);
    free.extend_from_slice(beta);
    candidate.embed(&free).expect("dimension matches the candidate")
}

struct LeastSquares<'a> {
    family: &'a ModelFamily,
    candidate: &'a Candidate,
    data: &'a Dataset,
    slots: Vec<usize>,
}

impl LeastSquares<'_> {
    /// Residuals `y - eta`, or `None` when the parameters are inadmissible.
    fn residuals(&self, beta: &[f64]) -> Option<DVector<f64>> {
        let params = embed_mean(self.candidate, beta);
        for &x in &self.data.x {
            self.family.check_at(x, &params).ok()?;
        }
        let r = DVector::from_iterator(
            self.data.len(),
            self.data
                .x
                .iter()
                .zip(&self.data.y)
                .map(|(&x, &y)| y - self.family.eta(x, &params)),
        );
        if r.iter().all(|v| v.is_finite()) {
            Some(r)
        } else {
            None
        }
    }

    /// Jacobian of `eta` with respect to the free mean coordinates.
    fn jacobian(&self, beta: &[f64]) -> DMatrix<f64> {
        let params = embed_mean(self.candidate, beta);
        let mut grad = vec![0.0; self.family.n_mean()];
        let mut j = DMatrix::zeros(self.data.len(), self.slots.len());
        for (row, &x) in self.data.x.iter().enumerate() {
            self.family.eta_grad_into(x, &params, &mut grad);
            for (col, &s) in self.slots.iter().enumerate() {
                j[(row, col)] = grad[s];
            }
        }
        j
    }

    /// Levenberg-Marquardt from `beta`; returns `(beta, rss, converged)`.
    fn solve(&self, beta0: &[f64]) -> Option<(Vec<f64>, f64, bool)> {
        let mut beta = beta0.to_vec();
        let mut r = self.residuals(&beta)?;
        let mut rss = r.norm_squared();
        let mut lambda = 1e-3;
        let m = beta.len();
        let limit = DIVERGED * (1.0 + beta0.iter().fold(0.0f64, |a, b| a.max(b.abs())));
        for _ in 0..MAX_ITER {
            let jac = self.jacobian(&beta);
            let a = jac.transpose() * &jac;
            let g = jac.transpose() * &r;
            if g.amax() <= 1e-12 * (1.0 + rss) {
                return Some((beta, rss, true));
            }
            let diag_floor = a.diagonal().amax().max(1.0) * 1e-12;
            loop {
                let mut damped = a.clone();
                for i in 0..m {
                    damped[(i, i)] += lambda * a[(i, i)].max(diag_floor);
                }
                let step = match damped.cholesky() {
                    Some(ch) => ch.solve(&g),
                    None => {
                        lambda *= 4.0;
                        if lambda > MAX_LAMBDA {
                            return Some((beta, rss, false));
                        }
                        continue;
                    }
                };
                let scale = beta.iter().map(|v| v.abs()).fold(0.0, f64::max) + 1e-8;
                if step.amax() <= 1e-12 * scale {
                    return Some((beta, rss, true));
                }
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
                match self.residuals(&trial) {
                    Some(rt) if rt.norm_squared() < rss => {
                        let new_rss = rt.norm_squared();
                        let small = rss - new_rss <= 1e-14 * rss.max(f64::MIN_POSITIVE);
                        beta = trial;
                        r = rt;
                        rss = new_rss;
                        lambda = (lambda / 3.0).max(1e-12);
                        if small {
                            return Some((beta, rss, true));
                        }
                        if beta.iter().any(|b| b.abs() > limit) {
                            // running off to infinity: the supremum is not attained
                            return Some((beta, rss, false));
                        }
                        break;
                    }
                    _ => {
                        lambda *= 4.0;
                        if lambda > MAX_LAMBDA {
                            // no descent at machine precision: a stationary point
                            let conv = g.amax() <= 1e-6 * (1.0 + rss);
                            return Some((beta, rss, conv));
                        }
                    }
                }
            }
        }
        Some((beta, rss, false))
    }
}

/// Profiled Gaussian MLE of one candidate.
///
/// Starts are the nominal mean parameters of the candidate scaled by each row
/// of [`START_FACTORS`] (first factor on odd positions, second on even ones),
/// followed by `warm` starts given as free mean coordinates. The start
/// reaching the smallest RSS wins, ties to the earliest.
pub fn fit_mle(
    family: &ModelFamily,
    candidate: &Candidate,
    data: &Dataset,
    nominal: &ParamVector,
    warm: &[Vec<f64>],
) -> Result<FitResult> {
    if data.is_empty() {
        return Err(DesignError::EmptyDataset);
    }
    let problem = LeastSquares {
        family,
        candidate,
        data,
        slots: mean_slots(candidate),
    };
    let base = candidate.restrict(nominal);
    let base_mean = &base[1..];
    let mut starts: Vec<Vec<f64>> = START_FACTORS
        .iter()
        .map(|f| {
            base_mean
                .iter()
                .enumerate()
                .map(|(i, v)| v * f[i % 2])
                .collect()
        })
        .collect();
    starts.extend(warm.iter().cloned());

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for s in &starts {
        if s.len() != base_mean.len() {
            return Err(DesignError::Dimension {
                what: "warm start",
                got: s.len(),
                expected: base_mean.len(),
            });
        }
        if let Some(fit) = problem.solve(s) {
            if best.as_ref().is_none_or(|b| fit.1 < b.1) {
                best = Some(fit);
            }
        }
    }
    let (beta, rss, converged) = best.ok_or_else(|| {
        DesignError::Inadmissible("no admissible fitting start".into())
    })?;
    let n = data.len() as f64;
    let sigma2 = (rss / n).max(SIGMA2_FLOOR);
    let loglik = -0.5 * n * (libm::log(2.0 * core::f64::consts::PI * sigma2) + 1.0);
    let d = candidate.dim();
    let mut free = vec![sigma2];
    free.extend_from_slice(&beta);
    let params = candidate.embed(&free)?;
    Ok(FitResult {
        free,
        params,
        rss,
        loglik,
        aic: 2.0 * loglik - 2.0 * d as f64,
        converged,
    })
}

/// Fit every candidate, smaller subsets first, warm-starting each from the
/// fits of the candidates nested in it. This makes the log-likelihood
/// monotone along nesting.
pub fn fit_candidates(
    family: &ModelFamily,
    candidates: &[Candidate],
    data: &Dataset,
    nominal: &ParamVector,
) -> Vec<Result<FitResult>> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| (candidates[i].subset().len(), i));
    let mut fits: Vec<Option<Result<FitResult>>> = (0..candidates.len()).map(|_| None).collect();
    for &i in &order {
        let cand = &candidates[i];
        let slots = mean_slots(cand);
        let mut warm = Vec::new();
        for &j in &order {
            let sub = &candidates[j];
            let nested = sub.subset().len() < cand.subset().len()
                && sub.subset().indices().iter().all(|&s| cand.subset().contains(s));
            if let (true, Some(Ok(fit))) = (nested, &fits[j]) {
                // the sub-fit is a point of this candidate with gamma at its fixed values
                let mean = fit.params.mean_params();
                warm.push(slots.iter().map(|&s| mean[s]).collect());
            }
        }
        fits[i] = Some(fit_mle(family, cand, data, nominal, &warm));
    }
    fits.into_iter().map(|f| f.expect("every candidate fitted")).collect()
}

/// `w_j = exp(aic_j / 2) / sum_i exp(aic_i / 2)`, computed with the maximum
/// shifted out.
pub fn smooth_aic_weights(aic: &[f64]) -> Vec<f64> {
    let max = aic.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = aic.iter().map(|a| libm::exp(0.5 * (a - max))).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Index of the largest score, ties to the smallest index.
pub fn select_aic(aic: &[f64]) -> usize {
    let mut best = 0;
    for (i, &a) in aic.iter().enumerate() {
        if a > aic[best] {
            best = i;
        }
    }
    best
}

/// One-hot weights at [`select_aic`].
pub fn selection_weights(aic: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; aic.len()];
    if !aic.is_empty() {
        w[select_aic(aic)] = 1.0;
    }
    w
}

/// `sum_j w_j mu(params_j)`. Candidates with zero weight are skipped.
pub fn estimate_target(
    fits: &[FitResult],
    weights: &[f64],
    family: &ModelFamily,
    target: &TargetFunctional,
) -> Result<f64> {
    if fits.len() != weights.len() {
        return Err(DesignError::Dimension {
            what: "averaging weights",
            got: weights.len(),
            expected: fits.len(),
        });
    }
    let mut total = 0.0;
    for (fit, &w) in fits.iter().zip(weights) {
        if w != 0.0 {
            total += w * eval_target(target, family, &fit.params)?;
        }
    }
    Ok(total)
}
