//! Straight-from-the-formulas reference implementations used by the tests.
//!
//! Everything here uses explicit dense inverses and full projection
//! matrices, sharing nothing with the library's solver path beyond the mean
//! gradient and the target gradient.

#![allow(dead_code)]

use mavdesign_core::{
    grad_eta, target_grad_full, AveragingScheme, CandidateSubset, Design, DesignSpace,
    MavProblem, Misspecification, ModelFamily, ParamVector, PriorSpec, TargetFunctional,
};
use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Wide Gaussian Fisher information of one observation.
pub fn fisher_wide(family: &ModelFamily, x: f64, params: &ParamVector) -> DMatrix<f64> {
    let g = grad_eta(family, x, params).unwrap();
    let n = 1 + g.len();
    let s2 = params.sigma2;
    let mut m = DMatrix::zeros(n, n);
    m[(0, 0)] = 0.5 / (s2 * s2);
    for r in 0..g.len() {
        for c in 0..g.len() {
            m[(r + 1, c + 1)] = g[r] * g[c] / s2;
        }
    }
    m
}

pub fn info_wide(family: &ModelFamily, points: &[f64], weights: &[f64], params: &ParamVector) -> DMatrix<f64> {
    let n = family.p() + family.q();
    let mut j = DMatrix::zeros(n, n);
    for (&x, &w) in points.iter().zip(weights) {
        j += fisher_wide(family, x, params) * w;
    }
    j
}

/// Selection matrix `P_S` with rows `e_0, .., e_{p-1}, e_{p-1+s}` for `s` in `S`.
pub fn projection(family: &ModelFamily, subset: &CandidateSubset) -> DMatrix<f64> {
    let (p, q) = (family.p(), family.q());
    let rows: Vec<usize> = (0..p).chain(subset.indices().iter().map(|&s| p - 1 + s)).collect();
    let mut m = DMatrix::zeros(rows.len(), p + q);
    for (r, &c) in rows.iter().enumerate() {
        m[(r, c)] = 1.0;
    }
    m
}

pub struct Local {
    pub j: DMatrix<f64>,
    pub h: Vec<DVector<f64>>,
    pub l: Vec<DMatrix<f64>>,
    pub nu: f64,
    pub tau2: f64,
}

impl Local {
    pub fn phi(&self) -> f64 {
        self.nu * self.nu + self.tau2
    }
}

/// `h_S`, `L_S`, `nu`, `tau2` at one parameter point with deviation `delta`.
pub fn local(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    points: &[f64],
    weights: &[f64],
    params: &ParamVector,
    delta: &[f64],
    target: &TargetFunctional,
) -> Local {
    let (p, q) = (family.p(), family.q());
    let n = p + q;
    let j = info_wide(family, points, weights, params);
    let c = DVector::from_vec(target_grad_full(target, family, params).unwrap());
    let mut e = DMatrix::zeros(n, q);
    for i in 0..q {
        e[(p + i, i)] = 1.0;
    }
    let d = DVector::from_column_slice(delta);
    let (mut h, mut l) = (Vec::new(), Vec::new());
    let mut nu = 0.0;
    for (subset, &g) in scheme.candidates().iter().zip(scheme.g()) {
        let ps = projection(family, subset);
        let js = &ps * &j * ps.transpose();
        let inv = js.clone().try_inverse().expect("candidate information invertible");
        let hs = ps.transpose() * &inv * &ps * &c;
        let ls = (ps.transpose() * &inv * &ps * &j - DMatrix::identity(n, n)) * &e;
        nu += g * (c.transpose() * &ls * &d)[(0, 0)];
        h.push(hs);
        l.push(ls);
    }
    let mut tau2 = 0.0;
    for (hi, gi) in h.iter().zip(scheme.g()) {
        for (hj, gj) in h.iter().zip(scheme.g()) {
            tau2 += gi * gj * (hi.transpose() * &j * hj)[(0, 0)];
        }
    }
    Local { j, h, l, nu, tau2 }
}

/// `sum_atoms weight (nu^2 + tau2)` with per-atom `(nu, tau2)`.
pub fn bayes(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    prior: &PriorSpec,
    target: &TargetFunctional,
) -> (f64, Vec<f64>, Vec<f64>) {
    let (mut phi, mut nus, mut taus) = (0.0, Vec::new(), Vec::new());
    for atom in prior.atoms() {
        let misspec = atom.misspec.as_ref().unwrap_or(prior.misspec());
        let loc = local(
            scheme,
            family,
            design.points(),
            design.weights(),
            &atom.params,
            misspec.delta(),
            target,
        );
        phi += atom.weight * loc.phi();
        nus.push(loc.nu);
        taus.push(loc.tau2);
    }
    (phi, nus, taus)
}

/// Relative difference with an absolute floor for values near zero.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unif(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    lo + (hi - lo) * u
}

pub fn space() -> DesignSpace {
    DesignSpace::new(0.0, 8.0).unwrap()
}

/// The four candidates `{}, {2}, {1}, {1, 2}` of a two-extra-parameter family.
pub fn all_subsets() -> Vec<CandidateSubset> {
    [vec![], vec![2], vec![1], vec![1, 2]]
        .into_iter()
        .map(|s| CandidateSubset::new(s, 2).unwrap())
        .collect()
}

pub struct Instance {
    pub scheme: AveragingScheme,
    pub design: Design,
    pub params: ParamVector,
    pub misspec: Misspecification,
    pub target: TargetFunctional,
}

/// Largest condition number of the wide information accepted by [`random_instance`].
pub const MAX_COND: f64 = 1e6;

pub fn condition(m: &DMatrix<f64>) -> f64 {
    let e = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues;
    e.amax() / e.amin()
}

/// Random well-conditioned instance: stratified support of 5 to 7 points,
/// a random nonempty candidate set with random weights, a random target.
/// Draws whose wide information is worse conditioned than [`MAX_COND`] are
/// redrawn.
pub fn random_instance(rng: &mut ChaCha8Rng, family: &ModelFamily) -> Instance {
    loop {
        let inst = draw_instance(rng, family);
        let j = info_wide(family, inst.design.points(), inst.design.weights(), &inst.params);
        if condition(&j) <= MAX_COND {
            return inst;
        }
    }
}

fn draw_instance(rng: &mut ChaCha8Rng, family: &ModelFamily) -> Instance {
    let sp = space();
    let params = if family.name() == "sigmoid_emax" {
        ParamVector::new(
            unif(rng, 0.5, 5.0),
            vec![unif(rng, 0.5, 3.0), unif(rng, 0.5, 3.0)],
            vec![unif(rng, -1.0, 1.0), unif(rng, 0.7, 3.0)],
        )
    } else {
        let sign = if rng.next_u32().is_multiple_of(2) { 1.0 } else { -1.0 };
        ParamVector::new(
            unif(rng, 0.5, 5.0),
            vec![sign * unif(rng, 0.5, 3.0), unif(rng, 2.5, 5.5)],
            vec![unif(rng, -1.0, 1.0), unif(rng, 0.6, 1.5)],
        )
    };
    let k = 5 + (rng.next_u32() % 3) as usize;
    let points: Vec<f64> = (0..k)
        .map(|i| (i as f64 + unif(rng, 0.1, 0.9)) * 8.0 / k as f64)
        .collect();
    let raw: Vec<f64> = (0..k).map(|_| unif(rng, 0.5, 1.5)).collect();
    let total: f64 = raw.iter().sum();
    let design = Design::new(points, raw.iter().map(|w| w / total).collect(), &sp).unwrap();

    let mask = 1 + rng.next_u32() % 15;
    let subsets: Vec<CandidateSubset> = all_subsets()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, s)| s)
        .collect();
    let raw: Vec<f64> = subsets.iter().map(|_| unif(rng, 0.2, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    let scheme = AveragingScheme::new(subsets, raw.iter().map(|g| g / total).collect()).unwrap();

    let delta = vec![unif(rng, -2.0, 2.0), unif(rng, -2.0, 2.0)];
    let misspec = Misspecification::new(delta, 150).unwrap();
    let target = match rng.next_u32() % 3 {
        0 => TargetFunctional::ed(unif(rng, 0.2, 0.8), sp).unwrap(),
        1 => {
            let a = unif(rng, 0.0, 3.0);
            TargetFunctional::auc(a, unif(rng, a + 2.0, 8.0), sp).unwrap()
        }
        _ => TargetFunctional::point(unif(rng, 0.0, 8.0), sp).unwrap(),
    };
    Instance {
        scheme,
        design,
        params,
        misspec,
        target,
    }
}

const STEP: f64 = 1e-5;

/// Random design on 5 to 8 stratified points whose information is well
/// conditioned under every prior atom.
pub fn random_design(rng: &mut ChaCha8Rng, problem: &MavProblem) -> Design {
    loop {
        let design = draw_design(rng);
        let state = problem.state(&design).unwrap();
        if (0..problem.n_atoms()).all(|a| condition(state.wide_information(a)) <= MAX_COND) {
            return design;
        }
    }
}

fn draw_design(rng: &mut ChaCha8Rng) -> Design {
    let k = 5 + rng_index(rng, 4);
    let mut points: Vec<f64> = (0..k)
        .map(|i| unif(rng, 8.0 * i as f64 / k as f64, 8.0 * (i + 1) as f64 / k as f64))
        .collect();
    points[0] = 0.0;
    let raw: Vec<f64> = (0..k).map(|_| unif(rng, 0.5, 1.5)).collect();
    let total: f64 = raw.iter().sum();
    Design::new(points, raw.iter().map(|w| w / total).collect(), &space()).unwrap()
}

fn rng_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (unif(rng, 0.0, n as f64) as usize).min(n - 1)
}

/// Value of `f` along `(1 - t) xi + t delta_x`.
pub fn along<F: Fn(&MavProblem, &[f64], &[f64]) -> f64>(
    problem: &MavProblem,
    design: &Design,
    x: f64,
    t: f64,
    f: &F,
) -> f64 {
    let mut points = design.points().to_vec();
    let mut weights: Vec<f64> = design.weights().iter().map(|w| (1.0 - t) * w).collect();
    points.push(x);
    weights.push(t);
    f(problem, &points, &weights)
}

/// One-sided Richardson extrapolation of the derivative at `t = 0`. The
/// criterion moves by about `t |d_pi| / phi` in relative terms, so the step
/// shrinks when mass at `x` changes the information a lot.
pub fn slope<F: Fn(&MavProblem, &[f64], &[f64]) -> f64>(
    problem: &MavProblem,
    design: &Design,
    x: f64,
    f: F,
) -> f64 {
    let state = problem.state(design).unwrap();
    let t = STEP / (state.d_pi(x).abs() / state.phi()).max(1.0);
    let f0 = f(problem, design.points(), design.weights());
    let f1 = along(problem, design, x, t, &f);
    let f2 = along(problem, design, x, 2.0 * t, &f);
    2.0 * (f1 - f0) / t - (f2 - f0) / (2.0 * t)
}
