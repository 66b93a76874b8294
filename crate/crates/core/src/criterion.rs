//! Asymptotic mean squared error of the model averaging estimator.
//!
//! For a design `xi` and a parameter point, the wide information `J`, the
//! candidate informations `J_S = P_S J P_S^T`, and the target gradient `c`
//! give
//!
//! ```text
//! h_S  = P_S^T J_S^{-1} c_S
//! L_S  = (P_S^T J_S^{-1} P_S J - I) [0; I_q]
//! nu   = sum_j g_j c^T L_{S_j} delta
//! tau2 = (sum_i g_i h_{S_i})^T J (sum_j g_j h_{S_j})
//! phi  = nu^2 + tau2
//! ```
//!
//! and the Bayesian criterion averages `phi` over a finite prior.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{DesignError, Result};
use crate::linalg::{principal, SpdFactor};
use crate::model::{
    AveragingScheme, Candidate, Design, DesignSpace, Misspecification, ModelFamily, ParamVector,
    SIMPLEX_TOL,
};
use crate::targets::{target_grad_full, TargetFunctional};

/// One weighted parameter point of a discrete prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorAtom {
    pub params: ParamVector,
    pub weight: f64,
    /// Replaces the prior-wide deviation for this atom when set.
    pub misspec: Option<Misspecification>,
}

/// Discrete prior over `(theta, gamma)` with a common local deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    atoms: Vec<PriorAtom>,
    misspec: Misspecification,
}

impl PriorSpec {
    pub fn new(atoms: Vec<PriorAtom>, misspec: Misspecification) -> Result<Self> {
        if atoms.is_empty() {
            return Err(DesignError::InvalidPrior("no atoms".into()));
        }
        if atoms.iter().any(|a| !(a.weight > 0.0) || !a.weight.is_finite()) {
            return Err(DesignError::InvalidPrior("atom weights must be positive".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(DesignError::InvalidPrior(format!(
                "atom weights sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms, misspec })
    }

    /// Point-mass prior.
    pub fn single(params: ParamVector, misspec: Misspecification) -> Self {
        Self {
            atoms: vec![PriorAtom {
                params,
                weight: 1.0,
                misspec: None,
            }],
            misspec,
        }
    }

    /// Uniform prior on the product of per-parameter grids around `nominal`.
    ///
    /// `grids` pairs a canonical parameter index (0 = sigma2) with its support.
    /// Atoms are enumerated lexicographically with the first grid outermost.
    pub fn product_grid(
        nominal: &ParamVector,
        grids: &[(usize, Vec<f64>)],
        misspec: Misspecification,
    ) -> Result<Self> {
        let base = nominal.to_vec();
        let (p, q) = (1 + nominal.vartheta.len(), nominal.gamma.len());
        let mut points = vec![base];
        for (index, values) in grids {
            if *index >= p + q {
                return Err(DesignError::InvalidPrior(format!(
                    "grid parameter index {index} out of range"
                )));
            }
            if values.is_empty() {
                return Err(DesignError::InvalidPrior("empty grid".into()));
            }
            points = points
                .into_iter()
                .flat_map(|pt| {
                    values.iter().map(move |&v| {
                        let mut next = pt.clone();
                        next[*index] = v;
                        next
                    })
                })
                .collect();
        }
        let w = 1.0 / points.len() as f64;
        let atoms = points
            .iter()
            .map(|v| {
                Ok(PriorAtom {
                    params: ParamVector::from_slice(v, p, q)?,
                    weight: w,
                    misspec: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        // w * len may miss 1 by a few ulps, well inside the simplex tolerance
        Self::new(atoms, misspec)
    }

    pub fn atoms(&self) -> &[PriorAtom] {
        &self.atoms
    }

    pub fn misspec(&self) -> &Misspecification {
        &self.misspec
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    fn delta_for(&self, atom: usize) -> &Misspecification {
        self.atoms[atom].misspec.as_ref().unwrap_or(&self.misspec)
    }
}

/// Bayesian criterion value with its per-atom bias and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub phi: f64,
    pub nu_by_atom: Vec<f64>,
    pub tau2_by_atom: Vec<f64>,
}

#[derive(Debug, Clone)]
struct AtomSetup {
    params: ParamVector,
    weight: f64,
    /// `(0_p, delta)`
    e_delta: DVector<f64>,
    /// Full target gradient `c`.
    c: DVector<f64>,
}

/// Scheme, family, prior and target bound together, with the target
/// gradients of every atom precomputed.
#[derive(Debug, Clone)]
pub struct MavProblem {
    family: ModelFamily,
    candidates: Vec<Candidate>,
    g: Vec<f64>,
    atoms: Vec<AtomSetup>,
    space: DesignSpace,
}

impl MavProblem {
    pub fn new(
        scheme: &AveragingScheme,
        family: &ModelFamily,
        prior: &PriorSpec,
        target: &TargetFunctional,
    ) -> Result<Self> {
        let candidates = scheme.build(family)?;
        let (p, q) = (family.p(), family.q());
        let mut atoms = Vec::with_capacity(prior.len());
        for (i, atom) in prior.atoms().iter().enumerate() {
            let setup = (|| {
                family.check_params(&atom.params)?;
                let delta = prior.delta_for(i).delta();
                if delta.len() != q {
                    return Err(DesignError::Dimension {
                        what: "delta",
                        got: delta.len(),
                        expected: q,
                    });
                }
                let mut e_delta = DVector::zeros(p + q);
                e_delta.rows_mut(p, q).copy_from_slice(delta);
                let c = target_grad_full(target, family, &atom.params)?;
                Ok(AtomSetup {
                    params: atom.params.clone(),
                    weight: atom.weight,
                    e_delta,
                    c: DVector::from_vec(c),
                })
            })()
            .map_err(|e: DesignError| e.at_atom(i))?;
            atoms.push(setup);
        }
        Ok(Self {
            family: family.clone(),
            candidates,
            g: scheme.g().to_vec(),
            atoms,
            space: *target.space(),
        })
    }

    pub fn family(&self) -> &ModelFamily {
        &self.family
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Full target gradient at an atom.
    pub fn target_gradient(&self, atom: usize) -> &[f64] {
        self.atoms[atom].c.as_slice()
    }

    /// Criterion for a design.
    pub fn phi(&self, design: &Design) -> Result<f64> {
        Ok(self.evaluate(design.points(), design.weights())?.phi)
    }

    /// Criterion report for raw support lists. Points need not be sorted or
    /// distinct and zero weights are allowed.
    pub fn evaluate(&self, points: &[f64], weights: &[f64]) -> Result<CriterionReport> {
        let mut phi = 0.0;
        let mut nus = Vec::with_capacity(self.atoms.len());
        let mut taus = Vec::with_capacity(self.atoms.len());
        for a in 0..self.atoms.len() {
            let ev = self.atom_eval(a, points, weights)?;
            phi += self.atoms[a].weight * (ev.nu * ev.nu + ev.tau2);
            nus.push(ev.nu);
            taus.push(ev.tau2);
        }
        Ok(CriterionReport {
            phi,
            nu_by_atom: nus,
            tau2_by_atom: taus,
        })
    }

    /// All per-atom quantities needed for directional derivatives.
    pub fn state(&self, design: &Design) -> Result<DesignState<'_>> {
        self.state_raw(design.points(), design.weights())
    }

    pub fn state_raw(&self, points: &[f64], weights: &[f64]) -> Result<DesignState<'_>> {
        let atoms = (0..self.atoms.len())
            .map(|a| self.atom_eval(a, points, weights))
            .collect::<Result<Vec<_>>>()?;
        let phi = atoms
            .iter()
            .zip(&self.atoms)
            .map(|(ev, s)| s.weight * (ev.nu * ev.nu + ev.tau2))
            .sum();
        Ok(DesignState {
            problem: self,
            atoms,
            phi,
        })
    }

    /// Wide-model information at one dose.
    fn point_info(&self, params: &ParamVector, x: f64, scratch: &mut [f64]) -> DMatrix<f64> {
        let n = self.family.p() + self.family.q();
        let mut j = DMatrix::zeros(n, n);
        self.add_point_info(&mut j, params, x, 1.0, scratch);
        j
    }

    fn add_point_info(
        &self,
        j: &mut DMatrix<f64>,
        params: &ParamVector,
        x: f64,
        w: f64,
        grad: &mut [f64],
    ) {
        let s2 = params.sigma2;
        self.family.eta_grad_into(x, params, grad);
        j[(0, 0)] += w / (2.0 * s2 * s2);
        let m = grad.len();
        for r in 0..m {
            let gr = w * grad[r] / s2;
            for c in 0..m {
                j[(r + 1, c + 1)] += gr * grad[c];
            }
        }
    }

    fn wide_info(&self, params: &ParamVector, points: &[f64], weights: &[f64]) -> Result<DMatrix<f64>> {
        if points.len() != weights.len() {
            return Err(DesignError::Dimension {
                what: "design weights",
                got: weights.len(),
                expected: points.len(),
            });
        }
        let n = self.family.p() + self.family.q();
        let mut j = DMatrix::zeros(n, n);
        let mut grad = vec![0.0; self.family.n_mean()];
        for (&x, &w) in points.iter().zip(weights) {
            self.family.check_at(x, params)?;
            if w != 0.0 {
                self.add_point_info(&mut j, params, x, w, &mut grad);
            }
        }
        Ok(j)
    }

    fn atom_eval(&self, a: usize, points: &[f64], weights: &[f64]) -> Result<AtomEval> {
        self.atom_eval_inner(a, points, weights)
            .map_err(|e| e.at_atom(a))
    }

    fn atom_eval_inner(&self, a: usize, points: &[f64], weights: &[f64]) -> Result<AtomEval> {
        let setup = &self.atoms[a];
        let j = self.wide_info(&setup.params, points, weights)?;
        let support = weights.iter().filter(|&&w| w > 0.0).count();
        let j_edelta = &j * &setup.e_delta;
        let n = j.nrows();
        let mut h_bar = DVector::zeros(n);
        let mut nu = 0.0;
        let mut cands = Vec::with_capacity(self.candidates.len());
        for (cand, &g) in self.candidates.iter().zip(&self.g) {
            let idx = cand.free_indices();
            let js = principal(&j, idx);
            let factor = SpdFactor::new(&js, || cand.subset().to_string(), support)?;
            let c_s = DVector::from_iterator(idx.len(), idx.iter().map(|&i| setup.c[i]));
            let a_s = factor.solve(&c_s);
            let pj = DVector::from_iterator(idx.len(), idx.iter().map(|&i| j_edelta[i]));
            let b_s = factor.solve(&pj);
            let h = lift(idx, &a_s, n);
            // c^T L_S delta = c^T (P^T b_S - E delta)
            let l_delta = lift(idx, &b_s, n) - &setup.e_delta;
            nu += g * setup.c.dot(&l_delta);
            h_bar.axpy(g, &h, 1.0);
            cands.push(CandEval {
                factor,
                a: a_s,
                b: b_s,
                h,
            });
        }
        let tau2 = h_bar.dot(&(&j * &h_bar));
        Ok(AtomEval {
            j,
            cands,
            nu,
            tau2,
            h_bar,
        })
    }
}

fn lift(idx: &[usize], v: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (&i, &x) in idx.iter().zip(v.iter()) {
        out[i] = x;
    }
    out
}

#[derive(Debug, Clone)]
struct CandEval {
    factor: SpdFactor,
    /// `J_S^{-1} c_S`
    a: DVector<f64>,
    /// `J_S^{-1} P_S J (0, delta)`
    b: DVector<f64>,
    /// `h_S = P_S^T a`
    h: DVector<f64>,
}

#[derive(Debug, Clone)]
struct AtomEval {
    j: DMatrix<f64>,
    cands: Vec<CandEval>,
    nu: f64,
    tau2: f64,
    h_bar: DVector<f64>,
}

/// Criterion quantities of one design under every prior atom.
#[derive(Debug, Clone)]
pub struct DesignState<'a> {
    problem: &'a MavProblem,
    atoms: Vec<AtomEval>,
    phi: f64,
}

impl DesignState<'_> {
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn report(&self) -> CriterionReport {
        CriterionReport {
            phi: self.phi,
            nu_by_atom: self.atoms.iter().map(|a| a.nu).collect(),
            tau2_by_atom: self.atoms.iter().map(|a| a.tau2).collect(),
        }
    }

    pub fn nu(&self, atom: usize) -> f64 {
        self.atoms[atom].nu
    }

    pub fn tau2(&self, atom: usize) -> f64 {
        self.atoms[atom].tau2
    }

    /// Wide information `J(xi)` at an atom.
    pub fn wide_information(&self, atom: usize) -> &DMatrix<f64> {
        &self.atoms[atom].j
    }

    /// `h_S(xi)` of candidate `cand` at an atom (length `p + q`).
    pub fn h(&self, atom: usize, cand: usize) -> &DVector<f64> {
        &self.atoms[atom].cands[cand].h
    }

    /// `h~_S(xi, xi_x) = P_S^T J_S^{-1}(xi) J_S(xi_x) J_S^{-1}(xi) c_S`.
    pub fn h_tilde(&self, atom: usize, cand: usize, x: f64) -> DVector<f64> {
        let problem = self.problem;
        let setup = &problem.atoms[atom];
        let mut scratch = vec![0.0; problem.family.n_mean()];
        let jx = problem.point_info(&setup.params, x, &mut scratch);
        let ce = &self.atoms[atom].cands[cand];
        let idx = problem.candidates[cand].free_indices();
        let jsx = principal(&jx, idx);
        let inner = ce.factor.solve(&(&jsx * &ce.a));
        lift(idx, &inner, jx.nrows())
    }

    /// Directional derivative of the bias `nu` toward the one-point design at `x`.
    pub fn d1(&self, atom: usize, x: f64) -> f64 {
        let problem = self.problem;
        let setup = &problem.atoms[atom];
        let mut scratch = vec![0.0; problem.family.n_mean()];
        let jx = problem.point_info(&setup.params, x, &mut scratch);
        self.d1_with(atom, &jx)
    }

    fn d1_with(&self, atom: usize, jx: &DMatrix<f64>) -> f64 {
        let problem = self.problem;
        let setup = &problem.atoms[atom];
        let ev = &self.atoms[atom];
        let jx_edelta = jx * &setup.e_delta;
        let mut total = 0.0;
        for ((cand, ce), &g) in problem.candidates.iter().zip(&ev.cands).zip(&problem.g) {
            let idx = cand.free_indices();
            // P_S J(xi_x) (0, delta) - J_S(xi_x) J_S^{-1}(xi) P_S J(xi) (0, delta)
            let first = DVector::from_iterator(idx.len(), idx.iter().map(|&i| jx_edelta[i]));
            let second = principal(jx, idx) * &ce.b;
            // c^T P_S^T J_S^{-1} v = a^T v since J_S is symmetric
            total += g * ce.a.dot(&(first - second));
        }
        total
    }

    /// Directional derivative of the variance `tau2` toward the one-point design at `x`.
    pub fn d2(&self, atom: usize, x: f64) -> f64 {
        let problem = self.problem;
        let setup = &problem.atoms[atom];
        let mut scratch = vec![0.0; problem.family.n_mean()];
        let jx = problem.point_info(&setup.params, x, &mut scratch);
        self.d2_with(atom, &jx)
    }

    fn d2_with(&self, atom: usize, jx: &DMatrix<f64>) -> f64 {
        let problem = self.problem;
        let ev = &self.atoms[atom];
        let n = jx.nrows();
        let mut h_tilde_bar = DVector::zeros(n);
        for ((cand, ce), &g) in problem.candidates.iter().zip(&ev.cands).zip(&problem.g) {
            let idx = cand.free_indices();
            let inner = ce.factor.solve(&(principal(jx, idx) * &ce.a));
            h_tilde_bar.axpy(g, &lift(idx, &inner, n), 1.0);
        }
        let j_h = &ev.j * &ev.h_bar;
        let quad = ev.h_bar.dot(&j_h) + ev.h_bar.dot(&(jx * &ev.h_bar));
        quad - 2.0 * h_tilde_bar.dot(&j_h)
    }

    /// Sensitivity `d_pi(x, xi) = sum_atoms w (-2 nu D1 - D2)`, the negative
    /// directional derivative of the Bayesian criterion toward `xi_x`.
    pub fn d_pi(&self, x: f64) -> f64 {
        let problem = self.problem;
        let mut scratch = vec![0.0; problem.family.n_mean()];
        let mut total = 0.0;
        for (a, setup) in problem.atoms.iter().enumerate() {
            let jx = problem.point_info(&setup.params, x, &mut scratch);
            let d1 = self.d1_with(a, &jx);
            let d2 = self.d2_with(a, &jx);
            total += setup.weight * (-2.0 * self.atoms[a].nu * d1 - d2);
        }
        total
    }
}

/// Gaussian Fisher information of one observation at `x` in candidate `S`:
/// `1 / (2 sigma^4)` for the variance, `grad grad^T / sigma^2` for the mean block.
pub fn fisher_point(
    family: &ModelFamily,
    candidate: &Candidate,
    x: f64,
    params: &ParamVector,
) -> Result<DMatrix<f64>> {
    family.check_at(x, params)?;
    let mut grad = vec![0.0; family.n_mean()];
    family.eta_grad_into(x, params, &mut grad);
    let s2 = params.sigma2;
    let idx = candidate.free_indices();
    let d = idx.len();
    let mut m = DMatrix::zeros(d, d);
    m[(0, 0)] = 1.0 / (2.0 * s2 * s2);
    for r in 1..d {
        for c in 1..d {
            m[(r, c)] = grad[idx[r] - 1] * grad[idx[c] - 1] / s2;
        }
    }
    Ok(m)
}

/// `J_S(xi) = sum_i xi_i J_S(xi_{x_i})`.
pub fn info_matrix(
    family: &ModelFamily,
    candidate: &Candidate,
    design: &Design,
    params: &ParamVector,
) -> Result<DMatrix<f64>> {
    let d = candidate.dim();
    let mut m = DMatrix::zeros(d, d);
    for (x, w) in design.iter() {
        m += fisher_point(family, candidate, x, params)? * w;
    }
    Ok(m)
}

fn wide_candidate(family: &ModelFamily) -> Result<Candidate> {
    crate::model::build_candidate(family, &crate::model::CandidateSubset::full(family.q()))
}

/// `h_S(xi) = P_S^T J_S^{-1}(xi) c_S`.
pub fn h_vector(
    family: &ModelFamily,
    candidate: &Candidate,
    design: &Design,
    params: &ParamVector,
    target: &TargetFunctional,
) -> Result<Vec<f64>> {
    let js = info_matrix(family, candidate, design, params)?;
    let factor = SpdFactor::new(&js, || candidate.subset().to_string(), design.len())?;
    let c = target_grad_full(target, family, params)?;
    let c_s = DVector::from_vec(candidate.project(&c));
    Ok(candidate.lift(factor.solve(&c_s).as_slice()))
}

/// `L_S = (P_S^T J_S^{-1} P_S J - I) [0; I_q]`, shape `(p + q) x q`.
pub fn l_matrix(
    family: &ModelFamily,
    candidate: &Candidate,
    design: &Design,
    params: &ParamVector,
) -> Result<DMatrix<f64>> {
    let (p, q) = (family.p(), family.q());
    let n = p + q;
    let js = info_matrix(family, candidate, design, params)?;
    let factor = SpdFactor::new(&js, || candidate.subset().to_string(), design.len())?;
    let j = info_matrix(family, &wide_candidate(family)?, design, params)?;
    let pm = candidate.projection();
    let inner = factor.solve_mat(&(&pm * &j));
    let bracket = pm.transpose() * inner - DMatrix::identity(n, n);
    Ok(bracket.columns(p, q).into_owned())
}

fn local_problem(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    params: &ParamVector,
    misspec: &Misspecification,
    target: &TargetFunctional,
) -> Result<MavProblem> {
    MavProblem::new(
        scheme,
        family,
        &PriorSpec::single(params.clone(), misspec.clone()),
        target,
    )
}

/// Asymptotic bias `nu(xi, delta, theta, gamma)`.
pub fn bias_nu(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    params: &ParamVector,
    misspec: &Misspecification,
    target: &TargetFunctional,
) -> Result<f64> {
    Ok(local_problem(scheme, family, params, misspec, target)?
        .evaluate(design.points(), design.weights())?
        .nu_by_atom[0])
}

/// Asymptotic variance `tau2(xi, theta, gamma)`.
pub fn variance_tau2(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    params: &ParamVector,
    target: &TargetFunctional,
) -> Result<f64> {
    let zero = Misspecification::zero(family.q(), 1);
    Ok(local_problem(scheme, family, params, &zero, target)?
        .evaluate(design.points(), design.weights())?
        .tau2_by_atom[0])
}

/// Locally optimal criterion `nu^2 + tau2`.
pub fn phi_local(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    params: &ParamVector,
    misspec: &Misspecification,
    target: &TargetFunctional,
) -> Result<f64> {
    local_problem(scheme, family, params, misspec, target)?.phi(design)
}

/// Bayesian criterion with per-atom bias and variance.
pub fn phi_bayes(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    prior: &PriorSpec,
    target: &TargetFunctional,
) -> Result<CriterionReport> {
    MavProblem::new(scheme, family, prior, target)?.evaluate(design.points(), design.weights())
}
