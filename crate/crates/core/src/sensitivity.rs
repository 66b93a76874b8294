//! Directional derivatives of the criterion and the equivalence-type check.
//!
//! For `xi_t = (1 - t) xi + t xi_x` the derivative of `nu` at `t = 0` is `D1`,
//! the derivative of `tau2` is `D2`, and
//! `d_pi(x, xi) = sum_atoms w (-2 nu D1 - D2)` is minus the derivative of the
//! Bayesian criterion. A locally optimal design has `d_pi <= 0` everywhere with
//! equality on its support.

use alloc::vec::Vec;

use crate::criterion::{MavProblem, PriorSpec};
use crate::error::Result;
use crate::model::{
    AveragingScheme, Candidate, Design, Misspecification, ModelFamily, ParamVector,
};
use crate::targets::TargetFunctional;

/// Default number of uniform grid points for optimality checks.
pub const DEFAULT_GRID: usize = 1001;
/// Default tolerance relative to the criterion value.
pub const DEFAULT_REL_TOL: f64 = 1e-4;

/// Sensitivity trace of a design.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    /// Uniform grid merged with the support points, ascending.
    pub grid: Vec<f64>,
    pub d_values: Vec<f64>,
    /// Largest `d_pi` over `grid`.
    pub max_violation: f64,
    /// `d_pi` at each support point in design order.
    pub support_residuals: Vec<f64>,
    /// Criterion value of the design.
    pub phi: f64,
    pub tol: f64,
    pub passed: bool,
}

impl MavProblem {
    /// Sensitivity `d_pi(x, design)`.
    pub fn d_pi(&self, design: &Design, x: f64) -> Result<f64> {
        Ok(self.state(design)?.d_pi(x))
    }

    /// Evaluate `d_pi` on `grid_size` uniform points plus the support and
    /// compare against `tol`. Numerical failures of the design itself are
    /// still raised.
    pub fn check_optimality(
        &self,
        design: &Design,
        grid_size: usize,
        tol: f64,
    ) -> Result<SensitivityReport> {
        let state = self.state(design)?;
        let mut grid = self.space().grid(grid_size.max(2));
        grid.extend_from_slice(design.points());
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let d_values: Vec<f64> = grid.iter().map(|&x| state.d_pi(x)).collect();
        let max_violation = d_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let support_residuals: Vec<f64> = design.points().iter().map(|&x| state.d_pi(x)).collect();
        let passed = max_violation <= tol && support_residuals.iter().all(|r| r.abs() <= tol);
        Ok(SensitivityReport {
            grid,
            d_values,
            max_violation,
            support_residuals,
            phi: state.phi(),
            tol,
            passed,
        })
    }

    /// [`Self::check_optimality`] with the tolerance taken relative to the
    /// design's criterion value.
    pub fn check_optimality_rel(
        &self,
        design: &Design,
        grid_size: usize,
        rel_tol: f64,
    ) -> Result<SensitivityReport> {
        let phi = self.phi(design)?;
        self.check_optimality(design, grid_size, rel_tol * phi)
    }
}

fn local(
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

/// `h~_S(xi, xi_x) = P_S^T J_S^{-1}(xi) J_S(xi_x) J_S^{-1}(xi) c_S`.
pub fn h_tilde(
    family: &ModelFamily,
    candidate: &Candidate,
    design: &Design,
    x: f64,
    params: &ParamVector,
    target: &TargetFunctional,
) -> Result<Vec<f64>> {
    let scheme = AveragingScheme::single(candidate.subset().clone());
    let zero = Misspecification::zero(family.q(), 1);
    let problem = local(&scheme, family, params, &zero, target)?;
    let state = problem.state(design)?;
    Ok(state.h_tilde(0, 0, x).as_slice().to_vec())
}

/// Derivative of the bias toward the one-point design at `x`.
pub fn d1(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    x: f64,
    params: &ParamVector,
    misspec: &Misspecification,
    target: &TargetFunctional,
) -> Result<f64> {
    Ok(local(scheme, family, params, misspec, target)?
        .state(design)?
        .d1(0, x))
}

/// Derivative of the variance toward the one-point design at `x`.
pub fn d2(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    x: f64,
    params: &ParamVector,
    target: &TargetFunctional,
) -> Result<f64> {
    let zero = Misspecification::zero(family.q(), 1);
    Ok(local(scheme, family, params, &zero, target)?
        .state(design)?
        .d2(0, x))
}

/// Sensitivity function of the Bayesian criterion.
pub fn d_pi(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    x: f64,
    prior: &PriorSpec,
    target: &TargetFunctional,
) -> Result<f64> {
    MavProblem::new(scheme, family, prior, target)?.d_pi(design, x)
}

/// Necessary-condition check of `design` on a uniform grid plus its support.
pub fn check_optimality(
    scheme: &AveragingScheme,
    family: &ModelFamily,
    design: &Design,
    prior: &PriorSpec,
    target: &TargetFunctional,
    grid_size: usize,
    tol: f64,
) -> Result<SensitivityReport> {
    MavProblem::new(scheme, family, prior, target)?.check_optimality(design, grid_size, tol)
}
