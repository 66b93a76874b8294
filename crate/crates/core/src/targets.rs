//! Target functionals `mu(theta, gamma)` and their parameter gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{DesignError, Result};
use crate::model::{Candidate, DesignSpace, ModelFamily, ParamVector};
use crate::quadrature::GaussLegendre;

/// Quadrature order used for AUC targets.
pub const AUC_NODES: usize = 64;
/// Bracketing grid used to locate ED crossings.
pub const ED_GRID: usize = 512;
/// Absolute bisection tolerance for ED crossings.
pub const ED_TOL: f64 = 1e-10;
/// Dose step, as a fraction of the width, for the slope of the mean at an ED crossing.
pub const ED_DX_STEP: f64 = 2e-4;
/// Minimal `|eta(b) - eta(a)|` for a well-defined ED.
pub const ED_MIN_EFFECT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetKind {
    /// Area under the mean curve over `[lower, upper]`.
    Auc { lower: f64, upper: f64 },
    /// Smallest dose reaching fraction `alpha` of the effect over the design space.
    Ed { alpha: f64 },
    /// Mean response at `x0`.
    PointMean { x0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetFunctional {
    kind: TargetKind,
    space: DesignSpace,
    rule: Option<GaussLegendre>,
}

impl TargetFunctional {
    pub fn auc(lower: f64, upper: f64, space: DesignSpace) -> Result<Self> {
        if !(lower < upper) || !space.contains(lower) || !space.contains(upper) {
            return Err(DesignError::InvalidTarget(format!(
                "AUC region [{lower}, {upper}] must be a nondegenerate subinterval of [{}, {}]",
                space.lower(),
                space.upper()
            )));
        }
        Ok(Self {
            kind: TargetKind::Auc { lower, upper },
            space,
            rule: Some(GaussLegendre::new(AUC_NODES)),
        })
    }

    pub fn ed(alpha: f64, space: DesignSpace) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(DesignError::InvalidTarget(format!(
                "ED level must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            kind: TargetKind::Ed { alpha },
            space,
            rule: None,
        })
    }

    pub fn point(x0: f64, space: DesignSpace) -> Result<Self> {
        if !space.contains(x0) {
            return Err(DesignError::InvalidTarget(format!(
                "point {x0} outside the design space"
            )));
        }
        Ok(Self {
            kind: TargetKind::PointMean { x0 },
            space,
            rule: None,
        })
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }
}

/// Value of the target at `params`.
pub fn eval_target(
    target: &TargetFunctional,
    family: &ModelFamily,
    params: &ParamVector,
) -> Result<f64> {
    family.check_at(target.space.lower(), params)?;
    match target.kind {
        TargetKind::Auc { lower, upper } => {
            let rule = target.rule.as_ref().expect("AUC carries a rule");
            Ok(rule.integrate(lower, upper, |x| family.eta(x, params)))
        }
        TargetKind::Ed { alpha } => effective_dose(family, params, &target.space, alpha),
        TargetKind::PointMean { x0 } => Ok(family.eta(x0, params)),
    }
}

fn effective_dose(
    family: &ModelFamily,
    params: &ParamVector,
    space: &DesignSpace,
    alpha: f64,
) -> Result<f64> {
    let (a, b) = (space.lower(), space.upper());
    let base = family.eta(a, params);
    let span = family.eta(b, params) - base;
    if !(span.abs() >= ED_MIN_EFFECT) {
        return Err(DesignError::DegenerateEffect(span.abs()));
    }
    let level = |x: f64| (family.eta(x, params) - base) / span;

    let step = (b - a) / (ED_GRID - 1) as f64;
    let mut prev = a;
    let mut prev_level = level(a);
    if prev_level >= alpha {
        return Ok(a);
    }
    for i in 1..ED_GRID {
        let x = if i + 1 == ED_GRID { b } else { a + step * i as f64 };
        let lx = level(x);
        if lx >= alpha {
            // level(lo) < alpha <= level(hi)
            let (mut lo, mut hi) = (prev, x);
            let (mut llo, mut lhi) = (prev_level, lx);
            while hi - lo > ED_TOL {
                let mid = 0.5 * (lo + hi);
                let lm = level(mid);
                if lm >= alpha {
                    hi = mid;
                    lhi = lm;
                } else {
                    lo = mid;
                    llo = lm;
                }
            }
            // final secant step inside the bracket
            let t = if lhi > llo {
                ((alpha - llo) / (lhi - llo)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            return Ok(lo + t * (hi - lo));
        }
        prev = x;
        prev_level = lx;
    }
    Err(DesignError::NoCrossing { alpha })
}

/// Slope of the mean in the dose: fourth-order central differences, or
/// second-order one-sided ones within two steps of an end of the space.
fn eta_dx(family: &ModelFamily, params: &ParamVector, space: &DesignSpace, x: f64) -> f64 {
    let f = |t: f64| family.eta(t, params);
    let (lo, hi) = (space.lower(), space.upper());
    let h = ED_DX_STEP * space.width();
    if x - 2.0 * h >= lo && x + 2.0 * h <= hi {
        return (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h);
    }
    // step near the cube root of machine precision for the one-sided rule
    let h = 1e-5 * space.width();
    if x - lo < hi - x {
        (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h)) / (2.0 * h)
    }
}

/// Gradient `c` of the target with respect to `(sigma2, vartheta, gamma)`.
pub fn target_grad_full(
    target: &TargetFunctional,
    family: &ModelFamily,
    params: &ParamVector,
) -> Result<Vec<f64>> {
    family.check_at(target.space.lower(), params)?;
    let m = family.n_mean();
    let mut c = vec![0.0; 1 + m];
    match target.kind {
        TargetKind::Auc { lower, upper } => {
            let rule = target.rule.as_ref().expect("AUC carries a rule");
            let mut g = vec![0.0; m];
            for (x, w) in rule.mapped(lower, upper) {
                family.eta_grad_into(x, params, &mut g);
                for (cj, gj) in c[1..].iter_mut().zip(&g) {
                    *cj += w * gj;
                }
            }
        }
        TargetKind::PointMean { x0 } => {
            family.eta_grad_into(x0, params, &mut c[1..]);
        }
        TargetKind::Ed { alpha } => {
            // implicit differentiation of level(x*, theta) = alpha
            let space = &target.space;
            let x = effective_dose(family, params, space, alpha)?;
            let (a, b) = (space.lower(), space.upper());
            let slope = eta_dx(family, params, space, x);
            let span = family.eta(b, params) - family.eta(a, params);
            if !(slope * span.signum() > ED_MIN_EFFECT) {
                return Err(DesignError::FlatCrossing { x });
            }
            let (mut gx, mut ga, mut gb) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            family.eta_grad_into(x, params, &mut gx);
            family.eta_grad_into(a, params, &mut ga);
            family.eta_grad_into(b, params, &mut gb);
            for j in 0..m {
                c[1 + j] = -((gx[j] - ga[j]) - alpha * (gb[j] - ga[j])) / slope;
            }
        }
    }
    Ok(c)
}

/// Candidate gradient `c_S = P_S c`, evaluated at `params`.
pub fn target_grad_sub(
    target: &TargetFunctional,
    family: &ModelFamily,
    candidate: &Candidate,
    params: &ParamVector,
) -> Result<Vec<f64>> {
    Ok(candidate.project(&target_grad_full(target, family, params)?))
}
