//! Regression families, parameter layout, candidate submodels and designs.
//!
//! Parameters are always laid out as `(sigma2, vartheta_1.., gamma_1..)`.
//! `p` counts the protected parameters including the variance, `q` the
//! optional ones. A candidate submodel frees the optional parameters listed
//! in its subset and freezes the rest at their reference values.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::error::{DesignError, Result};

/// Weights must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Compact interval of admissible doses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpace {
    lower: f64,
    upper: f64,
}

impl DesignSpace {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(DesignError::InvalidSpace { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(DesignError::OutsideSpace {
                x,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    /// `n` equally spaced points including both end points.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.lower],
            _ => (0..n)
                .map(|i| {
                    if i + 1 == n {
                        self.upper
                    } else {
                        self.lower + self.width() * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

/// Approximate design: distinct support points carrying positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Design {
    pub fn new(points: Vec<f64>, weights: Vec<f64>, space: &DesignSpace) -> Result<Self> {
        if points.is_empty() {
            return Err(DesignError::InvalidDesign("no support points".into()));
        }
        if points.len() != weights.len() {
            return Err(DesignError::Dimension {
                what: "design weights",
                got: weights.len(),
                expected: points.len(),
            });
        }
        for &x in &points {
            if !x.is_finite() {
                return Err(DesignError::InvalidDesign(format!("non-finite point {x}")));
            }
            space.check(x)?;
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DesignError::InvalidDesign(
                "support points must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(DesignError::InvalidDesign("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(DesignError::InvalidDesign(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { points, weights })
    }

    /// One-point design.
    pub fn dirac(x: f64, space: &DesignSpace) -> Result<Self> {
        Self::new(vec![x], vec![1.0], space)
    }

    /// Equal weights on the given points.
    pub fn uniform(points: Vec<f64>, space: &DesignSpace) -> Result<Self> {
        let k = points.len().max(1);
        let w = vec![1.0 / k as f64; points.len()];
        normalize_design(&points, &w, space, &NormalizeOptions::for_space(space))
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Tolerances used when cleaning a raw point/weight list into a [`Design`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeOptions {
    pub merge_tol: f64,
    pub drop_tol: f64,
}

impl NormalizeOptions {
    pub fn for_space(space: &DesignSpace) -> Self {
        Self {
            merge_tol: 1e-3 * space.width(),
            drop_tol: 1e-4,
        }
    }
}

/// Sort, merge near-duplicate points and drop negligible weights.
///
/// Merged points sit at the weight-weighted mean of their cluster. Weights are
/// renormalized only when something was dropped or the total drifted.
pub fn normalize_design(
    points: &[f64],
    weights: &[f64],
    space: &DesignSpace,
    opts: &NormalizeOptions,
) -> Result<Design> {
    if points.len() != weights.len() {
        return Err(DesignError::Dimension {
            what: "design weights",
            got: weights.len(),
            expected: points.len(),
        });
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for (&x, &w) in points.iter().zip(weights) {
        if !x.is_finite() || !w.is_finite() {
            return Err(DesignError::InvalidDesign("non-finite entry".into()));
        }
        space.check(x)?;
        pairs.push((x, w.max(0.0)));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // (position, weight, member count, plain sum of positions)
    let mut clusters: Vec<(f64, f64, usize, f64)> = Vec::new();
    for (x, w) in pairs {
        match clusters.last_mut() {
            Some(c) if x - c.0 < opts.merge_tol => {
                c.1 += w;
                c.2 += 1;
                c.3 += x;
                // running weighted mean, plain mean while the cluster is massless
                c.0 = if c.1 > 0.0 {
                    c.0 + (x - c.0) * (w / c.1)
                } else {
                    c.3 / c.2 as f64
                };
            }
            _ => clusters.push((x, w, 1, x)),
        }
    }

    let total: f64 = clusters.iter().map(|c| c.1).sum();
    if !(total > 0.0) {
        return Err(DesignError::InvalidDesign("all weights vanish".into()));
    }
    let before = clusters.len();
    clusters.retain(|c| c.1 / total >= opts.drop_tol);
    if clusters.is_empty() {
        return Err(DesignError::InvalidDesign(
            "no support point left after dropping negligible weights".into(),
        ));
    }
    let kept: f64 = clusters.iter().map(|c| c.1).sum();
    let rescale = clusters.len() != before || (kept - 1.0).abs() > SIMPLEX_TOL;
    let points: Vec<f64> = clusters.iter().map(|c| space.clamp(c.0)).collect();
    let weights: Vec<f64> = clusters
        .iter()
        .map(|c| if rescale { c.1 / kept } else { c.1 })
        .collect();
    Design::new(points, weights, space)
}

impl DesignSpace {
    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

/// Model parameters in canonical order `(sigma2, vartheta, gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub sigma2: f64,
    pub vartheta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ParamVector {
    pub fn new(sigma2: f64, vartheta: Vec<f64>, gamma: Vec<f64>) -> Self {
        Self {
            sigma2,
            vartheta,
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        1 + self.vartheta.len() + self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.sigma2);
        v.extend_from_slice(&self.vartheta);
        v.extend_from_slice(&self.gamma);
        v
    }

    pub fn from_slice(values: &[f64], p: usize, q: usize) -> Result<Self> {
        if values.len() != p + q || p == 0 {
            return Err(DesignError::Dimension {
                what: "parameter vector",
                got: values.len(),
                expected: p + q,
            });
        }
        Ok(Self {
            sigma2: values[0],
            vartheta: values[1..p].to_vec(),
            gamma: values[p..].to_vec(),
        })
    }

    /// Mean parameters `(vartheta, gamma)` as one vector.
    pub fn mean_params(&self) -> Vec<f64> {
        let mut v = self.vartheta.clone();
        v.extend_from_slice(&self.gamma);
        v
    }
}

/// Mean function of a Gaussian regression family.
///
/// Implementors supply `mean`; `mean_grad` defaults to central finite
/// differences with step `1e-6 * max(1, |value|)`.
pub trait MeanModel: Send + Sync + fmt::Debug {
    fn mean(&self, x: f64, vartheta: &[f64], gamma: &[f64]) -> f64;

    /// Gradient with respect to `(vartheta, gamma)`, written into `out`.
    fn mean_grad(&self, x: f64, vartheta: &[f64], gamma: &[f64], out: &mut [f64]) {
        finite_difference_grad(self, x, vartheta, gamma, out);
    }

    /// Admissibility of the parameters and dose.
    fn check(&self, _x: f64, _vartheta: &[f64], _gamma: &[f64]) -> Result<()> {
        Ok(())
    }
}

fn finite_difference_grad<M: MeanModel + ?Sized>(
    model: &M,
    x: f64,
    vartheta: &[f64],
    gamma: &[f64],
    out: &mut [f64],
) {
    let mut th = vartheta.to_vec();
    let mut ga = gamma.to_vec();
    let m = th.len();
    for (j, slot) in out.iter_mut().enumerate() {
        let value = if j < m { th[j] } else { ga[j - m] };
        let h = 1e-6 * value.abs().max(1.0);
        let set = |th: &mut Vec<f64>, ga: &mut Vec<f64>, v: f64| {
            if j < m {
                th[j] = v
            } else {
                ga[j - m] = v
            }
        };
        set(&mut th, &mut ga, value + h);
        let up = model.mean(x, &th, &ga);
        set(&mut th, &mut ga, value - h);
        let down = model.mean(x, &th, &ga);
        set(&mut th, &mut ga, value);
        *slot = (up - down) / (2.0 * h);
    }
}

/// Logistic function `1 / (1 + exp(-z))`, saturating without overflow.
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Sigmoid Emax: `gamma1 + vartheta1 * x^h / (x^h + vartheta2^h)` with `h = gamma2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SigmoidEmax;

impl SigmoidEmax {
    /// Fraction of maximal effect; exactly zero at `x = 0`.
    fn fraction(x: f64, ed50: f64, hill: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            logistic(hill * (libm::log(x) - libm::log(ed50)))
        }
    }
}

impl MeanModel for SigmoidEmax {
    fn mean(&self, x: f64, vartheta: &[f64], gamma: &[f64]) -> f64 {
        gamma[0] + vartheta[0] * Self::fraction(x, vartheta[1], gamma[1])
    }

    fn mean_grad(&self, x: f64, vartheta: &[f64], gamma: &[f64], out: &mut [f64]) {
        let (emax, ed50, hill) = (vartheta[0], vartheta[1], gamma[1]);
        let f = Self::fraction(x, ed50, hill);
        let slope = f * (1.0 - f);
        out[0] = f;
        out[1] = -emax * slope * hill / ed50;
        out[2] = 1.0;
        // x^h log x -> 0 at the zero dose
        out[3] = if x <= 0.0 {
            0.0
        } else {
            emax * slope * (libm::log(x) - libm::log(ed50))
        };
    }

    fn check(&self, x: f64, vartheta: &[f64], gamma: &[f64]) -> Result<()> {
        if !(x >= 0.0) {
            return Err(DesignError::Inadmissible(format!(
                "sigmoid Emax requires x >= 0, got {x}"
            )));
        }
        if !(vartheta[1] > 0.0) {
            return Err(DesignError::Inadmissible(format!(
                "ED50 must be positive, got {}",
                vartheta[1]
            )));
        }
        if !(gamma[1] > 0.0) {
            return Err(DesignError::Inadmissible(format!(
                "Hill coefficient must be positive, got {}",
                gamma[1]
            )));
        }
        Ok(())
    }
}

/// Four-parameter logistic: `gamma1 + vartheta1 / (1 + exp((vartheta2 - x) / gamma2))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Logistic4;

impl MeanModel for Logistic4 {
    fn mean(&self, x: f64, vartheta: &[f64], gamma: &[f64]) -> f64 {
        gamma[0] + vartheta[0] * logistic((x - vartheta[1]) / gamma[1])
    }

    fn mean_grad(&self, x: f64, vartheta: &[f64], gamma: &[f64], out: &mut [f64]) {
        let (emax, mid, scale) = (vartheta[0], vartheta[1], gamma[1]);
        let s = logistic((x - mid) / scale);
        let slope = emax * s * (1.0 - s);
        out[0] = s;
        out[1] = -slope / scale;
        out[2] = 1.0;
        out[3] = -slope * (x - mid) / (scale * scale);
    }

    fn check(&self, x: f64, vartheta: &[f64], gamma: &[f64]) -> Result<()> {
        if !(x >= 0.0) {
            return Err(DesignError::Inadmissible(format!(
                "logistic model requires x >= 0, got {x}"
            )));
        }
        if !(vartheta[1] > 0.0) {
            return Err(DesignError::Inadmissible(format!(
                "ED50 must be positive, got {}",
                vartheta[1]
            )));
        }
        if !(gamma[1] > 0.0) {
            return Err(DesignError::Inadmissible(format!(
                "slope scale must be positive, got {}",
                gamma[1]
            )));
        }
        Ok(())
    }
}

/// A wide Gaussian regression model with its optional-parameter reference values.
#[derive(Debug, Clone)]
pub struct ModelFamily {
    name: String,
    p: usize,
    q: usize,
    gamma0: Vec<f64>,
    model: Arc<dyn MeanModel>,
}

impl ModelFamily {
    pub fn new(
        name: impl Into<String>,
        p: usize,
        q: usize,
        gamma0: Vec<f64>,
        model: Arc<dyn MeanModel>,
    ) -> Result<Self> {
        if p == 0 {
            return Err(DesignError::Dimension {
                what: "protected parameters",
                got: 0,
                expected: 1,
            });
        }
        if gamma0.len() != q {
            return Err(DesignError::Dimension {
                what: "gamma0",
                got: gamma0.len(),
                expected: q,
            });
        }
        Ok(Self {
            name: name.into(),
            p,
            q,
            gamma0,
            model,
        })
    }

    /// Sigmoid Emax with narrow reference `gamma0 = (0, 1)` (Michaelis-Menten).
    pub fn sigmoid_emax() -> Self {
        Self::new("sigmoid_emax", 3, 2, vec![0.0, 1.0], Arc::new(SigmoidEmax))
            .expect("built-in family")
    }

    /// Four-parameter logistic with narrow reference `gamma0 = (0, 1)`.
    pub fn logistic4() -> Self {
        Self::new("logistic4", 3, 2, vec![0.0, 1.0], Arc::new(Logistic4)).expect("built-in family")
    }

    /// Look up a built-in family by its scenario identifier.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "sigmoid_emax" => Some(Self::sigmoid_emax()),
            "logistic4" => Some(Self::logistic4()),
            _ => None,
        }
    }

    pub fn with_gamma0(mut self, gamma0: Vec<f64>) -> Result<Self> {
        if gamma0.len() != self.q {
            return Err(DesignError::Dimension {
                what: "gamma0",
                got: gamma0.len(),
                expected: self.q,
            });
        }
        self.gamma0 = gamma0;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of mean parameters `p - 1 + q`.
    pub fn n_mean(&self) -> usize {
        self.p - 1 + self.q
    }

    pub fn gamma0(&self) -> &[f64] {
        &self.gamma0
    }

    pub fn model(&self) -> &dyn MeanModel {
        &*self.model
    }

    /// Validate dimensions and admissibility (dose-independent part checked at `x`).
    pub fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.vartheta.len() != self.p - 1 {
            return Err(DesignError::Dimension {
                what: "vartheta",
                got: params.vartheta.len(),
                expected: self.p - 1,
            });
        }
        if params.gamma.len() != self.q {
            return Err(DesignError::Dimension {
                what: "gamma",
                got: params.gamma.len(),
                expected: self.q,
            });
        }
        if !(params.sigma2 > 0.0) || !params.sigma2.is_finite() {
            return Err(DesignError::Inadmissible(format!(
                "variance must be positive, got {}",
                params.sigma2
            )));
        }
        if params
            .vartheta
            .iter()
            .chain(&params.gamma)
            .any(|v| !v.is_finite())
        {
            return Err(DesignError::Inadmissible("non-finite parameter".into()));
        }
        Ok(())
    }

    pub(crate) fn check_at(&self, x: f64, params: &ParamVector) -> Result<()> {
        self.check_params(params)?;
        self.model.check(x, &params.vartheta, &params.gamma)
    }

    /// Mean without validation; callers have checked the parameters.
    pub(crate) fn eta(&self, x: f64, params: &ParamVector) -> f64 {
        self.model.mean(x, &params.vartheta, &params.gamma)
    }

    pub(crate) fn eta_grad_into(&self, x: f64, params: &ParamVector, out: &mut [f64]) {
        self.model
            .mean_grad(x, &params.vartheta, &params.gamma, out)
    }
}

/// Mean response `eta(x, vartheta, gamma)`.
pub fn mean_eta(family: &ModelFamily, x: f64, params: &ParamVector) -> Result<f64> {
    family.check_at(x, params)?;
    Ok(family.eta(x, params))
}

/// Gradient of the mean with respect to `(vartheta, gamma)`.
pub fn grad_eta(family: &ModelFamily, x: f64, params: &ParamVector) -> Result<Vec<f64>> {
    family.check_at(x, params)?;
    let mut out = vec![0.0; family.n_mean()];
    family.eta_grad_into(x, params, &mut out);
    Ok(out)
}

/// Sorted set of freed optional parameters, 1-based as in `{1, .., q}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateSubset {
    indices: Vec<usize>,
}

impl CandidateSubset {
    pub fn new(mut indices: Vec<usize>, q: usize) -> Result<Self> {
        indices.sort_unstable();
        for &i in &indices {
            if i == 0 || i > q {
                return Err(DesignError::SubsetIndex { index: i, q });
            }
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(DesignError::InvalidScheme(format!(
                "duplicate index in subset {indices:?}"
            )));
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
        }
    }

    pub fn full(q: usize) -> Self {
        Self {
            indices: (1..=q).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

impl fmt::Display for CandidateSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, i) in self.indices.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// Candidate submodel `f_S` of a family.
#[derive(Debug, Clone)]
pub struct Candidate {
    subset: CandidateSubset,
    p: usize,
    q: usize,
    gamma0: Vec<f64>,
    /// Positions of the free parameters within the full canonical vector.
    free: Vec<usize>,
}

impl Candidate {
    pub fn subset(&self) -> &CandidateSubset {
        &self.subset
    }

    /// Number of free parameters `p + |S|`.
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn full_dim(&self) -> usize {
        self.p + self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Indices of the free parameters within `(sigma2, vartheta, gamma)`.
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn is_wide(&self) -> bool {
        self.subset.len() == self.q
    }

    /// Projection `P_S` of shape `(p + |S|) x (p + q)`.
    pub fn projection(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.full_dim());
        for (row, &col) in self.free.iter().enumerate() {
            m[(row, col)] = 1.0;
        }
        m
    }

    /// `P_S v` for a full-length vector.
    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// `P_S^T v`: zero-padded full-length vector.
    pub fn lift(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim()];
        for (&i, &v) in self.free.iter().zip(reduced) {
            out[i] = v;
        }
        out
    }

    /// Full parameter point with the frozen optional parameters at `gamma0`.
    pub fn embed(&self, free: &[f64]) -> Result<ParamVector> {
        if free.len() != self.dim() {
            return Err(DesignError::Dimension {
                what: "candidate parameters",
                got: free.len(),
                expected: self.dim(),
            });
        }
        let mut full = vec![0.0; self.full_dim()];
        full[self.p..].copy_from_slice(&self.gamma0);
        for (&i, &v) in self.free.iter().zip(free) {
            full[i] = v;
        }
        ParamVector::from_slice(&full, self.p, self.q)
    }

    /// Free parameters `(theta, gamma_S)` of a full point.
    pub fn restrict(&self, params: &ParamVector) -> Vec<f64> {
        self.project(&params.to_vec())
    }

    pub fn gamma0(&self) -> &[f64] {
        &self.gamma0
    }
}

/// Candidate model for subset `S`, frozen at the family's `gamma0`.
pub fn build_candidate(family: &ModelFamily, subset: &CandidateSubset) -> Result<Candidate> {
    let q = family.q();
    if let Some(&bad) = subset.indices().iter().find(|&&i| i == 0 || i > q) {
        return Err(DesignError::SubsetIndex { index: bad, q });
    }
    let p = family.p();
    let mut free: Vec<usize> = (0..p).collect();
    free.extend(subset.indices().iter().map(|&i| p - 1 + i));
    Ok(Candidate {
        subset: subset.clone(),
        p,
        q,
        gamma0: family.gamma0().to_vec(),
        free,
    })
}

/// Candidate list with fixed averaging weights `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingScheme {
    candidates: Vec<CandidateSubset>,
    g: Vec<f64>,
}

impl AveragingScheme {
    pub fn new(candidates: Vec<CandidateSubset>, g: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(DesignError::InvalidScheme("no candidate models".into()));
        }
        if candidates.len() != g.len() {
            return Err(DesignError::Dimension {
                what: "g weights",
                got: g.len(),
                expected: candidates.len(),
            });
        }
        if g.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(DesignError::InvalidScheme("g must be nonnegative".into()));
        }
        let total: f64 = g.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(DesignError::InvalidScheme(format!(
                "g must sum to 1 (got {total})"
            )));
        }
        for (i, a) in candidates.iter().enumerate() {
            if candidates[..i].contains(a) {
                return Err(DesignError::InvalidScheme(format!(
                    "candidate {a} listed twice"
                )));
            }
        }
        Ok(Self { candidates, g })
    }

    /// Single candidate with weight one.
    pub fn single(subset: CandidateSubset) -> Self {
        Self {
            candidates: vec![subset],
            g: vec![1.0],
        }
    }

    pub fn candidates(&self) -> &[CandidateSubset] {
        &self.candidates
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn build(&self, family: &ModelFamily) -> Result<Vec<Candidate>> {
        self.candidates
            .iter()
            .map(|s| build_candidate(family, s))
            .collect()
    }
}

/// Local deviation `delta` of the optional parameters, stored raw with its
/// reference sample size `n` (the truth is `gamma0 + delta / sqrt(n)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Misspecification {
    delta: Vec<f64>,
    n: usize,
}

impl Misspecification {
    pub fn new(delta: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(DesignError::InvalidScheme("reference n must be >= 1".into()));
        }
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(DesignError::InvalidScheme("non-finite delta".into()));
        }
        Ok(Self { delta, n })
    }

    /// From the per-observation deviation `delta / sqrt(n)`.
    pub fn from_scaled(delta_over_sqrt_n: &[f64], n: usize) -> Result<Self> {
        let root = libm::sqrt(n as f64);
        Self::new(delta_over_sqrt_n.iter().map(|d| d * root).collect(), n)
    }

    pub fn zero(q: usize, n: usize) -> Self {
        Self {
            delta: vec![0.0; q],
            n: n.max(1),
        }
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scaled(&self) -> Vec<f64> {
        let root = libm::sqrt(self.n as f64);
        self.delta.iter().map(|d| d / root).collect()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            delta: self.delta.iter().map(|d| d * factor).collect(),
            n: self.n,
        }
    }
}
