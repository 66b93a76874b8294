//! Monte Carlo study of the model-averaging estimators.

use std::fmt;
use std::str::FromStr;

use mavdesign_core::fitting::selection_weights;
use mavdesign_core::{
    efficient_round, estimate_target, eval_target, fit_candidates, mean_eta, smooth_aic_weights,
    Dataset, FitResult, ModelFamily, ParamVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::parallel::pool;
use crate::scenario::{NamedDesign, Scenario, Truth};

/// Averaging strategy applied to the candidate fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// The scenario's fixed weights `g`.
    Fixed,
    /// Smooth AIC weights.
    SmoothAic,
    /// All weight on the candidate with the greatest AIC score.
    AicSelect,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fixed, Method::SmoothAic, Method::AicSelect];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fixed => "fixed",
            Method::SmoothAic => "smooth_aic",
            Method::AicSelect => "aic_select",
        }
    }

    fn weights(self, g: &[f64], fits: &[FitResult]) -> Vec<f64> {
        let aic: Vec<f64> = fits.iter().map(|f| f.aic).collect();
        match self {
            Method::Fixed => g.to_vec(),
            Method::SmoothAic => smooth_aic_weights(&aic),
            Method::AicSelect => selection_weights(&aic),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown method '{s}' (expected fixed, smooth_aic or aic_select)"
                ))
            })
    }
}

/// Generator for replicate `replicate` of design `design`: the ChaCha8 stream
/// `design << 32 | replicate` of the key derived from `seed`.
pub fn stream_rng(seed: u64, design: u32, replicate: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(design) << 32) | u64::from(replicate));
    rng
}

/// `y_ij = eta(x_i) + sigma eps_ij`, point by point, `counts[i]` responses at
/// `points[i]`. `sigma2 = 0` gives noiseless data.
pub fn gen_data<R: Rng + ?Sized>(
    family: &ModelFamily,
    truth: &ParamVector,
    counts: &[usize],
    points: &[f64],
    rng: &mut R,
) -> Result<Dataset> {
    if counts.len() != points.len() {
        return Err(Error::invalid(format!(
            "{} counts for {} design points",
            counts.len(),
            points.len()
        )));
    }
    if !(truth.sigma2 >= 0.0) || !truth.sigma2.is_finite() {
        return Err(Error::invalid("truth variance must be nonnegative"));
    }
    // the mean does not involve sigma2, so a zero variance is checked as one
    let mean_params = ParamVector {
        sigma2: 1.0,
        ..truth.clone()
    };
    let sigma = truth.sigma2.sqrt();
    let total: usize = counts.iter().sum();
    let (mut x, mut y) = (Vec::with_capacity(total), Vec::with_capacity(total));
    for (&xi, &ni) in points.iter().zip(counts) {
        let eta = mean_eta(family, xi, &mean_params)?;
        for _ in 0..ni {
            let eps: f64 = rng.sample(StandardNormal);
            x.push(xi);
            y.push(eta + sigma * eps);
        }
    }
    Ok(Dataset::new(x, y)?)
}

/// Estimates of one replicate per requested method; `None` marks an invalid
/// replicate (failed fit or undefined target).
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub estimates: Vec<Option<f64>>,
    pub all_converged: bool,
}

pub fn run_replicate(
    scenario: &Scenario,
    data: &Dataset,
    methods: &[Method],
) -> Replicate {
    let fits = fit_candidates(
        &scenario.family,
        &scenario.candidates,
        data,
        &scenario.nominal,
    );
    let fits: Option<Vec<FitResult>> = fits.into_iter().map(|f| f.ok()).collect();
    let Some(fits) = fits else {
        return Replicate {
            estimates: vec![None; methods.len()],
            all_converged: false,
        };
    };
    let estimates = methods
        .iter()
        .map(|m| {
            let w = m.weights(scenario.scheme.g(), &fits);
            estimate_target(&fits, &w, &scenario.family, &scenario.target)
                .ok()
                .filter(|v| v.is_finite())
        })
        .collect();
    Replicate {
        estimates,
        all_converged: fits.iter().all(|f| f.converged),
    }
}

/// One cell of the MSE table.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub design: String,
    pub method: Method,
    pub truth_id: String,
    pub reps: usize,
    /// Mean of the squared errors over the valid replicates (NaN when none).
    pub mse: f64,
    pub n_invalid: usize,
    /// Replicates in which some candidate fit stopped without converging.
    /// They are kept in the average with their best-found parameters.
    pub n_nonconverged: usize,
}

#[derive(Debug, Clone)]
pub struct StudySpec<'a> {
    pub scenario: &'a Scenario,
    pub designs: &'a [NamedDesign],
    pub methods: &'a [Method],
    pub truths: &'a [Truth],
    pub reps: usize,
    pub seed: u64,
    /// Worker threads; `None` defers to `MAVDESIGN_THREADS`.
    pub threads: Option<usize>,
}

/// Rows ordered by truth, then design, then method. Every number depends
/// only on `(scenario, designs, truths, reps, seed)`: replicate `l` of design
/// `d` always draws from `stream_rng(seed, d, l)` and errors are summed in
/// replicate order.
pub fn run_mse_study(spec: &StudySpec<'_>) -> Result<Vec<MseRow>> {
    if spec.methods.is_empty() {
        return Err(Error::invalid("at least one estimation method is required"));
    }
    if spec.designs.is_empty() {
        return Err(Error::invalid("at least one design is required"));
    }
    if spec.truths.is_empty() {
        return Err(Error::invalid("at least one truth is required"));
    }
    if spec.reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    if spec.reps > u32::MAX as usize || spec.designs.len() > u32::MAX as usize {
        return Err(Error::invalid("too many replicates or designs"));
    }
    let sc = spec.scenario;
    let counts = spec
        .designs
        .iter()
        .map(|d| efficient_round(&d.design, sc.spec.n))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let pool = pool(spec.threads)?;

    let mut rows = Vec::new();
    for truth in spec.truths {
        let mu = eval_target(&sc.target, &sc.family, &truth.params)?;
        for (di, named) in spec.designs.iter().enumerate() {
            let points = named.design.points();
            let reps: Vec<Result<Replicate>> = pool.install(|| {
                (0..spec.reps)
                    .into_par_iter()
                    .map(|l| {
                        let mut rng = stream_rng(spec.seed, di as u32, l as u32);
                        let data = gen_data(&sc.family, &truth.params, &counts[di], points, &mut rng)?;
                        Ok(run_replicate(sc, &data, spec.methods))
                    })
                    .collect()
            });
            let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
            let n_nonconverged = reps.iter().filter(|r| !r.all_converged).count();
            for (mi, &method) in spec.methods.iter().enumerate() {
                let (mut sum, mut valid) = (0.0, 0usize);
                for r in &reps {
                    if let Some(est) = r.estimates[mi] {
                        sum += (est - mu) * (est - mu);
                        valid += 1;
                    }
                }
                rows.push(MseRow {
                    design: named.name.clone(),
                    method,
                    truth_id: truth.id.clone(),
                    reps: spec.reps,
                    mse: if valid > 0 { sum / valid as f64 } else { f64::NAN },
                    n_invalid: spec.reps - valid,
                    n_nonconverged,
                });
            }
        }
    }
    Ok(rows)
}
