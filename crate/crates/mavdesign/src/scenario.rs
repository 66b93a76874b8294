//! Scenario and design files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mavdesign_core::{
    AveragingScheme, Candidate, CandidateSubset, Design, DesignSpace, MavProblem,
    Misspecification, ModelFamily, ParamVector, PriorAtom, PriorSpec, TargetFunctional,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Tolerance on `sum g = 1` and on prior weights.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub family: String,
    pub design_space: [f64; 2],
    pub n: usize,
    pub delta_over_sqrt_n: Vec<f64>,
    pub nominal: NominalFile,
    pub candidates: Vec<CandidateFile>,
    pub g_weights: Vec<f64>,
    pub target: TargetFile,
    pub prior: PriorFile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truths: Vec<TruthFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalFile {
    pub sigma2: f64,
    pub vartheta: Vec<f64>,
    pub gamma0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFile {
    #[serde(rename = "S")]
    pub s: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum TargetFile {
    #[serde(rename = "ED")]
    Ed { alpha: f64 },
    #[serde(rename = "AUC")]
    Auc { region: [f64; 2] },
    #[serde(rename = "POINT")]
    Point { x0: f64 },
}

/// Either named product grids around the nominal values or explicit atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomFile>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub sigma2: f64,
    pub vartheta: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomFile {
    pub params: ParamsFile,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_over_sqrt_n: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub sigma2: f64,
    pub vartheta: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub id: String,
    pub params: ParamVector,
}

/// A validated scenario with its model objects resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioFile,
    pub family: ModelFamily,
    pub space: DesignSpace,
    pub scheme: AveragingScheme,
    pub candidates: Vec<Candidate>,
    pub prior: PriorSpec,
    pub target: TargetFunctional,
    pub nominal: ParamVector,
    pub truths: Vec<Truth>,
    pub problem: MavProblem,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.space == other.space
            && self.scheme == other.scheme
            && self.prior == other.prior
            && self.target == other.target
            && self.nominal == other.nominal
            && self.truths == other.truths
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::Schema {
            path: origin.to_path_buf(),
            field,
            message: e.into_inner().to_string(),
        }
    })
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    Scenario::from_json(&read_text(path)?, path)
}

struct Ctx<'a> {
    origin: &'a Path,
}

impl Ctx<'_> {
    fn err(&self, field: impl Into<String>, message: impl ToString) -> Error {
        Error::Schema {
            path: self.origin.to_path_buf(),
            field: field.into(),
            message: message.to_string(),
        }
    }

    fn len(&self, field: &str, got: usize, expected: usize) -> Result<()> {
        if got != expected {
            return Err(self.err(field, format!("expected {expected} values, got {got}")));
        }
        Ok(())
    }
}

/// Canonical parameter index of a grid name: `sigma2`, `vartheta<j>` or `gamma<i>`.
fn grid_index(name: &str, p: usize, q: usize) -> Option<usize> {
    if name == "sigma2" {
        return Some(0);
    }
    if let Some(j) = name.strip_prefix("vartheta").and_then(|s| s.parse::<usize>().ok()) {
        return (1..p).contains(&j).then_some(j);
    }
    if let Some(i) = name.strip_prefix("gamma").and_then(|s| s.parse::<usize>().ok()) {
        return (1..=q).contains(&i).then_some(p - 1 + i);
    }
    None
}

impl Scenario {
    /// Parses and validates scenario JSON; `origin` labels error messages.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let spec: ScenarioFile = parse_json(text, origin)?;
        Self::from_spec(spec, origin)
    }

    pub fn from_spec(spec: ScenarioFile, origin: &Path) -> Result<Self> {
        let cx = Ctx { origin };
        let family = ModelFamily::builtin(&spec.family).ok_or_else(|| {
            cx.err(
                "family",
                format!(
                    "unknown family '{}' (expected sigmoid_emax or logistic4)",
                    spec.family
                ),
            )
        })?;
        let (p, q) = (family.p(), family.q());
        let space = DesignSpace::new(spec.design_space[0], spec.design_space[1])
            .map_err(|e| cx.err("design_space", e))?;
        if spec.n == 0 {
            return Err(cx.err("n", "sample size must be positive"));
        }

        let nom = &spec.nominal;
        cx.len("nominal.vartheta", nom.vartheta.len(), p - 1)?;
        cx.len("nominal.gamma0", nom.gamma0.len(), q)?;
        let family = family
            .with_gamma0(nom.gamma0.clone())
            .map_err(|e| cx.err("nominal.gamma0", e))?;
        let nominal = ParamVector::new(nom.sigma2, nom.vartheta.clone(), nom.gamma0.clone());
        family
            .check_params(&nominal)
            .map_err(|e| cx.err("nominal", e))?;

        cx.len("delta_over_sqrt_n", spec.delta_over_sqrt_n.len(), q)?;
        let misspec = Misspecification::from_scaled(&spec.delta_over_sqrt_n, spec.n)
            .map_err(|e| cx.err("delta_over_sqrt_n", e))?;

        if spec.candidates.is_empty() {
            return Err(cx.err("candidates", "at least one candidate is required"));
        }
        let subsets = spec
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                CandidateSubset::new(c.s.clone(), q).map_err(|e| cx.err(format!("candidates[{i}].S"), e))
            })
            .collect::<Result<Vec<_>>>()?;

        let g = &spec.g_weights;
        cx.len("g_weights", g.len(), subsets.len())?;
        if g.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(cx.err("g_weights", "g must be nonnegative"));
        }
        let total: f64 = g.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(cx.err("g_weights", format!("g must sum to 1 (got {total})")));
        }
        let scheme =
            AveragingScheme::new(subsets, g.clone()).map_err(|e| cx.err("candidates", e))?;
        let candidates = scheme
            .build(&family)
            .map_err(|e| cx.err("candidates", e))?;

        let target = match spec.target {
            TargetFile::Ed { alpha } => TargetFunctional::ed(alpha, space),
            TargetFile::Auc { region } => TargetFunctional::auc(region[0], region[1], space),
            TargetFile::Point { x0 } => TargetFunctional::point(x0, space),
        }
        .map_err(|e| cx.err("target", e))?;

        let prior = match (&spec.prior.grids, &spec.prior.atoms) {
            (Some(grids), None) => {
                let mut indexed = Vec::with_capacity(grids.len());
                for (name, values) in grids {
                    let index = grid_index(name, p, q).ok_or_else(|| {
                        cx.err(
                            format!("prior.grids.{name}"),
                            "unknown parameter (expected sigma2, vartheta<j> or gamma<i>)",
                        )
                    })?;
                    if values.is_empty() {
                        return Err(cx.err(format!("prior.grids.{name}"), "empty grid"));
                    }
                    indexed.push((index, values.clone()));
                }
                // canonical parameter order, first grid outermost
                indexed.sort_by_key(|(i, _)| *i);
                PriorSpec::product_grid(&nominal, &indexed, misspec)
                    .map_err(|e| cx.err("prior.grids", e))?
            }
            (None, Some(atoms)) => {
                if atoms.is_empty() {
                    return Err(cx.err("prior.atoms", "no atoms"));
                }
                let mut out = Vec::with_capacity(atoms.len());
                for (i, a) in atoms.iter().enumerate() {
                    let field = format!("prior.atoms[{i}]");
                    cx.len(&format!("{field}.params.vartheta"), a.params.vartheta.len(), p - 1)?;
                    cx.len(&format!("{field}.params.gamma"), a.params.gamma.len(), q)?;
                    let params = ParamVector::new(
                        a.params.sigma2,
                        a.params.vartheta.clone(),
                        a.params.gamma.clone(),
                    );
                    family
                        .check_params(&params)
                        .map_err(|e| cx.err(format!("{field}.params"), e))?;
                    let misspec = match &a.delta_over_sqrt_n {
                        Some(d) => {
                            cx.len(&format!("{field}.delta_over_sqrt_n"), d.len(), q)?;
                            Some(
                                Misspecification::from_scaled(d, spec.n)
                                    .map_err(|e| cx.err(format!("{field}.delta_over_sqrt_n"), e))?,
                            )
                        }
                        None => None,
                    };
                    out.push(PriorAtom {
                        params,
                        weight: a.weight,
                        misspec,
                    });
                }
                PriorSpec::new(out, misspec).map_err(|e| cx.err("prior.atoms", e))?
            }
            _ => {
                return Err(cx.err("prior", "exactly one of 'grids' or 'atoms' is required"));
            }
        };

        let mut truths: Vec<Truth> = Vec::with_capacity(spec.truths.len());
        for (i, t) in spec.truths.iter().enumerate() {
            let field = format!("truths[{i}]");
            cx.len(&format!("{field}.vartheta"), t.vartheta.len(), p - 1)?;
            cx.len(&format!("{field}.gamma"), t.gamma.len(), q)?;
            let params = ParamVector::new(t.sigma2, t.vartheta.clone(), t.gamma.clone());
            family
                .check_params(&params)
                .map_err(|e| cx.err(field.clone(), e))?;
            let id = t.id.clone().unwrap_or_else(|| format!("truth{}", i + 1));
            if truths.iter().any(|u| u.id == id) {
                return Err(cx.err(format!("{field}.id"), format!("duplicate truth id '{id}'")));
            }
            truths.push(Truth { id, params });
        }

        let problem = MavProblem::new(&scheme, &family, &prior, &target)?;
        Ok(Self {
            spec,
            family,
            space,
            scheme,
            candidates,
            prior,
            target,
            nominal,
            truths,
            problem,
        })
    }

    /// Pretty JSON of the scenario as written in a file.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("scenario serializes")
    }

    /// SHA-256 of the compact JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.spec).expect("scenario serializes");
        hex(&Sha256::digest(&bytes))
    }

    pub fn candidate(&self, i: usize) -> &Candidate {
        &self.candidates[i]
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DesignFile {
    pub fn from_design(design: &Design) -> Self {
        Self {
            points: design.points().to_vec(),
            weights: design.weights().to_vec(),
        }
    }
}

/// A design together with the label used in reports (the file stem).
#[derive(Debug, Clone, PartialEq)]
pub struct NamedDesign {
    pub name: String,
    pub design: Design,
}

pub fn load_design(path: impl AsRef<Path>, space: &DesignSpace) -> Result<Design> {
    let path = path.as_ref();
    let file: DesignFile = parse_json(&read_text(path)?, path)?;
    Design::new(file.points, file.weights, space).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        field: ".".into(),
        message: e.to_string(),
    })
}

/// Loads a design without a scenario; the space is the hull of its points
/// (widened to unit length when they coincide).
pub fn load_design_free(path: impl AsRef<Path>) -> Result<Design> {
    let path = path.as_ref();
    let file: DesignFile = parse_json(&read_text(path)?, path)?;
    let schema = |message: String| Error::Schema {
        path: path.to_path_buf(),
        field: ".".into(),
        message,
    };
    if file.points.iter().any(|x| !x.is_finite()) || file.points.is_empty() {
        return Err(schema("points must be finite and nonempty".into()));
    }
    let lo = file.points.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = file.points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let space = DesignSpace::new(lo, hi.max(lo + 1.0)).map_err(|e| schema(e.to_string()))?;
    Design::new(file.points, file.weights, &space).map_err(|e| schema(e.to_string()))
}

pub fn load_named_design(path: impl AsRef<Path>, space: &DesignSpace) -> Result<NamedDesign> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(NamedDesign {
        name,
        design: load_design(path, space)?,
    })
}

/// Pretty JSON with shortest round-trip decimals.
pub fn design_json(design: &Design) -> String {
    let mut s = serde_json::to_string_pretty(&DesignFile::from_design(design))
        .expect("design serializes");
    s.push('\n');
    s
}

pub fn write_design(path: impl AsRef<Path>, design: &Design) -> Result<PathBuf> {
    let path = path.as_ref();
    crate::report::ensure_parent(path)?;
    fs::write(path, design_json(design)).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
