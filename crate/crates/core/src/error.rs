use alloc::string::String;

/// Errors raised by the design, criterion and fitting routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("design space [{lower}, {upper}] is invalid")]
    InvalidSpace { lower: f64, upper: f64 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("point {x} lies outside the design space [{lower}, {upper}]")]
    OutsideSpace { x: f64, lower: f64, upper: f64 },

    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),

    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("candidate index {index} is out of range 1..={q}")]
    SubsetIndex { index: usize, q: usize },

    #[error("invalid averaging scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("normalized effect is degenerate (|eta(b) - eta(a)| = {0:e})")]
    DegenerateEffect(f64),

    #[error("the mean is flat at the effect-level crossing x = {x}")]
    FlatCrossing { x: f64 },

    #[error("no grid point reaches the effect level {alpha}")]
    NoCrossing { alpha: f64 },

    #[error("singular information for candidate {candidate} at design with {support} support points (condition {condition:e})")]
    SingularInformation {
        candidate: String,
        support: usize,
        condition: f64,
    },

    #[error("prior atom {atom}: {source}")]
    Atom {
        atom: usize,
        #[source]
        source: alloc::boxed::Box<DesignError>,
    },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("sample size {n} is smaller than the number of support points {k}")]
    SampleTooSmall { n: usize, k: usize },

    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),

    #[error("every optimizer start failed (singular information at all starts)")]
    AllStartsFailed,

    #[error("empty dataset")]
    EmptyDataset,
}

impl DesignError {
    pub(crate) fn at_atom(self, atom: usize) -> Self {
        match self {
            e @ DesignError::Atom { .. } => e,
            e => DesignError::Atom {
                atom,
                source: alloc::boxed::Box::new(e),
            },
        }
    }
}

pub type Result<T, E = DesignError> = core::result::Result<T, E>;
