use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field leaves the domain of `{functional}`: |u| = {value:.6} at index {index}")]
    Domain {
        functional: String,
        index: usize,
        value: f64,
    },

    #[error("zero is not a critical point: ||gradient(0)|| = {norm:.3e}")]
    NotCritical { norm: f64 },

    #[error("operator is not symmetric: ||M^T - M|| / ||M|| = {asymmetry:.3e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("inadmissible forcing: {0}")]
    InadmissibleForcing(String),

    #[error("horizon too short: tail bound {tail:.3e} exceeds tolerance {tol:.3e}")]
    HorizonTooShort { tail: f64, tol: f64 },

    #[error("Picard iteration is not contracting (ratio {ratio:.3}); try a smaller |a| than {norm_a:.3}")]
    Divergence { norm_a: f64, ratio: f64 },

    #[error("Picard iteration did not reach tolerance after {iterations} iterations (last distance {distance:.3e})")]
    NoConvergence { iterations: usize, distance: f64 },

    #[error("sampling too sparse: {0}")]
    Resolution(String),

    #[error("Newton iteration stagnated at residual {residual:.3e}: neighborhood exceeded")]
    NeighborhoodExceeded { residual: f64 },

    #[error("inadmissible arrival function: {0}")]
    InadmissibleArrival(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("fit window error: {0}")]
    Window(String),

    #[error("differential inequality violated by {violation:.3e} at s = {s:.4}: generator bug")]
    GeneratorBug { s: f64, violation: f64 },

    #[error("counterexample: neither trichotomy case holds ({0})")]
    CounterexampleAlarm(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
