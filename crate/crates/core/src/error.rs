use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pattern sequence: {0}")]
    InvalidSequence(String),
    #[error("requested {requested} qubits but layout `{layout}` has {available}")]
    LayoutTooSmall {
        layout: String,
        requested: usize,
        available: usize,
    },
    #[error("invalid circuit specification: {0}")]
    InvalidSpec(String),
    #[error("elision count {k} exceeds the {available} cross-partition gates")]
    ElisionTooLarge { k: usize, available: usize },
    #[error("invalid cut: {0}")]
    InvalidCut(String),
    #[error("qubit index {index} out of range for {n} qubits")]
    QubitOutOfRange { index: usize, n: usize },
    #[error("no gate position at cycle {cycle}, qubit {qubit}")]
    InvalidPosition { cycle: usize, qubit: usize },
    #[error("infeasible angles: sin(delta/4) = {target:.6} is not between |sin(phi/2)| = {phi_term:.6} and |sin(theta)| = {theta_term:.6}")]
    InfeasibleAngles {
        target: f64,
        phi_term: f64,
        theta_term: f64,
    },
    #[error("unknown error metric `{0}`")]
    UnknownMetric(String),
    #[error("state of {n} qubits exceeds the memory cap of {cap} qubits")]
    MemoryCap { n: usize, cap: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::MemoryCap { .. })
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::InfeasibleAngles { .. })
    }
}
