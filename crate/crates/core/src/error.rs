use thiserror::Error;

/// Errors raised by graph construction and the backward pass.
#[derive(Debug, Error)]
pub enum TapeError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("domain violation in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("row index {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("axis {axis} invalid for rank-{rank} tensor")]
    BadAxis { axis: usize, rank: usize },
    #[error("shape {shape:?} does not hold {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("{op} has no input-jacobian rule; only affine, scale and sin stages are supported")]
    UnsupportedDualStage { op: &'static str },
    #[error("operation {op} expects {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("operation {op} requires attribute {attr}")]
    MissingAttr { op: &'static str, attr: &'static str },
}

/// Errors raised by the data generator and point-cloud I/O.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("surface warp folds over (det J = {det:.6} <= 0) at sample {index}")]
    FoldedWarp { det: f64, index: usize },
    #[error("could not draw fold-free deformation parameters after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("viewing direction must be unit length, got |v| = {norm}")]
    NonUnitView { norm: f64 },
    #[error("empty point set passed to {op}")]
    EmptyInput { op: &'static str },
    #[error("{op} needs at least {min} points, got {got}")]
    TooFewPoints {
        op: &'static str,
        got: usize,
        min: usize,
    },
    #[error("spherical masking removed every point")]
    AllPointsMasked,
    #[error("sequence length {length} is shorter than window {window}")]
    SequenceTooShort { length: usize, window: usize },
    #[error("ply parse error at line {line}: {detail}")]
    PlyParse { line: usize, detail: String },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Errors raised by checkpoint serialization.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected \"PCSD\", got {got:?}")]
    BadMagic { got: [u8; 4] },
    #[error("unsupported checkpoint format version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("tensor {name} has shape {shape:?} but {len} payload values")]
    TensorMismatch {
        name: String,
        shape: Vec<usize>,
        len: usize,
    },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Errors raised while loading or validating a run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Umbrella error for pipeline-level operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training diverged: non-finite loss persisted for {steps} steps")]
    Diverged { steps: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
