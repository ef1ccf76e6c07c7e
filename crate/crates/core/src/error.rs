use thiserror::Error;

/// Errors raised by operator construction, channel algebra and sequence execution.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operator dimension must be 2 or 4, got {rows}x{cols}")]
    InvalidDimension { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not hermitian (max |A - A^dagger| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max |U^dagger U - 1| = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("operator leaves the zero-quantum subspace: {}", format_entries(.entries))]
    NotDfsPreserving { entries: Vec<(usize, usize, f64)> },

    #[error("dephasing strength must be non-negative, got {0}")]
    NegativeGamma(f64),

    #[error("parameter `{name}` out of range: {value} ({reason})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("Kraus set is incomplete (max |sum E^dagger E - 1| = {deviation:.3e})")]
    Incomplete { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("state has weight {leak:.3e} outside the code subspace")]
    OutsideCodeSpace { leak: f64 },

    #[error("pulse train is not cyclic (deviation from identity up to phase {deviation:.3e})")]
    NonCyclic { deviation: f64 },

    #[error("sequence contains finite-duration pulses; toggling-frame analysis needs ideal rotations")]
    NotIdeal,

    #[error("malformed pulse sequence: {0}")]
    MalformedSequence(String),

    #[error("unknown sequence name `{0}`")]
    UnknownSequence(String),

    #[error("sequence text line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(
        "channel is not unital (deviation {deviation:.3e}); use entanglement_fidelity or coherence_metric instead"
    )]
    NonUnital { deviation: f64 },

    #[error("channel is not trace preserving (deviation {deviation:.3e})")]
    NotTracePreserving { deviation: f64 },

    #[error("process responses are inconsistent with a linear map: {0}")]
    Inconsistent(String),
}

fn format_entries(entries: &[(usize, usize, f64)]) -> String {
    entries
        .iter()
        .map(|(r, c, m)| format!("({r},{c})={m:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
