//! Construction and verification of a generalized Q-operator for the
//! six-vertex transfer matrix on finite chains.
//!
//! The library builds the Q-operator two independent ways: as a regularized
//! trace of a product of two-row monodromy weights over an infinite
//! oscillator-like module (truncated to a formal delta series in a spectral
//! variable), and from an explicit closed-form phase formula. The harness
//! compares the two, checks the T-Q functional relation, commutation,
//! fusion, and the supporting representation-theoretic identities, all at
//! chain lengths small enough to run on a desk machine.

pub mod harness;
pub mod intertwine;
pub mod laurent;
pub mod qtransfer;
pub mod repmod;

use thiserror::Error;

/// Crate-wide error type. Construction errors are distinguished from
/// numerical failures: a failed residual check is a report, not an `Err`.
#[derive(Debug, Error)]
pub enum QopError {
    #[error("shift base q must be nonzero")]
    ZeroShiftBase,

    #[error("spectral ratio sits on the pole of the R-matrix (q^2 * zeta = 1)")]
    RMatrixPole,

    #[error("parameter degeneration: {0}")]
    Degenerate(String),

    #[error("unknown normalization scheme `{0}`")]
    UnknownScheme(String),

    #[error("scheme `{0}` is only defined for s1 = s2 = 0")]
    SchemeRequiresZeroS(String),

    #[error("intertwiner solution space has dimension {0}, expected 1")]
    IntertwinerNotUnique(usize),

    #[error("module dimensions {0}x{1} exceed the supported solver size")]
    IntertwinerTooLarge(usize, usize),

    #[error("oscillator constant check needs s1 = 0 or s2 = 0, got s1 = {s1}, s2 = {s2}")]
    OscillatorBranch { s1: String, s2: String },

    #[error("generator {0} does not act on the Borel module (lowering half is absent)")]
    NotBorelGenerator(String),

    #[error("chain length {0} out of range for this operation (max {1})")]
    ChainTooLong(usize, usize),

    #[error("spin sector {0} is empty or invalid for chain length {1}")]
    BadSector(i64, usize),

    #[error("fused auxiliary weight {0} unsupported (expected 0, 1 or 2)")]
    BadFusedWeight(usize),

    #[error("functional-relation shift hits a root-of-unity guard: {0}")]
    RootOfUnityGuard(String),

    #[error("operator kind `{0}` unknown; expected T, Q-generic, Q-explicit or Q-baxter")]
    UnknownOperatorKind(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("sampling failed to satisfy non-degeneracy guards after {0} redraws")]
    SamplingExhausted(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QopError>;
