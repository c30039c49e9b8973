//! Finite-dimensional numerical checks of the parity-symmetry argument.
//!
//! States live on `A ⊗ E`, where `A` holds the source and detectors and
//! `E` is the adversary. Everything is dense and small (total dimension at
//! most 64); the aim is to confirm or falsify each identity the argument
//! relies on, not to scale.

pub mod chain;
pub mod jordan;
pub mod linalg;
pub mod model;
pub mod suite;

use thiserror::Error;

pub use chain::{
    enumerate_chain, enumerate_chain_unchecked, random_classical_eve_state, run_chain, single_event_entropy,
    ChainEnsemble, KrausMap, MeasurementChain, SingleEventEntropy,
};
pub use jordan::{jordan_decompose, JordanBasis};
pub use linalg::CMatrix;
pub use model::{
    check_parity_invariance, measure_direction, measure_direction_unchecked, random_invariant_state,
    DensityMatrix, DirectionMeasurement, ModelResiduals, ParityModel, MAX_DIM,
};
pub use suite::{run_identity_suite, IdentityCheck, Injection, SuiteConfig, SuiteReport};

#[derive(Debug, Error, PartialEq)]
pub enum ProofError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {dim} outside 1..={max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("A-side dimension {d_a} must be even")]
    OddDimension { d_a: usize },
    #[error("state is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("state is not positive (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("state trace {trace} exceeds 1")]
    TraceTooLarge { trace: f64 },
    #[error("model identity {identity} violated by {violation:e}")]
    InvalidModel { identity: &'static str, violation: f64 },
    #[error("state is not parity invariant (trace distance {violation:e})")]
    NotParityInvariant { violation: f64 },
    #[error("parity covariance violated by {violation:e}")]
    NotCovariant { violation: f64 },
    #[error("instrument is not trace preserving (defect {violation:e})")]
    NotTracePreserving { violation: f64 },
    #[error("parity invariance broken at the start of bin {bin} (trace distance {violation:e})")]
    InvarianceBroken { bin: usize, violation: f64 },
    #[error("enumeration over {n} bins outside the supported 1..={max}")]
    ChainTooLong { n: usize, max: usize },
    #[error("Eve's states differ within a reduced-trace fiber (spread {spread:e})")]
    FiberStatesDiffer { spread: f64 },
    #[error("counted {counted} bits but the classical table gives {classical}")]
    ClassicalMismatch { counted: f64, classical: f64 },
    #[error("classical table: {0}")]
    Classical(String),
}
