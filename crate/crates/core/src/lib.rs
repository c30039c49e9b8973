//! Parity-symmetric radioactive random number generation.
//!
//! The crate covers the whole pipeline: the record formats of a detector run
//! ([`trace`]), a seeded model of source and detector ([`simulator`]),
//! calibration statistics ([`estimation`]), min-entropy accounting
//! ([`entropy`]), Toeplitz extraction ([`extractor`]) and a small dense
//! linear-algebra oracle that checks the parity-symmetry argument on concrete
//! states ([`proofcheck`]).
//!
//! The numerical code is generic over [`Real`]; the aliases below fix it to
//! `f64`, which is what the tolerances in the checks are written for.

pub mod entropy;
pub mod estimation;
pub mod extractor;
pub mod formats;
pub mod sanity;
pub mod scalar;
pub mod simulator;
pub mod trace;

pub use scalar::Real;

pub mod proofcheck;

pub type DensityMatrix = proofcheck::DensityMatrix<f64>;
pub type ParityModel = proofcheck::ParityModel<f64>;
pub type MeasurementChain = proofcheck::MeasurementChain<f64>;
pub type ChainEnsemble = proofcheck::ChainEnsemble<f64>;
pub type CQDistribution = entropy::CQDistribution<f64>;
