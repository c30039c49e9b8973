//! Scalar abstraction for the numerical parts of the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the entropy arithmetic and the proof oracle.
///
/// Tolerances are expressed per scalar type so the same identity checks run
/// in `f32` with a looser budget than in `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Budget for exact algebraic identities (Hermiticity, covariance, equal
    /// probabilities).
    const IDENTITY_TOL: f64;
    /// Budget for results that pass through an eigen- or singular-value
    /// decomposition.
    const SPECTRAL_TOL: f64;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn identity_tol() -> Self {
        Self::lit(Self::IDENTITY_TOL)
    }

    fn spectral_tol() -> Self {
        Self::lit(Self::SPECTRAL_TOL)
    }
}

impl Real for f64 {
    const IDENTITY_TOL: f64 = 1e-12;
    const SPECTRAL_TOL: f64 = 1e-10;
}

impl Real for f32 {
    const IDENTITY_TOL: f64 = 1e-5;
    const SPECTRAL_TOL: f64 = 1e-4;
}
