use num_complex::Complex;
use rand::Rng;

use super::linalg::{
    self, c, hermiticity_defect, hermitian_eigenvalues, lift_a, max_abs, partial_trace_a, trace_norm,
    CMatrix,
};
use super::ProofError;
use crate::scalar::Real;

/// Largest total dimension `d_A · d_E` the oracle accepts.
pub const MAX_DIM: usize = 64;

/// A (possibly sub-normalized) state on `A ⊗ E`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(m: CMatrix<T>) -> Result<Self, ProofError> {
        if !m.is_square() {
            return Err(ProofError::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.nrows() == 0 || m.nrows() > MAX_DIM {
            return Err(ProofError::DimensionTooLarge { dim: m.nrows(), max: MAX_DIM });
        }
        let herm = hermiticity_defect(&m);
        if herm > T::identity_tol() {
            return Err(ProofError::NotHermitian { defect: herm.to_f64_lossy() });
        }
        let min_eig = hermitian_eigenvalues(&m).min();
        if min_eig < -T::spectral_tol() {
            return Err(ProofError::NotPositive { min_eigenvalue: min_eig.to_f64_lossy() });
        }
        let tr = m.trace().re;
        if tr > T::one() + T::identity_tol() {
            return Err(ProofError::TraceTooLarge { trace: tr.to_f64_lossy() });
        }
        Ok(Self { m })
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix<T>) -> Self {
        Self { m }
    }

    pub fn maximally_mixed(d: usize) -> Result<Self, ProofError> {
        if d == 0 || d > MAX_DIM {
            return Err(ProofError::DimensionTooLarge { dim: d, max: MAX_DIM });
        }
        Ok(Self { m: linalg::identity::<T>(d) / c::<T>(d as f64, 0.0) })
    }

    /// `|ψ⟩⟨ψ|` for a normalized vector.
    pub fn pure(psi: &[Complex<T>]) -> Result<Self, ProofError> {
        let v = nalgebra::DVector::from_column_slice(psi);
        Self::new(&v * v.adjoint())
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn trace(&self) -> T {
        self.m.trace().re
    }
}

/// Parity operator and direction projectors on the A factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityModel<T: Real> {
    parity: CMatrix<T>,
    e_up: CMatrix<T>,
    e_down: CMatrix<T>,
    d_e: usize,
}

/// Residual of each defining identity of a [`ParityModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelResiduals<T> {
    pub involution: T,
    pub unitarity: T,
    pub completeness: T,
    pub orthogonality: T,
    pub projector: T,
    pub covariance: T,
}

impl<T: Real> ModelResiduals<T> {
    pub fn max_structural(&self) -> T {
        self.involution
            .max(self.unitarity)
            .max(self.completeness)
            .max(self.orthogonality)
            .max(self.projector)
    }
}

impl<T: Real> ParityModel<T> {
    /// Validates every identity including covariance `P E↑ P = E↓`.
    pub fn new(parity: CMatrix<T>, e_up: CMatrix<T>, e_down: CMatrix<T>, d_e: usize) -> Result<Self, ProofError> {
        let model = Self::without_covariance(parity, e_up, e_down, d_e)?;
        let r = model.residuals();
        if r.covariance > T::identity_tol() {
            return Err(ProofError::NotCovariant { violation: r.covariance.to_f64_lossy() });
        }
        Ok(model)
    }

    /// Validates the structural identities only. Used to build the
    /// deliberately broken detector pairs that the identity suite must flag.
    pub fn without_covariance(
        parity: CMatrix<T>,
        e_up: CMatrix<T>,
        e_down: CMatrix<T>,
        d_e: usize,
    ) -> Result<Self, ProofError> {
        let d_a = parity.nrows();
        for m in [&parity, &e_up, &e_down] {
            if !m.is_square() {
                return Err(ProofError::NotSquare { rows: m.nrows(), cols: m.ncols() });
            }
            if m.nrows() != d_a {
                return Err(ProofError::DimensionMismatch { expected: d_a, found: m.nrows() });
            }
        }
        if d_a == 0 || d_e == 0 || d_a * d_e > MAX_DIM {
            return Err(ProofError::DimensionTooLarge { dim: d_a * d_e, max: MAX_DIM });
        }
        let model = Self { parity, e_up, e_down, d_e };
        let r = model.residuals();
        let checks = [
            ("P^2 = I", r.involution),
            ("P unitary", r.unitarity),
            ("E_up + E_down = I", r.completeness),
            ("E_up E_down = 0", r.orthogonality),
            ("E_w projectors", r.projector),
        ];
        for (identity, v) in checks {
            if v > T::identity_tol() {
                return Err(ProofError::InvalidModel { identity, violation: v.to_f64_lossy() });
            }
        }
        Ok(model)
    }

    /// `P = σˣ ⊗ I`, `E↑ = |0⟩⟨0| ⊗ I` on `A = A₁ ⊗ A₂` with `d_A` even.
    pub fn standard(d_a: usize, d_e: usize) -> Result<Self, ProofError> {
        if d_a == 0 || !d_a.is_multiple_of(2) {
            return Err(ProofError::OddDimension { d_a });
        }
        let rest = linalg::identity::<T>(d_a / 2);
        let parity = linalg::pauli_x::<T>().kronecker(&rest);
        let up = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let e_up = up.kronecker(&rest);
        let e_down = linalg::identity::<T>(d_a) - &e_up;
        Self::new(parity, e_up, e_down, d_e)
    }

    /// The standard model conjugated by a random unitary on A.
    pub fn random<R: Rng + ?Sized>(d_a: usize, d_e: usize, rng: &mut R) -> Result<Self, ProofError> {
        let base = Self::standard(d_a, d_e)?;
        let u = linalg::random_unitary::<T, R>(d_a, rng);
        Ok(base.conjugated(&u))
    }

    /// `X ↦ U X U†` applied to every operator.
    pub fn conjugated(&self, u: &CMatrix<T>) -> Self {
        let conj = |m: &CMatrix<T>| u * m * u.adjoint();
        Self {
            parity: conj(&self.parity),
            e_up: conj(&self.e_up),
            e_down: conj(&self.e_down),
            d_e: self.d_e,
        }
    }

    pub fn residuals(&self) -> ModelResiduals<T> {
        let id = linalg::identity::<T>(self.d_a());
        let p = &self.parity;
        ModelResiduals {
            involution: max_abs(&(p * p - &id)),
            unitarity: max_abs(&(p.adjoint() * p - &id)),
            completeness: max_abs(&(&self.e_up + &self.e_down - &id)),
            orthogonality: max_abs(&(&self.e_up * &self.e_down)),
            projector: max_abs(&(&self.e_up * &self.e_up - &self.e_up))
                .max(max_abs(&(&self.e_down * &self.e_down - &self.e_down)))
                .max(hermiticity_defect(&self.e_up))
                .max(hermiticity_defect(&self.e_down)),
            covariance: max_abs(&(p * &self.e_up * p - &self.e_down)),
        }
    }

    pub fn d_a(&self) -> usize {
        self.parity.nrows()
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn dim(&self) -> usize {
        self.d_a() * self.d_e
    }

    pub fn parity(&self) -> &CMatrix<T> {
        &self.parity
    }

    pub fn e_up(&self) -> &CMatrix<T> {
        &self.e_up
    }

    pub fn e_down(&self) -> &CMatrix<T> {
        &self.e_down
    }

    /// `E = E↑ − E↓`.
    pub fn direction_operator(&self) -> CMatrix<T> {
        &self.e_up - &self.e_down
    }

    /// `(P ⊗ I) ρ (P ⊗ I)`.
    pub fn flip(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let p = lift_a(&self.parity, self.d_e);
        &p * rho * &p
    }

    /// `(ρ + PρP) / 2`.
    pub fn symmetrize(&self, rho: &DensityMatrix<T>) -> Result<DensityMatrix<T>, ProofError> {
        self.check_dim(rho)?;
        let m = (rho.matrix() + self.flip(rho.matrix())) * c::<T>(0.5, 0.0);
        Ok(DensityMatrix::from_matrix_unchecked(m))
    }

    fn check_dim(&self, rho: &DensityMatrix<T>) -> Result<(), ProofError> {
        if rho.dim() != self.dim() {
            return Err(ProofError::DimensionMismatch { expected: self.dim(), found: rho.dim() });
        }
        Ok(())
    }
}

/// Trace distance `½‖PρP − ρ‖₁`; zero exactly when ρ is parity invariant.
pub fn check_parity_invariance<T: Real>(rho: &DensityMatrix<T>, model: &ParityModel<T>) -> Result<T, ProofError> {
    model.check_dim(rho)?;
    Ok(invariance_violation(rho.matrix(), model))
}

pub(crate) fn invariance_violation<T: Real>(rho: &CMatrix<T>, model: &ParityModel<T>) -> T {
    trace_norm(&(model.flip(rho) - rho)) * T::lit(0.5)
}

/// Outcome statistics of a single direction measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionMeasurement<T: Real> {
    pub p_up: T,
    pub p_down: T,
    /// `tr_A((E↑ ⊗ I) ρ)`, sub-normalized.
    pub rho_e_up: CMatrix<T>,
    pub rho_e_down: CMatrix<T>,
}

impl<T: Real> DirectionMeasurement<T> {
    pub fn probability_gap(&self) -> T {
        (self.p_up - self.p_down).abs()
    }

    /// `‖ρ_E↑ − ρ_E↓‖₁`.
    pub fn eve_distance(&self) -> T {
        trace_norm(&(&self.rho_e_up - &self.rho_e_down))
    }
}

/// Measures the arrow direction on a parity-invariant state.
///
/// Rejects inputs that are not invariant, then confirms equal outcome
/// probabilities and identical Eve marginals.
pub fn measure_direction<T: Real>(
    rho: &DensityMatrix<T>,
    model: &ParityModel<T>,
) -> Result<DirectionMeasurement<T>, ProofError> {
    let v = check_parity_invariance(rho, model)?;
    if v > T::identity_tol() {
        return Err(ProofError::NotParityInvariant { violation: v.to_f64_lossy() });
    }
    let m = measure_direction_unchecked(rho, model)?;
    let gap = m.probability_gap().max(m.eve_distance());
    if gap > T::identity_tol() {
        return Err(ProofError::NotCovariant { violation: gap.to_f64_lossy() });
    }
    Ok(m)
}

/// Same computation without the hypothesis checks.
pub fn measure_direction_unchecked<T: Real>(
    rho: &DensityMatrix<T>,
    model: &ParityModel<T>,
) -> Result<DirectionMeasurement<T>, ProofError> {
    model.check_dim(rho)?;
    let (d_a, d_e) = (model.d_a(), model.d_e());
    let up = lift_a(model.e_up(), d_e) * rho.matrix();
    let down = lift_a(model.e_down(), d_e) * rho.matrix();
    Ok(DirectionMeasurement {
        p_up: up.trace().re,
        p_down: down.trace().re,
        rho_e_up: partial_trace_a(&up, d_a, d_e),
        rho_e_down: partial_trace_a(&down, d_a, d_e),
    })
}

/// Random symmetrized state `(ρ + PρP)/2` of rank at most `2·rank`.
pub fn random_invariant_state<T: Real, R: Rng + ?Sized>(
    model: &ParityModel<T>,
    rank: usize,
    rng: &mut R,
) -> DensityMatrix<T> {
    let rho = DensityMatrix::from_matrix_unchecked(linalg::random_state::<T, R>(model.dim(), rank, rng));
    model.symmetrize(&rho).expect("dimension taken from model")
}
