//! Simultaneous normal form of the direction observable and parity.

use super::linalg::{self, c, frobenius, CMatrix};
use super::model::ParityModel;
use super::ProofError;
use crate::scalar::Real;

/// Basis change `U` with `U†EU = σᶻ ⊗ I_m` and `U†PU = σˣ ⊗ I_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanBasis<T: Real> {
    pub unitary: CMatrix<T>,
    /// Number of two-dimensional blocks, `d_A / 2`.
    pub blocks: usize,
    /// `‖U (σᶻ⊗I) U† − E‖_F`.
    pub direction_error: T,
    /// `‖U (σˣ⊗I) U† − P‖_F`.
    pub parity_error: T,
}

impl<T: Real> JordanBasis<T> {
    pub fn max_error(&self) -> T {
        self.direction_error.max(self.parity_error)
    }
}

/// Decomposes `(E, P)` into qubit blocks.
///
/// The first `m` basis vectors span the range of `E↑`; the last `m` are
/// their images under `P`, which covariance places in the range of `E↓`.
pub fn jordan_decompose<T: Real>(model: &ParityModel<T>) -> Result<JordanBasis<T>, ProofError> {
    let d_a = model.d_a();
    let r = model.residuals();
    let e = model.direction_operator();
    let id = linalg::identity::<T>(d_a);
    let e_square = linalg::max_abs(&(&e * &e - &id));
    for (identity, v) in [("P^2 = I", r.involution), ("E^2 = I", e_square)] {
        if v > T::identity_tol() {
            return Err(ProofError::InvalidModel { identity, violation: v.to_f64_lossy() });
        }
    }
    if r.covariance > T::identity_tol() {
        return Err(ProofError::NotCovariant { violation: r.covariance.to_f64_lossy() });
    }
    if !d_a.is_multiple_of(2) {
        return Err(ProofError::OddDimension { d_a });
    }
    let m = d_a / 2;

    let eig = ((model.e_up() + model.e_up().adjoint()) * c::<T>(0.5, 0.0)).symmetric_eigen();
    let half = T::lit(0.5);
    let range: Vec<usize> = (0..d_a).filter(|&i| eig.eigenvalues[i] > half).collect();
    if range.len() != m {
        return Err(ProofError::InvalidModel {
            identity: "rank E_up = d_A / 2",
            violation: (range.len() as f64 - m as f64).abs(),
        });
    }
    let mut u = CMatrix::zeros(d_a, d_a);
    for (k, &i) in range.iter().enumerate() {
        let v = eig.eigenvectors.column(i).into_owned();
        let pv = model.parity() * &v;
        u.set_column(k, &v);
        u.set_column(m + k, &pv);
    }

    let rest = linalg::identity::<T>(m);
    let sz = linalg::pauli_z::<T>().kronecker(&rest);
    let sx = linalg::pauli_x::<T>().kronecker(&rest);
    let direction_error = frobenius(&(&u * sz * u.adjoint() - &e));
    let parity_error = frobenius(&(&u * sx * u.adjoint() - model.parity()));
    Ok(JordanBasis { unitary: u, blocks: m, direction_error, parity_error })
}
