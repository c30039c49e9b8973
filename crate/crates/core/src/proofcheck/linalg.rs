//! Dense complex helpers for small bipartite systems `A ⊗ E`.
//!
//! Index convention: basis state `|a⟩|e⟩` sits at `a · d_E + e`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type CMatrix<T> = DMatrix<Complex<T>>;

pub fn c<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::lit(re), T::lit(im))
}

pub fn identity<T: Real>(d: usize) -> CMatrix<T> {
    CMatrix::identity(d, d)
}

/// `op ⊗ I_E`.
pub fn lift_a<T: Real>(op: &CMatrix<T>, d_e: usize) -> CMatrix<T> {
    op.kronecker(&identity::<T>(d_e))
}

/// `tr_A ρ` for `ρ` on `A ⊗ E`.
pub fn partial_trace_a<T: Real>(rho: &CMatrix<T>, d_a: usize, d_e: usize) -> CMatrix<T> {
    CMatrix::from_fn(d_e, d_e, |e, f| {
        (0..d_a).fold(Complex::new(T::zero(), T::zero()), |acc, a| acc + rho[(a * d_e + e, a * d_e + f)])
    })
}

/// Schatten 1-norm (sum of singular values).
pub fn trace_norm<T: Real>(m: &CMatrix<T>) -> T {
    m.clone().singular_values().iter().fold(T::zero(), |acc, &s| acc + s)
}

pub fn frobenius<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(z.norm_sqr().sqrt()))
}

/// Largest entry of `m - m†`.
pub fn hermiticity_defect<T: Real>(m: &CMatrix<T>) -> T {
    max_abs(&(m - m.adjoint()))
}

pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> DVector<T> {
    let h = (m + m.adjoint()) * c::<T>(0.5, 0.0);
    h.symmetric_eigenvalues()
}

/// `√m` for a positive semidefinite `m`; negative rounding noise is
/// clipped.
pub fn psd_sqrt<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    let h = (m + m.adjoint()) * c::<T>(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let roots = eig
        .eigenvalues
        .map(|l| Complex::new(l.max(T::zero()).sqrt(), T::zero()));
    &eig.eigenvectors * CMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

pub fn sandwich<T: Real>(op: &CMatrix<T>, rho: &CMatrix<T>) -> CMatrix<T> {
    op * rho * op.adjoint()
}

pub fn gaussian_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix<T> {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Random unitary from the QR factor of a complex Gaussian matrix.
pub fn random_unitary<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix<T> {
    gaussian_matrix::<T, R>(d, d, rng).qr().q()
}

/// `rows × cols` matrix with orthonormal columns.
pub fn random_isometry<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix<T> {
    gaussian_matrix::<T, R>(rows, cols, rng).qr().q()
}

/// Random unit-trace state of rank at most `rank`.
pub fn random_state<T: Real, R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> CMatrix<T> {
    let g = gaussian_matrix::<T, R>(d, rank, rng);
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    rho / tr
}

pub fn pauli_x<T: Real>() -> CMatrix<T> {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y<T: Real>() -> CMatrix<T> {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z<T: Real>() -> CMatrix<T> {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: CMatrix<f64> = random_state(3, 3, &mut rng);
        let e: CMatrix<f64> = random_state(2, 2, &mut rng);
        let rho = a.kronecker(&e);
        assert!(max_abs(&(partial_trace_a(&rho, 3, 2) - &e)) < 1e-14);
    }

    #[test]
    fn trace_norm_of_orthogonal_pure_states() {
        let mut p = CMatrix::<f64>::zeros(2, 2);
        p[(0, 0)] = c(1.0, 0.0);
        let mut q = CMatrix::<f64>::zeros(2, 2);
        q[(1, 1)] = c(1.0, 0.0);
        assert!((trace_norm(&(p - q)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn unitary_and_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: CMatrix<f64> = random_unitary(5, &mut rng);
        assert!(max_abs(&(u.adjoint() * &u - identity::<f64>(5))) < 1e-13);
        let rho: CMatrix<f64> = random_state(4, 2, &mut rng);
        let r = psd_sqrt(&rho);
        assert!(max_abs(&(&r * &r - &rho)) < 1e-7);
        assert!(hermitian_eigenvalues(&rho).min() > -1e-14);
    }
}
