//! Benchmark problems. `vdp` and `sda` are the two evaluation domains;
//! `linear_gaussian` and `toy` exist so estimator and solver behavior can be
//! checked against closed forms.

pub mod linear_gaussian;
pub mod sda;
pub mod toy;
pub mod vdp;

use nalgebra::DMatrix;

/// Scalar normal density.
pub(crate) fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Symmetric square root of a PSD matrix. Tolerates exact zeros where
/// Cholesky would not; panics on genuinely indefinite input.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        assert!(*v > -1e-10, "matrix is not positive semidefinite");
        *v = v.max(0.0).sqrt();
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}
