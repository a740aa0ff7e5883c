//! Complex Hermitian matrix helpers shared by the rate and precoder paths.
//!
//! Everything determinant-shaped runs in the log domain: covariances are
//! symmetrized, Cholesky-factored once, and reused for log-determinants,
//! quadratic forms, inverses, and Gaussian sampling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// (m + m^H) / 2. Guards against accumulated asymmetry before factorization.
pub fn hermitianize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = m.adjoint();
    out += m;
    out *= Complex64::new(0.5, 0.0);
    out
}

/// Cholesky factorization of a Hermitian positive-definite matrix, with the
/// pieces the rate computations need: the lower factor, its log-determinant,
/// and triangular solves for quadratic forms.
#[derive(Debug, Clone)]
pub struct HermitianFactor {
    lower: DMatrix<Complex64>,
    log_det: f64,
    chol: Cholesky<Complex64, Dyn>,
}

impl HermitianFactor {
    /// Factors `(m + m^H)/2`. Fails if the matrix is not positive definite.
    pub fn new(m: &DMatrix<Complex64>) -> Result<Self> {
        let sym = hermitianize(m);
        let chol = Cholesky::new(sym).ok_or_else(|| {
            Error::Numerical("Hermitian matrix is not positive definite".into())
        })?;
        let lower = chol.l();
        // Complex square roots always exist, so the factorization itself
        // cannot detect indefiniteness; a positive-definite input is exactly
        // one whose factor has a real positive diagonal.
        for d in lower.diagonal().iter() {
            if !(d.re.is_finite() && d.re > 0.0) || d.im.abs() > 1e-12 * d.re.abs().max(1.0) {
                return Err(Error::Numerical(
                    "Hermitian matrix is not positive definite".into(),
                ));
            }
        }
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
        Ok(Self { lower, log_det, chol })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// ln |M|.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &DMatrix<Complex64> {
        &self.lower
    }

    /// M^{-1}.
    pub fn inverse(&self) -> DMatrix<Complex64> {
        self.chol.inverse()
    }

    /// M^{-1} B.
    pub fn solve_matrix(&self, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        self.chol.solve(b)
    }

    /// y^H M^{-1} y = ||L^{-1} y||^2, evaluated in `work` without allocating.
    pub fn inv_quadratic_form(&self, y: &DVector<Complex64>, work: &mut DVector<Complex64>) -> f64 {
        work.copy_from(y);
        let ok = self.lower.solve_lower_triangular_mut(work);
        debug_assert!(ok, "triangular solve on a Cholesky factor cannot fail");
        work.norm_squared()
    }

    /// Applies the factor: out = L * z. Maps a standard Gaussian z to a
    /// zero-mean Gaussian with covariance M.
    pub fn color(&self, z: &DVector<Complex64>, out: &mut DVector<Complex64>) {
        out.gemv(Complex64::new(1.0, 0.0), &self.lower, z, Complex64::new(0.0, 0.0));
    }
}

/// ln |M| of a Hermitian positive-definite matrix.
pub fn log_det_hermitian(m: &DMatrix<Complex64>) -> Result<f64> {
    Ok(HermitianFactor::new(m)?.log_det())
}

/// ln(sum_i exp(x_i)), max-shifted so large negative/positive inputs cannot
/// underflow or overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Relative Frobenius asymmetry ||M - M^H||_F / ||M||_F.
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let diff = m - m.adjoint();
    let norm = m.norm();
    if norm == 0.0 {
        diff.norm()
    } else {
        diff.norm() / norm
    }
}
