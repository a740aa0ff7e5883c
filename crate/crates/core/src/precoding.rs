//! Diagonal unit-modulus analog precoding expressed as a phase vector.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::uniform_angle;

/// Wraps an angle into [-pi, pi). In-range inputs pass through untouched,
/// so wrapping is idempotent bit for bit.
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut w = (theta + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can land exactly on two_pi for inputs a hair below it.
    if w >= PI {
        w -= two_pi;
    }
    if w < -PI {
        w += two_pi;
    }
    w
}

/// Phases of the diagonal analog precoder, one per transmit antenna.
///
/// The precoder matrix is diag(exp(j psi)) / sqrt(n_k): each antenna applies
/// a pure phase shift and the 1/sqrt(n_k) factor splits transmit power
/// across the n_k antennas of an active group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector {
    psi: Vec<f64>,
}

impl PhaseVector {
    /// Wraps every phase into [-pi, pi).
    pub fn new(psi: Vec<f64>) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::DimensionMismatch("phase vector must be non-empty".into()));
        }
        if psi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("phase vector contains a non-finite entry".into()));
        }
        Ok(Self { psi: psi.into_iter().map(wrap_angle).collect() })
    }

    /// All-zero phases; the default starting point for optimization.
    pub fn zeros(n_t: usize) -> Self {
        Self { psi: vec![0.0; n_t] }
    }

    /// Independent uniform phases on [-pi, pi).
    pub fn random<R: Rng + ?Sized>(n_t: usize, rng: &mut R) -> Self {
        Self { psi: (0..n_t).map(|_| uniform_angle(rng)).collect() }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.psi
    }

    /// The n_t x n_t precoder matrix diag(exp(j psi)) / sqrt(n_k).
    pub fn precoder_matrix(&self, n_k: usize) -> DMatrix<Complex64> {
        let n_t = self.psi.len();
        let scale = 1.0 / (n_k as f64).sqrt();
        let mut a = DMatrix::<Complex64>::zeros(n_t, n_t);
        for (i, &p) in self.psi.iter().enumerate() {
            a[(i, i)] = Complex64::from_polar(scale, p);
        }
        a
    }
}
