//! Narrowband Saleh-Valenzuela channel realizations over uniform linear
//! arrays, seeded for bit-exact replay.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::precoding::wrap_angle;
use crate::rng::{complex_gaussian, uniform_angle};

/// Array response of an n-element uniform linear array toward `angle`,
/// normalized to unit Euclidean norm.
pub fn steering_vector(n: usize, angle: f64, spacing_over_lambda: f64) -> DVector<Complex64> {
    assert!(n >= 1, "steering vector needs at least one element");
    let scale = 1.0 / (n as f64).sqrt();
    let step = 2.0 * PI * spacing_over_lambda * angle.sin();
    DVector::from_fn(n, |k, _| Complex64::from_polar(scale, step * k as f64))
}

/// Antenna spacing over wavelength used throughout: full-wavelength spacing.
pub const SPACING_OVER_LAMBDA: f64 = 1.0;

fn gamma_for(n_t: usize, n_r: usize, l: usize) -> f64 {
    ((n_t * n_r) as f64 / l as f64).sqrt()
}

/// Path parameters of one channel realization: per-path complex gains and
/// departure/arrival angles, plus the normalizing scalar gamma.
///
/// Elevation angles are drawn alongside the azimuths but the linear-array
/// response depends on azimuth only; they are retained so a record of the
/// draw stays complete. Element gains are isotropic (fixed to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    gains: Vec<Complex64>,
    aod: Vec<f64>,
    aoa: Vec<f64>,
    elev_t: Vec<f64>,
    elev_r: Vec<f64>,
    gamma: f64,
    element_gain_t: f64,
    element_gain_r: f64,
}

impl PathSet {
    /// Builds a path set from explicit parameters, wrapping all angles into
    /// [-pi, pi). `n_t`, `n_r` fix the normalization gamma = sqrt(n_t*n_r/l).
    pub fn new(
        gains: Vec<Complex64>,
        aod: Vec<f64>,
        aoa: Vec<f64>,
        elev_t: Vec<f64>,
        elev_r: Vec<f64>,
        n_t: usize,
        n_r: usize,
    ) -> Result<Self> {
        let l = gains.len();
        if l < 1 {
            return Err(Error::InvalidConfig("path set needs at least one path".into()));
        }
        if [aod.len(), aoa.len(), elev_t.len(), elev_r.len()].iter().any(|&len| len != l) {
            return Err(Error::DimensionMismatch(format!(
                "per-path arrays must all have length {l}"
            )));
        }
        if n_t < 1 || n_r < 1 {
            return Err(Error::InvalidConfig("array sizes must be >= 1".into()));
        }
        Ok(Self {
            gains,
            aod: aod.into_iter().map(wrap_angle).collect(),
            aoa: aoa.into_iter().map(wrap_angle).collect(),
            elev_t: elev_t.into_iter().map(wrap_angle).collect(),
            elev_r: elev_r.into_iter().map(wrap_angle).collect(),
            gamma: gamma_for(n_t, n_r, l),
            element_gain_t: 1.0,
            element_gain_r: 1.0,
        })
    }

    /// Draws `l` paths: each path consumes gain, departure azimuth, arrival
    /// azimuth, departure elevation, arrival elevation from the generator in
    /// that order. Gains are standard circular complex Gaussian; angles are
    /// uniform on [-pi, pi).
    pub fn sample<R: Rng + ?Sized>(cfg: &SystemConfig, l: usize, rng: &mut R) -> Result<Self> {
        if l < 1 {
            return Err(Error::InvalidConfig("path count must be >= 1".into()));
        }
        let mut gains = Vec::with_capacity(l);
        let mut aod = Vec::with_capacity(l);
        let mut aoa = Vec::with_capacity(l);
        let mut elev_t = Vec::with_capacity(l);
        let mut elev_r = Vec::with_capacity(l);
        for _ in 0..l {
            gains.push(complex_gaussian(rng));
            aod.push(uniform_angle(rng));
            aoa.push(uniform_angle(rng));
            elev_t.push(uniform_angle(rng));
            elev_r.push(uniform_angle(rng));
        }
        Self::new(gains, aod, aoa, elev_t, elev_r, cfg.n_t, cfg.n_r)
    }

    pub fn l(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn aod(&self) -> &[f64] {
        &self.aod
    }

    pub fn aoa(&self) -> &[f64] {
        &self.aoa
    }

    pub fn elev_t(&self) -> &[f64] {
        &self.elev_t
    }

    pub fn elev_r(&self) -> &[f64] {
        &self.elev_r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn element_gain_t(&self) -> f64 {
        self.element_gain_t
    }

    pub fn element_gain_r(&self) -> f64 {
        self.element_gain_r
    }

    /// Assembles H = gamma * sum_l alpha_l * b_r(aoa_l) * b_t(aod_l)^H,
    /// shape n_r x n_t. The array sizes must match the gamma this set was
    /// built with.
    pub fn assemble(&self, n_r: usize, n_t: usize) -> Result<ChannelMatrix> {
        let expected = gamma_for(n_t, n_r, self.l());
        if self.gamma != expected {
            return Err(Error::DimensionMismatch(format!(
                "gamma {} does not match sqrt({n_t}*{n_r}/{})",
                self.gamma,
                self.l()
            )));
        }
        let mut h = DMatrix::<Complex64>::zeros(n_r, n_t);
        for idx in 0..self.l() {
            let b_r = steering_vector(n_r, self.aoa[idx], SPACING_OVER_LAMBDA);
            let b_t = steering_vector(n_t, self.aod[idx], SPACING_OVER_LAMBDA);
            let w = self.gains[idx] * (self.element_gain_t * self.element_gain_r);
            // h += w * b_r * b_t^H, accumulated entrywise to avoid temporaries.
            for c in 0..n_t {
                let bt_conj = b_t[c].conj();
                for r in 0..n_r {
                    h[(r, c)] += w * b_r[r] * bt_conj;
                }
            }
        }
        h *= Complex64::new(self.gamma, 0.0);
        ChannelMatrix::new(h)
    }
}

/// A realized channel matrix, receive antennas by transmit antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    h: DMatrix<Complex64>,
}

impl ChannelMatrix {
    pub fn new(h: DMatrix<Complex64>) -> Result<Self> {
        if h.nrows() < 1 || h.ncols() < 1 {
            return Err(Error::DimensionMismatch("channel matrix must be non-empty".into()));
        }
        if h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("channel matrix contains a non-finite entry".into()));
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.h
    }

    pub fn n_r(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.h.ncols()
    }

    pub fn frobenius_norm_squared(&self) -> f64 {
        self.h.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Numerical rank: singular values above `rel_tol` times the largest.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let sv = self.h.clone().singular_values();
        let max = sv.iter().cloned().fold(0.0f64, f64::max);
        if max == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > rel_tol * max).count()
    }
}

/// One channel draw: the path set and the assembled matrix.
pub fn sample_channel<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    l: usize,
    rng: &mut R,
) -> Result<(PathSet, ChannelMatrix)> {
    let paths = PathSet::sample(cfg, l, rng)?;
    let h = paths.assemble(cfg.n_r, cfg.n_t)?;
    Ok((paths, h))
}

/// Self-contained JSON record of a channel realization: dimensions, the seed
/// it came from, the full path table, and the matrix entries as [re, im]
/// pairs in row-major order. Reading one back reproduces the exact bytes of
/// the original floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub n_r: usize,
    pub n_t: usize,
    pub seed: u64,
    pub l: usize,
    pub gamma: f64,
    pub gains: Vec<[f64; 2]>,
    pub aod: Vec<f64>,
    pub aoa: Vec<f64>,
    pub elev_t: Vec<f64>,
    pub elev_r: Vec<f64>,
    pub element_gain_t: f64,
    pub element_gain_r: f64,
    pub h: Vec<Vec<[f64; 2]>>,
}

impl ChannelRecord {
    pub fn from_parts(seed: u64, paths: &PathSet, channel: &ChannelMatrix) -> Self {
        let h = (0..channel.n_r())
            .map(|r| {
                (0..channel.n_t())
                    .map(|c| {
                        let v = channel.matrix()[(r, c)];
                        [v.re, v.im]
                    })
                    .collect()
            })
            .collect();
        Self {
            n_r: channel.n_r(),
            n_t: channel.n_t(),
            seed,
            l: paths.l(),
            gamma: paths.gamma(),
            gains: paths.gains().iter().map(|g| [g.re, g.im]).collect(),
            aod: paths.aod().to_vec(),
            aoa: paths.aoa().to_vec(),
            elev_t: paths.elev_t().to_vec(),
            elev_r: paths.elev_r().to_vec(),
            element_gain_t: paths.element_gain_t(),
            element_gain_r: paths.element_gain_r(),
            h,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("channel record serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("channel record parse: {e}")))
    }

    /// Reconstructs the stored matrix, validating the declared dimensions.
    pub fn channel(&self) -> Result<ChannelMatrix> {
        if self.h.len() != self.n_r || self.h.iter().any(|row| row.len() != self.n_t) {
            return Err(Error::DimensionMismatch(format!(
                "record declares {}x{} but the entry table disagrees",
                self.n_r, self.n_t
            )));
        }
        let h = DMatrix::from_fn(self.n_r, self.n_t, |r, c| {
            Complex64::new(self.h[r][c][0], self.h[r][c][1])
        });
        ChannelMatrix::new(h)
    }

    /// Reconstructs the stored path table.
    pub fn paths(&self) -> Result<PathSet> {
        if [self.aod.len(), self.aoa.len(), self.elev_t.len(), self.elev_r.len(), self.gains.len()]
            .iter()
            .any(|&len| len != self.l)
        {
            return Err(Error::DimensionMismatch(
                "record path table length disagrees with the declared count".into(),
            ));
        }
        PathSet::new(
            self.gains.iter().map(|g| Complex64::new(g[0], g[1])).collect(),
            self.aod.clone(),
            self.aoa.clone(),
            self.elev_t.clone(),
            self.elev_r.clone(),
            self.n_t,
            self.n_r,
        )
    }
}
