//! Single-mode Gaussian states in shot-noise units.
//!
//! Quadratures are normalized so that the vacuum has unit variance along
//! every direction (1 SNU). A state is fully described by its quadrature
//! mean vector `(x̄, p̄)` and its 2×2 covariance matrix.
//!
//! **Squeeze orientation convention.** A squeeze with parameters `(r, φ)`
//! *deamplifies* the quadrature along angle `φ` (variance factor `e^{-2r}`)
//! and amplifies the orthogonal one (`e^{+2r}`). Every other module in this
//! crate inherits that convention: the "squeeze angle" is the angle of the
//! quiet quadrature.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// Tolerance on symmetry, positivity and the Heisenberg bound.
pub const STATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
}

impl GaussianState {
    /// Build a state from a mean and covariance, checking symmetry and
    /// positive definiteness. The uncertainty bound is not enforced here so
    /// that classical (sub-Heisenberg) test inputs can still be represented;
    /// see [`GaussianState::satisfies_uncertainty`].
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("mean", "non-finite quadrature mean"));
        }
        if cov.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::param("cov", "non-finite covariance entry"));
        }
        if (cov[0][1] - cov[1][0]).abs() > STATE_TOL * (1.0 + cov[0][1].abs()) {
            return Err(Error::param("cov", "covariance matrix is not symmetric"));
        }
        let off = 0.5 * (cov[0][1] + cov[1][0]);
        let m = Matrix2::new(cov[0][0], off, off, cov[1][1]);
        if m[(0, 0)] <= 0.0 || m.determinant() <= 0.0 {
            return Err(Error::param("cov", "covariance matrix is not positive definite"));
        }
        Ok(Self {
            mean: Vector2::new(mean[0], mean[1]),
            cov: m,
        })
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.mean[0], self.mean[1]]
    }

    pub fn cov(&self) -> [[f64; 2]; 2] {
        [
            [self.cov[(0, 0)], self.cov[(0, 1)]],
            [self.cov[(1, 0)], self.cov[(1, 1)]],
        ]
    }

    pub fn det(&self) -> f64 {
        self.cov.determinant()
    }

    /// Eigenvalues of the covariance, ascending. These are the extremal
    /// quadrature variances over all LO angles.
    pub fn principal_variances(&self) -> (f64, f64) {
        let a = self.cov[(0, 0)];
        let d = self.cov[(1, 1)];
        let b = self.cov[(0, 1)];
        let half_tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (half_tr - disc, half_tr + disc)
    }

    pub fn satisfies_uncertainty(&self) -> bool {
        self.det() >= 1.0 - STATE_TOL
    }

    /// Mean of the quadrature `x cos θ + p sin θ`.
    pub fn quadrature_mean(&self, theta: f64) -> f64 {
        self.mean[0] * theta.cos() + self.mean[1] * theta.sin()
    }

    fn from_parts(mean: Vector2<f64>, cov: Matrix2<f64>) -> Self {
        let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
        let mut cov = cov;
        cov[(0, 1)] = off;
        cov[(1, 0)] = off;
        Self { mean, cov }
    }
}

/// Squeezing parameter and orientation of the deamplified axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeParams {
    r: f64,
    phi: f64,
}

impl SqueezeParams {
    pub fn new(r: f64, phi: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::param("r", "squeezing parameter must be finite"));
        }
        if r < 0.0 {
            return Err(Error::param("r", format!("squeezing parameter must be >= 0, got {r}")));
        }
        if !phi.is_finite() {
            return Err(Error::param("phi", "squeeze angle must be finite"));
        }
        Ok(Self {
            r,
            phi: wrap_angle(phi),
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Orientation in `[0, 2π)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }
}

pub(crate) fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn unit(theta: f64) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c, s)
}

pub fn vacuum() -> GaussianState {
    GaussianState {
        mean: Vector2::zeros(),
        cov: Matrix2::identity(),
    }
}

/// Symplectic squeeze `S = R(φ)·diag(e^{-r}, e^{r})·R(φ)ᵀ` applied to mean and
/// covariance.
pub fn apply_squeeze(state: &GaussianState, p: SqueezeParams) -> GaussianState {
    let rot = rotation(p.phi);
    let s = rot * Matrix2::new((-p.r).exp(), 0.0, 0.0, p.r.exp()) * rot.transpose();
    GaussianState::from_parts(s * state.mean, s * state.cov * s.transpose())
}

/// Pure loss: beamsplitter of transmittance `eta` mixing the mode with vacuum.
pub fn apply_loss(state: &GaussianState, eta: f64) -> Result<GaussianState> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::param("eta", format!("transmittance must lie in [0, 1], got {eta}")));
    }
    Ok(GaussianState::from_parts(
        state.mean * eta.sqrt(),
        state.cov * eta + Matrix2::identity() * (1.0 - eta),
    ))
}

/// Classical Gaussian noise of variance `extra` added along the quadrature at
/// angle `theta` (random displacement channel, rank one).
pub fn add_quadrature_noise(state: &GaussianState, theta: f64, extra: f64) -> Result<GaussianState> {
    if !extra.is_finite() || extra < 0.0 {
        return Err(Error::param("extra", format!("added variance must be >= 0, got {extra}")));
    }
    let u = unit(theta);
    Ok(GaussianState::from_parts(state.mean, state.cov + u * u.transpose() * extra))
}

/// Variance of the quadrature `x cos θ + p sin θ`, i.e. `uᵀ Σ u`.
pub fn quadrature_variance(state: &GaussianState, theta: f64) -> f64 {
    let u = unit(theta);
    (u.transpose() * state.cov * u)[(0, 0)]
}
