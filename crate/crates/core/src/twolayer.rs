//! Physical parameters of the two-layer system, the PV ↔ streamfunction
//! relations and the weighted energy ("star") inner product.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QgError, Result};
use crate::spectral::{Grid, SpectralField};

/// Jacobian estimate constant `c0 = 2 + 1/(√2 π)`.
pub const C0: f64 = 2.0 + 1.0 / (SQRT_2 * PI);

/// Raw dimensional inputs in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub nu: f64,
    pub beta: f64,
    pub f0: f64,
    pub g: f64,
    pub h1: f64,
    pub h2: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub rho2: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub tau0: f64,
}

impl PhysicalParams {
    /// Mid-latitude ocean basin: eddy viscosity 50 m²/s, 1000 km square,
    /// two 500 m layers, density jump 25 kg/m³, wind tension 0.1 N/m².
    pub fn ocean_basin() -> PhysicalParams {
        PhysicalParams {
            nu: 50.0,
            beta: 2.3e-11,
            f0: 8e-5,
            g: 9.81,
            h1: 500.0,
            h2: 500.0,
            rho0: 1025.0,
            rho1: 1012.5,
            rho2: 1037.5,
            length: 1.0e6,
            tau0: 0.1,
        }
    }
}

/// Constants derived from [`PhysicalParams`]; every field is a closed form
/// of the raw inputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedParams {
    pub raw: PhysicalParams,
    pub nu: f64,
    pub beta: f64,
    pub h1: f64,
    pub h2: f64,
    pub length: f64,
    pub f1: f64,
    pub f2: f64,
    pub p: f64,
    pub lambda1: f64,
    pub ekman_depth: f64,
    pub r: f64,
    pub a0: f64,
    pub c0: f64,
    pub c1: f64,
    pub b0: f64,
}

pub fn derive_params(raw: &PhysicalParams) -> Result<DerivedParams> {
    let finite = [
        raw.nu, raw.beta, raw.f0, raw.g, raw.h1, raw.h2, raw.rho0, raw.rho1, raw.rho2, raw.length,
        raw.tau0,
    ];
    if finite.iter().any(|v| !v.is_finite()) {
        return Err(QgError::Config("physical parameters must be finite".into()));
    }
    if raw.rho2 <= raw.rho1 {
        return Err(QgError::Stratification { rho1: raw.rho1, rho2: raw.rho2 });
    }
    if raw.nu <= 0.0 {
        return Err(QgError::Config(format!("viscosity must be positive, got {}", raw.nu)));
    }
    if raw.h1 <= 0.0 || raw.h2 <= 0.0 {
        return Err(QgError::Config(format!("layer depths must be positive, got {} and {}", raw.h1, raw.h2)));
    }
    if raw.length <= 0.0 || raw.g <= 0.0 || raw.rho0 <= 0.0 {
        return Err(QgError::Config("L, g and rho0 must be positive".into()));
    }
    Ok(build(raw.clone(), raw.nu))
}

fn build(raw: PhysicalParams, nu: f64) -> DerivedParams {
    let p = raw.f0 * raw.f0 * raw.rho0 / (raw.g * (raw.rho2 - raw.rho1));
    let f1 = p / raw.h1;
    let f2 = p / raw.h2;
    let lambda1 = (2.0 * PI / raw.length).powi(2);
    let ekman_depth = (2.0 * nu / raw.f0.abs()).sqrt();
    let r = raw.f0.abs() * ekman_depth / (2.0 * (raw.h1 + raw.h2));
    let a0 = 1.0 + 2.0 / lambda1 * f1.max(f2);
    let c1 = C0 / lambda1.sqrt();
    let b0 = 2.0 * C0 * C0 / nu * (1.0 + f1 * f2 / (lambda1 * lambda1));
    DerivedParams {
        nu,
        beta: raw.beta,
        h1: raw.h1,
        h2: raw.h2,
        length: raw.length,
        raw,
        f1,
        f2,
        p,
        lambda1,
        ekman_depth,
        r,
        a0,
        c0: C0,
        c1,
        b0,
    }
}

impl DerivedParams {
    /// Same parameters with a different viscosity. Zero is accepted here to
    /// reach the inviscid limit (which also removes Ekman drag).
    pub fn with_viscosity(&self, nu: f64) -> Result<DerivedParams> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(QgError::Config(format!("viscosity must be nonnegative, got {nu}")));
        }
        let mut raw = self.raw.clone();
        raw.nu = nu;
        Ok(build(raw, nu))
    }

    pub fn with_beta(&self, beta: f64) -> DerivedParams {
        let mut raw = self.raw.clone();
        raw.beta = beta;
        build(raw, self.nu)
    }

    pub fn min_depth(&self) -> f64 {
        self.h1.min(self.h2)
    }

    pub fn max_f(&self) -> f64 {
        self.f1.max(self.f2)
    }

    /// Per-mode inverse of the PV relations: `(ψ1, ψ2)` from `(q1, q2)` at
    /// eigenvalue `μ > 0`.
    #[inline]
    pub fn invert_mode(&self, mu: f64, q1: Complex64, q2: Complex64) -> (Complex64, Complex64) {
        let det = mu * mu + mu * (self.f1 + self.f2);
        let psi1 = (q1 * (-mu - self.f2) - q2 * self.f1) / det;
        let psi2 = (q1 * (-self.f2) + q2 * (-mu - self.f1)) / det;
        (psi1, psi2)
    }

    #[inline]
    pub fn forward_mode(&self, mu: f64, psi1: Complex64, psi2: Complex64) -> (Complex64, Complex64) {
        let q1 = -psi1 * mu - (psi1 - psi2) * self.f1;
        let q2 = -psi2 * mu - (psi2 - psi1) * self.f2;
        (q1, q2)
    }
}

/// Potential vorticities of the two layers.
#[derive(Clone, Debug)]
pub struct LayerState {
    pub q1: SpectralField,
    pub q2: SpectralField,
}

/// Streamfunctions of the two layers.
#[derive(Clone, Debug)]
pub struct StreamPair {
    pub psi1: SpectralField,
    pub psi2: SpectralField,
}

impl LayerState {
    pub fn zeros(grid: &Arc<Grid>) -> LayerState {
        LayerState { q1: SpectralField::zeros(grid), q2: SpectralField::zeros(grid) }
    }

    pub fn new(q1: SpectralField, q2: SpectralField) -> Result<LayerState> {
        q1.check_grid(&q2)?;
        Ok(LayerState { q1, q2 })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.q1.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.q1.is_zero() && self.q2.is_zero()
    }

    pub fn sub(&self, other: &LayerState) -> LayerState {
        LayerState { q1: &self.q1 - &other.q1, q2: &self.q2 - &other.q2 }
    }

    pub fn add(&self, other: &LayerState) -> LayerState {
        LayerState { q1: &self.q1 + &other.q1, q2: &self.q2 + &other.q2 }
    }

    pub fn scaled(&self, a: f64) -> LayerState {
        LayerState { q1: self.q1.scaled(a), q2: self.q2.scaled(a) }
    }

    pub fn axpy(&mut self, a: f64, other: &LayerState) {
        self.q1.axpy(a, &other.q1);
        self.q2.axpy(a, &other.q2);
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.q1.max_abs_coeff().max(self.q2.max_abs_coeff())
    }
}

impl StreamPair {
    pub fn new(psi1: SpectralField, psi2: SpectralField) -> Result<StreamPair> {
        psi1.check_grid(&psi2)?;
        Ok(StreamPair { psi1, psi2 })
    }
}

/// `q1 = Δψ1 − F1(ψ1 − ψ2)`, `q2 = Δψ2 − F2(ψ2 − ψ1)`.
pub fn pv_from_stream(psi: &StreamPair, dp: &DerivedParams) -> Result<LayerState> {
    psi.psi1.check_grid(&psi.psi2)?;
    let grid = psi.psi1.grid().clone();
    let mut q1 = SpectralField::zeros(&grid);
    let mut q2 = SpectralField::zeros(&grid);
    let (a, b) = (psi.psi1.coeffs(), psi.psi2.coeffs());
    {
        let (c1, c2) = (q1.coeffs_mut(), q2.coeffs_mut());
        for idx in 0..grid.len() {
            let (x, y) = dp.forward_mode(grid.mu(idx), a[idx], b[idx]);
            c1[idx] = x;
            c2[idx] = y;
        }
    }
    Ok(LayerState { q1, q2 })
}

/// Per-mode closed-form inverse of [`pv_from_stream`]. The determinant
/// `μ² + μ(F1 + F2)` is positive for every retained mode.
pub fn stream_from_pv(q: &LayerState, dp: &DerivedParams) -> StreamPair {
    let grid = q.grid().clone();
    let mut psi1 = SpectralField::zeros(&grid);
    let mut psi2 = SpectralField::zeros(&grid);
    let (a, b) = (q.q1.coeffs(), q.q2.coeffs());
    {
        let (c1, c2) = (psi1.coeffs_mut(), psi2.coeffs_mut());
        for idx in 0..grid.len() {
            let mu = grid.mu(idx);
            if mu == 0.0 {
                continue;
            }
            let (x, y) = dp.invert_mode(mu, a[idx], b[idx]);
            c1[idx] = x;
            c2[idx] = y;
        }
    }
    StreamPair { psi1, psi2 }
}

/// The three pieces of `‖q‖_*²`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StarParts {
    /// `h1 ‖∇ψ1‖_0²`
    pub top: f64,
    /// `h2 ‖∇ψ2‖_0²`
    pub bottom: f64,
    /// `p ‖ψ1 − ψ2‖_0²`
    pub coupling: f64,
}

impl StarParts {
    pub fn total(&self) -> f64 {
        self.top + self.bottom + self.coupling
    }

    /// `h1‖∇ψ1‖² + h2‖∇ψ2‖²`, the lower side of the norm equivalence.
    pub fn gradient_energy(&self) -> f64 {
        self.top + self.bottom
    }
}

pub fn star_parts_of_stream(psi: &StreamPair, dp: &DerivedParams) -> StarParts {
    let grid = psi.psi1.grid();
    let l2 = grid.length() * grid.length();
    let (a, b) = (psi.psi1.coeffs(), psi.psi2.coeffs());
    let mut parts = StarParts::default();
    for idx in 0..grid.len() {
        let mu = grid.mu(idx);
        parts.top += mu * a[idx].norm_sqr();
        parts.bottom += mu * b[idx].norm_sqr();
        parts.coupling += (a[idx] - b[idx]).norm_sqr();
    }
    StarParts { top: dp.h1 * l2 * parts.top, bottom: dp.h2 * l2 * parts.bottom, coupling: dp.p * l2 * parts.coupling }
}

pub fn star_parts(q: &LayerState, dp: &DerivedParams) -> StarParts {
    star_parts_of_stream(&stream_from_pv(q, dp), dp)
}

/// `‖q‖_*² = h1‖∇ψ1‖² + h2‖∇ψ2‖² + p‖ψ1 − ψ2‖²`.
pub fn star_norm_sq(q: &LayerState, dp: &DerivedParams) -> f64 {
    star_parts(q, dp).total()
}

/// `(q, q̄)_*` through the associated streamfunctions.
pub fn star_inner(q: &LayerState, other: &LayerState, dp: &DerivedParams) -> f64 {
    let a = stream_from_pv(q, dp);
    let b = stream_from_pv(other, dp);
    let d1 = &a.psi1 - &a.psi2;
    let d2 = &b.psi1 - &b.psi2;
    dp.h1 * (a.psi1.dx().inner(&b.psi1.dx()) + a.psi1.dy().inner(&b.psi1.dy()))
        + dp.h2 * (a.psi2.dx().inner(&b.psi2.dx()) + a.psi2.dy().inner(&b.psi2.dy()))
        + dp.p * d1.inner(&d2)
}
