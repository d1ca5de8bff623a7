//! Fourier representation of mean-zero, `L`-periodic scalar fields on the
//! square `(0, L)²`.
//!
//! Coefficients are stored in FFT order with the convention
//! `u(x, y) = Σ_j c_j exp(i 2π (j1 x + j2 y) / L)`, so `c_j = DFT(u)_j / n²`.
//! Norms are integrals over the square, `‖u‖_0² = L² Σ_j |c_j|²`.
//!
//! The zero mode and the Nyquist row/column are always zero. Quadratic
//! products are dealiased with the 2/3 rule: a field is *band-limited* when
//! every nonzero coefficient satisfies `|j1|, |j2| ≤ kmax`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{QgError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Periodic square lattice with its planned transforms.
pub struct Grid {
    length: f64,
    n: usize,
    dealias_fraction: f64,
    kmax: usize,
    lambda1: f64,
    wavenumbers: Vec<i64>,
    mu: Vec<f64>,
    band: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("length", &self.length)
            .field("n", &self.n)
            .field("dealias_fraction", &self.dealias_fraction)
            .field("kmax", &self.kmax)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length && self.kmax == other.kmax
    }
}

impl Grid {
    pub const DEFAULT_DEALIAS: f64 = 2.0 / 3.0;

    /// Grid with the default 2/3 dealiasing.
    pub fn new(length: f64, n: usize) -> Result<Arc<Grid>> {
        Grid::with_dealias(length, n, Self::DEFAULT_DEALIAS)
    }

    pub fn with_dealias(length: f64, n: usize, dealias_fraction: f64) -> Result<Arc<Grid>> {
        if !(length.is_finite() && length > 0.0) {
            return Err(QgError::Config(format!("domain length must be positive, got {length}")));
        }
        if n < 4 || n % 2 != 0 {
            return Err(QgError::Config(format!(
                "modes per dimension must be an even integer >= 4, got {n}"
            )));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(QgError::Config(format!(
                "dealias fraction must lie in (0, 1], got {dealias_fraction}"
            )));
        }
        let mut kmax = (dealias_fraction * n as f64 / 2.0 + 1e-12).floor() as usize;
        // products of two band-limited fields must not alias back into the band
        if dealias_fraction <= 2.0 / 3.0 + 1e-12 && 3 * kmax >= n {
            kmax = (n - 1) / 3;
        }
        kmax = kmax.min(n / 2 - 1);
        if kmax == 0 {
            return Err(QgError::Config(format!("grid n = {n} retains no modes after dealiasing")));
        }

        let wavenumbers: Vec<i64> = (0..n)
            .map(|i| if i <= n / 2 { i as i64 } else { i as i64 - n as i64 })
            .collect();
        let lambda1 = (2.0 * PI / length).powi(2);
        let mut mu = vec![0.0; n * n];
        let mut band = vec![false; n * n];
        for i2 in 0..n {
            for i1 in 0..n {
                let (j1, j2) = (wavenumbers[i1], wavenumbers[i2]);
                let idx = i2 * n + i1;
                mu[idx] = lambda1 * (j1 * j1 + j2 * j2) as f64;
                band[idx] = (j1 != 0 || j2 != 0)
                    && j1.unsigned_abs() as usize <= kmax
                    && j2.unsigned_abs() as usize <= kmax;
            }
        }

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            length,
            n,
            dealias_fraction,
            kmax,
            lambda1,
            wavenumbers,
            mu,
            band,
            forward,
            inverse,
        }))
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Largest retained `|j_i|` after dealiasing.
    pub fn kmax(&self) -> usize {
        self.kmax
    }

    /// Smallest positive eigenvalue of `−Δ`, `(2π/L)²`.
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Integer wavenumber pair of a storage index.
    pub fn wavenumber(&self, idx: usize) -> (i64, i64) {
        (self.wavenumbers[idx % self.n], self.wavenumbers[idx / self.n])
    }

    /// Storage index of a wavenumber pair, if it is representable.
    pub fn index_of(&self, j1: i64, j2: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if j1.abs() >= half || j2.abs() >= half {
            return None;
        }
        let wrap = |j: i64| if j < 0 { (j + self.n as i64) as usize } else { j as usize };
        Some(wrap(j2) * self.n + wrap(j1))
    }

    /// Storage index of `−j`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let (i1, i2) = (idx % self.n, idx / self.n);
        let neg = |i: usize| (self.n - i) % self.n;
        neg(i2) * self.n + neg(i1)
    }

    /// Eigenvalue of `−Δ` at a storage index, `λ1 (j1² + j2²)`.
    pub fn mu(&self, idx: usize) -> f64 {
        self.mu[idx]
    }

    pub fn mu_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn in_band(&self, idx: usize) -> bool {
        self.band[idx]
    }

    /// Physical wavevector `(2π/L) j` of a storage index.
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        let (j1, j2) = self.wavenumber(idx);
        let s = 2.0 * PI / self.length;
        (s * j1 as f64, s * j2 as f64)
    }

    /// Storage indices of the dealiased band restricted to one half plane
    /// (`j2 > 0`, or `j2 = 0` and `j1 > 0`), in storage order.
    pub fn half_band(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&idx| {
                let (j1, j2) = self.wavenumber(idx);
                self.band[idx] && (j2 > 0 || (j2 == 0 && j1 > 0))
            })
            .collect()
    }

    /// Number of nonzero lattice indices in the dealiased band.
    pub fn band_count(&self) -> usize {
        self.band.iter().filter(|&&b| b).count()
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, self.n);
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, self.n);
    }

    /// Physical values of two real fields with one complex transform.
    fn to_physical_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(x, y)| x + Complex64::i() * y)
            .collect();
        self.fft2(&mut buf, true);
        (buf.iter().map(|z| z.re).collect(), buf.iter().map(|z| z.im).collect())
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Complex Fourier coefficients of a mean-zero real field.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>) -> SpectralField {
        SpectralField { grid: Arc::clone(grid), coeffs: vec![ZERO; grid.len()] }
    }

    /// Transform real samples `values[iy * n + ix]` at `(ix, iy) L / n`.
    ///
    /// The mean and the Nyquist row/column are removed.
    pub fn from_physical(grid: &Arc<Grid>, values: &[f64]) -> Result<SpectralField> {
        if values.len() != grid.len() {
            return Err(QgError::Config(format!(
                "expected {}x{} = {} samples, got {}",
                grid.n,
                grid.n,
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QgError::Config("physical samples must be finite".into()));
        }
        let mut coeffs: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        grid.fft2(&mut coeffs, false);
        let scale = 1.0 / grid.len() as f64;
        let half = (grid.n / 2) as i64;
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let (j1, j2) = grid.wavenumber(idx);
            if (j1 == 0 && j2 == 0) || j1 == half || j2 == half {
                *c = ZERO;
            } else {
                *c *= scale;
            }
        }
        let mut field = SpectralField { grid: Arc::clone(grid), coeffs };
        field.symmetrize();
        Ok(field)
    }

    /// Transform a row-major square array given as rows.
    pub fn from_rows(grid: &Arc<Grid>, rows: &[Vec<f64>]) -> Result<SpectralField> {
        if rows.len() != grid.n || rows.iter().any(|r| r.len() != grid.n) {
            return Err(QgError::Config(format!(
                "input must be a square {}x{} array",
                grid.n, grid.n
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        SpectralField::from_physical(grid, &flat)
    }

    /// Build from raw coefficients; the zero and Nyquist modes are cleared
    /// and conjugate symmetry is restored by averaging.
    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<SpectralField> {
        if coeffs.len() != grid.len() {
            return Err(QgError::Dimension(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        let mut field = SpectralField { grid: Arc::clone(grid), coeffs };
        let half = (grid.n / 2) as i64;
        for idx in 0..grid.len() {
            let (j1, j2) = grid.wavenumber(idx);
            if (j1 == 0 && j2 == 0) || j1 == half || j2 == half {
                field.coeffs[idx] = ZERO;
            }
        }
        field.symmetrize();
        Ok(field)
    }

    /// Single Fourier pair: `c_j = amplitude`, `c_{−j} = conj(amplitude)`.
    pub fn mode(grid: &Arc<Grid>, j1: i64, j2: i64, amplitude: Complex64) -> Result<SpectralField> {
        let mut field = SpectralField::zeros(grid);
        field.set_mode(j1, j2, amplitude)?;
        Ok(field)
    }

    /// Unit-`L²` real eigenfunction `(√2/L) cos(k·x)` of `−Δ`.
    pub fn unit_cosine(grid: &Arc<Grid>, j1: i64, j2: i64) -> Result<SpectralField> {
        let a = 1.0 / (2.0_f64.sqrt() * grid.length);
        SpectralField::mode(grid, j1, j2, Complex64::new(a, 0.0))
    }

    /// Random band-limited field whose coefficients have standard deviation
    /// proportional to `(1 + |j|²)^{−slope/2}`.
    pub fn random<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, slope: f64) -> SpectralField {
        let mut field = SpectralField::zeros(grid);
        for idx in grid.half_band() {
            let (j1, j2) = grid.wavenumber(idx);
            let s = (1.0 + (j1 * j1 + j2 * j2) as f64).powf(-slope / 2.0);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let c = Complex64::new(re, im) * s;
            field.coeffs[idx] = c;
            field.coeffs[grid.conjugate_index(idx)] = c.conj();
        }
        field
    }

    pub fn set_mode(&mut self, j1: i64, j2: i64, amplitude: Complex64) -> Result<()> {
        if j1 == 0 && j2 == 0 {
            return Err(QgError::Config("the zero mode is excluded".into()));
        }
        let idx = self.grid.index_of(j1, j2).ok_or_else(|| {
            QgError::Config(format!("mode ({j1}, {j2}) is not representable on n = {}", self.grid.n))
        })?;
        let conj = self.grid.conjugate_index(idx);
        self.coeffs[idx] = amplitude;
        self.coeffs[conj] = amplitude.conj();
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Mutable coefficient access; callers must keep conjugate symmetry.
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, j1: i64, j2: i64) -> Complex64 {
        self.grid.index_of(j1, j2).map_or(ZERO, |idx| self.coeffs[idx])
    }

    pub fn to_physical(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        self.grid.fft2(&mut buf, true);
        buf.iter().map(|z| z.re).collect()
    }

    /// Exact trigonometric evaluation at an arbitrary point.
    pub fn eval_at(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for (idx, c) in self.coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let (kx, ky) = self.grid.wavevector(idx);
            let phase = kx * x + ky * y;
            acc += c.re * phase.cos() - c.im * phase.sin();
        }
        acc
    }

    pub fn same_grid(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(QgError::Dimension(format!("{:?} vs {:?}", self.grid, other.grid)))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest deviation from `c_{−j} = conj(c_j)`.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|idx| (self.coeffs[idx] - self.coeffs[self.grid.conjugate_index(idx)].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn symmetrize(&mut self) {
        for idx in 0..self.coeffs.len() {
            let conj = self.grid.conjugate_index(idx);
            if conj > idx {
                let avg = 0.5 * (self.coeffs[idx] + self.coeffs[conj].conj());
                self.coeffs[idx] = avg;
                self.coeffs[conj] = avg.conj();
            } else if conj == idx {
                self.coeffs[idx].im = 0.0;
            }
        }
    }

    /// Zero every coefficient outside the dealiased band.
    pub fn truncate_to_band(&mut self) {
        for (c, &keep) in self.coeffs.iter_mut().zip(&self.grid.band) {
            if !keep {
                *c = ZERO;
            }
        }
    }

    pub fn is_band_limited(&self) -> bool {
        self.coeffs
            .iter()
            .zip(&self.grid.band)
            .all(|(c, &keep)| keep || (c.re == 0.0 && c.im == 0.0))
    }

    /// Apply a real per-index multiplier.
    pub fn map_symbol(&self, symbol: impl Fn(usize) -> f64) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| if c.re == 0.0 && c.im == 0.0 { ZERO } else { c * symbol(idx) })
            .collect();
        SpectralField { grid: Arc::clone(&self.grid), coeffs }
    }

    /// `(−Δ)^s`: multiplies the coefficient at `j` by `(λ1 |j|²)^s`.
    pub fn laplacian_power(&self, s: f64) -> SpectralField {
        if s == 0.0 {
            return self.clone();
        }
        self.map_symbol(|idx| {
            let mu = self.grid.mu[idx];
            if mu == 0.0 {
                0.0
            } else {
                mu.powf(s)
            }
        })
    }

    /// `Δu`.
    pub fn laplacian(&self) -> SpectralField {
        self.map_symbol(|idx| -self.grid.mu[idx])
    }

    /// `Δ⁻¹u` on mean-zero fields.
    pub fn inverse_laplacian(&self) -> SpectralField {
        self.map_symbol(|idx| {
            let mu = self.grid.mu[idx];
            if mu == 0.0 {
                0.0
            } else {
                -1.0 / mu
            }
        })
    }

    fn derivative(&self, axis: usize) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let (kx, ky) = self.grid.wavevector(idx);
                let k = if axis == 0 { kx } else { ky };
                Complex64::new(-k * c.im, k * c.re)
            })
            .collect();
        SpectralField { grid: Arc::clone(&self.grid), coeffs }
    }

    pub fn dx(&self) -> SpectralField {
        self.derivative(0)
    }

    pub fn dy(&self) -> SpectralField {
        self.derivative(1)
    }

    /// `(u, v)_0 = ∫ u v dO`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        let l2 = self.grid.length * self.grid.length;
        l2 * self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum::<f64>()
    }

    /// `‖u‖_s = (Σ_j (λ1|j|²)^s |u_j|²)^{1/2}` with the integral normalization.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }

    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        let l2 = self.grid.length * self.grid.length;
        l2 * self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(idx, c)| {
                let mu = self.grid.mu[idx];
                let w = if s == 0.0 { 1.0 } else { mu.powf(s) };
                w * c.norm_sqr()
            })
            .sum::<f64>()
    }

    pub fn norm0(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    /// `‖∇u‖_s² = ‖u_x‖_s² + ‖u_y‖_s²`.
    pub fn grad_norm_sq(&self, s: f64) -> f64 {
        self.dx().sobolev_norm_sq(s) + self.dy().sobolev_norm_sq(s)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * a;
        }
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            grid: Arc::clone(&self.grid),
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// Pointwise maximum of `|∇u|` on the physical grid.
    pub fn max_gradient(&self) -> f64 {
        let (ux, uy) = self.grid.to_physical_pair(&self.dx().coeffs, &self.dy().coeffs);
        ux.iter()
            .zip(&uy)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Dealiased Jacobian `J(u, v) = u_x v_y − u_y v_x`.
///
/// Derivatives are taken spectrally, products are formed on the physical
/// grid and the result is truncated to the dealiased band. For band-limited
/// inputs the retained coefficients are free of aliasing error.
pub fn jacobian(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.check_grid(v)?;
    let grid = &u.grid;
    let (ux, uy) = grid.to_physical_pair(&u.dx().coeffs, &u.dy().coeffs);
    let (vx, vy) = grid.to_physical_pair(&v.dx().coeffs, &v.dy().coeffs);
    let mut buf: Vec<Complex64> = (0..grid.len())
        .map(|i| Complex64::new(ux[i] * vy[i] - uy[i] * vx[i], 0.0))
        .collect();
    grid.fft2(&mut buf, false);
    let scale = 1.0 / grid.len() as f64;
    for (c, &keep) in buf.iter_mut().zip(&grid.band) {
        *c = if keep { *c * scale } else { ZERO };
    }
    let mut out = SpectralField { grid: Arc::clone(grid), coeffs: buf };
    out.symmetrize();
    Ok(out)
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        debug_assert!(self.same_grid(rhs));
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect();
        SpectralField { grid: Arc::clone(&self.grid), coeffs }
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        debug_assert!(self.same_grid(rhs));
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
        SpectralField { grid: Arc::clone(&self.grid), coeffs }
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Arc<Grid> {
        Grid::new(2.0 * PI, 32).unwrap()
    }

    fn sample(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let h = grid.spacing();
        let n = grid.n();
        let mut v = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                v.push(f(ix as f64 * h, iy as f64 * h));
            }
        }
        v
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1.0, 31).is_err());
        assert!(Grid::new(1.0, 2).is_err());
        assert!(Grid::new(-1.0, 32).is_err());
        assert!(Grid::with_dealias(1.0, 32, 0.0).is_err());
    }

    #[test]
    fn two_thirds_band_is_alias_free() {
        for n in [8, 16, 32, 48, 64, 96] {
            let g = Grid::new(1.0, n).unwrap();
            assert!(3 * g.kmax() < n, "n = {n}, kmax = {}", g.kmax());
        }
        assert_eq!(Grid::new(1.0, 64).unwrap().kmax(), 21);
        assert_eq!(Grid::new(1.0, 32).unwrap().kmax(), 10);
    }

    #[test]
    fn lambda1_is_smallest_lattice_eigenvalue() {
        let g = Grid::new(3.0, 16).unwrap();
        let smallest = g.mu_slice().iter().copied().filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min);
        assert!((smallest - g.lambda1()).abs() <= 1e-15 * g.lambda1());
        let idx = g.index_of(2, -3).unwrap();
        assert!((g.mu(idx) - 13.0 * g.lambda1()).abs() < 1e-14 * g.mu(idx));
    }

    #[test]
    fn constant_field_maps_to_zero() {
        let g = grid();
        let f = SpectralField::from_physical(&g, &vec![1.0; g.len()]).unwrap();
        assert!(f.is_zero());
    }

    #[test]
    fn pure_sine_is_one_conjugate_pair() {
        let g = grid();
        let l = g.length();
        let f = SpectralField::from_physical(&g, &sample(&g, |x, _| (2.0 * PI * x / l).sin())).unwrap();
        let c = f.coeff(1, 0);
        assert!((c - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((f.coeff(-1, 0) - c.conj()).norm() < 1e-15);
        let others = f
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(idx, _)| ![g.index_of(1, 0).unwrap(), g.index_of(-1, 0).unwrap()].contains(idx))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        assert!(others < 1e-15);
    }

    #[test]
    fn non_square_input_is_rejected() {
        let g = grid();
        assert!(SpectralField::from_physical(&g, &vec![0.0; 10]).is_err());
        let rows = vec![vec![0.0; 32]; 31];
        assert!(SpectralField::from_rows(&g, &rows).is_err());
    }

    #[test]
    fn round_trip_band_limited() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = SpectralField::random(&g, &mut rng, 1.0);
        let phys = f.to_physical();
        let back = SpectralField::from_physical(&g, &phys).unwrap();
        let phys2 = back.to_physical();
        let err = phys.iter().zip(&phys2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12, "round trip error {err}");
    }

    #[test]
    fn laplacian_eigenvalue_and_inverse() {
        let g = Grid::new(3.0, 16).unwrap();
        let e = SpectralField::unit_cosine(&g, 1, 0).unwrap();
        let minus_lap = e.laplacian_power(1.0);
        let diff = &minus_lap - &e.scaled(g.lambda1());
        assert!(diff.max_abs_coeff() < 1e-15);
        assert_eq!(e.laplacian_power(0.0).coeffs(), e.coeffs());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = SpectralField::random(&g, &mut rng, 0.5);
        let back = u.laplacian().inverse_laplacian();
        assert!((&back - &u).norm0() <= 1e-12 * u.norm0());
        let back2 = u.laplacian_power(-1.5).laplacian_power(1.5);
        assert!((&back2 - &u).norm0() <= 1e-12 * u.norm0());
    }

    #[test]
    fn sobolev_norm_values() {
        let g = Grid::new(3.0, 16).unwrap();
        assert_eq!(SpectralField::zeros(&g).sobolev_norm(1.0), 0.0);
        let e = SpectralField::unit_cosine(&g, 1, 0).unwrap();
        assert!((e.norm0() - 1.0).abs() < 1e-14);
        assert!((e.sobolev_norm(1.0) - g.lambda1().sqrt()).abs() < 1e-14 * g.lambda1().sqrt());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = SpectralField::random(&g, &mut rng, 1.0);
        for s in [0.0, 1.0, -1.0, 0.5] {
            let lhs = u.grad_norm_sq(s);
            let rhs = u.sobolev_norm_sq(1.0 + s);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs, "s = {s}");
        }
    }

    #[test]
    fn jacobian_of_sines() {
        let g = grid();
        let l = g.length();
        let k = 2.0 * PI / l;
        let u = SpectralField::from_physical(&g, &sample(&g, |x, _| (k * x).sin())).unwrap();
        let v = SpectralField::from_physical(&g, &sample(&g, |_, y| (k * y).sin())).unwrap();
        let j = jacobian(&u, &v).unwrap();
        let expected = sample(&g, |x, y| k * k * (k * x).cos() * (k * y).cos());
        let got = j.to_physical();
        let err = got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn jacobian_self_is_zero_and_mean_free() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = SpectralField::random(&g, &mut rng, 1.0);
        let v = SpectralField::random(&g, &mut rng, 1.0);
        assert!(jacobian(&u, &u).unwrap().max_abs_coeff() < 1e-14 * u.max_abs_coeff().powi(2) + 1e-300);
        let j = jacobian(&u, &v).unwrap();
        assert_eq!(j.coeff(0, 0), ZERO);
        assert!(j.is_band_limited());
        assert!(j.symmetry_defect() == 0.0);
    }

    #[test]
    fn jacobian_grid_mismatch() {
        let a = SpectralField::zeros(&Grid::new(1.0, 16).unwrap());
        let b = SpectralField::zeros(&Grid::new(1.0, 32).unwrap());
        assert!(matches!(jacobian(&a, &b), Err(QgError::Dimension(_))));
    }

    #[test]
    fn node_evaluation_matches_grid() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = SpectralField::random(&g, &mut rng, 1.0);
        let phys = u.to_physical();
        let h = g.spacing();
        for (ix, iy) in [(0, 0), (3, 17), (31, 8)] {
            let v = u.eval_at(ix as f64 * h, iy as f64 * h);
            assert!((v - phys[iy * g.n() + ix]).abs() < 1e-12);
        }
    }
}
