//! Wiener forcing with a covariance diagonal in the Fourier basis, the
//! stationary Ornstein–Uhlenbeck field `η` solving `η_t = ν(k+1)Δη + Ẇ`,
//! and the elliptic correctors `ξ1`, `ξ2`.
//!
//! Coefficients of `W` and `η` at lattice index `j` (in the unit-`L²`
//! eigenbasis) are complex Gaussians with `E|W_j(t)|² = q_j t`. Every random
//! number is drawn from a ChaCha stream keyed on
//! `(base_seed, member, step, purpose)`, so a trajectory reproduces exactly
//! regardless of how members are scheduled across threads.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{QgError, Result};
use crate::spectral::{Grid, SpectralField};
use crate::twolayer::DerivedParams;

/// Which independent family of Gaussians a draw belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    /// Brownian increments `ΔW`.
    Wiener = 1,
    /// Second Gaussian completing the exact `(ΔW, ∫e^{−a(t−s)}dW)` pair.
    OuComplement = 2,
    /// Stationary initial draw of `η`.
    Stationary = 3,
    /// Independent stationary samples used for moment estimates.
    Moments = 4,
    /// Random initial conditions.
    InitialCondition = 5,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator for one `(base_seed, member, step, purpose)` key.
pub fn stream_rng(base_seed: u64, member: u64, step: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut state = base_seed;
    let mut seed = [0u8; 32];
    let mut mix = splitmix64(&mut state);
    for (word, salt) in [member, step, purpose as u64, 0x5EED].into_iter().enumerate() {
        state ^= salt.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17 * word as u32 + 7);
        mix ^= splitmix64(&mut state);
        seed[word * 8..word * 8 + 8].copy_from_slice(&mix.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Where the covariance spectrum came from.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectrumSource {
    PowerLaw { sigma: f64, gamma: f64 },
    Table,
}

/// Covariance spectrum `q_j` on the dealiased band, control parameter `k`
/// and base seed.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    grid: Arc<Grid>,
    spectrum: Vec<f64>,
    half_band: Vec<usize>,
    pub source: SpectrumSource,
    pub k: f64,
    pub base_seed: u64,
}

impl NoiseSpec {
    /// `q_j = σ² (1 + |j|²)^{−γ}` on every retained nonzero index.
    pub fn power_law(grid: &Arc<Grid>, sigma: f64, gamma: f64, k: f64, base_seed: u64) -> Result<NoiseSpec> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(QgError::Config(format!("sigma must be nonnegative, got {sigma}")));
        }
        if !(gamma > 2.0 && gamma.is_finite()) {
            return Err(QgError::Config(format!("gamma must exceed 2, got {gamma}")));
        }
        let spectrum = (0..grid.len())
            .map(|idx| {
                if !grid.in_band(idx) {
                    return 0.0;
                }
                let (j1, j2) = grid.wavenumber(idx);
                sigma * sigma * (1.0 + (j1 * j1 + j2 * j2) as f64).powf(-gamma)
            })
            .collect();
        NoiseSpec::assemble(grid, spectrum, SpectrumSource::PowerLaw { sigma, gamma }, k, base_seed)
    }

    /// Explicit spectrum from `(j1, j2, q)` triples; `q_{−j}` is filled in
    /// from `q_j` and indices not listed carry no noise.
    pub fn from_table(grid: &Arc<Grid>, rows: &[(i64, i64, f64)], k: f64, base_seed: u64) -> Result<NoiseSpec> {
        let mut spectrum = vec![f64::NAN; grid.len()];
        for &(j1, j2, q) in rows {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(QgError::Config(format!("spectrum entry ({j1},{j2}) has invalid q = {q}")));
            }
            let idx = grid
                .index_of(j1, j2)
                .filter(|&i| grid.in_band(i))
                .ok_or_else(|| QgError::Config(format!("spectrum entry ({j1},{j2}) lies outside the retained band")))?;
            for i in [idx, grid.conjugate_index(idx)] {
                if !spectrum[i].is_nan() && spectrum[i] != q {
                    return Err(QgError::Config(format!("spectrum entries for ±({j1},{j2}) disagree")));
                }
                spectrum[i] = q;
            }
        }
        for v in spectrum.iter_mut() {
            if v.is_nan() {
                *v = 0.0;
            }
        }
        NoiseSpec::assemble(grid, spectrum, SpectrumSource::Table, k, base_seed)
    }

    /// Read a spectrum CSV with rows `j1,j2,q` (an optional header is skipped).
    pub fn from_csv(grid: &Arc<Grid>, path: &Path, k: f64, base_seed: u64) -> Result<NoiseSpec> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| QgError::Config(format!("cannot read spectrum file {}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| QgError::Config(format!("spectrum file: {e}")))?;
            if record.len() != 3 {
                return Err(QgError::Config(format!("spectrum row {} must have 3 columns", line + 1)));
            }
            let parsed = (record[0].parse::<i64>(), record[1].parse::<i64>(), record[2].parse::<f64>());
            match parsed {
                (Ok(j1), Ok(j2), Ok(q)) => rows.push((j1, j2, q)),
                _ if line == 0 => continue,
                _ => return Err(QgError::Config(format!("spectrum row {} is not numeric", line + 1))),
            }
        }
        NoiseSpec::from_table(grid, &rows, k, base_seed)
    }

    fn assemble(grid: &Arc<Grid>, spectrum: Vec<f64>, source: SpectrumSource, k: f64, base_seed: u64) -> Result<NoiseSpec> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(QgError::Config(format!("control parameter k must be positive, got {k}")));
        }
        Ok(NoiseSpec { grid: Arc::clone(grid), spectrum, half_band: grid.half_band(), source, k, base_seed })
    }

    pub fn with_seed(&self, base_seed: u64) -> NoiseSpec {
        NoiseSpec { base_seed, ..self.clone() }
    }

    /// Same spectral shape multiplied by `factor²` (amplitude scaled by `factor`).
    pub fn with_amplitude_factor(&self, factor: f64) -> NoiseSpec {
        let spectrum = self.spectrum.iter().map(|q| q * factor * factor).collect();
        let source = match self.source {
            SpectrumSource::PowerLaw { sigma, gamma } => SpectrumSource::PowerLaw { sigma: sigma * factor.abs(), gamma },
            SpectrumSource::Table => SpectrumSource::Table,
        };
        NoiseSpec { spectrum, source, ..self.clone() }
    }

    pub fn with_k(&self, k: f64) -> Result<NoiseSpec> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(QgError::Config(format!("control parameter k must be positive, got {k}")));
        }
        Ok(NoiseSpec { k, ..self.clone() })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `q_j` at a storage index.
    pub fn variance(&self, idx: usize) -> f64 {
        self.spectrum[idx]
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// `tr₀Q = Σ_j q_j`.
    pub fn trace(&self) -> f64 {
        self.spectrum.iter().sum()
    }

    pub fn is_silent(&self) -> bool {
        self.spectrum.iter().all(|&q| q == 0.0)
    }

    /// OU relaxation rate `ν(k+1)λ1|j|²` of a mode.
    pub fn ou_rate(&self, idx: usize, dp: &DerivedParams) -> f64 {
        dp.nu * (self.k + 1.0) * self.grid.mu(idx)
    }

    /// Closed-form stationary `E‖η‖_0² = Σ_j q_j / (2 a_j)`.
    pub fn stationary_l2_sq(&self, dp: &DerivedParams) -> f64 {
        (0..self.spectrum.len())
            .filter(|&idx| self.spectrum[idx] > 0.0)
            .map(|idx| self.spectrum[idx] / (2.0 * self.ou_rate(idx, dp)))
            .sum()
    }

    /// Closed-form stationary `E‖η‖_1² = tr₀Q / (2ν(k+1))`.
    pub fn stationary_h1_sq(&self, dp: &DerivedParams) -> f64 {
        self.trace() / (2.0 * dp.nu * (self.k + 1.0))
    }

    pub(crate) fn half_band(&self) -> &[usize] {
        &self.half_band
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

fn place(field: &mut SpectralField, grid: &Grid, idx: usize, value: Complex64) {
    let conj = grid.conjugate_index(idx);
    let c = field.coeffs_mut();
    c[idx] = value;
    c[conj] = value.conj();
}

/// Brownian increment over `[step·Δt, (step+1)·Δt]` for one member.
pub fn sample_wiener_increments(spec: &NoiseSpec, dt: f64, step: u64, member: u64) -> Result<SpectralField> {
    if !(dt > 0.0) {
        return Err(QgError::Config(format!("time step must be positive, got {dt}")));
    }
    let grid = spec.grid();
    let mut dw = SpectralField::zeros(grid);
    if spec.is_silent() {
        return Ok(dw);
    }
    let mut rng = stream_rng(spec.base_seed, member, step, Purpose::Wiener);
    let inv_l = 1.0 / grid.length();
    for &idx in spec.half_band() {
        let z = complex_normal(&mut rng);
        let q = spec.variance(idx);
        place(&mut dw, grid, idx, z * ((q * dt / 2.0).sqrt() * inv_l));
    }
    Ok(dw)
}

/// Noise input over one step: the Brownian increment `ΔW` and the exact OU
/// convolution `∫ e^{−a(t_{n+1}−s)} dW(s)` sharing the same Brownian path.
#[derive(Clone, Debug)]
pub struct WienerIncrement {
    pub dt: f64,
    pub dw: SpectralField,
    pub ou_kick: SpectralField,
}

fn fine_increment(spec: &NoiseSpec, dp: &DerivedParams, dt: f64, step: u64, member: u64) -> WienerIncrement {
    let grid = spec.grid();
    let mut dw = SpectralField::zeros(grid);
    let mut kick = SpectralField::zeros(grid);
    if spec.is_silent() {
        return WienerIncrement { dt, dw, ou_kick: kick };
    }
    let mut rng_w = stream_rng(spec.base_seed, member, step, Purpose::Wiener);
    let mut rng_c = stream_rng(spec.base_seed, member, step, Purpose::OuComplement);
    let inv_l = 1.0 / grid.length();
    for &idx in spec.half_band() {
        let z1 = complex_normal(&mut rng_w);
        let z2 = complex_normal(&mut rng_c);
        let q = spec.variance(idx);
        let a = spec.ou_rate(idx, dp);
        // per real component: Var ΔW = qΔt/2, Cov = q(1−e^{−aΔt})/(2a),
        // Var I = q(1−e^{−2aΔt})/(4a)
        let var_w = q * dt / 2.0;
        let (cov, var_i) = if a > 0.0 {
            (-q * (-a * dt).exp_m1() / (2.0 * a), -q * (-2.0 * a * dt).exp_m1() / (4.0 * a))
        } else {
            (var_w, var_w)
        };
        let sw = var_w.sqrt();
        let c = if sw > 0.0 { cov / sw } else { 0.0 };
        let d = (var_i - c * c).max(0.0).sqrt();
        place(&mut dw, grid, idx, z1 * (sw * inv_l));
        place(&mut kick, grid, idx, (z1 * c + z2 * d) * inv_l);
    }
    WienerIncrement { dt, dw, ou_kick: kick }
}

/// Noise path of one ensemble member. A coarse step is assembled from
/// `substeps` fine steps, so runs at `Δt` and `Δt/2^m` see the same path
/// when the finer run uses proportionally fewer substeps.
#[derive(Clone, Debug)]
pub struct NoisePath {
    spec: Arc<NoiseSpec>,
    dp: Arc<DerivedParams>,
    member: u64,
    substeps: u64,
}

impl NoisePath {
    pub fn new(spec: Arc<NoiseSpec>, dp: Arc<DerivedParams>, member: u64) -> NoisePath {
        NoisePath { spec, dp, member, substeps: 1 }
    }

    pub fn with_substeps(mut self, substeps: u64) -> NoisePath {
        self.substeps = substeps.max(1);
        self
    }

    pub fn member(&self) -> u64 {
        self.member
    }

    pub fn spec(&self) -> &Arc<NoiseSpec> {
        &self.spec
    }

    pub fn increment(&self, step: u64, dt: f64) -> WienerIncrement {
        let s = self.substeps;
        let h = dt / s as f64;
        let mut total = fine_increment(&self.spec, &self.dp, h, step * s, self.member);
        if s == 1 || self.spec.is_silent() {
            total.dt = dt;
            return total;
        }
        let grid = self.spec.grid().clone();
        let decay: Vec<f64> = (0..grid.len()).map(|idx| (-self.spec.ou_rate(idx, &self.dp) * h).exp()).collect();
        for sub in 1..s {
            let fine = fine_increment(&self.spec, &self.dp, h, step * s + sub, self.member);
            total.dw.axpy(1.0, &fine.dw);
            let kc = total.ou_kick.coeffs_mut();
            for (idx, (k, f)) in kc.iter_mut().zip(fine.ou_kick.coeffs()).enumerate() {
                *k = *k * decay[idx] + f;
            }
        }
        total.dt = dt;
        total
    }

    /// Stationary starting state of this member.
    pub fn initial_state(&self) -> NoiseState {
        ou_stationary_draw(&self.spec, &self.dp, self.member)
    }
}

/// Current OU field with its correctors.
#[derive(Clone, Debug)]
pub struct NoiseState {
    pub eta: SpectralField,
    pub xi1: SpectralField,
    pub xi2: SpectralField,
    pub t: f64,
}

impl NoiseState {
    pub fn zeros(grid: &Arc<Grid>) -> NoiseState {
        NoiseState {
            eta: SpectralField::zeros(grid),
            xi1: SpectralField::zeros(grid),
            xi2: SpectralField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn from_eta(eta: SpectralField, dp: &DerivedParams, t: f64) -> NoiseState {
        let (xi1, xi2) = xi_from_eta(&eta, dp);
        NoiseState { eta, xi1, xi2, t }
    }

    /// Exact OU transition driven by `inc`; correctors are refreshed.
    pub fn advance(&mut self, inc: &WienerIncrement, spec: &NoiseSpec, dp: &DerivedParams) {
        let grid = spec.grid().clone();
        {
            let eta = self.eta.coeffs_mut();
            let kick = inc.ou_kick.coeffs();
            for idx in 0..grid.len() {
                let a = spec.ou_rate(idx, dp);
                if grid.mu(idx) == 0.0 {
                    continue;
                }
                eta[idx] = eta[idx] * (-a * inc.dt).exp() + kick[idx];
            }
        }
        let (xi1, xi2) = xi_from_eta(&self.eta, dp);
        self.xi1 = xi1;
        self.xi2 = xi2;
        self.t += inc.dt;
    }

    /// Residuals of `Δξ1 − F1(ξ1 − ξ2) = −η` and `Δξ2 − F2(ξ2 − ξ1) = 0`,
    /// in `L²`.
    pub fn corrector_residuals(&self, dp: &DerivedParams) -> (f64, f64) {
        let d = &self.xi1 - &self.xi2;
        let mut r1 = self.xi1.laplacian();
        r1.axpy(-dp.f1, &d);
        r1.axpy(1.0, &self.eta);
        let mut r2 = self.xi2.laplacian();
        r2.axpy(dp.f2, &d);
        (r1.norm0(), r2.norm0())
    }
}

/// Closed-form elliptic lift of `η`:
/// `ξ1 = [F2(−Δ)⁻¹ + F1(−Δ + F1 + F2)⁻¹] η / (F1 + F2)`,
/// `ξ2 = F2 [(−Δ)⁻¹ − (−Δ + F1 + F2)⁻¹] η / (F1 + F2)`.
pub fn xi_from_eta(eta: &SpectralField, dp: &DerivedParams) -> (SpectralField, SpectralField) {
    let grid = eta.grid().clone();
    let fs = dp.f1 + dp.f2;
    let xi1 = eta.map_symbol(|idx| {
        let mu = grid.mu(idx);
        if mu == 0.0 {
            0.0
        } else if fs == 0.0 {
            1.0 / mu
        } else {
            (dp.f2 / mu + dp.f1 / (mu + fs)) / fs
        }
    });
    let xi2 = eta.map_symbol(|idx| {
        let mu = grid.mu(idx);
        if mu == 0.0 || fs == 0.0 {
            0.0
        } else {
            dp.f2 / fs * (1.0 / mu - 1.0 / (mu + fs))
        }
    });
    (xi1, xi2)
}

/// Draw `η` from its stationary law (`E|η_j|² = q_j / (2a_j)`).
pub fn ou_stationary_draw(spec: &NoiseSpec, dp: &DerivedParams, member: u64) -> NoiseState {
    let eta = stationary_eta(spec, dp, member, Purpose::Stationary);
    NoiseState::from_eta(eta, dp, 0.0)
}

fn stationary_eta(spec: &NoiseSpec, dp: &DerivedParams, member: u64, purpose: Purpose) -> SpectralField {
    let grid = spec.grid();
    let mut eta = SpectralField::zeros(grid);
    if spec.is_silent() {
        return eta;
    }
    let mut rng = stream_rng(spec.base_seed, member, 0, purpose);
    let inv_l = 1.0 / grid.length();
    for &idx in spec.half_band() {
        let z = complex_normal(&mut rng);
        let var = spec.variance(idx) / (2.0 * spec.ou_rate(idx, dp));
        place(&mut eta, grid, idx, z * ((var / 2.0).sqrt() * inv_l));
    }
    eta
}

/// Advance `state` by `dt` along member `member`'s path at step index `step`.
pub fn ou_evolve(state: &mut NoiseState, spec: &Arc<NoiseSpec>, dp: &Arc<DerivedParams>, dt: f64, member: u64, step: u64) {
    let path = NoisePath::new(Arc::clone(spec), Arc::clone(dp), member);
    let inc = path.increment(step, dt);
    state.advance(&inc, spec, dp);
}

/// Monte-Carlo moments of the stationary OU field.
#[derive(Clone, Debug)]
pub struct MomentReport {
    pub samples: usize,
    pub l2_sq: Estimate,
    pub l2_4: Estimate,
    pub h1_sq: Estimate,
    pub h1_4: Estimate,
    /// `Σ_j q_j / (2 a_j)`
    pub closed_l2_sq: f64,
    /// `tr₀Q / (2ν(k+1))`
    pub closed_h1_sq: f64,
    /// Per-sample `‖η‖_0²`, in sample order.
    pub l2_sq_samples: Vec<f64>,
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Estimate {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Estimate { mean, std_err: f64::NAN };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { mean, std_err: (var / n).sqrt() }
    }

    /// `|mean − target| ≤ k · std_err`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err
    }
}

pub const MIN_MOMENT_SAMPLES: usize = 100;

pub fn noise_moments(spec: &NoiseSpec, dp: &DerivedParams, samples: usize) -> Result<MomentReport> {
    if samples < MIN_MOMENT_SAMPLES {
        return Err(QgError::Statistics(format!(
            "moment estimates need at least {MIN_MOMENT_SAMPLES} samples, got {samples}"
        )));
    }
    let grid = spec.grid();
    let l2 = grid.length() * grid.length();
    let pairs: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let eta = stationary_eta(spec, dp, s, Purpose::Moments);
            let (mut n0, mut n1) = (0.0, 0.0);
            for (idx, c) in eta.coeffs().iter().enumerate() {
                let m = c.norm_sqr();
                n0 += m;
                n1 += grid.mu(idx) * m;
            }
            (l2 * n0, l2 * n1)
        })
        .collect();
    let l2_sq: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let h1_sq: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    Ok(MomentReport {
        samples,
        l2_sq: Estimate::from_samples(&l2_sq),
        l2_4: Estimate::from_samples(&sq(&l2_sq)),
        h1_sq: Estimate::from_samples(&h1_sq),
        h1_4: Estimate::from_samples(&sq(&h1_sq)),
        closed_l2_sq: spec.stationary_l2_sq(dp),
        closed_h1_sq: spec.stationary_h1_sq(dp),
        l2_sq_samples: l2_sq,
    })
}
