//! Time integration of the wind-driven two-layer system.
//!
//! Two formulations share one noise path:
//!
//! * the original SPDE, `q1_t + J(ψ1, q1 + βy) = νΔ²ψ1 + f + Ẇ`,
//!   `q2_t + J(ψ2, q2 + βy) = νΔ²ψ2 − rΔψ2`, stepped by Euler–Maruyama;
//! * the random PDE for `q̃1 = q1 − η`, `ψ̃ = ψ + ξ`, stepped by an IMEX
//!   scheme (Crank–Nicolson on the per-mode linear block, AB2 on the rest).

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QgError, Result};
use crate::noise::{stream_rng, NoisePath, NoiseSpec, NoiseState, Purpose, WienerIncrement};
use crate::snapshot::write_snapshot;
use crate::spectral::{jacobian, Grid, SpectralField};
use crate::twolayer::{star_parts, stream_from_pv, DerivedParams, LayerState, StreamPair};
use num_complex::Complex64;

/// Coefficient magnitude treated as blow-up.
pub const OVERFLOW_GUARD: f64 = 1e150;

/// CFL safety factor: `Δt ≤ CFL_SAFETY · dx / max|∇ψ|`.
pub const CFL_SAFETY: f64 = 0.5;

/// Mean wind forcing on the top layer.
#[derive(Clone, Debug, PartialEq)]
pub enum ForcingSpec {
    Zero,
    /// `f = 2πτ0/(ρ0 h1 L) · sin(2πy/L)`
    PaperSinusoid,
    /// Physical-grid samples, row-major with `y` major.
    Custom(Vec<f64>),
}

/// Amplitude `2πτ0/(ρ0 h1 L)` of the sinusoidal wind-stress curl.
pub fn sinusoid_amplitude(dp: &DerivedParams) -> f64 {
    2.0 * std::f64::consts::PI * dp.raw.tau0 / (dp.raw.rho0 * dp.h1 * dp.length)
}

pub fn make_forcing(spec: &ForcingSpec, grid: &Arc<Grid>, dp: &DerivedParams) -> Result<SpectralField> {
    match spec {
        ForcingSpec::Zero => Ok(SpectralField::zeros(grid)),
        ForcingSpec::PaperSinusoid => {
            let a = sinusoid_amplitude(dp);
            SpectralField::mode(grid, 0, 1, Complex64::new(0.0, -a / 2.0))
        }
        ForcingSpec::Custom(values) => {
            if values.len() != grid.n() * grid.n() {
                return Err(QgError::Forcing(format!(
                    "custom forcing has {} values, grid needs {}",
                    values.len(),
                    grid.n() * grid.n()
                )));
            }
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            if !mean.is_finite() || mean.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(QgError::Forcing(format!("forcing must have zero mean, got mean {mean:e}")));
            }
            let mut f = SpectralField::from_physical(grid, values)?;
            f.truncate_to_band();
            Ok(f)
        }
    }
}

/// `‖f‖_{-1}²`.
pub fn forcing_h_minus1_sq(f: &SpectralField) -> f64 {
    f.sobolev_norm_sq(-1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    #[default]
    Transformed,
    DirectSpde,
}

/// Parameters, noise and forcing of one model instance.
#[derive(Clone, Debug)]
pub struct Model {
    pub dp: Arc<DerivedParams>,
    pub noise: Arc<NoiseSpec>,
    pub forcing: SpectralField,
    /// When false the Jacobian terms are dropped.
    pub nonlinear: bool,
}

impl Model {
    pub fn new(dp: Arc<DerivedParams>, noise: Arc<NoiseSpec>, forcing: SpectralField) -> Result<Model> {
        if noise.grid().as_ref() != forcing.grid().as_ref() {
            return Err(QgError::Dimension("noise and forcing live on different grids".into()));
        }
        if (noise.grid().length() - dp.length).abs() > 1e-12 * dp.length {
            return Err(QgError::Dimension(format!(
                "grid length {} differs from L = {}",
                noise.grid().length(),
                dp.length
            )));
        }
        Ok(Model { dp, noise, forcing, nonlinear: true })
    }

    pub fn linearized(mut self) -> Model {
        self.nonlinear = false;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.forcing.grid()
    }

    /// Terms treated explicitly: Jacobians, β, forcing and noise correctors.
    pub fn explicit_tendency(&self, q: &LayerState, noise: &NoiseState) -> Result<LayerState> {
        q.q1.check_grid(&noise.eta)?;
        q.q1.check_grid(&self.forcing)?;
        let dp = &self.dp;
        let psi = stream_from_pv(q, dp);
        let a1 = &psi.psi1 - &noise.xi1;
        let a2 = &psi.psi2 - &noise.xi2;
        let mut t1 = a1.dx().scaled(-dp.beta);
        let mut t2 = a2.dx().scaled(-dp.beta);
        if self.nonlinear {
            t1.axpy(-1.0, &jacobian(&a1, &(&q.q1 + &noise.eta))?);
            t2.axpy(-1.0, &jacobian(&a2, &q.q2)?);
        }
        t1.axpy(1.0, &self.forcing);
        if !noise.eta.is_zero() {
            let lap_d = (&noise.xi1 - &noise.xi2).laplacian();
            t1.axpy(-dp.nu * dp.f1, &lap_d);
            t1.axpy(-dp.nu * self.noise.k, &noise.eta.laplacian());
            t2.axpy(dp.nu * dp.f2, &lap_d);
            t2.axpy(dp.r, &noise.xi2.laplacian());
        }
        Ok(LayerState { q1: t1, q2: t2 })
    }

    /// `(νΔ²ψ1, νΔ²ψ2 − rΔψ2)`, the stiff linear block.
    pub fn implicit_tendency(&self, q: &LayerState) -> LayerState {
        let dp = &self.dp;
        let psi = stream_from_pv(q, dp);
        let grid = q.grid();
        LayerState {
            q1: psi.psi1.map_symbol(|idx| dp.nu * grid.mu(idx).powi(2)),
            q2: psi.psi2.map_symbol(|idx| dp.nu * grid.mu(idx).powi(2) + dp.r * grid.mu(idx)),
        }
    }

    /// Full tendency of the transformed system.
    pub fn tendency(&self, q: &LayerState, noise: &NoiseState) -> Result<LayerState> {
        let mut t = self.explicit_tendency(q, noise)?;
        t.axpy(1.0, &self.implicit_tendency(q));
        Ok(t)
    }
}

/// Tendency `dq̃/dt` of the transformed system with every term switched on.
/// With `η = ξ = 0` this is the deterministic two-layer tendency.
pub fn rhs_transformed(q: &LayerState, noise: &NoiseState, dp: &DerivedParams, f: &SpectralField, k: f64) -> Result<LayerState> {
    let grid = f.grid();
    let spec = NoiseSpec::power_law(grid, 0.0, 3.0, k, 0)?;
    let model = Model::new(Arc::new(dp.clone()), Arc::new(spec), f.clone())?;
    model.tendency(q, noise)
}

/// `q1 = q̃1 + η`, `q2 = q̃2`.
pub fn to_original_variables(q: &LayerState, noise: &NoiseState) -> LayerState {
    LayerState { q1: &q.q1 + &noise.eta, q2: q.q2.clone() }
}

/// `q̃1 = q1 − η`, `q̃2 = q2`.
pub fn to_transformed_variables(q: &LayerState, noise: &NoiseState) -> LayerState {
    LayerState { q1: &q.q1 - &noise.eta, q2: q.q2.clone() }
}

#[derive(Clone, Copy, Debug)]
struct Block {
    prop: [[f64; 2]; 2],
    gain: [[f64; 2]; 2],
}

fn inverse2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

fn matmul2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Per-mode matrix of the linear block acting on `(q1_j, q2_j)`.
pub fn linear_block(dp: &DerivedParams, mu: f64) -> [[f64; 2]; 2] {
    let det = mu * mu + mu * (dp.f1 + dp.f2);
    let minv = [[(-mu - dp.f2) / det, -dp.f1 / det], [-dp.f2 / det, (-mu - dp.f1) / det]];
    let d = [dp.nu * mu * mu, dp.nu * mu * mu + dp.r * mu];
    [[d[0] * minv[0][0], d[0] * minv[0][1]], [d[1] * minv[1][0], d[1] * minv[1][1]]]
}

/// Fixed-step integrator for one trajectory.
#[derive(Clone, Debug)]
pub struct Stepper {
    model: Arc<Model>,
    dt: f64,
    blocks: Vec<Option<Block>>,
    history: Option<LayerState>,
    rest: NoiseState,
    t: f64,
}

impl Stepper {
    pub fn new(model: Arc<Model>, dt: f64) -> Result<Stepper> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QgError::Config(format!("time step must be positive, got {dt}")));
        }
        let grid = model.grid().clone();
        let blocks = (0..grid.len())
            .map(|idx| {
                if !grid.in_band(idx) {
                    return None;
                }
                let a = linear_block(&model.dp, grid.mu(idx));
                let h = dt / 2.0;
                let minus = [[1.0 - h * a[0][0], -h * a[0][1]], [-h * a[1][0], 1.0 - h * a[1][1]]];
                let plus = [[1.0 + h * a[0][0], h * a[0][1]], [h * a[1][0], 1.0 + h * a[1][1]]];
                let inv = inverse2(minus);
                let gain = [[inv[0][0] * dt, inv[0][1] * dt], [inv[1][0] * dt, inv[1][1] * dt]];
                Some(Block { prop: matmul2(inv, plus), gain })
            })
            .collect();
        let rest = NoiseState::zeros(&grid);
        Ok(Stepper { model, dt, blocks, history: None, rest, t: 0.0 })
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    /// Forget the multistep history; the next step is a Euler start.
    pub fn reset(&mut self) {
        self.history = None;
    }

    fn check_increment(&self, inc: &WienerIncrement) -> Result<()> {
        if (inc.dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(QgError::Config(format!("increment covers {} but the step is {}", inc.dt, self.dt)));
        }
        Ok(())
    }

    fn guard(&self, q: &LayerState) -> Result<()> {
        if !q.is_finite() {
            return Err(QgError::Divergence { t: self.t, reason: "non-finite coefficients".into() });
        }
        let m = q.max_abs_coeff();
        if m > OVERFLOW_GUARD {
            return Err(QgError::Divergence { t: self.t, reason: format!("coefficient magnitude {m:e} exceeds guard") });
        }
        Ok(())
    }

    /// One IMEX step of the transformed system; `noise` is advanced by the
    /// exact OU transition driven by `inc`.
    pub fn step_transformed(&mut self, q: &mut LayerState, noise: &mut NoiseState, inc: &WienerIncrement) -> Result<()> {
        self.check_increment(inc)?;
        let e = self.model.explicit_tendency(q, noise)?;
        let ex = match &self.history {
            Some(prev) => {
                let mut ex = e.scaled(1.5);
                ex.axpy(-0.5, prev);
                ex
            }
            None => e.clone(),
        };
        let (q1, q2) = (q.q1.coeffs_mut(), q.q2.coeffs_mut());
        let (e1, e2) = (ex.q1.coeffs(), ex.q2.coeffs());
        for (idx, block) in self.blocks.iter().enumerate() {
            match block {
                Some(b) => {
                    let (a, c) = (q1[idx], q2[idx]);
                    q1[idx] = a * b.prop[0][0] + c * b.prop[0][1] + e1[idx] * b.gain[0][0] + e2[idx] * b.gain[0][1];
                    q2[idx] = a * b.prop[1][0] + c * b.prop[1][1] + e1[idx] * b.gain[1][0] + e2[idx] * b.gain[1][1];
                }
                None => {
                    q1[idx] = Complex64::new(0.0, 0.0);
                    q2[idx] = Complex64::new(0.0, 0.0);
                }
            }
        }
        self.history = Some(e);
        noise.advance(inc, &self.model.noise, &self.model.dp);
        self.t += self.dt;
        self.guard(q)
    }

    /// One Euler–Maruyama step of the original SPDE; the Brownian increment
    /// enters the top layer only.
    pub fn step_direct_spde(&mut self, q: &mut LayerState, inc: &WienerIncrement) -> Result<()> {
        self.check_increment(inc)?;
        let drift = self.model.tendency(q, &self.rest)?;
        q.axpy(self.dt, &drift);
        q.q1.axpy(1.0, &inc.dw);
        q.q1.truncate_to_band();
        q.q2.truncate_to_band();
        self.t += self.dt;
        self.guard(q)
    }

    /// Largest stable step from the advective CFL bound for the current flow.
    pub fn cfl_limit(&self, q: &LayerState, noise: &NoiseState) -> f64 {
        let psi = stream_from_pv(q, &self.model.dp);
        let g1 = (&psi.psi1 - &noise.xi1).max_gradient();
        let g2 = (&psi.psi2 - &noise.xi2).max_gradient();
        let g = g1.max(g2);
        if g == 0.0 {
            f64::INFINITY
        } else {
            CFL_SAFETY * self.model.grid().spacing() / g
        }
    }

    pub fn check_cfl(&self, q: &LayerState, noise: &NoiseState) -> Result<()> {
        let limit = self.cfl_limit(q, noise);
        if self.dt > limit {
            return Err(QgError::Divergence {
                t: self.t,
                reason: format!("time step {} exceeds the advective limit {limit:e}", self.dt),
            });
        }
        Ok(())
    }
}

/// Random initial state with `‖q‖_*² = target`; the coefficient spectrum
/// falls off like `(1 + |j|²)^{−slope/2}`.
pub fn random_state(grid: &Arc<Grid>, dp: &DerivedParams, seed: u64, member: u64, target: f64, slope: f64) -> LayerState {
    let mut rng = stream_rng(seed, member, 0, Purpose::InitialCondition);
    let q = LayerState { q1: SpectralField::random(grid, &mut rng, slope), q2: SpectralField::random(grid, &mut rng, slope) };
    let norm = star_parts(&q, dp).total();
    if target <= 0.0 || norm == 0.0 {
        return LayerState::zeros(grid);
    }
    q.scaled((target / norm).sqrt())
}

/// Everything needed to run one trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub model: Arc<Model>,
    pub dt: f64,
    pub t_final: f64,
    /// Initial state in the original variables.
    pub initial: LayerState,
    pub formulation: Formulation,
    pub output_every: usize,
    pub member: u64,
    /// Fine noise steps per model step.
    pub substeps: u64,
    /// Start `η` from its stationary law (otherwise from zero).
    pub stationary_start: bool,
    pub keep_snapshots: bool,
}

impl TrajectoryConfig {
    pub fn new(model: Arc<Model>, initial: LayerState, dt: f64, t_final: f64) -> TrajectoryConfig {
        TrajectoryConfig {
            model,
            dt,
            t_final,
            initial,
            formulation: Formulation::Transformed,
            output_every: 1,
            member: 0,
            substeps: 1,
            stationary_start: true,
            keep_snapshots: false,
        }
    }

    /// Number of steps, requiring `T` to be a whole multiple of `Δt`.
    pub fn steps(&self) -> Result<u64> {
        if !(self.dt > 0.0) || !(self.t_final >= self.dt) {
            return Err(QgError::Config(format!("need 0 < dt <= T, got dt = {}, T = {}", self.dt, self.t_final)));
        }
        if self.output_every == 0 {
            return Err(QgError::Config("output_every must be at least 1".into()));
        }
        let n = (self.t_final / self.dt).round();
        if (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(QgError::Config(format!("T = {} is not a multiple of dt = {}", self.t_final, self.dt)));
        }
        Ok(n as u64)
    }

    pub fn noise_path(&self) -> NoisePath {
        NoisePath::new(self.model.noise.clone(), self.model.dp.clone(), self.member).with_substeps(self.substeps)
    }

    pub fn initial_noise(&self) -> NoiseState {
        if self.stationary_start {
            self.noise_path().initial_state()
        } else {
            NoiseState::zeros(self.model.grid())
        }
    }
}

/// One row of the time-series output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub star_norm_sq: f64,
    pub h1_grad_psi1_sq: f64,
    pub h2_grad_psi2_sq: f64,
    pub eta_norm_sq: f64,
}

impl SeriesRow {
    pub fn of(t: f64, q: &LayerState, noise: &NoiseState, dp: &DerivedParams) -> SeriesRow {
        let parts = star_parts(q, dp);
        SeriesRow {
            t,
            star_norm_sq: parts.total(),
            h1_grad_psi1_sq: parts.top,
            h2_grad_psi2_sq: parts.bottom,
            eta_norm_sq: noise.eta.sobolev_norm_sq(0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Norms of the state in the run's own variables (`q̃` for the
    /// transformed formulation, `q` for the direct one).
    pub rows: Vec<SeriesRow>,
    /// Output-time states in the original variables.
    pub snapshots: Vec<(f64, LayerState)>,
    pub final_original: LayerState,
    pub final_noise: NoiseState,
}

pub fn simulate(cfg: &TrajectoryConfig) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let mut stepper = Stepper::new(cfg.model.clone(), cfg.dt)?;
    let path = cfg.noise_path();
    let dp = cfg.model.dp.clone();
    let mut noise = cfg.initial_noise();
    let mut q = match cfg.formulation {
        Formulation::Transformed => to_transformed_variables(&cfg.initial, &noise),
        Formulation::DirectSpde => cfg.initial.clone(),
    };
    let original = |q: &LayerState, noise: &NoiseState| match cfg.formulation {
        Formulation::Transformed => to_original_variables(q, noise),
        Formulation::DirectSpde => q.clone(),
    };
    let mut rows = vec![SeriesRow::of(0.0, &q, &noise, &dp)];
    let mut snapshots = Vec::new();
    if cfg.keep_snapshots {
        snapshots.push((0.0, original(&q, &noise)));
    }
    stepper.check_cfl(&q, &noise)?;
    for step in 0..steps {
        let inc = path.increment(step, cfg.dt);
        match cfg.formulation {
            Formulation::Transformed => stepper.step_transformed(&mut q, &mut noise, &inc)?,
            Formulation::DirectSpde => {
                stepper.step_direct_spde(&mut q, &inc)?;
                noise.advance(&inc, &cfg.model.noise, &dp);
            }
        }
        let done = step + 1;
        if done % cfg.output_every as u64 == 0 || done == steps {
            let t = done as f64 * cfg.dt;
            stepper.set_time(t);
            rows.push(SeriesRow::of(t, &q, &noise, &dp));
            if cfg.keep_snapshots {
                snapshots.push((t, original(&q, &noise)));
            }
            stepper.check_cfl(&q, &noise)?;
        }
    }
    let final_original = original(&q, &noise);
    Ok(Trajectory { rows, snapshots, final_original, final_noise: noise })
}

/// Floats in the output files carry 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_series_csv<W: Write>(out: W, rows: &[SeriesRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| QgError::Io(std::io::Error::other(e));
    w.write_record(["t", "star_norm_sq", "h1_grad_psi1_sq", "h2_grad_psi2_sq", "eta_norm_sq"]).map_err(err)?;
    for r in rows {
        w.write_record([r.t, r.star_norm_sq, r.h1_grad_psi1_sq, r.h2_grad_psi2_sq, r.eta_norm_sq].map(fmt_float))
            .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Snapshot of a state as four fields: `q1, q2, ψ1, ψ2`.
pub fn write_state_snapshot<W: Write>(out: W, q: &LayerState, dp: &DerivedParams) -> Result<()> {
    let StreamPair { psi1, psi2 } = stream_from_pv(q, dp);
    write_snapshot(out, &[&q.q1, &q.q2, &psi1, &psi2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_wiener_increments;
    use crate::twolayer::{derive_params, PhysicalParams};
    use std::f64::consts::PI;

    fn unit_raw() -> PhysicalParams {
        PhysicalParams {
            nu: 0.1,
            beta: 0.0,
            f0: 1.0,
            g: 1.0,
            h1: 1.0,
            h2: 1.0,
            rho0: 1.0,
            rho1: 1.0,
            rho2: 2.0,
            length: 2.0 * PI,
            tau0: 0.0,
        }
    }

    fn model(dp: DerivedParams, sigma: f64, n: usize) -> Arc<Model> {
        let grid = Grid::new(dp.length, n).unwrap();
        let spec = NoiseSpec::power_law(&grid, sigma, 2.5, 1.0, 11).unwrap();
        let f = SpectralField::zeros(&grid);
        Arc::new(Model::new(Arc::new(dp), Arc::new(spec), f).unwrap())
    }

    #[test]
    fn forcing_modes() {
        let dp = derive_params(&PhysicalParams::ocean_basin()).unwrap();
        let grid = Grid::new(dp.length, 16).unwrap();
        assert!(make_forcing(&ForcingSpec::Zero, &grid, &dp).unwrap().is_zero());
        let a = sinusoid_amplitude(&dp);
        assert!((a - 1.2260e-12).abs() < 1e-15);
        let f = make_forcing(&ForcingSpec::PaperSinusoid, &grid, &dp).unwrap();
        assert_eq!(f.coeff(0, 1), Complex64::new(0.0, -a / 2.0));
        assert_eq!(f.coeff(0, -1), Complex64::new(0.0, a / 2.0));
        let nonzero = f.coeffs().iter().filter(|c| c.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
        let y = grid.length() * 3.0 / 16.0;
        let expect = a * (2.0 * PI * y / grid.length()).sin();
        assert!((f.eval_at(0.3, y) - expect).abs() < 1e-25);
        let expected_hm1 = a * a * dp.length * dp.length / (2.0 * dp.lambda1);
        assert!((forcing_h_minus1_sq(&f) / expected_hm1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn custom_forcing_must_be_mean_free() {
        let dp = derive_params(&unit_raw()).unwrap();
        let grid = Grid::new(dp.length, 8).unwrap();
        let bad = vec![1.0; 64];
        assert!(matches!(make_forcing(&ForcingSpec::Custom(bad), &grid, &dp), Err(QgError::Forcing(_))));
        let good: Vec<f64> = (0..64).map(|i| ((i % 8) as f64 * PI / 4.0).cos()).collect();
        let f = make_forcing(&ForcingSpec::Custom(good), &grid, &dp).unwrap();
        assert!((f.coeff(1, 0).re - 0.5).abs() < 1e-14);
        assert!(make_forcing(&ForcingSpec::Custom(vec![0.0; 3]), &grid, &dp).is_err());
    }

    #[test]
    fn rest_state_has_zero_tendency_and_stays_zero() {
        let dp = derive_params(&unit_raw()).unwrap().with_beta(0.3);
        let m = model(dp, 0.0, 16);
        let grid = m.grid().clone();
        let noise = NoiseState::zeros(&grid);
        let q = LayerState::zeros(&grid);
        assert!(m.tendency(&q, &noise).unwrap().is_zero());
        let mut stepper = Stepper::new(m.clone(), 0.01).unwrap();
        let path = NoisePath::new(m.noise.clone(), m.dp.clone(), 0);
        let (mut q, mut noise) = (q, noise);
        for step in 0..20 {
            stepper.step_transformed(&mut q, &mut noise, &path.increment(step, 0.01)).unwrap();
        }
        assert!(q.is_zero() && noise.eta.is_zero());
    }

    #[test]
    fn linear_block_matches_hand_solution() {
        // μ = 1, F1 = F2 = 1, ν = 0.1: ψ = M⁻¹q with M = [[-2, 1], [1, -2]],
        // M⁻¹ = -[[2, 1], [1, 2]]/3; r is derived from ν and f0
        let dp = derive_params(&unit_raw()).unwrap();
        let a = linear_block(&dp, 1.0);
        let d = [0.1, 0.1 + dp.r];
        let minv = [[-2.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, -2.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - d[i] * minv[i][j]).abs() < 1e-15);
            }
        }
        let m = model(dp, 0.0, 16).as_ref().clone().linearized();
        let grid = m.grid().clone();
        let q = LayerState {
            q1: SpectralField::mode(&grid, 1, 0, Complex64::new(1.0, 0.0)).unwrap(),
            q2: SpectralField::zeros(&grid),
        };
        let t = m.tendency(&q, &NoiseState::zeros(&grid)).unwrap();
        assert!((t.q1.coeff(1, 0).re - a[0][0]).abs() < 1e-15);
        assert!((t.q2.coeff(1, 0).re - a[1][0]).abs() < 1e-15);
    }

    #[test]
    fn pure_noise_step() {
        let dp = derive_params(&unit_raw()).unwrap();
        let m = model(dp, 1.0, 16);
        let grid = m.grid().clone();
        let mut stepper = Stepper::new(m.clone(), 0.1).unwrap();
        let path = NoisePath::new(m.noise.clone(), m.dp.clone(), 3);
        let inc = path.increment(7, 0.1);
        let mut q = LayerState::zeros(&grid);
        stepper.step_direct_spde(&mut q, &inc).unwrap();
        assert_eq!(q.q1.coeffs(), inc.dw.coeffs());
        assert!(q.q2.is_zero());
        let dw = sample_wiener_increments(&m.noise, 0.1, 7, 3).unwrap();
        assert_eq!(dw.coeffs(), inc.dw.coeffs());
    }

    #[test]
    fn variable_change_round_trip() {
        let dp = derive_params(&unit_raw()).unwrap();
        let m = model(dp.clone(), 1.0, 16);
        let grid = m.grid().clone();
        let q = random_state(&grid, &dp, 5, 0, 2.0, 2.0);
        assert!((star_parts(&q, &dp).total() - 2.0).abs() < 1e-12);
        let noise = NoisePath::new(m.noise.clone(), m.dp.clone(), 1).initial_state();
        let back = to_original_variables(&to_transformed_variables(&q, &noise), &noise);
        assert!(back.sub(&q).max_abs_coeff() < 1e-15);
        let zero = NoiseState::zeros(&grid);
        assert_eq!(to_original_variables(&q, &zero).q1.coeffs(), q.q1.coeffs());
    }

    #[test]
    fn trajectory_config_checks() {
        let dp = derive_params(&unit_raw()).unwrap();
        let m = model(dp, 0.0, 8);
        let q = LayerState::zeros(m.grid());
        let mut cfg = TrajectoryConfig::new(m, q, 0.1, 0.35);
        assert!(cfg.steps().is_err());
        cfg.t_final = 0.05;
        assert!(cfg.steps().is_err());
        cfg.t_final = 0.4;
        assert_eq!(cfg.steps().unwrap(), 4);
        cfg.output_every = 0;
        assert!(cfg.steps().is_err());
    }

    #[test]
    fn cfl_violation_is_reported() {
        let dp = derive_params(&unit_raw()).unwrap();
        let m = model(dp.clone(), 0.0, 16);
        let q = random_state(m.grid(), &dp, 1, 0, 1e6, 2.0);
        let cfg = TrajectoryConfig::new(m, q, 1.0, 2.0);
        assert!(matches!(simulate(&cfg), Err(QgError::Divergence { .. })));
    }

    #[test]
    fn series_csv_header_and_precision() {
        let rows = [SeriesRow { t: 0.5, star_norm_sq: 1.0 / 3.0, h1_grad_psi1_sq: 0.0, h2_grad_psi2_sq: 0.0, eta_norm_sq: 0.0 }];
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,star_norm_sq,h1_grad_psi1_sq,h2_grad_psi2_sq,eta_norm_sq");
        let v: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }
}
