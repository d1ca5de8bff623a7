//! Experiments: paired-trajectory comparisons, ensembles, the scalar
//! comparison ODE bounding `‖q(t)‖_*²`, energy-inequality audits and the
//! absorbing-radius estimator.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::determining::{compute_condition_coefficients, energy_budget, max_functional_sq, ConditionCoefficients, FunctionalSet};
use crate::dynamics::{fmt_float, to_original_variables, to_transformed_variables, Model, Stepper};
use crate::error::{QgError, Result};
use crate::noise::{Estimate, NoisePath, NoiseSpec, NoiseState};
use crate::spectral::SpectralField;
use crate::twolayer::{star_norm_sq, stream_from_pv, DerivedParams, LayerState};

fn csv_err(e: csv::Error) -> QgError {
    QgError::Io(std::io::Error::other(e))
}

/// Settings shared by the paired-trajectory experiments.
#[derive(Clone, Debug)]
pub struct ComparisonConfig {
    pub model: Arc<Model>,
    pub dt: f64,
    pub t_final: f64,
    pub output_every: usize,
    pub member: u64,
    pub substeps: u64,
    /// Length of the window in `∫_t^{t+w} N_L dτ`.
    pub window: f64,
    pub stationary_start: bool,
    pub keep_snapshots: bool,
}

impl ComparisonConfig {
    pub fn new(model: Arc<Model>, dt: f64, t_final: f64) -> ComparisonConfig {
        ComparisonConfig {
            model,
            dt,
            t_final,
            output_every: 1,
            member: 0,
            substeps: 1,
            window: 1.0,
            stationary_start: true,
            keep_snapshots: false,
        }
    }

    fn steps(&self) -> Result<u64> {
        let mut probe = crate::dynamics::TrajectoryConfig::new(self.model.clone(), LayerState::zeros(self.model.grid()), self.dt, self.t_final);
        probe.output_every = self.output_every;
        probe.steps()
    }
}

/// `V(t) = ‖q̂ − q̄‖_*²` and `N_L(t) = max_j |l_j(ψ̂1 − ψ̄1)|²` at the
/// output times.
#[derive(Clone, Debug, Default)]
pub struct ComparisonRecord {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub n_l: Vec<f64>,
    /// `∫_t^{t+w} N_L dτ`; NaN where the window runs past the last output.
    pub window_int: Vec<f64>,
    /// Time and reason if either trajectory blew up.
    pub diverged: Option<(f64, String)>,
    /// Output-time states of both trajectories in the original variables.
    pub snapshots: Vec<(f64, LayerState, LayerState)>,
}

impl ComparisonRecord {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "V", "N_L", "window_int_N_L"]).map_err(csv_err)?;
        for i in 0..self.t.len() {
            w.write_record([self.t[i], self.v[i], self.n_l[i], self.window_int[i]].map(fmt_float)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn final_ratio(&self) -> f64 {
        self.v.last().copied().unwrap_or(f64::NAN) / self.v[0]
    }
}

/// Trapezoid integral of samples `(t, y)` over `[a, b]` with linear
/// interpolation at the ends.
fn integrate_window(t: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let last = *t.last().unwrap();
    if b > last + 1e-9 * (1.0 + last.abs()) {
        return f64::NAN;
    }
    let interp = |x: f64| -> f64 {
        let i = t.partition_point(|&s| s < x).clamp(1, t.len() - 1);
        let (t0, t1) = (t[i - 1], t[i]);
        let w = if t1 > t0 { (x - t0) / (t1 - t0) } else { 0.0 };
        y[i - 1] + w * (y[i] - y[i - 1])
    };
    let mut pts: Vec<(f64, f64)> = vec![(a, interp(a))];
    for (ti, yi) in t.iter().zip(y) {
        if *ti > a && *ti < b {
            pts.push((*ti, *yi));
        }
    }
    pts.push((b, interp(b.min(last))));
    pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

pub fn window_integrals(t: &[f64], y: &[f64], window: f64) -> Vec<f64> {
    if t.len() < 2 {
        return vec![f64::NAN; t.len()];
    }
    t.iter().map(|&a| integrate_window(t, y, a, a + window)).collect()
}

/// Two transformed-system trajectories from `ic1`, `ic2` (original
/// variables) advanced in lockstep on one noise path.
pub fn run_comparison(cfg: &ComparisonConfig, ic1: &LayerState, ic2: &LayerState, set: &FunctionalSet) -> Result<ComparisonRecord> {
    let steps = cfg.steps()?;
    ic1.q1.check_grid(&ic2.q1)?;
    ic1.q1.check_grid(&cfg.model.forcing)?;
    let dp = cfg.model.dp.clone();
    let path = NoisePath::new(cfg.model.noise.clone(), dp.clone(), cfg.member).with_substeps(cfg.substeps);
    let noise0 = if cfg.stationary_start { path.initial_state() } else { NoiseState::zeros(cfg.model.grid()) };
    let mut a = to_transformed_variables(ic1, &noise0);
    let mut b = to_transformed_variables(ic2, &noise0);
    let (mut na, mut nb) = (noise0.clone(), noise0);
    let mut sa = Stepper::new(cfg.model.clone(), cfg.dt)?;
    let mut sb = Stepper::new(cfg.model.clone(), cfg.dt)?;
    let mut rec = ComparisonRecord::default();

    let observe = |t: f64, a: &LayerState, b: &LayerState, na: &NoiseState, nb: &NoiseState, rec: &mut ComparisonRecord| -> Result<()> {
        let d = a.sub(b);
        rec.t.push(t);
        rec.v.push(star_norm_sq(&d, &dp));
        let psi = stream_from_pv(&d, &dp);
        rec.n_l.push(max_functional_sq(set, &psi.psi1)?);
        if cfg.keep_snapshots {
            rec.snapshots.push((t, to_original_variables(a, na), to_original_variables(b, nb)));
        }
        Ok(())
    };
    observe(0.0, &a, &b, &na, &nb, &mut rec)?;
    for step in 0..steps {
        let inc = path.increment(step, cfg.dt);
        let outcome = sa.step_transformed(&mut a, &mut na, &inc).and_then(|_| sb.step_transformed(&mut b, &mut nb, &inc));
        if let Err(e) = outcome {
            match e {
                QgError::Divergence { t, reason } => {
                    rec.diverged = Some((t, reason));
                    break;
                }
                other => return Err(other),
            }
        }
        let done = step + 1;
        if done % cfg.output_every as u64 == 0 || done == steps {
            observe(done as f64 * cfg.dt, &a, &b, &na, &nb, &mut rec)?;
        }
    }
    rec.window_int = window_integrals(&rec.t, &rec.n_l, cfg.window);
    Ok(rec)
}

/// Per-time quantiles of an ensemble of comparison runs.
#[derive(Clone, Debug)]
pub struct EnsembleSummary {
    pub members: usize,
    pub survivors: usize,
    pub diverged: Vec<(u64, f64, String)>,
    pub t: Vec<f64>,
    pub q05_v: Vec<f64>,
    pub q50_v: Vec<f64>,
    pub q95_v: Vec<f64>,
    pub q05_nl: Vec<f64>,
    pub q50_nl: Vec<f64>,
    pub q95_nl: Vec<f64>,
    pub threshold: f64,
    /// Share of surviving members with `V(T)` below `threshold`.
    pub fraction_below: f64,
    pub v0: f64,
    pub final_v: Vec<f64>,
}

/// Linearly interpolated quantile of `values` (sorted in place).
pub fn quantile(values: &mut [f64], level: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = level.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

impl EnsembleSummary {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "q05_V", "q50_V", "q95_V", "q05_NL", "q50_NL", "q95_NL"]).map_err(csv_err)?;
        for i in 0..self.t.len() {
            w.write_record(
                [self.t[i], self.q05_v[i], self.q50_v[i], self.q95_v[i], self.q05_nl[i], self.q50_nl[i], self.q95_nl[i]]
                    .map(fmt_float),
            )
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "members = {}\nsurvivors = {}\nthreshold = {}\nfraction_below = {}\nV0 = {}\n",
            self.members,
            self.survivors,
            fmt_float(self.threshold),
            fmt_float(self.fraction_below),
            fmt_float(self.v0)
        );
        if let Some(i) = self.t.len().checked_sub(1) {
            s.push_str(&format!(
                "q05_V(T) = {}\nq50_V(T) = {}\nq95_V(T) = {}\n",
                fmt_float(self.q05_v[i]),
                fmt_float(self.q50_v[i]),
                fmt_float(self.q95_v[i])
            ));
        }
        for (m, t, reason) in &self.diverged {
            s.push_str(&format!("warning: member {m} diverged at t = {t}: {reason}\n"));
        }
        s
    }
}

/// `m` comparison runs on independent noise paths (members `0..m`), run in
/// parallel; the summary depends only on the inputs.
pub fn run_ensemble(
    cfg: &ComparisonConfig,
    ic1: &LayerState,
    ic2: &LayerState,
    set: &FunctionalSet,
    members: usize,
    threshold: f64,
) -> Result<EnsembleSummary> {
    if members < 2 {
        return Err(QgError::Config(format!("an ensemble needs at least 2 members, got {members}")));
    }
    let records: Vec<Result<ComparisonRecord>> = (0..members as u64)
        .into_par_iter()
        .map(|m| {
            let mut c = cfg.clone();
            c.member = m;
            c.keep_snapshots = false;
            run_comparison(&c, ic1, ic2, set)
        })
        .collect();
    let mut ok = Vec::new();
    let mut diverged = Vec::new();
    for (m, r) in records.into_iter().enumerate() {
        let r = r?;
        match &r.diverged {
            Some((t, reason)) => diverged.push((m as u64, *t, reason.clone())),
            None => ok.push(r),
        }
    }
    let survivors = ok.len();
    let t = ok.first().map(|r| r.t.clone()).unwrap_or_default();
    let per_time = |sel: fn(&ComparisonRecord) -> &Vec<f64>, level: f64| -> Vec<f64> {
        (0..t.len())
            .map(|i| {
                let mut vals: Vec<f64> = ok.iter().map(|r| sel(r)[i]).collect();
                quantile(&mut vals, level)
            })
            .collect()
    };
    let final_v: Vec<f64> = ok.iter().map(|r| *r.v.last().unwrap()).collect();
    let fraction_below = if survivors == 0 {
        f64::NAN
    } else {
        final_v.iter().filter(|&&v| v < threshold).count() as f64 / survivors as f64
    };
    Ok(EnsembleSummary {
        members,
        survivors,
        diverged,
        q05_v: per_time(|r| &r.v, 0.05),
        q50_v: per_time(|r| &r.v, 0.50),
        q95_v: per_time(|r| &r.v, 0.95),
        q05_nl: per_time(|r| &r.n_l, 0.05),
        q50_nl: per_time(|r| &r.n_l, 0.50),
        q95_nl: per_time(|r| &r.n_l, 0.95),
        v0: ok.first().map(|r| r.v[0]).unwrap_or(f64::NAN),
        t,
        threshold,
        fraction_below,
        final_v,
    })
}

/// Solution of `ρ' + (νλ1/a0)ρ = d0‖η‖²ρ + m`, `ρ(t0) = rho0`, with the
/// coefficients frozen at the left end of each sampling interval and the
/// affine step solved exactly.
pub fn solve_comparison_ode(rho0: f64, t: &[f64], m: &[f64], eta_sq: &[f64], dp: &DerivedParams, d0: f64) -> Vec<f64> {
    let mut rho = Vec::with_capacity(t.len());
    if t.is_empty() {
        return rho;
    }
    rho.push(rho0);
    let decay = dp.nu * dp.lambda1 / dp.a0;
    for i in 1..t.len() {
        let h = t[i] - t[i - 1];
        let a = -decay + d0 * eta_sq[i - 1];
        let prev = rho[i - 1];
        let e = (a * h).exp_m1();
        let next = if a == 0.0 { prev + m[i - 1] * h } else { prev * (1.0 + e) + m[i - 1] * e / a };
        rho.push(next);
    }
    rho
}

/// Per-step quantities along one transformed trajectory.
#[derive(Clone, Debug, Default)]
pub struct EnergyTrack {
    pub t: Vec<f64>,
    pub star: Vec<f64>,
    pub eta_sq: Vec<f64>,
    pub m: Vec<f64>,
    /// Right side of the energy inequality, `growth + m − dissipation`.
    pub bound: Vec<f64>,
}

/// Run the transformed system from `q0` (original variables) for `steps`
/// steps, recording the energy budget after every step.
pub fn track_energy(model: &Arc<Model>, q0: &LayerState, dt: f64, steps: u64, member: u64) -> Result<EnergyTrack> {
    let dp = model.dp.clone();
    let coeffs = compute_condition_coefficients(&dp, &model.noise, &model.forcing);
    let path = NoisePath::new(model.noise.clone(), dp.clone(), member);
    let mut noise = path.initial_state();
    let mut q = to_transformed_variables(q0, &noise);
    let mut stepper = Stepper::new(model.clone(), dt)?;
    let mut track = EnergyTrack::default();
    let record = |t: f64, q: &LayerState, noise: &NoiseState, track: &mut EnergyTrack| {
        let b = energy_budget(q, noise, &dp, &coeffs);
        track.t.push(t);
        track.star.push(star_norm_sq(q, &dp));
        track.eta_sq.push(noise.eta.sobolev_norm_sq(0.0));
        track.m.push(b.m);
        track.bound.push(b.bound());
    };
    record(0.0, &q, &noise, &mut track);
    for step in 0..steps {
        stepper.step_transformed(&mut q, &mut noise, &path.increment(step, dt))?;
        record((step + 1) as f64 * dt, &q, &noise, &mut track);
    }
    Ok(track)
}

/// Outcome of checking per-step increments of `‖q‖_*²` against the energy
/// inequality.
#[derive(Clone, Debug)]
pub struct AuditSummary {
    pub steps: usize,
    pub violations: usize,
    /// `max_n (increment − allowed)`; negative when every step passes.
    pub worst_excess: f64,
    /// Smallest `allowed − increment` relative to `|allowed|`.
    pub tightest_margin: f64,
}

/// A step passes when
/// `‖q_{n+1}‖² − ‖q_n‖² ≤ Δt (G_n + G_{n+1})/2 + Δt |G_{n+1} − G_n|`,
/// the last term being the declared `O(Δt²)` slack for smooth `G`.
pub fn audit_energy_inequality(track: &EnergyTrack) -> AuditSummary {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut tightest = f64::INFINITY;
    for n in 0..track.t.len().saturating_sub(1) {
        let h = track.t[n + 1] - track.t[n];
        let (g0, g1) = (track.bound[n], track.bound[n + 1]);
        let allowed = h * 0.5 * (g0 + g1) + h * (g1 - g0).abs();
        let incr = track.star[n + 1] - track.star[n];
        let excess = incr - allowed;
        if excess > 0.0 {
            violations += 1;
        }
        worst = worst.max(excess);
        if allowed.abs() > 0.0 {
            tightest = tightest.min(-excess / allowed.abs());
        }
    }
    AuditSummary { steps: track.t.len().saturating_sub(1), violations, worst_excess: worst, tightest_margin: tightest }
}

/// `ρ(t)` along a tracked trajectory, started from `‖q(0)‖_*²`.
pub fn comparison_bound(track: &EnergyTrack, dp: &DerivedParams, coeffs: &ConditionCoefficients) -> Vec<f64> {
    solve_comparison_ode(track.star[0], &track.t, &track.m, &track.eta_sq, dp, coeffs.d0)
}

/// Settings of the absorbing-radius estimator.
#[derive(Clone, Debug)]
pub struct RadiusOptions {
    pub paths: usize,
    /// Truncation horizon; by default fifteen e-folding times of the
    /// mean decay rate `νλ1/a0 − d0 E‖η‖²`.
    pub horizon: Option<f64>,
    pub steps: usize,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        RadiusOptions { paths: 200, horizon: None, steps: 4000 }
    }
}

/// Monte-Carlo estimate of the absorbing radius `R0`.
#[derive(Clone, Debug)]
pub struct RadiusEstimate {
    pub horizon: f64,
    pub steps: usize,
    pub per_path: Vec<f64>,
    pub mean: Estimate,
    pub er2: Estimate,
    pub tail_share_max: f64,
    /// Whether the moment conditions that make `R0` finite hold.
    pub reliable: bool,
}

impl RadiusEstimate {
    pub fn to_text(&self) -> String {
        format!(
            "paths = {}\nhorizon = {}\nsteps = {}\nmean_R0 = {}\nmean_R0_std_err = {}\nE_R0_sq = {}\nE_R0_sq_std_err = {}\ntail_share_max = {}\nreliable = {}\n",
            self.per_path.len(),
            fmt_float(self.horizon),
            self.steps,
            fmt_float(self.mean.mean),
            fmt_float(self.mean.std_err),
            fmt_float(self.er2.mean),
            fmt_float(self.er2.std_err),
            fmt_float(self.tail_share_max),
            self.reliable
        )
    }

    pub fn write_paths_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path", "R0"]).map_err(csv_err)?;
        for (i, r) in self.per_path.iter().enumerate() {
            w.write_record([i.to_string(), fmt_float(*r)]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Share of the oldest tenth of the horizon above which the truncation is
/// declared unconverged.
pub const TAIL_TOLERANCE: f64 = 0.01;

/// Truncated `R0 = ∫_{−T}^0 exp((νλ1/a0)τ + d0∫_τ^0‖η‖²) m dτ` on uniform
/// samples of `‖η‖²` at `τ_i = −T + iΔ`; returns the value and the share
/// contributed by `τ ≤ −0.9T`.
pub fn radius_integral(eta_sq: &[f64], horizon: f64, coeffs: &ConditionCoefficients, dp: &DerivedParams) -> (f64, f64) {
    let n = eta_sq.len() - 1;
    let h = horizon / n as f64;
    let kappa = dp.nu * dp.lambda1 / dp.a0;
    let mut inner = vec![0.0; n + 1];
    for i in (0..n).rev() {
        inner[i] = inner[i + 1] + 0.5 * h * (eta_sq[i] + eta_sq[i + 1]);
    }
    let g: Vec<f64> = (0..=n)
        .map(|i| {
            let tau = -horizon + i as f64 * h;
            (kappa * tau + coeffs.d0 * inner[i]).exp() * coeffs.m_of(eta_sq[i])
        })
        .collect();
    let trap = |a: usize, b: usize| -> f64 { (a..b).map(|i| 0.5 * h * (g[i] + g[i + 1])).sum() };
    let total = trap(0, n);
    let tail_end = (n as f64 * 0.1).round() as usize;
    let tail = trap(0, tail_end);
    let share = if total > 0.0 { tail / total } else { 0.0 };
    (total, share)
}

pub fn estimate_absorbing_radius(dp: &DerivedParams, spec: &NoiseSpec, f: &SpectralField, opts: &RadiusOptions) -> Result<RadiusEstimate> {
    if opts.paths == 0 || opts.steps < 10 {
        return Err(QgError::Config("radius estimation needs at least one path and ten steps".into()));
    }
    let coeffs = compute_condition_coefficients(dp, spec, f);
    let kappa = dp.nu * dp.lambda1 / dp.a0;
    let mean_rate = kappa - coeffs.d0 * spec.stationary_l2_sq(dp);
    if !(mean_rate > 0.0) {
        return Err(QgError::Statistics(format!(
            "the radius integral diverges: mean decay rate {mean_rate:e} is not positive"
        )));
    }
    let horizon = opts.horizon.unwrap_or(15.0 / mean_rate);
    let tr = coeffs.trace_q;
    let l1 = dp.lambda1;
    let reliable = 2.0 * coeffs.d0 * dp.a0 * tr / (l1 * l1 * dp.nu * dp.nu * (spec.k + 1.0)) < 1.0
        && 16.0 * coeffs.d0 * tr / (l1 * l1 * dp.nu * dp.nu * (spec.k + 1.0).powi(2)) < 1.0;

    let per_path_raw: Vec<(f64, f64)> = if spec.is_silent() {
        let zeros = vec![0.0; opts.steps + 1];
        vec![radius_integral(&zeros, horizon, &coeffs, dp); opts.paths]
    } else {
        let spec = Arc::new(spec.with_seed(spec.base_seed ^ 0x5241_4449_5553_0000));
        let dpa = Arc::new(dp.clone());
        let dt = horizon / opts.steps as f64;
        (0..opts.paths as u64)
            .into_par_iter()
            .map(|p| {
                let path = NoisePath::new(spec.clone(), dpa.clone(), p);
                let mut state = path.initial_state();
                let mut xs = Vec::with_capacity(opts.steps + 1);
                xs.push(state.eta.sobolev_norm_sq(0.0));
                for s in 0..opts.steps as u64 {
                    state.advance(&path.increment(s, dt), &spec, &dpa);
                    xs.push(state.eta.sobolev_norm_sq(0.0));
                }
                radius_integral(&xs, horizon, &coeffs, dp)
            })
            .collect()
    };
    let tail_share_max = per_path_raw.iter().map(|p| p.1).fold(0.0, f64::max);
    if tail_share_max > TAIL_TOLERANCE {
        return Err(QgError::ExtendHorizon { horizon, tail_share: tail_share_max });
    }
    let per_path: Vec<f64> = per_path_raw.iter().map(|p| p.0).collect();
    let squares: Vec<f64> = per_path.iter().map(|r| r * r).collect();
    let (mean, er2) = if spec.is_silent() {
        (Estimate { mean: per_path[0], std_err: 0.0 }, Estimate { mean: squares[0], std_err: 0.0 })
    } else {
        (Estimate::from_samples(&per_path), Estimate::from_samples(&squares))
    };
    Ok(RadiusEstimate { horizon, steps: opts.steps, per_path, mean, er2, tail_share_max, reliable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twolayer::{derive_params, PhysicalParams};

    #[test]
    fn quantiles_interpolate() {
        let mut v = vec![3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantile(&mut v, 0.5), 3.0);
        assert_eq!(quantile(&mut v, 0.0), 1.0);
        assert_eq!(quantile(&mut v, 1.0), 5.0);
        assert!((quantile(&mut v, 0.95) - 4.8).abs() < 1e-12);
        assert!(quantile(&mut [], 0.5).is_nan());
    }

    #[test]
    fn window_integral_of_constant() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 * 0.25).collect();
        let y = vec![2.0; 11];
        let w = window_integrals(&t, &y, 1.0);
        assert!((w[0] - 2.0).abs() < 1e-12);
        assert!((w[6] - 2.0).abs() < 1e-12);
        assert!(w[7].is_nan());
        let w = window_integrals(&t, &y, 0.3);
        assert!((w[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn comparison_ode_closed_form() {
        let dp = derive_params(&PhysicalParams::ocean_basin()).unwrap();
        let kappa = dp.nu * dp.lambda1 / dp.a0;
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1 / kappa).collect();
        let d3 = 2.5;
        let m = vec![d3; t.len()];
        let eta = vec![0.0; t.len()];
        let rho = solve_comparison_ode(7.0, &t, &m, &eta, &dp, 123.0);
        for (ti, r) in t.iter().zip(&rho) {
            let e = (-kappa * ti).exp();
            let exact = e * 7.0 + d3 / kappa * (1.0 - e);
            assert!((r / exact - 1.0).abs() < 1e-12);
        }
        let zero = solve_comparison_ode(0.0, &t, &vec![0.0; t.len()], &eta, &dp, 1.0);
        assert!(zero.iter().all(|&r| r == 0.0));
    }
}
