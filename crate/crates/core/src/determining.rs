//! Determining functionals on the top-layer streamfunction and the
//! sufficient conditions under which a finite family of them determines the
//! long-time behaviour of the stochastic two-layer system.
//!
//! All thresholds are the `δ → 0` forms of the underlying estimates.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::forcing_h_minus1_sq;
use crate::error::{QgError, Result};
use crate::harness::{estimate_absorbing_radius, RadiusEstimate, RadiusOptions};
use crate::noise::{noise_moments, Estimate, NoiseSpec, NoiseState};
use crate::spectral::{Grid, SpectralField};
use crate::twolayer::{stream_from_pv, DerivedParams, LayerState, C0};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Modes,
    Nodes,
}

impl std::str::FromStr for FamilyKind {
    type Err = QgError;

    fn from_str(s: &str) -> Result<FamilyKind> {
        match s {
            "modes" => Ok(FamilyKind::Modes),
            "nodes" => Ok(FamilyKind::Nodes),
            other => Err(QgError::Config(format!("unknown functional family '{other}' (modes|nodes)"))),
        }
    }
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FamilyKind::Modes => "modes",
            FamilyKind::Nodes => "nodes",
        })
    }
}

/// One linear functional on a mean-zero periodic field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Functional {
    /// `∫ u · (√2/L) cos(k_j·x) dO`
    Cosine { j1: i64, j2: i64 },
    /// `∫ u · (√2/L) sin(k_j·x) dO`
    Sine { j1: i64, j2: i64 },
    /// `u(x, y)`
    Node { x: f64, y: f64 },
}

/// A finite family of functionals with its completeness defect `ε_L`.
#[derive(Clone, Debug)]
pub struct FunctionalSet {
    pub kind: FamilyKind,
    pub functionals: Vec<Functional>,
    pub epsilon: f64,
    grid: Arc<Grid>,
}

fn positive_half(j1: i64, j2: i64) -> bool {
    j2 > 0 || (j2 == 0 && j1 > 0)
}

/// Nonzero lattice points sorted by `(|j|², j1, j2)`, at least `count` of
/// them, complete up to the squared radius of the last one returned.
pub fn sorted_lattice(count: usize) -> Vec<(i64, i64)> {
    let mut r = ((count as f64 / std::f64::consts::PI).sqrt().ceil() as i64).max(1) + 1;
    loop {
        let mut pts: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|a| (-r..=r).map(move |b| (a, b)))
            .filter(|&(a, b)| (a, b) != (0, 0))
            .collect();
        pts.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
        if pts.len() >= count {
            let (a, b) = pts[count - 1];
            // every point with |j|² ≤ r² is inside the square
            if a * a + b * b <= r * r {
                pts.truncate(count);
                return pts;
            }
        }
        r *= 2;
    }
}

/// `λ_i`, the i-th (1-based) eigenvalue of `−Δ` in the sorted enumeration.
pub fn eigenvalue(i: usize, lambda1: f64) -> f64 {
    let (a, b) = *sorted_lattice(i).last().expect("i >= 1");
    lambda1 * (a * a + b * b) as f64
}

/// Number of nonzero lattice points with `|j|² ≤ x`. Exact up to radius
/// 10⁶, Gauss's `πx` beyond that.
pub fn lattice_count(x: f64) -> f64 {
    if !(x >= 1.0) {
        return 0.0;
    }
    let r = x.sqrt();
    if r > 1e6 {
        return std::f64::consts::PI * x;
    }
    let rmax = r.floor() as i64;
    let mut total: i64 = 0;
    for a in -rmax..=rmax {
        let rest = x - (a * a) as f64;
        let mut b = rest.sqrt().floor() as i64;
        while (b + 1) * (b + 1) <= rest as i64 {
            b += 1;
        }
        while b > 0 && (b * b) as f64 > rest {
            b -= 1;
        }
        total += 2 * b + 1;
    }
    (total - 1) as f64
}

impl FunctionalSet {
    /// Projections onto the first `n` eigenfunctions of `−Δ`.
    pub fn modes(n: usize, grid: &Arc<Grid>) -> Result<FunctionalSet> {
        if n == 0 {
            return Err(QgError::Config("a mode family needs N >= 1".into()));
        }
        let lattice = sorted_lattice(n + 1);
        let mut functionals = Vec::with_capacity(n);
        for &(j1, j2) in &lattice[..n] {
            let inside = grid.index_of(j1, j2).map(|i| grid.in_band(i)).unwrap_or(false);
            if !inside {
                return Err(QgError::Config(format!(
                    "N = {n} modes exceed the {} retained modes of the grid",
                    grid.band_count()
                )));
            }
            functionals.push(if positive_half(j1, j2) {
                Functional::Cosine { j1, j2 }
            } else {
                Functional::Sine { j1: -j1, j2: -j2 }
            });
        }
        let (a, b) = lattice[n];
        let epsilon = (grid.lambda1() * (a * a + b * b) as f64).powf(-0.5);
        Ok(FunctionalSet { kind: FamilyKind::Modes, functionals, epsilon, grid: Arc::clone(grid) })
    }

    /// Point values on the regular `√N × √N` lattice `(L/√N)(i, j)`,
    /// `1 ≤ i, j ≤ √N`.
    pub fn nodes(n: usize, grid: &Arc<Grid>) -> Result<FunctionalSet> {
        let side = (n as f64).sqrt().round() as usize;
        if n == 0 || side * side != n {
            return Err(QgError::Config(format!("node count must be a positive perfect square, got {n}")));
        }
        let h = grid.length() / side as f64;
        let functionals = (1..=side)
            .flat_map(|i| (1..=side).map(move |j| Functional::Node { x: h * i as f64, y: h * j as f64 }))
            .collect();
        let epsilon = grid.length() / (2.0 * side as f64);
        Ok(FunctionalSet { kind: FamilyKind::Nodes, functionals, epsilon, grid: Arc::clone(grid) })
    }

    pub fn build(kind: FamilyKind, n: usize, grid: &Arc<Grid>) -> Result<FunctionalSet> {
        match kind {
            FamilyKind::Modes => FunctionalSet::modes(n, grid),
            FamilyKind::Nodes => FunctionalSet::nodes(n, grid),
        }
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
}

/// `l_j(ψ)` for every functional of the set.
pub fn eval_functionals(set: &FunctionalSet, psi: &SpectralField) -> Result<Vec<f64>> {
    if psi.grid().as_ref() != set.grid.as_ref() {
        return Err(QgError::Dimension("functional set and field live on different grids".into()));
    }
    let scale = std::f64::consts::SQRT_2 * set.grid.length();
    Ok(set
        .functionals
        .iter()
        .map(|f| match *f {
            Functional::Cosine { j1, j2 } => scale * psi.coeff(j1, j2).re,
            Functional::Sine { j1, j2 } => -scale * psi.coeff(j1, j2).im,
            Functional::Node { x, y } => psi.eval_at(x, y),
        })
        .collect())
}

/// `max_j |l_j(ψ)|²`; zero for an empty family.
pub fn max_functional_sq(set: &FunctionalSet, psi: &SpectralField) -> Result<f64> {
    Ok(eval_functionals(set, psi)?.into_iter().map(|v| v * v).fold(0.0, f64::max))
}

/// Largest `ε` for which the first `N` modes beat the threshold: the count
/// of eigenvalues not exceeding `1/ε²`.
pub fn implied_mode_count(epsilon: f64, lambda1: f64) -> f64 {
    lattice_count(1.0 / (epsilon * epsilon * lambda1))
}

/// Smallest square node count with `L/(2√N) < ε`.
pub fn implied_node_count(epsilon: f64, length: f64) -> f64 {
    let side = (length / (2.0 * epsilon)).floor() + 1.0;
    side * side
}

/// Constants of the energy inequality for the transformed system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionCoefficients {
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub c1: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub f_hm1_sq: f64,
    pub trace_q: f64,
    pub k: f64,
}

impl ConditionCoefficients {
    /// `m = d1‖η‖⁴ + d2‖η‖² + d3` for `eta_sq = ‖η‖_0²`.
    pub fn m_of(&self, eta_sq: f64) -> f64 {
        self.d1 * eta_sq * eta_sq + self.d2 * eta_sq + self.d3
    }
}

pub fn compute_condition_coefficients(dp: &DerivedParams, spec: &NoiseSpec, f: &SpectralField) -> ConditionCoefficients {
    let (nu, l1, p, k) = (dp.nu, dp.lambda1, dp.p, spec.k);
    let (h1, h2) = (dp.h1, dp.h2);
    let c0sq = C0 * C0;
    let f_hm1_sq = forcing_h_minus1_sq(f);
    ConditionCoefficients {
        a0: dp.a0,
        b0: dp.b0,
        c0: C0,
        c1: dp.c1,
        d0: 6.0 * c0sq / nu * (1.0 + p * p * nu / (l1 * l1 * dp.min_depth())),
        d1: 6.0 * c0sq * h1 / (nu * l1),
        d2: 9.0
            * (dp.beta * dp.beta * (h1 + h2) / (nu * l1.powi(3))
                + nu * p * p / (l1 * l1) * (1.0 / h1 + 1.0 / (5.0 * h2))
                + dp.r * h2 / (18.0 * l1)
                + k * k * nu * h1),
        d3: 9.0 * h1 * f_hm1_sq / (nu * l1),
        f_hm1_sq,
        trace_q: spec.trace(),
        k,
    }
}

/// Pieces of the energy inequality along a trajectory of the transformed
/// system: `d/dt‖q‖_*² + dissipation ≤ growth + m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBudget {
    /// `ν(h1‖Δψ1‖² + h2‖Δψ2‖²)`
    pub dissipation: f64,
    /// `d0‖η‖²(h1‖∇ψ1‖² + h2‖∇ψ2‖²)`
    pub growth: f64,
    pub m: f64,
}

impl EnergyBudget {
    /// Upper bound for `d/dt‖q‖_*²`.
    pub fn bound(&self) -> f64 {
        self.growth + self.m - self.dissipation
    }
}

pub fn energy_budget(q: &LayerState, noise: &NoiseState, dp: &DerivedParams, coeffs: &ConditionCoefficients) -> EnergyBudget {
    let psi = stream_from_pv(q, dp);
    let lap = dp.h1 * psi.psi1.sobolev_norm_sq(2.0) + dp.h2 * psi.psi2.sobolev_norm_sq(2.0);
    let grad = dp.h1 * psi.psi1.sobolev_norm_sq(1.0) + dp.h2 * psi.psi2.sobolev_norm_sq(1.0);
    let eta_sq = noise.eta.sobolev_norm_sq(0.0);
    EnergyBudget { dissipation: dp.nu * lap, growth: coeffs.d0 * eta_sq * grad, m: coeffs.m_of(eta_sq) }
}

/// `Σ = d0 (E‖η‖⁴)^{1/2} (E R²)^{1/2} + E m + ν min{h1,h2} E‖η‖²` with
/// `R = a R0`.
#[derive(Clone, Debug)]
pub struct SigmaEstimate {
    pub sigma: f64,
    pub std_err: f64,
    pub eta_sq: Estimate,
    pub eta_4: Estimate,
    pub m: Estimate,
    /// `(E m⁴)^{1/4}`, used in place of the moment-constant bound.
    pub d4_surrogate: f64,
    pub radius_factor: f64,
    pub er2: Estimate,
    pub radius: Option<RadiusEstimate>,
    /// `E m + ν min{h1,h2} E‖η‖²`, the part of `Σ` that does not involve `R`.
    pub floor: f64,
    /// Set when the mean decay rate of the radius integral is not positive;
    /// `Σ` and `E R²` are then infinite.
    pub radius_diverged: bool,
}

impl SigmaEstimate {
    /// Half-width of a 95% normal interval.
    pub fn ci95(&self) -> f64 {
        1.96 * self.std_err
    }
}

pub const DEFAULT_RADIUS_FACTOR: f64 = 4.0 / 3.0;

pub fn estimate_sigma(
    dp: &DerivedParams,
    spec: &NoiseSpec,
    f: &SpectralField,
    samples: usize,
    radius_factor: f64,
    radius: &RadiusOptions,
) -> Result<SigmaEstimate> {
    if !(radius_factor > 1.0) {
        return Err(QgError::Config(format!("radius factor a must exceed 1, got {radius_factor}")));
    }
    let c = compute_condition_coefficients(dp, spec, f);
    let exact = |v: f64| Estimate { mean: v, std_err: 0.0 };
    if spec.is_silent() {
        let r0 = c.d3 * dp.a0 / (dp.nu * dp.lambda1);
        let r = radius_factor * r0;
        return Ok(SigmaEstimate {
            sigma: c.d3,
            std_err: 0.0,
            eta_sq: exact(0.0),
            eta_4: exact(0.0),
            m: exact(c.d3),
            d4_surrogate: c.d3,
            radius_factor,
            er2: exact(r * r),
            radius: None,
            floor: c.d3,
            radius_diverged: false,
        });
    }
    let moments = noise_moments(spec, dp, samples)?;
    let m_samples: Vec<f64> = moments.l2_sq_samples.iter().map(|&x| c.m_of(x)).collect();
    let m = Estimate::from_samples(&m_samples);
    let d4_surrogate = (m_samples.iter().map(|v| v.powi(4)).sum::<f64>() / m_samples.len() as f64).powf(0.25);
    let floor = m.mean + dp.nu * dp.min_depth() * moments.l2_sq.mean;
    let rad = match estimate_absorbing_radius(dp, spec, f, radius) {
        Ok(rad) => rad,
        Err(QgError::Statistics(_)) => {
            return Ok(SigmaEstimate {
                sigma: f64::INFINITY,
                std_err: f64::NAN,
                eta_sq: moments.l2_sq,
                eta_4: moments.l2_4,
                m,
                d4_surrogate,
                radius_factor,
                er2: exact(f64::INFINITY),
                radius: None,
                floor,
                radius_diverged: true,
            })
        }
        Err(e) => return Err(e),
    };
    let a2 = radius_factor * radius_factor;
    let er2 = Estimate { mean: a2 * rad.er2.mean, std_err: a2 * rad.er2.std_err };
    let (e4, r2) = (moments.l2_4.mean, er2.mean);
    let sigma = c.d0 * e4.sqrt() * r2.sqrt() + floor;
    let d_e4 = if e4 > 0.0 { c.d0 * r2.sqrt() * moments.l2_4.std_err / (2.0 * e4.sqrt()) } else { 0.0 };
    let d_r2 = if r2 > 0.0 { c.d0 * e4.sqrt() * er2.std_err / (2.0 * r2.sqrt()) } else { 0.0 };
    let d_e2 = dp.nu * dp.min_depth() * moments.l2_sq.std_err;
    let std_err = (d_e4 * d_e4 + d_r2 * d_r2 + m.std_err * m.std_err + d_e2 * d_e2).sqrt();
    Ok(SigmaEstimate {
        sigma,
        std_err,
        eta_sq: moments.l2_sq,
        eta_4: moments.l2_4,
        m,
        d4_surrogate,
        radius_factor,
        er2,
        radius: Some(rad),
        floor,
        radius_diverged: false,
    })
}

/// `ν √min{h1,h2} / √(2 a0 b0 Σ)`.
pub fn all_layer_threshold(dp: &DerivedParams, sigma: f64) -> f64 {
    dp.nu * dp.min_depth().sqrt() / (2.0 * dp.a0 * dp.b0 * sigma).sqrt()
}

/// Left side, right side and verdict of one sufficient condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub key: &'static str,
    pub description: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    /// `None` when the condition needs a completeness defect and none was given.
    pub holds: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Less,
    GreaterEq,
    Greater,
}

impl Relation {
    pub fn eval(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Less => lhs < rhs,
            Relation::GreaterEq => lhs >= rhs,
            Relation::Greater => lhs > rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Less => "<",
            Relation::GreaterEq => ">=",
            Relation::Greater => ">",
        }
    }
}

fn verdict(key: &'static str, description: &'static str, lhs: f64, relation: Relation, rhs: f64) -> Verdict {
    let holds = if lhs.is_nan() { None } else { Some(relation.eval(lhs, rhs)) };
    Verdict { key, description, lhs, rhs, relation, holds }
}

/// Options of [`check_conditions`].
#[derive(Clone, Debug)]
pub struct ConditionOptions {
    /// Evaluate at `tr₀Q = 0` regardless of the noise spectrum.
    pub deterministic_limit: bool,
    pub family: FamilyKind,
    /// Completeness defect to test; falls back to the given set's `ε_L`.
    pub target_epsilon: Option<f64>,
    pub samples: usize,
    pub radius_factor: f64,
    pub radius: RadiusOptions,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions {
            deterministic_limit: false,
            family: FamilyKind::Modes,
            target_epsilon: None,
            samples: 2000,
            radius_factor: DEFAULT_RADIUS_FACTOR,
            radius: RadiusOptions::default(),
        }
    }
}

/// Every constant and every sufficient condition, with verdicts that can be
/// recomputed from the reported numbers.
#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub coefficients: ConditionCoefficients,
    pub nu: f64,
    pub lambda1: f64,
    pub r: f64,
    pub min_depth: f64,
    pub length: f64,
    pub deterministic_limit: bool,
    pub sigma: SigmaEstimate,
    pub family: FamilyKind,
    pub epsilon: Option<f64>,
    /// Largest admissible `ε_L` with both layers observed.
    pub epsilon_all_layers: f64,
    /// The same threshold written in closed form for `tr₀Q → 0`.
    pub epsilon_deterministic: f64,
    /// Largest `ε_L` with `ν/ε² ≥ νλ1 + 2r`.
    pub epsilon_top_layer: f64,
    pub implied_modes: f64,
    pub implied_nodes: f64,
    pub implied_modes_deterministic: f64,
    pub implied_nodes_deterministic: f64,
    pub verdicts: Vec<Verdict>,
}

pub fn check_conditions(
    dp: &DerivedParams,
    spec: &NoiseSpec,
    f: &SpectralField,
    set: Option<&FunctionalSet>,
    opts: &ConditionOptions,
) -> Result<ConditionReport> {
    let silent;
    let spec = if opts.deterministic_limit {
        silent = spec.with_amplitude_factor(0.0);
        &silent
    } else {
        spec
    };
    let c = compute_condition_coefficients(dp, spec, f);
    let sigma = estimate_sigma(dp, spec, f, opts.samples, opts.radius_factor, &opts.radius)?;
    let (nu, l1, r, a0, b0) = (dp.nu, dp.lambda1, dp.r, dp.a0, dp.b0);
    let minh = dp.min_depth();
    let kp1 = spec.k + 1.0;
    let tr = c.trace_q;
    let s = sigma.sigma;

    let epsilon_all_layers = all_layer_threshold(dp, s);
    let fnorm = c.f_hm1_sq.sqrt();
    let epsilon_deterministic = nu * nu * l1 * minh.sqrt() / (6.0 * fnorm * C0 * dp.h1.sqrt())
        * ((l1 + 2.0 * dp.max_f()) * (1.0 + dp.f1 * dp.f2 / (l1 * l1))).powf(-0.5);
    let epsilon_top_layer = (nu / (nu * l1 + 2.0 * r)).sqrt();
    let epsilon = opts.target_epsilon.or_else(|| set.map(|s| s.epsilon));
    let eps = epsilon.unwrap_or(f64::NAN);

    let top_rate = nu * l1 + 2.0 * r;
    let dominance = (nu / (eps * eps)).min(top_rate) * nu * minh / (2.0 * a0 * b0);
    let slaving = 36.0 * C0 * C0 * c.f_hm1_sq * dp.h1 / (nu.powi(3) * l1 * minh) * a0 * (1.0 + dp.f1 * dp.f2 / (l1 * l1));

    let mut verdicts = vec![
        verdict("noise_moment", "2 d0 a0 trQ / (l1^2 nu^2 (k+1)) < 1", 2.0 * c.d0 * a0 * tr / (l1 * l1 * nu * nu * kp1), Relation::Less, 1.0),
        verdict("noise_moment_k", "16 d0 trQ / (l1^2 nu^2 (k+1)^2) < 1", 16.0 * c.d0 * tr / (l1 * l1 * nu * nu * kp1 * kp1), Relation::Less, 1.0),
        verdict("noise_simple", "4 d0 a0 trQ / (l1^2 nu^2 (k+1)) < 1", 4.0 * c.d0 * a0 * tr / (l1 * l1 * nu * nu * kp1), Relation::Less, 1.0),
        verdict("control_floor", "k + 1 > 4 / a0", kp1, Relation::Greater, 4.0 / a0),
        verdict("all_layers", "eps < nu sqrt(min h) / sqrt(2 a0 b0 Sigma)", eps, Relation::Less, epsilon_all_layers),
        verdict("deterministic_limit", "eps < deterministic closed-form threshold", eps, Relation::Less, epsilon_deterministic),
        verdict("top_layer_dominance", "Sigma < min(nu/eps^2, nu l1 + 2r) nu min h / (2 a0 b0)", if epsilon.is_some() { s } else { f64::NAN }, Relation::Less, dominance),
        verdict("top_layer_defect", "nu / eps^2 >= nu l1 + 2r", nu / (eps * eps), Relation::GreaterEq, top_rate),
        verdict("top_layer_sigma", "Sigma < (nu l1 + 2r) nu min h / (2 b0 a0)", s, Relation::Less, top_rate * nu * minh / (2.0 * b0 * a0)),
        verdict("bottom_slaved_deterministic", "nu l1 + 2r > 36 c0^2 |f|_-1^2 h1 a0 (1 + F1F2/l1^2) / (nu^3 l1 min h)", top_rate, Relation::Greater, slaving),
    ];
    let slaved = verdicts[9].holds;
    let defect = verdicts[7].holds;
    let joint = match (slaved, defect) {
        (Some(a), Some(b)) => Some(a && b),
        (Some(false), None) => Some(false),
        _ => None,
    };
    verdicts.push(Verdict {
        key: "top_layer_determines",
        description: "bottom_slaved_deterministic and top_layer_defect",
        lhs: f64::NAN,
        rhs: f64::NAN,
        relation: Relation::Less,
        holds: joint,
    });

    Ok(ConditionReport {
        coefficients: c,
        nu,
        lambda1: l1,
        r,
        min_depth: minh,
        length: dp.length,
        deterministic_limit: opts.deterministic_limit,
        sigma,
        family: opts.family,
        epsilon,
        epsilon_all_layers,
        epsilon_deterministic,
        epsilon_top_layer,
        implied_modes: implied_mode_count(epsilon_all_layers, l1),
        implied_nodes: implied_node_count(epsilon_all_layers, dp.length),
        implied_modes_deterministic: implied_mode_count(epsilon_deterministic, l1),
        implied_nodes_deterministic: implied_node_count(epsilon_deterministic, dp.length),
        verdicts,
    })
}

fn yes_no(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "HOLDS",
        Some(false) => "FAILS",
        None => "n/a",
    }
}

impl ConditionReport {
    pub fn implied_count(&self) -> f64 {
        match self.family {
            FamilyKind::Modes => self.implied_modes,
            FamilyKind::Nodes => self.implied_nodes,
        }
    }

    pub fn verdict(&self, key: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.key == key)
    }

    pub fn to_text(&self) -> String {
        let c = &self.coefficients;
        let mut s = String::new();
        let _ = writeln!(s, "# determining-functional conditions");
        let _ = writeln!(s, "mode: {}", if self.deterministic_limit { "deterministic limit (trQ = 0)" } else { "stochastic" });
        let _ = writeln!(s, "thresholds use the delta -> 0 form; d4 is the Monte-Carlo (E m^4)^(1/4)");
        let _ = writeln!(s, "\n## constants");
        for (k, v) in [
            ("a0", c.a0),
            ("b0", c.b0),
            ("c0", c.c0),
            ("c1", c.c1),
            ("d0", c.d0),
            ("d1", c.d1),
            ("d2", c.d2),
            ("d3", c.d3),
            ("d4_surrogate", self.sigma.d4_surrogate),
            ("r", self.r),
            ("|f|_-1^2", c.f_hm1_sq),
            ("trQ", c.trace_q),
            ("k", c.k),
        ] {
            let _ = writeln!(s, "{k:>14} = {v:.6e}");
        }
        let _ = writeln!(s, "\n## Sigma");
        let _ = writeln!(s, "Sigma = {:.6e} +- {:.2e} (95% CI), radius factor a = {:.4}", self.sigma.sigma, self.sigma.ci95(), self.sigma.radius_factor);
        let _ = writeln!(s, "E|eta|^2 = {:.6e}, E|eta|^4 = {:.6e}, E m = {:.6e}, E R^2 = {:.6e}", self.sigma.eta_sq.mean, self.sigma.eta_4.mean, self.sigma.m.mean, self.sigma.er2.mean);
        let _ = writeln!(s, "Sigma without the radius term = {:.6e}", self.sigma.floor);
        if self.sigma.radius_diverged {
            let _ = writeln!(s, "warning: the radius integral diverges (mean decay rate not positive); Sigma is infinite");
        }
        let _ = writeln!(s, "\n## completeness-defect thresholds");
        let _ = writeln!(s, "all-layer threshold: epsilon_L < {:.4e} m", self.epsilon_all_layers);
        let _ = writeln!(s, "deterministic-limit threshold: epsilon_L < {:.4e} m", self.epsilon_deterministic);
        let _ = writeln!(s, "top-layer defect bound: epsilon_L <= {:.4e} m", self.epsilon_top_layer);
        let _ = writeln!(s, "implied N (all-layer threshold): modes {:.4e}, nodes {:.4e}", self.implied_modes, self.implied_nodes);
        let _ = writeln!(s, "implied N (deterministic threshold): modes {:.4e}, nodes {:.4e}", self.implied_modes_deterministic, self.implied_nodes_deterministic);
        let _ = writeln!(s, "family: {}, implied N = {:.4e}", self.family, self.implied_count());
        match self.epsilon {
            Some(e) => {
                let _ = writeln!(s, "tested epsilon_L = {e:.6e} m");
            }
            None => {
                let _ = writeln!(s, "tested epsilon_L: none given");
            }
        }
        let _ = writeln!(s, "\n## verdicts");
        for v in &self.verdicts {
            if v.lhs.is_nan() && v.rhs.is_nan() {
                let _ = writeln!(s, "{:<28} {:<5}  {}", v.key, yes_no(v.holds), v.description);
            } else {
                let _ = writeln!(
                    s,
                    "{:<28} {:<5}  {:.6e} {} {:.6e}  [{}]",
                    v.key,
                    yes_no(v.holds),
                    v.lhs,
                    v.relation.symbol(),
                    v.rhs,
                    v.description
                );
            }
        }
        s
    }

    /// `key=value` lines, floats with 17 significant digits.
    pub fn to_key_values(&self) -> String {
        let c = &self.coefficients;
        let f = |v: f64| format!("{v:.16e}");
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("deterministic_limit", self.deterministic_limit.to_string());
        for (k, v) in [
            ("a0", c.a0),
            ("b0", c.b0),
            ("c0", c.c0),
            ("c1", c.c1),
            ("d0", c.d0),
            ("d1", c.d1),
            ("d2", c.d2),
            ("d3", c.d3),
            ("d4_surrogate", self.sigma.d4_surrogate),
            ("nu", self.nu),
            ("lambda1", self.lambda1),
            ("r", self.r),
            ("min_depth", self.min_depth),
            ("f_hm1_sq", c.f_hm1_sq),
            ("trace_q", c.trace_q),
            ("k", c.k),
            ("sigma", self.sigma.sigma),
            ("sigma_std_err", self.sigma.std_err),
            ("e_eta_sq", self.sigma.eta_sq.mean),
            ("e_eta_4", self.sigma.eta_4.mean),
            ("e_m", self.sigma.m.mean),
            ("e_r_sq", self.sigma.er2.mean),
            ("sigma_floor", self.sigma.floor),
            ("radius_factor", self.sigma.radius_factor),
            ("epsilon_all_layers", self.epsilon_all_layers),
            ("epsilon_deterministic", self.epsilon_deterministic),
            ("epsilon_top_layer", self.epsilon_top_layer),
            ("implied_modes", self.implied_modes),
            ("implied_nodes", self.implied_nodes),
            ("implied_modes_deterministic", self.implied_modes_deterministic),
            ("implied_nodes_deterministic", self.implied_nodes_deterministic),
        ] {
            put(k, f(v));
        }
        put("radius_diverged", self.sigma.radius_diverged.to_string());
        put("family", self.family.to_string());
        put("epsilon", self.epsilon.map(f).unwrap_or_else(|| "none".into()));
        for v in &self.verdicts {
            put(&format!("{}.lhs", v.key), f(v.lhs));
            put(&format!("{}.rhs", v.key), f(v.rhs));
            put(&format!("{}.holds", v.key), yes_no(v.holds).to_lowercase());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_forcing, ForcingSpec};
    use crate::twolayer::{derive_params, PhysicalParams};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn sorted_eigenvalues_on_unit_square() {
        let pts = sorted_lattice(13);
        let eig: Vec<i64> = pts.iter().map(|(a, b)| a * a + b * b).collect();
        assert_eq!(eig, vec![1, 1, 1, 1, 2, 2, 2, 2, 4, 4, 4, 4, 5]);
        assert_eq!(pts[0], (-1, 0));
        assert_eq!(eigenvalue(5, 1.0), 2.0);
    }

    #[test]
    fn mode_defect_on_two_pi_square() {
        let grid = Grid::new(2.0 * PI, 16).unwrap();
        let set = FunctionalSet::modes(4, &grid).unwrap();
        assert!((set.epsilon - 0.5f64.sqrt()).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for n in 1..60 {
            let e = FunctionalSet::modes(n, &grid).unwrap().epsilon;
            assert!(e <= last);
            last = e;
        }
        assert!(FunctionalSet::modes(grid.band_count() + 1, &grid).is_err());
        assert!(FunctionalSet::modes(0, &grid).is_err());
    }

    #[test]
    fn modes_are_orthonormal() {
        let grid = Grid::new(3.0, 16).unwrap();
        let set = FunctionalSet::modes(12, &grid).unwrap();
        for (i, fi) in set.functionals.iter().enumerate() {
            let field = match *fi {
                Functional::Cosine { j1, j2 } => SpectralField::unit_cosine(&grid, j1, j2).unwrap(),
                Functional::Sine { j1, j2 } => {
                    let a = 1.0 / (2.0f64.sqrt() * grid.length());
                    SpectralField::mode(&grid, j1, j2, Complex64::new(0.0, -a)).unwrap()
                }
                Functional::Node { .. } => unreachable!(),
            };
            let vals = eval_functionals(&set, &field).unwrap();
            for (j, v) in vals.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-13, "l_{j}(e_{i}) = {v}");
            }
        }
    }

    #[test]
    fn node_family() {
        let grid = Grid::new(1.0, 8).unwrap();
        let set = FunctionalSet::nodes(4, &grid).unwrap();
        assert_eq!(set.epsilon, 0.25);
        assert!(FunctionalSet::nodes(5, &grid).is_err());
        let sine = SpectralField::mode(&grid, 1, 0, Complex64::new(0.0, -0.5)).unwrap();
        let vals = eval_functionals(&set, &sine).unwrap();
        // nodes (0.5, ·) come first
        assert!(vals[0].abs() < 1e-15 && vals[1].abs() < 1e-15);
        let field = SpectralField::random(&grid, &mut rand::thread_rng(), 1.0);
        let phys = field.to_physical();
        let v = eval_functionals(&set, &field).unwrap();
        // node (0.5, 0.5) is grid point (4, 4)
        assert!((v[0] - phys[4 * 8 + 4]).abs() < 1e-13);
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice_count(0.5), 0.0);
        assert_eq!(lattice_count(1.0), 4.0);
        assert_eq!(lattice_count(2.0), 8.0);
        assert_eq!(lattice_count(4.0), 12.0);
        assert_eq!(lattice_count(25.0), 80.0);
        let big = lattice_count(1e10);
        assert!((big / (PI * 1e10) - 1.0).abs() < 1e-4);
        assert_eq!(implied_node_count(0.25, 1.0), 9.0);
    }

    #[test]
    fn coefficient_limits() {
        let raw = PhysicalParams::ocean_basin();
        let dp = derive_params(&raw).unwrap().with_beta(0.0).with_viscosity(50.0).unwrap();
        let grid = Grid::new(dp.length, 16).unwrap();
        let spec = NoiseSpec::power_law(&grid, 0.0, 3.0, 1e-300, 0).unwrap();
        let zero = SpectralField::zeros(&grid);
        let c = compute_condition_coefficients(&dp, &spec, &zero);
        assert_eq!(c.d3, 0.0);
        let p = dp.p;
        let base = 9.0 * dp.nu * p * p / (dp.lambda1 * dp.lambda1) * (1.0 / dp.h1 + 1.0 / (5.0 * dp.h2));
        let with_r = base + 9.0 * dp.r * dp.h2 / (18.0 * dp.lambda1);
        assert!((c.d2 / with_r - 1.0).abs() < 1e-12);
        let f = make_forcing(&ForcingSpec::PaperSinusoid, &grid, &dp).unwrap();
        let c2 = compute_condition_coefficients(&dp, &spec, &f);
        let c4 = compute_condition_coefficients(&dp, &spec, &f.scaled(2.0));
        assert!((c4.d3 / c2.d3 - 4.0).abs() < 1e-12);
    }
}
