//! Flat TOML run configuration shared by every experiment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::determining::{ConditionOptions, FamilyKind, FunctionalSet, DEFAULT_RADIUS_FACTOR};
use crate::dynamics::{make_forcing, random_state, ForcingSpec, Formulation, Model, TrajectoryConfig};
use crate::error::{QgError, Result};
use crate::harness::{ComparisonConfig, RadiusOptions};
use crate::noise::NoiseSpec;
use crate::spectral::Grid;
use crate::twolayer::{derive_params, DerivedParams, LayerState, PhysicalParams};

fn ocean() -> PhysicalParams {
    PhysicalParams::ocean_basin()
}

macro_rules! default_fns {
    ($($name:ident: $ty:ty = $value:expr;)*) => {
        $(fn $name() -> $ty { $value })*
    };
}

default_fns! {
    d_nu: f64 = ocean().nu;
    d_beta: f64 = ocean().beta;
    d_f0: f64 = ocean().f0;
    d_g: f64 = ocean().g;
    d_h1: f64 = ocean().h1;
    d_h2: f64 = ocean().h2;
    d_rho0: f64 = ocean().rho0;
    d_rho1: f64 = ocean().rho1;
    d_rho2: f64 = ocean().rho2;
    d_length: f64 = ocean().length;
    d_tau0: f64 = ocean().tau0;
    d_gamma: f64 = 3.0;
    d_k: f64 = 1.0;
    d_n: usize = 64;
    d_one: usize = 1;
    d_one_u64: u64 = 1;
    d_true: bool = true;
    d_forcing: String = "sinusoid".into();
    d_ic_energy: f64 = 1.0;
    d_ic_slope: f64 = 3.0;
    d_family: String = "modes".into();
    d_functionals: usize = 16;
    d_window: f64 = 1.0;
    d_members: usize = 20;
    d_threshold: f64 = 1e-6;
    d_samples: usize = 2000;
    d_radius_factor: f64 = DEFAULT_RADIUS_FACTOR;
    d_radius_paths: usize = 200;
    d_radius_steps: usize = 4000;
}

/// Every key of a run file. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_nu")]
    pub nu: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_f0")]
    pub f0: f64,
    #[serde(default = "d_g")]
    pub g: f64,
    #[serde(default = "d_h1")]
    pub h1: f64,
    #[serde(default = "d_h2")]
    pub h2: f64,
    #[serde(default = "d_rho0")]
    pub rho0: f64,
    #[serde(default = "d_rho1")]
    pub rho1: f64,
    #[serde(default = "d_rho2")]
    pub rho2: f64,
    #[serde(rename = "L", default = "d_length")]
    pub length: f64,
    #[serde(default = "d_tau0")]
    pub tau0: f64,

    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_k")]
    pub k: f64,
    #[serde(default)]
    pub base_seed: u64,
    /// CSV of `j1,j2,q` rows replacing the power law; relative paths are
    /// taken from the directory of the config file.
    #[serde(default)]
    pub spectrum_file: Option<PathBuf>,

    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(rename = "T", default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub formulation: Formulation,
    #[serde(default = "d_one")]
    pub output_every: usize,
    #[serde(default = "d_one_u64")]
    pub substeps: u64,
    #[serde(default = "d_true")]
    pub stationary_start: bool,
    /// Write a state snapshot every this many outputs; 0 disables.
    #[serde(default)]
    pub snapshot_every: usize,
    /// `sinusoid` or `zero`.
    #[serde(default = "d_forcing")]
    pub forcing: String,
    /// Drop the Jacobian terms.
    #[serde(default)]
    pub linearized: bool,

    #[serde(default)]
    pub ic_seed: u64,
    #[serde(default = "d_ic_energy")]
    pub ic_energy: f64,
    #[serde(default = "d_ic_slope")]
    pub ic_slope: f64,

    /// `modes` or `nodes`.
    #[serde(default = "d_family")]
    pub family: String,
    #[serde(default = "d_functionals")]
    pub functionals: usize,
    #[serde(default = "d_window")]
    pub window: f64,
    #[serde(default = "d_members")]
    pub members: usize,
    /// Ensemble threshold on `V(T)`.
    #[serde(default = "d_threshold")]
    pub threshold: f64,

    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_radius_factor")]
    pub radius_factor: f64,
    #[serde(default)]
    pub target_epsilon: Option<f64>,
    #[serde(default)]
    pub deterministic_limit: bool,
    #[serde(default = "d_radius_paths")]
    pub radius_paths: usize,
    #[serde(default)]
    pub radius_horizon: Option<f64>,
    #[serde(default = "d_radius_steps")]
    pub radius_steps: usize,

    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_toml_str("").expect("defaults parse")
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| QgError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| QgError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn physical(&self) -> PhysicalParams {
        PhysicalParams {
            nu: self.nu,
            beta: self.beta,
            f0: self.f0,
            g: self.g,
            h1: self.h1,
            h2: self.h2,
            rho0: self.rho0,
            rho1: self.rho1,
            rho2: self.rho2,
            length: self.length,
            tau0: self.tau0,
        }
    }

    pub fn derived(&self) -> Result<DerivedParams> {
        derive_params(&self.physical())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.length, self.n)
    }

    pub fn noise_spec(&self, grid: &Arc<Grid>) -> Result<NoiseSpec> {
        match &self.spectrum_file {
            Some(file) => {
                let path = match &self.base_dir {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                NoiseSpec::from_csv(grid, &path, self.k, self.base_seed)
            }
            None => NoiseSpec::power_law(grid, self.sigma, self.gamma, self.k, self.base_seed),
        }
    }

    pub fn forcing_spec(&self) -> Result<ForcingSpec> {
        match self.forcing.as_str() {
            "sinusoid" => Ok(ForcingSpec::PaperSinusoid),
            "zero" => Ok(ForcingSpec::Zero),
            other => Err(QgError::Config(format!("unknown forcing {other:?}; expected sinusoid or zero"))),
        }
    }

    pub fn family_kind(&self) -> Result<FamilyKind> {
        self.family.parse()
    }

    pub fn model(&self) -> Result<Arc<Model>> {
        let dp = self.derived()?;
        let grid = self.grid()?;
        let spec = self.noise_spec(&grid)?;
        let f = make_forcing(&self.forcing_spec()?, &grid, &dp)?;
        let model = Model::new(Arc::new(dp), Arc::new(spec), f)?;
        Ok(Arc::new(if self.linearized { model.linearized() } else { model }))
    }

    fn time_grid(&self) -> Result<(f64, f64)> {
        match (self.dt, self.t_final) {
            (Some(dt), Some(t)) => Ok((dt, t)),
            _ => Err(QgError::Config("time stepping needs both dt and T".into())),
        }
    }

    /// The pair of initial conditions: members 0 and 1 of the `ic_seed`
    /// stream, each with `‖q‖_*² = ic_energy`.
    pub fn initial_pair(&self, model: &Model) -> (LayerState, LayerState) {
        let grid = model.grid();
        let a = random_state(grid, &model.dp, self.ic_seed, 0, self.ic_energy, self.ic_slope);
        let b = random_state(grid, &model.dp, self.ic_seed, 1, self.ic_energy, self.ic_slope);
        (a, b)
    }

    pub fn trajectory_config(&self, model: Arc<Model>) -> Result<TrajectoryConfig> {
        let (dt, t) = self.time_grid()?;
        let (ic, _) = self.initial_pair(&model);
        let mut cfg = TrajectoryConfig::new(model, ic, dt, t);
        cfg.formulation = self.formulation;
        cfg.output_every = self.output_every;
        cfg.substeps = self.substeps;
        cfg.stationary_start = self.stationary_start;
        cfg.keep_snapshots = self.snapshot_every > 0;
        cfg.steps()?;
        Ok(cfg)
    }

    pub fn comparison_config(&self, model: Arc<Model>) -> Result<ComparisonConfig> {
        let (dt, t) = self.time_grid()?;
        let mut cfg = ComparisonConfig::new(model, dt, t);
        cfg.output_every = self.output_every;
        cfg.substeps = self.substeps;
        cfg.window = self.window;
        cfg.stationary_start = self.stationary_start;
        cfg.keep_snapshots = self.snapshot_every > 0;
        Ok(cfg)
    }

    pub fn functional_set(&self, grid: &Arc<Grid>) -> Result<FunctionalSet> {
        FunctionalSet::build(self.family_kind()?, self.functionals, grid)
    }

    pub fn radius_options(&self) -> RadiusOptions {
        RadiusOptions { paths: self.radius_paths, horizon: self.radius_horizon, steps: self.radius_steps }
    }

    pub fn condition_options(&self) -> Result<ConditionOptions> {
        Ok(ConditionOptions {
            deterministic_limit: self.deterministic_limit,
            family: self.family_kind()?,
            target_epsilon: self.target_epsilon,
            samples: self.samples,
            radius_factor: self.radius_factor,
            radius: self.radius_options(),
        })
    }
}
