use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use stoqg::config::RunConfig;
use stoqg::determining::check_conditions;
use stoqg::dynamics::{simulate, write_series_csv, write_state_snapshot};
use stoqg::harness::{estimate_absorbing_radius, run_comparison, run_ensemble};
use stoqg::{QgError, Result};

#[derive(Parser)]
#[command(name = "stoqg", version, about = "Stochastic two-layer quasigeostrophic model and determining-functional diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (flat TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write its norm time series.
    Simulate(Common),
    /// Run two initial conditions on one noise path and record V and N_L.
    Compare(Common),
    /// Repeat the comparison over independent noise paths.
    Ensemble(Common),
    /// Evaluate the constants and sufficient conditions.
    Conditions {
        #[command(flatten)]
        common: Common,
        /// Evaluate with the noise switched off.
        #[arg(long)]
        deterministic_limit: bool,
        #[arg(long, value_parser = ["modes", "nodes"])]
        family: Option<String>,
        /// Completeness defect to test, in metres.
        #[arg(long)]
        target_epsilon: Option<f64>,
    },
    /// Monte-Carlo estimate of the absorbing radius.
    Radius(Common),
}

struct RunDir {
    path: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    fn create(path: &Path) -> Result<RunDir> {
        fs::create_dir_all(path)?;
        Ok(RunDir { path: path.to_path_buf(), outputs: Vec::new() })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.path.join(name))?))
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        self.outputs.push(name.to_string());
        fs::write(self.path.join(name), text)?;
        Ok(())
    }

    fn finish(mut self, command: &str, config_path: &Path, cfg: &RunConfig, extra: serde_json::Value) -> Result<()> {
        let text = fs::read_to_string(config_path)?;
        self.write("config.toml", &text)?;
        let manifest = json!({
            "command": command,
            "config_source": config_path.display().to_string(),
            "config_copy": "config.toml",
            "resolved_config": cfg,
            "seeds": { "base_seed": cfg.base_seed, "ic_seed": cfg.ic_seed },
            "versions": { "stoqg": env!("CARGO_PKG_VERSION") },
            "outputs": self.outputs,
            "results": extra,
        });
        let body = serde_json::to_string_pretty(&manifest).map_err(|e| QgError::Io(e.into()))?;
        fs::write(self.path.join("manifest.json"), body + "\n")?;
        Ok(())
    }
}

fn snapshot_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index:06}.qg2s")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = RunConfig::load(&c.config)?;
            let model = cfg.model()?;
            let traj_cfg = cfg.trajectory_config(model.clone())?;
            let traj = simulate(&traj_cfg)?;
            let mut dir = RunDir::create(&c.out)?;
            write_series_csv(dir.file("series.csv")?, &traj.rows)?;
            if cfg.snapshot_every > 0 {
                for (i, (_, q)) in traj.snapshots.iter().enumerate().step_by(cfg.snapshot_every) {
                    write_state_snapshot(dir.file(&snapshot_name("state", i))?, q, &model.dp)?;
                }
            }
            let last = traj.rows.last().map(|r| r.star_norm_sq).unwrap_or(f64::NAN);
            println!("final star_norm_sq = {last:.16e}");
            dir.finish("simulate", &c.config, &cfg, json!({ "final_star_norm_sq": last }))
        }
        Command::Compare(c) => {
            let cfg = RunConfig::load(&c.config)?;
            let model = cfg.model()?;
            let set = cfg.functional_set(model.grid())?;
            let (ic1, ic2) = cfg.initial_pair(&model);
            let rec = run_comparison(&cfg.comparison_config(model.clone())?, &ic1, &ic2, &set)?;
            let mut dir = RunDir::create(&c.out)?;
            rec.write_csv(dir.file("comparison.csv")?)?;
            if cfg.snapshot_every > 0 {
                for (i, (_, a, b)) in rec.snapshots.iter().enumerate().step_by(cfg.snapshot_every) {
                    write_state_snapshot(dir.file(&snapshot_name("first", i))?, a, &model.dp)?;
                    write_state_snapshot(dir.file(&snapshot_name("second", i))?, b, &model.dp)?;
                }
            }
            let ratio = rec.final_ratio();
            println!("V(T)/V(0) = {ratio:.16e}");
            let diverged = rec.diverged.clone();
            dir.finish("compare", &c.config, &cfg, json!({ "final_ratio": ratio, "diverged": diverged.as_ref().map(|d| d.0) }))?;
            match diverged {
                Some((t, reason)) => Err(QgError::Divergence { t, reason }),
                None => Ok(()),
            }
        }
        Command::Ensemble(c) => {
            let cfg = RunConfig::load(&c.config)?;
            let model = cfg.model()?;
            let set = cfg.functional_set(model.grid())?;
            let (ic1, ic2) = cfg.initial_pair(&model);
            let summary = run_ensemble(&cfg.comparison_config(model)?, &ic1, &ic2, &set, cfg.members, cfg.threshold)?;
            let mut dir = RunDir::create(&c.out)?;
            summary.write_csv(dir.file("ensemble.csv")?)?;
            dir.write("ensemble.txt", &summary.to_text())?;
            for (m, t, reason) in &summary.diverged {
                eprintln!("warning: member {m} diverged at t = {t}: {reason}");
            }
            print!("{}", summary.to_text());
            let survivors = summary.survivors;
            dir.finish(
                "ensemble",
                &c.config,
                &cfg,
                json!({ "members": summary.members, "survivors": survivors, "fraction_below": summary.fraction_below }),
            )?;
            if survivors == 0 {
                return Err(QgError::Divergence { t: f64::NAN, reason: "every ensemble member diverged".into() });
            }
            Ok(())
        }
        Command::Conditions { common: c, deterministic_limit, family, target_epsilon } => {
            let mut cfg = RunConfig::load(&c.config)?;
            if deterministic_limit {
                cfg.deterministic_limit = true;
            }
            if let Some(f) = family {
                cfg.family = f;
            }
            if target_epsilon.is_some() {
                cfg.target_epsilon = target_epsilon;
            }
            let opts = cfg.condition_options()?;
            let dp = cfg.derived()?;
            let model = cfg.model()?;
            let set = cfg.functional_set(model.grid())?;
            let report = check_conditions(&dp, &model.noise, &model.forcing, Some(&set), &opts)?;
            let text = report.to_text();
            print!("{text}");
            let mut dir = RunDir::create(&c.out)?;
            dir.write("conditions.txt", &text)?;
            dir.write("conditions.kv", &report.to_key_values())?;
            dir.finish(
                "conditions",
                &c.config,
                &cfg,
                json!({ "epsilon_all_layers": report.epsilon_all_layers, "epsilon_deterministic": report.epsilon_deterministic }),
            )
        }
        Command::Radius(c) => {
            let cfg = RunConfig::load(&c.config)?;
            let model = cfg.model()?;
            let est = estimate_absorbing_radius(&model.dp, &model.noise, &model.forcing, &cfg.radius_options())?;
            let mut dir = RunDir::create(&c.out)?;
            dir.write("radius.txt", &est.to_text())?;
            est.write_paths_csv(dir.file("radius_paths.csv")?)?;
            print!("{}", est.to_text());
            if !est.reliable {
                eprintln!("warning: the noise moment conditions fail; the estimate is unreliable");
            }
            dir.finish("radius", &c.config, &cfg, json!({ "mean_r0": est.mean.mean, "e_r0_sq": est.er2.mean }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
