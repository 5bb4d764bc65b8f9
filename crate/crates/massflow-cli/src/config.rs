//! Argument structs double as the persisted run configuration: every command
//! writes its effective config into the manifest, and `--config` re-runs a
//! manifest (or bare config) to bit-identical outputs.

use std::path::{Path, PathBuf};

use clap::Args;
use massflow::profile::{Profile, ProfileSpec, StepProfile};
use massflow::runner::{geometric_grid, uniform_grid};
use massflow::sim::StepperConfig;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Master seed for all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of Monte Carlo replicates.
    #[arg(long, global = true)]
    pub replicates: Option<u64>,
    /// Worker threads (default: all cores). Results never depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "massflow_out")]
    pub out: PathBuf,
    /// Re-run a persisted config or manifest JSON instead of the flag values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProfileArgs {
    /// Initial profile: `uniform`, `power`, or a path to a profile JSON.
    #[arg(long, default_value = "uniform")]
    pub profile: String,
    /// Power-family exponent.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Power-family center (defaults to the domain midpoint).
    #[arg(long)]
    pub u0: Option<f64>,
    /// Total mass b of the system.
    #[arg(long, default_value_t = 1.0)]
    pub total_mass: f64,
    /// Dyadic approximation level for non-step profiles.
    #[arg(long, default_value_t = 8)]
    pub levels: u32,
}

impl ProfileArgs {
    pub fn spec(&self) -> Result<ProfileSpec, String> {
        match self.profile.as_str() {
            "uniform" => Ok(ProfileSpec::uniform(self.total_mass)),
            "power" => Ok(ProfileSpec {
                u0: self.u0,
                ..ProfileSpec::power(
                    self.alpha,
                    self.u0.unwrap_or(0.5 * self.total_mass),
                    self.total_mass,
                )
            }),
            path => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read profile file '{path}': {e}"))?;
                serde_json::from_str(&text)
                    .map_err(|e| format!("invalid profile JSON '{path}': {e}"))
            }
        }
    }

    pub fn parsed(&self) -> Result<Profile, String> {
        self.spec()?.parse().map_err(|e| e.to_string())
    }

    /// The canonical step profile handed to the simulator.
    pub fn simulation_profile(&self) -> Result<StepProfile, String> {
        Ok(self.parsed()?.simulation_profile(self.levels))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StepperArgs {
    /// Base time step.
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    /// Disable the Brownian-bridge crossing correction.
    #[arg(long)]
    pub no_bridge: bool,
    /// Disable gap-adaptive step refinement.
    #[arg(long)]
    pub fixed_step: bool,
    /// Adaptive cap factor c in `c * gap^2 / (4 sigma^2)`.
    #[arg(long, default_value_t = 2.0)]
    pub adaptive_factor: f64,
}

impl StepperArgs {
    pub fn to_config(&self, save_times: Vec<f64>) -> StepperConfig {
        let mut cfg = StepperConfig::new(self.dt);
        cfg.bridge_correction = !self.no_bridge;
        cfg.adaptive = !self.fixed_step;
        cfg.adaptive_factor = self.adaptive_factor;
        cfg.save_times = save_times;
        cfg
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Save grid: `uniform:<n>` or `geometric:<lambda>:<n>`.
    #[arg(long, default_value = "geometric:0.7:14")]
    pub grid: String,
    /// Largest save time.
    #[arg(long, default_value_t = 1e-2)]
    pub t_end: f64,
}

impl GridArgs {
    pub fn times(&self) -> Result<Vec<f64>, String> {
        let parts: Vec<&str> = self.grid.split(':').collect();
        let bad = || format!("invalid grid spec '{}'", self.grid);
        match parts.as_slice() {
            ["uniform", n] => {
                let n: usize = n.parse().map_err(|_| bad())?;
                Ok(uniform_grid(self.t_end, n))
            }
            ["geometric", lambda, n] => {
                let lambda: f64 = lambda.parse().map_err(|_| bad())?;
                let n: usize = n.parse().map_err(|_| bad())?;
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(bad());
                }
                Ok(geometric_grid(self.t_end, lambda, n))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[command(flatten)]
    pub stepper: StepperArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[serde(default)]
    #[arg(skip)]
    pub seed: u64,
    #[serde(default = "default_one")]
    #[arg(skip)]
    pub replicates: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[command(flatten)]
    pub stepper: StepperArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Observable: `mass`, `inverse_mass`, `abs_displacement` or
    /// `cluster_count`.
    #[arg(long, default_value = "mass")]
    pub observable: String,
    /// Probe mass coordinate (defaults to the domain midpoint).
    #[arg(long)]
    pub at: Option<f64>,
    /// Fit a log-log exponent to the estimated curve.
    #[arg(long)]
    pub fit: bool,
    /// Reference slope recorded alongside the fit.
    #[arg(long)]
    pub fit_target: Option<f64>,
    #[serde(default)]
    #[arg(skip)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    #[arg(skip)]
    pub replicates: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Suite name (see `--suite help` for the list) or `all`.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Reduce replicate counts roughly tenfold.
    #[arg(long)]
    pub quick: bool,
    #[serde(default)]
    #[arg(skip)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[command(flatten)]
    pub stepper: StepperArgs,
    /// Dyadic levels to compare (need at least 3).
    #[arg(long, value_delimiter = ',', default_values_t = vec![6, 7, 8, 9, 10])]
    pub level_list: Vec<u32>,
    /// Probe mass coordinate.
    #[arg(long)]
    pub at: Option<f64>,
    /// Probe time.
    #[arg(long, default_value_t = 1e-2)]
    pub t: f64,
    #[serde(default)]
    #[arg(skip)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    #[arg(skip)]
    pub replicates: u64,
}

fn default_one() -> u64 {
    1
}

fn default_replicates() -> u64 {
    10_000
}

/// A manifest wraps the effective config with provenance.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest<T> {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub replicates: u64,
    pub config_hash: String,
    pub config: T,
}

/// FNV-1a of the canonical config JSON.
pub fn config_hash(json: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Load `--config` as either a full manifest or a bare config struct.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config '{}': {e}", path.display()))?;
    if let Ok(manifest) = serde_json::from_str::<Manifest<T>>(&text) {
        return Ok(manifest.config);
    }
    serde_json::from_str(&text).map_err(|e| format!("invalid config '{}': {e}", path.display()))
}
