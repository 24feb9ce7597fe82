//! Experiment configuration: one JSON file fully determines a run.

use std::fs;
use std::path::{Path, PathBuf};

use hydrosentinel_core::detect::{DEFAULT_ALPHA, DEFAULT_SIGMA_FLOOR, DEFAULT_WINDOW};
use hydrosentinel_core::gnn::{Architecture, TrainingConfig};
use hydrosentinel_core::graph::LambdaMode;
use hydrosentinel_core::hash::{bytes_hash, config_hash};
use hydrosentinel_core::hydro::{LeakEvent, PatternInterpolation, SimulationConfig, TankMode};
use hydrosentinel_core::placement::{PlacementMethod, DEFAULT_ALPHA as PAGERANK_ALPHA, DEFAULT_EPSILON};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitHours {
    #[serde(default = "defaults::train_hours")]
    pub train_hours: f64,
    #[serde(default = "defaults::val_hours")]
    pub val_hours: f64,
    #[serde(default = "defaults::test_hours")]
    pub test_hours: f64,
}

impl Default for SplitHours {
    fn default() -> Self {
        SplitHours {
            train_hours: defaults::train_hours(),
            val_hours: defaults::val_hours(),
            test_hours: defaults::test_hours(),
        }
    }
}

impl SplitHours {
    pub fn total(&self) -> f64 {
        self.train_hours + self.val_hours + self.test_hours
    }
}

/// Healthy-data generator settings; the duration is the split total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    #[serde(default = "defaults::timestep")]
    pub timestep_s: f64,
    #[serde(default)]
    pub demand_noise: Option<f64>,
    #[serde(default)]
    pub measurement_noise: Option<f64>,
    #[serde(default)]
    pub pattern_interpolation: PatternInterpolation,
    #[serde(default)]
    pub tank_mode: TankMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    /// Directory name for this configuration's artifacts.
    pub name: String,
    pub method: PlacementMethod,
    /// Sensor count for PageRank placement.
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default = "defaults::pagerank_alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::pagerank_epsilon")]
    pub epsilon: f64,
    /// Junction labels for an explicit placement.
    #[serde(default)]
    pub sensors: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSettings {
    #[serde(default = "defaults::detector_window")]
    pub window: usize,
    #[serde(default = "defaults::detector_alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::sigma_floor")]
    pub sigma_floor: f64,
    /// Healthy interval `[start, end)` in hours; defaults to the validation split.
    #[serde(default)]
    pub calibration_hours: Option<[f64; 2]>,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        DetectorSettings {
            window: defaults::detector_window(),
            alpha: defaults::detector_alpha(),
            sigma_floor: defaults::sigma_floor(),
            calibration_hours: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakScenario {
    pub duration_hours: f64,
    pub junction: String,
    /// Hours from scenario start.
    pub start_hours: f64,
    pub emitter_coeff: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    /// Added to the experiment seed so leak runs never share demand noise with training data.
    #[serde(default = "defaults::leak_seed_offset")]
    pub seed_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// INP file, relative to the config file.
    pub network: PathBuf,
    #[serde(default)]
    pub split: SplitHours,
    #[serde(default)]
    pub simulation: SimulationSettings,
    pub placements: Vec<PlacementSpec>,
    #[serde(default = "Architecture::net1_default")]
    pub architecture: Architecture,
    #[serde(default = "defaults::window")]
    pub window: usize,
    #[serde(default)]
    pub lambda_mode: LambdaMode,
    #[serde(default = "defaults::training")]
    pub training: TrainingConfig,
    #[serde(default)]
    pub detector: DetectorSettings,
    #[serde(default)]
    pub leak_scenario: Option<LeakScenario>,
    pub seeds: Vec<u64>,
    /// Artifact root, relative to the config file.
    pub output_dir: PathBuf,
}

mod defaults {
    use super::*;

    pub fn train_hours() -> f64 {
        60.0
    }
    pub fn val_hours() -> f64 {
        24.0
    }
    pub fn test_hours() -> f64 {
        24.0
    }
    pub fn timestep() -> f64 {
        60.0
    }
    pub fn pagerank_alpha() -> f64 {
        PAGERANK_ALPHA
    }
    pub fn pagerank_epsilon() -> f64 {
        DEFAULT_EPSILON
    }
    pub fn detector_window() -> usize {
        DEFAULT_WINDOW
    }
    pub fn detector_alpha() -> f64 {
        DEFAULT_ALPHA
    }
    pub fn sigma_floor() -> f64 {
        DEFAULT_SIGMA_FLOOR
    }
    pub fn gamma() -> f64 {
        0.5
    }
    pub fn leak_seed_offset() -> u64 {
        1000
    }
    pub fn window() -> usize {
        120
    }
    pub fn training() -> TrainingConfig {
        serde_json::from_str("{}").expect("all training fields have defaults")
    }
}

/// Hours to a whole number of timesteps, rejecting fractional steps.
pub fn rows_for(hours: f64, timestep_s: f64, what: &str) -> Result<usize> {
    let steps = hours * 3600.0 / timestep_s;
    if !(steps >= 0.0) || (steps - steps.round()).abs() > 1e-9 {
        return Err(CliError::config(format!(
            "{what} of {hours} h is not a whole number of {timestep_s} s steps"
        )));
    }
    Ok(steps.round() as usize)
}

/// A parsed config with paths resolved against its directory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub network_path: PathBuf,
    pub network_text: String,
    pub output_dir: PathBuf,
    pub hash: String,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(config, base)
    }

    pub fn from_config(config: ExperimentConfig, base: &Path) -> Result<Self> {
        let network_path = base.join(&config.network);
        let network_text = fs::read_to_string(&network_path).map_err(|e| {
            CliError::config(format!("network file {}: {e}", network_path.display()))
        })?;
        let output_dir = base.join(&config.output_dir);
        let hash = experiment_hash(&config, &network_text);
        let exp = Experiment {
            config,
            network_path,
            network_text,
            output_dir,
            hash,
        };
        exp.validate()?;
        Ok(exp)
    }

    /// Keeps only `seed`, as requested on the command line.
    pub fn restrict_seed(&mut self, seed: u64) {
        self.config.seeds = vec![seed];
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.seeds.is_empty() {
            return Err(CliError::config("at least one seed is required"));
        }
        let mut seen = c.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != c.seeds.len() {
            return Err(CliError::config("seeds must be distinct"));
        }
        if c.placements.is_empty() {
            return Err(CliError::config("at least one placement is required"));
        }
        for (i, p) in c.placements.iter().enumerate() {
            if p.name.is_empty() || p.name.contains(['/', '\\']) || p.name.starts_with('.') {
                return Err(CliError::config(format!("placement name {:?} is not a plain directory name", p.name)));
            }
            if c.placements[..i].iter().any(|q| q.name == p.name) {
                return Err(CliError::config(format!("placement name {} is repeated", p.name)));
            }
            match p.method {
                PlacementMethod::Pagerank if p.s.is_none() => {
                    return Err(CliError::config(format!("placement {}: pagerank needs s", p.name)))
                }
                PlacementMethod::Arbitrary if p.sensors.is_none() => {
                    return Err(CliError::config(format!("placement {}: arbitrary needs sensors", p.name)))
                }
                _ => {}
            }
        }
        for (name, h) in [
            ("train_hours", c.split.train_hours),
            ("val_hours", c.split.val_hours),
            ("test_hours", c.split.test_hours),
        ] {
            if !(h > 0.0) {
                return Err(CliError::config(format!("split {name} must be positive")));
            }
            rows_for(h, c.simulation.timestep_s, name)?;
        }
        if c.window == 0 {
            return Err(CliError::config("predictor window must be positive"));
        }
        if c.detector.window == 0 {
            return Err(CliError::config("detector window must be positive"));
        }
        c.architecture.validate()?;
        if let Some([a, b]) = c.detector.calibration_hours {
            if !(a >= 0.0 && b > a && b <= c.split.total()) {
                return Err(CliError::config("calibration_hours must be an increasing interval inside the dataset"));
            }
        }
        if let Some(l) = &c.leak_scenario {
            if !(l.start_hours >= 0.0 && l.start_hours < l.duration_hours) {
                return Err(CliError::config("leak start must fall inside the scenario"));
            }
        }
        Ok(())
    }

    /// Healthy dataset generator config for one seed.
    pub fn healthy_simulation(&self, seed: u64) -> SimulationConfig {
        let s = &self.config.simulation;
        let mut cfg = SimulationConfig::new(self.config.split.total());
        cfg.timestep_s = s.timestep_s;
        cfg.demand_noise = s.demand_noise;
        cfg.measurement_noise = s.measurement_noise;
        cfg.pattern_interpolation = s.pattern_interpolation;
        cfg.tank_mode = s.tank_mode;
        cfg.seed = seed;
        cfg
    }

    /// Leak run and its leak-free twin (same demands) for one seed.
    pub fn leak_simulations(&self, seed: u64) -> Option<(SimulationConfig, SimulationConfig)> {
        let l = self.config.leak_scenario.as_ref()?;
        let mut base = self.healthy_simulation(seed.wrapping_add(l.seed_offset));
        base.duration_hours = l.duration_hours;
        let mut leaky = base.clone();
        leaky.leak_events.push(LeakEvent {
            junction_label: l.junction.clone(),
            start: l.start_hours,
            emitter_coeff: l.emitter_coeff,
            gamma: l.gamma,
        });
        Some((leaky, base))
    }

    pub fn training(&self, seed: u64) -> TrainingConfig {
        let mut t = self.config.training.clone();
        t.seed = seed;
        t
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed-{seed}"))
    }
}

/// Hash of everything that determines the artifacts: the config (minus the
/// output location) and the network file contents.
pub fn experiment_hash(config: &ExperimentConfig, network_text: &str) -> String {
    let mut v = serde_json::to_value(config).expect("config serializes");
    if let Value::Object(map) = &mut v {
        map.remove("output_dir");
        map.remove("network");
        map.insert("network_sha256".into(), Value::String(bytes_hash(network_text.as_bytes())));
    }
    config_hash(&v)
}
