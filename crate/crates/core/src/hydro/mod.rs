//! Extended-period hydraulic simulation producing junction pressure datasets.

mod dataset;
mod solver;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::config_hash;
use crate::network::{InpError, NetworkModel};

pub use dataset::{import_csv, DatasetMetadata, PressureDataset};
pub use solver::{
    hazen_williams_headloss, pump_head, solve_steady_state, Emitter, HydraulicSolver, HydraulicState,
    SolverOptions,
};

pub const DEFAULT_EMITTER_EXPONENT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum HydroError {
    #[error("hydraulic solver did not converge after {iterations} iterations (max imbalance {residual:e} m3/h)")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("junction {0} is not connected to any reservoir or tank")]
    DisconnectedComponent(String),
    #[error("network has no reservoir or tank")]
    NoFixedHead,
    #[error("hydraulic system matrix is singular")]
    Singular,
    #[error("at t = {time_s} s: {source}")]
    AtTime {
        time_s: f64,
        #[source]
        source: Box<HydroError>,
    },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] InpError),
    #[error("dataset labels do not match the network: {0}")]
    LabelMismatch(String),
    #[error("row {row}, column {col}: {reason}")]
    Value { row: usize, col: usize, reason: String },
    #[error("malformed dataset: {0}")]
    Schema(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TankMode {
    /// Tank levels follow an explicit volume balance, clamped to the level band.
    #[default]
    Dynamic,
    /// Tanks hold their initial level.
    FixedHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PatternInterpolation {
    /// Multipliers jump at each pattern step.
    #[default]
    Step,
    /// Multipliers ramp linearly between pattern steps.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakEvent {
    pub junction_label: String,
    /// Activation time, hours from simulation start.
    pub start: f64,
    /// m³/h per m^gamma.
    pub emitter_coeff: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    DEFAULT_EMITTER_EXPONENT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub duration_hours: f64,
    #[serde(default = "default_timestep")]
    pub timestep_s: f64,
    /// Standard deviation of a per-junction multiplicative demand factor,
    /// redrawn at every pattern step.
    #[serde(default)]
    pub demand_noise: Option<f64>,
    #[serde(default)]
    pub pattern_interpolation: PatternInterpolation,
    /// Standard deviation (m) of additive Gaussian noise on recorded pressures.
    #[serde(default)]
    pub measurement_noise: Option<f64>,
    #[serde(default)]
    pub tank_mode: TankMode,
    #[serde(default)]
    pub leak_events: Vec<LeakEvent>,
    #[serde(default)]
    pub seed: u64,
}

fn default_timestep() -> f64 {
    60.0
}

impl SimulationConfig {
    pub fn new(duration_hours: f64) -> Self {
        SimulationConfig {
            duration_hours,
            timestep_s: default_timestep(),
            demand_noise: None,
            pattern_interpolation: PatternInterpolation::Step,
            measurement_noise: None,
            tank_mode: TankMode::Dynamic,
            leak_events: Vec::new(),
            seed: 0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration_hours * 3600.0 / self.timestep_s).round() as usize
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<(), HydroError> {
        let bad = |m: String| Err(HydroError::InvalidConfig(m));
        if !(self.duration_hours > 0.0) || !(self.timestep_s > 0.0) {
            return bad("duration and timestep must be positive".into());
        }
        let pat = model.times.pattern_step_s;
        let ratio = if pat >= self.timestep_s {
            pat / self.timestep_s
        } else {
            self.timestep_s / pat
        };
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!(
                "timestep {} s and pattern timestep {pat} s do not divide each other",
                self.timestep_s
            ));
        }
        for noise in [self.demand_noise, self.measurement_noise].into_iter().flatten() {
            if !(noise >= 0.0) {
                return bad("noise levels must be non-negative".into());
            }
        }
        for leak in &self.leak_events {
            if !model.junctions.iter().any(|j| j.id == leak.junction_label) {
                return Err(HydroError::LabelMismatch(format!(
                    "leak junction {} not in network",
                    leak.junction_label
                )));
            }
            if !(leak.start >= 0.0 && leak.start <= self.duration_hours) {
                return bad(format!("leak start {} h outside the simulated horizon", leak.start));
            }
            if !(leak.emitter_coeff >= 0.0) || !(leak.gamma > 0.0) {
                return bad("leak coefficient must be >= 0 and exponent > 0".into());
            }
        }
        Ok(())
    }
}

/// Runs the extended-period simulation and records junction pressure heads.
///
/// Each step evaluates pattern multipliers, activates leaks whose start has
/// passed, solves the steady state warm-started from the previous step, and
/// then advances tank levels by the net tank inflow over the step.
pub fn simulate(model: &NetworkModel, cfg: &SimulationConfig) -> Result<PressureDataset, HydroError> {
    cfg.validate(model)?;
    let solver = HydraulicSolver::new(model)?;
    let n = model.junctions.len();
    let steps = cfg.steps();
    let dt = cfg.timestep_s;
    let pattern_step = model.times.pattern_step_s;

    let patterns: Vec<Option<&[f64]>> = model
        .junctions
        .iter()
        .map(|j| {
            j.demand_pattern
                .as_ref()
                .map(|p| model.pattern(p).expect("validated model").multipliers.as_slice())
        })
        .collect();
    let mut base_emitters: Vec<Emitter> = model
        .junctions
        .iter()
        .enumerate()
        .filter(|(_, j)| j.emitter_coeff > 0.0)
        .map(|(i, j)| Emitter {
            junction: i,
            coeff: j.emitter_coeff,
            exponent: DEFAULT_EMITTER_EXPONENT,
        })
        .collect();
    let leaks: Vec<(f64, Emitter)> = cfg
        .leak_events
        .iter()
        .map(|l| {
            let junction = model.junctions.iter().position(|j| j.id == l.junction_label).unwrap();
            (
                l.start * 3600.0,
                Emitter {
                    junction,
                    coeff: l.emitter_coeff,
                    exponent: l.gamma,
                },
            )
        })
        .collect();

    let mut demand_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut meas_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    meas_rng.set_stream(1);
    let demand_noise = cfg
        .demand_noise
        .filter(|s| *s > 0.0)
        .map(|s| Normal::new(1.0, s).expect("validated noise"));
    let meas_noise = cfg
        .measurement_noise
        .filter(|s| *s > 0.0)
        .map(|s| Normal::new(0.0, s).expect("validated noise"));
    let mut period_factors: Vec<Vec<f64>> = Vec::new();
    let mut factors_for = |period: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        while period_factors.len() <= period {
            let f = match &demand_noise {
                Some(d) => (0..n).map(|_| d.sample(rng).max(0.0)).collect(),
                None => vec![1.0; n],
            };
            period_factors.push(f);
        }
        period_factors[period].clone()
    };

    let mut tank_levels: Vec<f64> = model.tanks.iter().map(|t| t.init_level).collect();
    let mut timestamps = Vec::with_capacity(steps);
    let mut pressures = ndarray::Array2::<f64>::zeros((steps, n));
    let mut state: Option<HydraulicState> = None;

    for step in 0..steps {
        let t = step as f64 * dt;
        let period_pos = t / pattern_step;
        let period = period_pos.floor() as usize;
        let frac = period_pos - period as f64;
        let factors = factors_for(period, &mut demand_rng);
        let demands: Vec<f64> = model
            .junctions
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let mult = patterns[i].map_or(1.0, |p| match cfg.pattern_interpolation {
                    PatternInterpolation::Step => p[period % p.len()],
                    PatternInterpolation::Linear => {
                        let a = p[period % p.len()];
                        let b = p[(period + 1) % p.len()];
                        a + (b - a) * frac
                    }
                });
                j.base_demand * mult * factors[i]
            })
            .collect();

        base_emitters.truncate(model.junctions.iter().filter(|j| j.emitter_coeff > 0.0).count());
        base_emitters.extend(leaks.iter().filter(|(start, _)| t >= *start).map(|(_, e)| *e));

        let fixed: Vec<f64> = model
            .reservoirs
            .iter()
            .map(|r| r.total_head)
            .chain(model.tanks.iter().zip(&tank_levels).map(|(tk, lvl)| tk.elevation + lvl))
            .collect();
        let solved = solver
            .solve(&demands, &base_emitters, &fixed, state.as_ref())
            .map_err(|e| HydroError::AtTime {
                time_s: t,
                source: Box::new(e),
            })?;

        for (i, p) in pressures.row_mut(step).iter_mut().enumerate() {
            *p = solved.heads[i] - model.junctions[i].elevation;
            if let Some(noise) = &meas_noise {
                *p += noise.sample(&mut meas_rng);
            }
        }
        timestamps.push(t);

        if cfg.tank_mode == TankMode::Dynamic && !model.tanks.is_empty() {
            let inflow = solver.fixed_inflows(&solved);
            for (k, tank) in model.tanks.iter().enumerate() {
                let q = inflow[model.reservoirs.len() + k];
                let lvl = tank_levels[k] + q * dt / 3600.0 / tank.area();
                tank_levels[k] = lvl.clamp(tank.min_level, tank.max_level);
            }
        }
        state = Some(solved);
    }

    Ok(PressureDataset {
        timestamps,
        pressures,
        labels: model.junction_index(),
        metadata: DatasetMetadata {
            config_hash: config_hash(cfg),
            timestep_s: dt,
            leak_events: cfg.leak_events.clone(),
        },
    })
}
