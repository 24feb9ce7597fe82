//! Leak detection toolkit for water distribution networks.
//!
//! The pipeline runs from a hydraulic network description to edge-level leak
//! alarms:
//!
//! 1. [`network`] parses an INP-subset network file and extracts the
//!    junction-only graph.
//! 2. [`graph`] builds Laplacians and the scaled spectral operator used by the
//!    Chebyshev filters.
//! 3. [`placement`] ranks junctions by PageRank centrality and instruments the
//!    least visited ones.
//! 4. [`hydro`] generates pressure trajectories with an extended-period
//!    Hazen–Williams solver and emitter-based leaks.
//! 5. [`gnn`] trains ChebNet reconstructors and one-step predictors from the
//!    masked pressures.
//! 6. [`detect`] turns reconstructor/predictor disagreement into smoothed edge
//!    residuals, thresholds and alarm timelines.

pub mod detect;
pub mod gnn;
pub mod graph;
pub mod hash;
pub mod hydro;
pub mod net1;
pub mod network;
pub mod placement;

pub use detect::{AlarmTimeline, ResidualSeries, ThresholdProfile};
pub use gnn::{Activation, Architecture, ChebLayer, ChebNetModel, ModelRole, TrainingConfig, TrainingRun};
pub use graph::{GraphTopology, LambdaMode, SpectralOperator};
pub use hydro::{LeakEvent, PressureDataset, SimulationConfig, TankMode};
pub use network::{JunctionIndex, NetworkModel};
pub use placement::{PageRankResult, PlacementMethod, SensorPlacement};
