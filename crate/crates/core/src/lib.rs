pub mod bridge;
pub mod config;
pub mod controllers;
pub mod env;
pub mod error;
pub mod metrics;
pub mod net;
pub mod reward;
pub mod signal;
pub mod sim;
pub mod sweep;

pub use config::ScenarioConfig;
pub use controllers::{FixedTime, Greedy, LinearQAgent, Policy, PolicySpec, QLearnConfig, RandomPolicy};
pub use env::{
    decode_action, encode_action, ActionId, EpisodeConfig, Observation, ObservedLinks, QueueSampling,
    Scenario, StepInfo, StepResult, TscEnv,
};
pub use error::{Error, Result};
pub use metrics::{EpisodeMetrics, LearningCurve};
pub use net::{build_grid, Direction, GridGeometry, LinkId, NetworkSpec, NodeId};
pub use reward::{RewardConfig, RewardVariant};
pub use signal::{SignalConstants, SignalPlan};
pub use sim::{DemandProfile, FlowParams, SimState, TurnProbabilities};
pub use sweep::{export_csv as export_sweep_csv, sweep_split, SweepPoint, SweepResult};
