//! TOML scenario files.
//!
//! Every field has a default, so an empty file describes the 5x5 reference
//! grid under the default demand. A minimal file:
//!
//! ```toml
//! seed = 7
//! [demand]
//! ns_rate = 900.0
//! ```
//!
//! Demand headings are directions of travel: `heading = "S"` is the
//! southbound approach entering its intersection from the north.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::QLearnConfig;
use crate::env::{EpisodeConfig, ObservedLinks, QueueSampling, Scenario};
use crate::error::{Error, Result};
use crate::net::{build_grid, Direction, GridGeometry, LaneLayout, NetworkSpec, NodeId};
use crate::reward::{RewardConfig, RewardVariant};
use crate::signal::SignalConstants;
use crate::sim::{DemandEntry, DemandProfile, FlowParams, TurnProbabilities};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub rows: usize,
    pub cols: usize,
    pub link_length: f64,
    pub free_flow_speed: f64,
    pub lanes_mid: u32,
    pub lanes_approach: u32,
    pub jam_spacing: f64,
    pub approach_layout: LaneLayout,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let g = GridGeometry::default();
        Self {
            rows: 5,
            cols: 5,
            link_length: g.link_length,
            free_flow_speed: g.free_flow_speed,
            lanes_mid: g.lanes_mid,
            lanes_approach: g.lanes_approach,
            jam_spacing: g.jam_spacing,
            approach_layout: g.approach_layout,
        }
    }
}

impl NetworkConfig {
    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            link_length: self.link_length,
            free_flow_speed: self.free_flow_speed,
            lanes_mid: self.lanes_mid,
            lanes_approach: self.lanes_approach,
            approach_layout: self.approach_layout,
            jam_spacing: self.jam_spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryConfig {
    pub row: usize,
    pub col: usize,
    pub heading: Direction,
    /// vehicles / hour
    pub rate: f64,
    #[serde(default)]
    pub start: u64,
    /// defaults to the episode duration
    pub end: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnOverride {
    pub row: usize,
    pub col: usize,
    pub heading: Direction,
    pub left: f64,
    pub straight: f64,
    pub right: f64,
}

/// Uniform rates apply to every boundary approach of the matching axis;
/// `entries` add further streams on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandConfig {
    /// vehicles / hour on each north- and southbound boundary approach
    pub ns_rate: f64,
    /// vehicles / hour on each east- and westbound boundary approach
    pub ew_rate: f64,
    pub start: u64,
    /// defaults to the episode duration
    pub end: Option<u64>,
    pub turns: TurnProbabilities,
    pub entries: Vec<EntryConfig>,
    pub turn_overrides: Vec<TurnOverride>,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            ns_rate: 900.0,
            ew_rate: 700.0,
            start: 0,
            end: None,
            turns: TurnProbabilities::default(),
            entries: Vec::new(),
            turn_overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSection {
    pub duration: u64,
    pub warmup: u64,
    pub control_interval: u64,
    pub observe: ObservedLinks,
    pub sampling: QueueSampling,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        Self {
            duration: 16_200,
            warmup: 1_800,
            control_interval: 25,
            observe: ObservedLinks::Internal,
            sampling: QueueSampling::CycleEnd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub variant: RewardVariant,
    pub q_lc: u32,
    pub q_hc: u32,
    pub w_cp: f64,
    pub f_sat: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let r = RewardConfig::default();
        Self {
            variant: r.variant,
            q_lc: r.q_lc,
            q_hc: r.q_hc,
            w_cp: r.w_cp,
            f_sat: r.f_sat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// per-intersection offsets in row-major order; empty means
    /// `signal.offset` everywhere
    pub offsets: Vec<u32>,
    pub network: NetworkConfig,
    pub signal: SignalConstants,
    pub flow: FlowParams,
    pub demand: DemandConfig,
    pub episode: EpisodeSection,
    pub reward: RewardSection,
    pub qlearn: QLearnConfig,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse TOML text; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let located = |span: Option<std::ops::Range<usize>>, field: Option<String>, msg: &str| {
            let mut message = String::new();
            if let Some(span) = span {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                message.push_str(&format!("line {line}: "));
            }
            if let Some(field) = field.filter(|f| !f.is_empty() && f != ".") {
                message.push_str(&format!("field `{field}`: "));
            }
            message.push_str(msg.trim_end());
            Error::Parse {
                path: origin.to_path_buf(),
                message,
            }
        };
        let de = toml::de::Deserializer::parse(text).map_err(|e| located(e.span(), None, e.message()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            located(inner.span(), Some(field), inner.message())
        })?;
        cfg.validate().map_err(|e| match e {
            Error::Config(m) | Error::Network(m) => Error::Parse {
                path: origin.to_path_buf(),
                message: m,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.episode_config().map(|_| ())
    }

    pub fn network(&self) -> Result<NetworkSpec> {
        build_grid(self.network.rows, self.network.cols, self.network.geometry())
    }

    fn node(&self, row: usize, col: usize, what: &str) -> Result<NodeId> {
        if row >= self.network.rows || col >= self.network.cols {
            return Err(Error::Config(format!(
                "{what} at ({row}, {col}) is outside the {}x{} grid",
                self.network.rows, self.network.cols
            )));
        }
        Ok(NodeId(row * self.network.cols + col))
    }

    pub fn demand(&self, net: &NetworkSpec) -> Result<DemandProfile> {
        let d = &self.demand;
        let end = d.end.unwrap_or(self.episode.duration);
        let mut profile = DemandProfile::uniform(net, d.ns_rate, d.ew_rate, d.start, end).with_turns(d.turns);
        profile.entries.retain(|e| e.rate > 0.0);
        for e in &d.entries {
            let node = self.node(e.row, e.col, "demand entry")?;
            if net.entry_link(node, e.heading).is_none() {
                return Err(Error::Config(format!(
                    "demand entry ({}, {}) heading {:?} is not a boundary approach",
                    e.row, e.col, e.heading
                )));
            }
            profile.entries.push(DemandEntry {
                node,
                heading: e.heading,
                rate: e.rate,
                start: e.start,
                end: e.end.unwrap_or(self.episode.duration),
            });
        }
        for t in &d.turn_overrides {
            let node = self.node(t.row, t.col, "turn override")?;
            profile.turn_overrides.push((
                node,
                t.heading,
                TurnProbabilities {
                    left: t.left,
                    straight: t.straight,
                    right: t.right,
                },
            ));
        }
        Ok(profile)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let net = self.network()?;
        let demand = self.demand(&net)?;
        let mut sc = Scenario::new(net, demand);
        sc.constants = self.signal;
        sc.flow = self.flow;
        sc.offsets = self.offsets.clone();
        Ok(sc)
    }

    pub fn reward_config(&self) -> Result<RewardConfig> {
        let r = &self.reward;
        let base = RewardConfig::for_constants(r.variant, &self.signal)?;
        Ok(RewardConfig {
            q_lc: r.q_lc,
            q_hc: r.q_hc,
            w_cp: r.w_cp,
            f_sat: r.f_sat,
            ..base
        })
    }

    /// Build and validate the full episode configuration.
    pub fn episode_config(&self) -> Result<EpisodeConfig> {
        self.signal.validate()?;
        self.qlearn.validate()?;
        let sc = self.scenario()?;
        // surfaces bad demand, splits or offsets now rather than at reset
        sc.simulation(&vec![self.signal.default_split; sc.intersections()], self.seed)?;
        let mut cfg = EpisodeConfig::new(sc);
        cfg.duration = self.episode.duration;
        cfg.warmup = self.episode.warmup;
        cfg.control_interval = self.episode.control_interval;
        cfg.observed = self.episode.observe;
        cfg.sampling = self.episode.sampling;
        cfg.reward = self.reward_config()?;
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}
