//! Single-agent signal-control environment.
//!
//! Observation layout: the queue of every observed link in link-id order,
//! followed by the active split of every intersection in row-major order.
//! Action ids are flat: `id = 3 * intersection + j` where `j` indexes the
//! split deltas `-delta_s, 0, +delta_s`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, EpisodeMetrics, EpisodeTotals, QueueRecorder, TripTime};
use crate::net::{Axis, LinkId, LinkKind, NetworkSpec, NodeId};
use crate::reward::{self, LinkRewardInput, RewardConfig, RewardVariant};
use crate::signal::{SignalConstants, SignalGroup, SignalPlan};
use crate::sim::{DemandProfile, FlowParams, SimState};

/// Version of the per-step `info` payload.
pub const INFO_SCHEMA_VERSION: &str = "1";

/// Everything static about a scenario: where vehicles drive and how the
/// signals and queues behave.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub net: Arc<NetworkSpec>,
    pub demand: DemandProfile,
    pub constants: SignalConstants,
    pub flow: FlowParams,
    /// Per-intersection offsets; empty means `constants.offset` everywhere.
    pub offsets: Vec<u32>,
}

impl Scenario {
    pub fn new(net: NetworkSpec, demand: DemandProfile) -> Self {
        Self {
            net: Arc::new(net),
            demand,
            constants: SignalConstants::default(),
            flow: FlowParams::default(),
            offsets: Vec::new(),
        }
    }

    pub fn intersections(&self) -> usize {
        self.net.node_count()
    }

    /// Fresh signal plans at `splits` (one per intersection).
    pub fn plans(&self, splits: &[u32]) -> Result<Vec<SignalPlan>> {
        if !self.offsets.is_empty() && self.offsets.len() != self.net.node_count() {
            return Err(Error::Config(format!(
                "{} offsets for {} intersections",
                self.offsets.len(),
                self.net.node_count()
            )));
        }
        splits
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let p = SignalPlan::new(NodeId(i), s, self.constants)
                    .map_err(|e| Error::Config(e.to_string()))?;
                Ok(match self.offsets.get(i) {
                    Some(&o) => p.with_offset(o),
                    None => p,
                })
            })
            .collect()
    }

    pub fn simulation(&self, splits: &[u32], seed: u64) -> Result<SimState> {
        SimState::new(
            Arc::clone(&self.net),
            &self.demand,
            self.flow,
            self.plans(splits)?,
            seed,
        )
    }
}

/// Which links feed the queue part of the observation and the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ObservedLinks {
    /// links between two signalized intersections
    #[default]
    Internal,
    /// internal links plus boundary entry links
    AllApproaches,
}

/// How the per-cycle queue sample is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QueueSampling {
    /// queue at the end of each cycle
    #[default]
    CycleEnd,
    /// largest per-second queue within each cycle
    CycleMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub duration: u64,
    pub warmup: u64,
    pub control_interval: u64,
    pub reward: RewardConfig,
    pub scenario: Arc<Scenario>,
    pub seed: u64,
    pub observed: ObservedLinks,
    pub sampling: QueueSampling,
}

impl EpisodeConfig {
    pub fn new(scenario: Scenario) -> Self {
        let reward =
            RewardConfig::for_constants(RewardVariant::Congestion, &scenario.constants).unwrap_or_default();
        Self {
            duration: 16_200,
            warmup: 1_800,
            control_interval: 25,
            reward,
            scenario: Arc::new(scenario),
            seed: 0,
            observed: ObservedLinks::Internal,
            sampling: QueueSampling::CycleEnd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.duration {
            return Err(Error::Config(format!(
                "warmup {} must be shorter than duration {}",
                self.warmup, self.duration
            )));
        }
        if self.control_interval == 0 || !(self.duration - self.warmup).is_multiple_of(self.control_interval)
        {
            return Err(Error::Config(format!(
                "control interval {} must divide the controlled window of {} s",
                self.control_interval,
                self.duration - self.warmup
            )));
        }
        let sc = &self.scenario;
        sc.constants
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        sc.flow.validate()?;
        self.reward.validate(sc.flow.queue_upper_bound)?;
        Ok(())
    }

    pub fn control_steps(&self) -> u64 {
        (self.duration - self.warmup) / self.control_interval
    }

    pub fn cycles(&self) -> usize {
        ((self.duration - self.warmup) / u64::from(self.scenario.constants.cycle)) as usize
    }

    pub fn observed_links(&self) -> Vec<LinkId> {
        let net = &self.scenario.net;
        net.links
            .iter()
            .filter(|l| match self.observed {
                ObservedLinks::Internal => l.kind == LinkKind::Internal,
                ObservedLinks::AllApproaches => l.kind != LinkKind::Exit,
            })
            .map(|l| l.id)
            .collect()
    }

    pub fn action_count(&self) -> usize {
        3 * self.scenario.intersections()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub queues: Vec<u32>,
    pub splits: Vec<u32>,
    pub sim_time: u64,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.queues.len() + self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Queues then splits as one numeric vector.
    pub fn to_vec(&self) -> Vec<f64> {
        self.queues
            .iter()
            .chain(self.splits.iter())
            .map(|&x| f64::from(x))
            .collect()
    }

    pub fn to_vec_u32(&self) -> Vec<u32> {
        self.queues.iter().chain(self.splits.iter()).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionId(pub usize);

pub fn encode_action(intersection: usize, delta_index: usize) -> ActionId {
    debug_assert!(delta_index < 3);
    ActionId(3 * intersection + delta_index)
}

/// Split an action id into the chosen intersection and its split delta.
pub fn decode_action(id: usize, intersections: usize, delta_s: u32) -> Result<(NodeId, i32)> {
    if id >= 3 * intersections {
        return Err(Error::InvalidAction(format!(
            "action {id} outside [0, {})",
            3 * intersections
        )));
    }
    let j = (id % 3) as i32;
    Ok((NodeId(id / 3), (j - 1) * delta_s as i32))
}

/// Per-link reward audit trail returned with every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub schema_version: String,
    pub step: u64,
    pub sim_time: u64,
    pub reward_variant: RewardVariant,
    pub queues: Vec<u32>,
    pub splits: Vec<u32>,
    pub t_avg: Vec<f64>,
    pub t_eg_u: Vec<f64>,
    pub t_eg_d: Vec<f64>,
    pub link_terms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    sim: SimState,
    steps: u64,
    done: bool,
    episode_return: f64,
    recorder: QueueRecorder,
    cycle_max: Vec<u32>,
    dropped_at_warmup: u64,
    queue_sum: u64,
    ticks: u64,
}

/// One environment instance. Single-threaded; cheap to move between threads.
#[derive(Debug, Clone)]
pub struct TscEnv {
    cfg: EpisodeConfig,
    observed: Vec<LinkId>,
    axes: Vec<Axis>,
    upstream: Vec<Option<NodeId>>,
    episode: Option<Episode>,
}

impl TscEnv {
    pub fn new(cfg: EpisodeConfig) -> Result<Self> {
        cfg.validate()?;
        let observed = cfg.observed_links();
        let net = &cfg.scenario.net;
        let axes = observed.iter().map(|l| net.links[l.0].direction.axis()).collect();
        let upstream = observed.iter().map(|l| net.links[l.0].from.node()).collect();
        Ok(Self {
            cfg,
            observed,
            axes,
            upstream,
            episode: None,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn observed_links(&self) -> &[LinkId] {
        &self.observed
    }

    pub fn intersections(&self) -> usize {
        self.cfg.scenario.intersections()
    }

    pub fn action_count(&self) -> usize {
        self.cfg.action_count()
    }

    pub fn observation_len(&self) -> usize {
        self.observed.len() + self.intersections()
    }

    pub fn sim(&self) -> Option<&SimState> {
        self.episode.as_ref().map(|e| &e.sim)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    pub fn steps(&self) -> u64 {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    pub fn episode_return(&self) -> f64 {
        self.episode.as_ref().map_or(0.0, |e| e.episode_return)
    }

    /// Start a new episode with the configured seed.
    pub fn reset(&mut self) -> Result<Observation> {
        self.reset_with_seed(None)
    }

    /// Start a new episode, optionally overriding the seed. Runs the warm-up
    /// at the default split and returns the first observation.
    pub fn reset_with_seed(&mut self, seed: Option<u64>) -> Result<Observation> {
        if let Some(s) = seed {
            self.cfg.seed = s;
        }
        let sc = &self.cfg.scenario;
        let splits = vec![sc.constants.default_split; sc.intersections()];
        let mut sim = sc.simulation(&splits, self.cfg.seed)?;
        sim.advance(self.cfg.warmup);
        let recorder = QueueRecorder::new(self.observed.len(), self.cfg.cycles());
        let dropped_at_warmup = sim.totals().dropped;
        self.episode = Some(Episode {
            sim,
            steps: 0,
            done: false,
            episode_return: 0.0,
            recorder,
            cycle_max: vec![0; self.observed.len()],
            dropped_at_warmup,
            queue_sum: 0,
            ticks: 0,
        });
        Ok(self.observation())
    }

    fn episode_mut(&mut self) -> Result<&mut Episode> {
        self.episode.as_mut().ok_or(Error::NotReset)
    }

    pub fn observation(&self) -> Observation {
        let ep = self.episode.as_ref().expect("observation requires reset");
        Observation {
            queues: self.queues(&ep.sim),
            splits: ep.sim.plans().iter().map(|p| p.split()).collect(),
            sim_time: ep.sim.clock(),
        }
    }

    fn queues(&self, sim: &SimState) -> Vec<u32> {
        self.observed
            .iter()
            .map(|&l| sim.measure_queue(l).expect("observed links exist"))
            .collect()
    }

    /// Validate an action without touching state.
    pub fn decode(&self, action: ActionId) -> Result<(NodeId, i32)> {
        decode_action(
            action.0,
            self.intersections(),
            self.cfg.scenario.constants.delta_s,
        )
    }

    pub fn step(&mut self, action: ActionId) -> Result<StepResult> {
        let (node, delta) = self.decode(action)?;
        {
            let ep = self.episode.as_ref().ok_or(Error::NotReset)?;
            if ep.done {
                return Err(Error::EpisodeFinished);
            }
        }
        let cycle = u64::from(self.cfg.scenario.constants.cycle);
        let warmup = self.cfg.warmup;
        let interval = self.cfg.control_interval;
        let duration = self.cfg.duration;
        let sampling = self.cfg.sampling;
        let observed = self.observed.clone();

        let ep = self.episode_mut()?;
        ep.sim.plan_mut(node).apply_split_delta(delta)?;
        for _ in 0..interval {
            ep.sim.advance(1);
            let mut sum = 0u64;
            for (m, &l) in ep.cycle_max.iter_mut().zip(&observed) {
                let q = ep.sim.measure_queue(l).expect("observed link");
                *m = (*m).max(q);
                sum += u64::from(q);
            }
            ep.queue_sum += sum;
            ep.ticks += 1;
            let t = ep.sim.clock();
            if t > warmup && (t - warmup).is_multiple_of(cycle) {
                let column = match sampling {
                    QueueSampling::CycleEnd => observed
                        .iter()
                        .map(|&l| ep.sim.measure_queue(l).expect("observed link"))
                        .collect(),
                    QueueSampling::CycleMax => std::mem::replace(&mut ep.cycle_max, vec![0; observed.len()]),
                };
                ep.recorder.record_cycle(&column)?;
            }
        }
        ep.steps += 1;
        let done = ep.sim.clock() >= duration;
        ep.done = done;

        let info = self.step_info()?;
        let reward: f64 = info.link_terms.iter().sum();
        let ep = self.episode_mut()?;
        ep.episode_return += reward;
        Ok(StepResult {
            obs: self.observation(),
            reward,
            done,
            info,
        })
    }

    fn step_info(&self) -> Result<StepInfo> {
        let ep = self.episode.as_ref().ok_or(Error::NotReset)?;
        let sim = &ep.sim;
        let queues = self.queues(sim);
        let rc = &self.cfg.reward;
        let mut t_avg = Vec::with_capacity(queues.len());
        let mut t_eg_u = Vec::with_capacity(queues.len());
        let mut t_eg_d = Vec::with_capacity(queues.len());
        let mut terms = Vec::with_capacity(queues.len());
        for (i, &l) in self.observed.iter().enumerate() {
            let axis = self.axes[i];
            let stats = sim.link_stats(l)?;
            let default_green = rc.default_green(axis);
            // boundary entry links have no upstream signal: ratio of one
            let green = match self.upstream[i] {
                Some(n) => f64::from(sim.plan(n).effective_green(SignalGroup::through(axis))),
                None => default_green,
            };
            let term = match rc.variant {
                RewardVariant::Congestion => reward::congestion_term(queues[i], rc),
                RewardVariant::TravelTime => reward::travel_time_term(
                    &LinkRewardInput {
                        q: queues[i],
                        t_avg: stats.t_avg,
                        t_eg_u: green,
                        axis,
                    },
                    rc,
                )?,
            };
            t_avg.push(stats.t_avg);
            t_eg_u.push(green);
            t_eg_d.push(default_green);
            terms.push(term);
        }
        Ok(StepInfo {
            schema_version: INFO_SCHEMA_VERSION.to_string(),
            step: ep.steps,
            sim_time: sim.clock(),
            reward_variant: rc.variant,
            queues,
            splits: sim.plans().iter().map(|p| p.split()).collect(),
            t_avg,
            t_eg_u,
            t_eg_d,
            link_terms: terms,
        })
    }

    /// Metrics for the current episode. Trips count when they entered after
    /// warm-up and finished before the episode ended.
    pub fn episode_metrics(&self) -> Result<EpisodeMetrics> {
        let ep = self.episode.as_ref().ok_or(Error::NotReset)?;
        let warmup = self.cfg.warmup;
        let trips = ep
            .sim
            .completed_trips()
            .filter(|t| t.entry_time >= warmup)
            .map(|t| TripTime::new(t.vehicle.0, t.entry_time, t.exit_time.expect("completed")))
            .collect();
        let totals = EpisodeTotals {
            episode_return: ep.episode_return,
            control_steps: ep.steps,
            dropped_arrivals: ep.sim.totals().dropped - ep.dropped_at_warmup,
            unfinished_trips: ep.sim.vehicles_on_network(),
            heavy_threshold: self.cfg.reward.q_hc,
            mean_queue_sum: if ep.ticks == 0 {
                0.0
            } else {
                ep.queue_sum as f64 / ep.ticks as f64
            },
        };
        Ok(metrics::summarize(trips, ep.recorder.samples().clone(), totals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_grid, GridGeometry};

    fn env(rows: usize, cols: usize, demand: impl Fn(&NetworkSpec) -> DemandProfile) -> TscEnv {
        let net = build_grid(rows, cols, GridGeometry::default()).unwrap();
        let d = demand(&net);
        TscEnv::new(EpisodeConfig::new(Scenario::new(net, d))).unwrap()
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_action(0, 25, 3).unwrap(), (NodeId(0), -3));
        assert_eq!(decode_action(1, 25, 3).unwrap(), (NodeId(0), 0));
        assert_eq!(decode_action(74, 25, 3).unwrap(), (NodeId(24), 3));
        assert!(matches!(decode_action(75, 25, 3), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn encode_decode_bijection() {
        for m in 1..=100 {
            for id in 0..3 * m {
                let (n, d) = decode_action(id, m, 3).unwrap();
                let j = (d / 3 + 1) as usize;
                assert_eq!(encode_action(n.0, j), ActionId(id));
            }
        }
    }

    #[test]
    fn reference_dimensions() {
        let mut e = env(5, 5, |_| DemandProfile::empty());
        assert_eq!(e.observation_len(), 105);
        assert_eq!(e.action_count(), 75);
        let obs = e.reset().unwrap();
        assert_eq!(obs.len(), 105);
        assert_eq!(obs.sim_time, 1800);
        assert!(obs.queues.iter().all(|&q| q == 0));
        assert!(obs.splits.iter().all(|&s| s == 50));
    }

    #[test]
    fn step_before_reset_and_after_done() {
        let net = build_grid(1, 2, GridGeometry::default()).unwrap();
        let mut cfg = EpisodeConfig::new(Scenario::new(net, DemandProfile::empty()));
        cfg.duration = 300;
        cfg.warmup = 200;
        let mut e = TscEnv::new(cfg).unwrap();
        assert!(matches!(e.step(ActionId(1)), Err(Error::NotReset)));
        e.reset().unwrap();
        assert!(matches!(e.step(ActionId(6)), Err(Error::InvalidAction(_))));
        let mut n = 0;
        loop {
            let r = e.step(ActionId(1)).unwrap();
            n += 1;
            assert_eq!(r.reward, 0.0);
            if r.done {
                break;
            }
        }
        assert_eq!(n, 4);
        assert!(matches!(e.step(ActionId(1)), Err(Error::EpisodeFinished)));
        let m = e.episode_metrics().unwrap();
        assert_eq!(m.cycles, 1);
        assert_eq!(m.avg_travel_time, None);
    }

    #[test]
    fn split_change_lands_at_next_cycle() {
        let mut e = env(1, 2, |_| DemandProfile::empty());
        e.reset().unwrap();
        // t=1800 is a cycle start; the first tick activates it
        let r = e.step(ActionId(2)).unwrap();
        assert_eq!(r.obs.splits, vec![53, 50]);
        // t=1825: pending until t=1900
        let r = e.step(ActionId(5)).unwrap();
        assert_eq!(r.obs.splits, vec![53, 50]);
        e.step(ActionId(1)).unwrap();
        let r = e.step(ActionId(1)).unwrap();
        assert_eq!(r.obs.sim_time, 1900);
        assert_eq!(r.obs.splits, vec![53, 50]);
        let r = e.step(ActionId(1)).unwrap();
        assert_eq!(r.obs.splits, vec![53, 53]);
    }

    #[test]
    fn reward_matches_info_terms() {
        let mut e = env(2, 2, |n| DemandProfile::uniform(n, 700.0, 900.0, 0, 16_200));
        let mut cfg = e.config().clone();
        cfg.reward.variant = RewardVariant::TravelTime;
        e = TscEnv::new(cfg).unwrap();
        e.reset().unwrap();
        for i in 0..60 {
            let r = e.step(ActionId(i % 12)).unwrap();
            let rc = &e.config().reward;
            let inputs: Vec<_> = (0..r.info.queues.len())
                .map(|k| LinkRewardInput {
                    q: r.info.queues[k],
                    t_avg: r.info.t_avg[k],
                    t_eg_u: r.info.t_eg_u[k],
                    axis: e.config().scenario.net.links[e.observed_links()[k].0]
                        .direction
                        .axis(),
                })
                .collect();
            assert_eq!(reward::reward_travel_time(&inputs, rc).unwrap(), r.reward);
            assert!(r.reward <= 0.0);
        }
    }
}
