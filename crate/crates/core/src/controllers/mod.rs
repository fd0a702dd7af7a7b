//! Policies that drive a [`TscEnv`] and the episode/training loops.

mod greedy;
mod qlearn;

use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use greedy::Greedy;
pub use qlearn::{LinearQAgent, QLearnConfig};

use crate::env::{encode_action, ActionId, EpisodeConfig, Observation, TscEnv};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeMetrics, LearningCurve};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<'a> {
    pub obs: &'a Observation,
    pub action: ActionId,
    pub reward: f64,
    pub next_obs: &'a Observation,
    pub done: bool,
}

pub trait Policy {
    fn name(&self) -> &'static str;

    fn act(&mut self, obs: &Observation) -> ActionId;

    /// Called once before each episode with its index.
    fn begin_episode(&mut self, _episode: usize) {}

    /// Learn from one transition. Non-learning policies ignore it.
    fn observe(&mut self, _transition: &Transition<'_>) -> Result<()> {
        Ok(())
    }
}

/// The base case: never touches a split.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedTime;

impl Policy for FixedTime {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn act(&mut self, _obs: &Observation) -> ActionId {
        encode_action(0, 1)
    }
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    actions: usize,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(actions: usize, seed: u64) -> Self {
        Self {
            actions,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn act(&mut self, _obs: &Observation) -> ActionId {
        ActionId(self.rng.random_range(0..self.actions))
    }
}

/// Policy selector as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    Fixed,
    Greedy,
    Random,
    QLearn(PathBuf),
}

impl std::str::FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(PolicySpec::Fixed),
            "greedy" => Ok(PolicySpec::Greedy),
            "random" => Ok(PolicySpec::Random),
            _ => match s.strip_prefix("qlearn:") {
                Some(path) if !path.is_empty() => Ok(PolicySpec::QLearn(PathBuf::from(path))),
                _ => Err(Error::Usage(format!(
                    "unknown policy `{s}` (expected fixed, greedy, random or qlearn:<weights>)"
                ))),
            },
        }
    }
}

impl PolicySpec {
    pub fn build(&self, cfg: &EpisodeConfig, seed: u64) -> Result<Box<dyn Policy + Send>> {
        Ok(match self {
            PolicySpec::Fixed => Box::new(FixedTime),
            PolicySpec::Greedy => Box::new(Greedy::new(cfg)),
            PolicySpec::Random => Box::new(RandomPolicy::new(cfg.action_count(), seed)),
            PolicySpec::QLearn(path) => {
                let mut agent = LinearQAgent::load(path)?;
                agent.check_shape(cfg)?;
                agent.set_greedy();
                Box::new(agent)
            }
        })
    }
}

/// Per-episode environment seeds derived from a master seed.
pub fn episode_seeds(master: u64, episodes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

/// Run one full episode and return its metrics.
pub fn run_episode(cfg: &EpisodeConfig, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeMetrics> {
    let mut env = TscEnv::new(cfg.clone())?;
    play(&mut env, policy, Some(seed), false)?;
    env.episode_metrics()
}

fn play(env: &mut TscEnv, policy: &mut dyn Policy, seed: Option<u64>, learn: bool) -> Result<f64> {
    let mut obs = env.reset_with_seed(seed)?;
    let mut total = 0.0;
    loop {
        let action = policy.act(&obs);
        let r = env.step(action)?;
        total += r.reward;
        if learn {
            policy.observe(&Transition {
                obs: &obs,
                action,
                reward: r.reward,
                next_obs: &r.obs,
                done: r.done,
            })?;
        }
        obs = r.obs;
        if r.done {
            return Ok(total);
        }
    }
}

/// Run `episodes` sequential episodes, feeding every transition to the
/// policy. Episode `i` uses `episode_seeds(seed, episodes)[i]`.
pub fn train(
    cfg: &EpisodeConfig,
    policy: &mut dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<LearningCurve> {
    if episodes == 0 {
        return Err(Error::Usage("need at least one episode".into()));
    }
    let mut env = TscEnv::new(cfg.clone())?;
    let mut curve = LearningCurve::default();
    for (i, s) in episode_seeds(seed, episodes).into_iter().enumerate() {
        policy.begin_episode(i);
        let ret = play(&mut env, policy, Some(s), true)?;
        log::debug!("episode {i}: return {ret}");
        curve.returns.push(ret);
    }
    Ok(curve)
}

/// Episode returns of a fixed (non-learning) policy on the given seeds.
pub fn evaluate(cfg: &EpisodeConfig, policy: &mut dyn Policy, seeds: &[u64]) -> Result<Vec<f64>> {
    let mut env = TscEnv::new(cfg.clone())?;
    seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            policy.begin_episode(i);
            play(&mut env, policy, Some(s), false)
        })
        .collect()
}
