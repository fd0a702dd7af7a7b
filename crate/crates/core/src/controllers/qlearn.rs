use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionId, EpisodeConfig, Observation};
use crate::error::{Error, Result};

use super::{Policy, Transition};

const WEIGHTS_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearnConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// episodes over which epsilon decays linearly to `epsilon_end`
    pub decay_episodes: usize,
    pub seed: u64,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            decay_episodes: 100,
            seed: 0,
        }
    }
}

impl QLearnConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.alpha) && unit(self.gamma) && unit(self.epsilon_start) && unit(self.epsilon_end)) {
            return Err(Error::Config(
                "alpha, gamma and epsilon must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.epsilon_end;
        }
        let frac = episode as f64 / self.decay_episodes as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// One-step TD learner with a linear action-value function.
///
/// Features are `queues / q_ub`, `(splits - s_lb) / (s_ub - s_lb)` and a
/// trailing bias of 1.
#[derive(Debug, Clone)]
pub struct LinearQAgent {
    config: QLearnConfig,
    links: usize,
    intersections: usize,
    q_ub: f64,
    s_lb: f64,
    s_range: f64,
    /// `weights[a]` has `links + intersections + 1` entries
    weights: Vec<Vec<f64>>,
    epsilon: f64,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    version: String,
    links: usize,
    intersections: usize,
    q_ub: f64,
    s_lb: f64,
    s_ub: f64,
    config: QLearnConfig,
    weights: Vec<Vec<f64>>,
}

impl LinearQAgent {
    pub fn new(cfg: &EpisodeConfig, config: QLearnConfig) -> Result<Self> {
        config.validate()?;
        let c = &cfg.scenario.constants;
        let links = cfg.observed_links().len();
        let intersections = cfg.scenario.intersections();
        let features = links + intersections + 1;
        Ok(Self {
            config,
            links,
            intersections,
            q_ub: f64::from(cfg.scenario.flow.queue_upper_bound),
            s_lb: f64::from(c.s_lb),
            s_range: f64::from(c.s_ub - c.s_lb),
            weights: vec![vec![0.0; features]; 3 * intersections],
            epsilon: config.epsilon_start,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn config(&self) -> &QLearnConfig {
        &self.config
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(0.0, 1.0);
    }

    /// Stop exploring.
    pub fn set_greedy(&mut self) {
        self.config.epsilon_start = 0.0;
        self.config.epsilon_end = 0.0;
        self.epsilon = 0.0;
    }

    pub fn feature_len(&self) -> usize {
        self.links + self.intersections + 1
    }

    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        let mut phi = Vec::with_capacity(self.feature_len());
        phi.extend(obs.queues.iter().map(|&q| f64::from(q) / self.q_ub));
        phi.extend(
            obs.splits
                .iter()
                .map(|&s| (f64::from(s) - self.s_lb) / self.s_range),
        );
        phi.push(1.0);
        phi
    }

    fn value(&self, action: usize, phi: &[f64]) -> f64 {
        self.weights[action].iter().zip(phi).map(|(w, x)| w * x).sum()
    }

    pub fn q_values(&self, obs: &Observation) -> Vec<f64> {
        let phi = self.features(obs);
        (0..self.weights.len()).map(|a| self.value(a, &phi)).collect()
    }

    /// Highest-valued action, lowest id on ties.
    pub fn best_action(&self, obs: &Observation) -> ActionId {
        let phi = self.features(obs);
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for a in 0..self.weights.len() {
            let v = self.value(a, &phi);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        ActionId(best)
    }

    /// `w_a += alpha * (r + gamma * max_a' q(next, a') * (1 - done) - q(obs, a)) * phi(obs)`
    pub fn qlearn_step(&mut self, t: &Transition<'_>) -> Result<()> {
        let a = t.action.0;
        if a >= self.weights.len() {
            return Err(Error::InvalidAction(format!(
                "action {a} out of range 0..{}",
                self.weights.len()
            )));
        }
        let phi = self.features(t.obs);
        if phi.len() != self.feature_len() || t.next_obs.len() != t.obs.len() {
            return Err(Error::Config(format!(
                "observation length {} does not match agent ({} features)",
                t.obs.len(),
                self.feature_len()
            )));
        }
        let bootstrap = if t.done {
            0.0
        } else {
            let next = self.features(t.next_obs);
            (0..self.weights.len())
                .map(|b| self.value(b, &next))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let target = t.reward + self.config.gamma * bootstrap;
        if !target.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite TD target {target} (reward {}, bootstrap {bootstrap}) at t={}",
                t.reward, t.obs.sim_time
            )));
        }
        let td = target - self.value(a, &phi);
        let alpha = self.config.alpha;
        for (w, x) in self.weights[a].iter_mut().zip(&phi) {
            *w += alpha * td * x;
        }
        if self.weights[a].iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence(format!(
                "weights of action {a} became non-finite at t={}",
                t.obs.sim_time
            )));
        }
        Ok(())
    }

    pub fn check_shape(&self, cfg: &EpisodeConfig) -> Result<()> {
        let links = cfg.observed_links().len();
        let m = cfg.scenario.intersections();
        if links != self.links || m != self.intersections {
            return Err(Error::Config(format!(
                "weights are for {} links / {} intersections, scenario has {links} / {m}",
                self.links, self.intersections
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = WeightsFile {
            version: WEIGHTS_VERSION.into(),
            links: self.links,
            intersections: self.intersections,
            q_ub: self.q_ub,
            s_lb: self.s_lb,
            s_ub: self.s_lb + self.s_range,
            config: self.config,
            weights: self.weights.clone(),
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Recorder(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let f: WeightsFile = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
        if f.version != WEIGHTS_VERSION {
            return Err(parse(format!("unsupported weights version `{}`", f.version)));
        }
        let features = f.links + f.intersections + 1;
        if f.weights.len() != 3 * f.intersections || f.weights.iter().any(|w| w.len() != features) {
            return Err(parse("weight matrix shape does not match header".into()));
        }
        if f.weights.iter().flatten().any(|w| !w.is_finite())
            || f.s_ub.is_nan()
            || f.s_ub <= f.s_lb
            || f.q_ub.is_nan()
            || f.q_ub <= 0.0
        {
            return Err(parse("non-finite weights or bad normalization".into()));
        }
        f.config.validate()?;
        Ok(Self {
            config: f.config,
            links: f.links,
            intersections: f.intersections,
            q_ub: f.q_ub,
            s_lb: f.s_lb,
            s_range: f.s_ub - f.s_lb,
            weights: f.weights,
            epsilon: f.config.epsilon_end,
            rng: ChaCha8Rng::seed_from_u64(f.config.seed),
        })
    }
}

impl Policy for LinearQAgent {
    fn name(&self) -> &'static str {
        "qlearn"
    }

    fn begin_episode(&mut self, episode: usize) {
        self.epsilon = self.config.epsilon_at(episode);
    }

    fn act(&mut self, obs: &Observation) -> ActionId {
        if self.epsilon > 0.0 && self.rng.random::<f64>() < self.epsilon {
            ActionId(self.rng.random_range(0..self.weights.len()))
        } else {
            self.best_action(obs)
        }
    }

    fn observe(&mut self, t: &Transition<'_>) -> Result<()> {
        self.qlearn_step(t)
    }
}
