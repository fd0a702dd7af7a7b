//! Per-link congestion and travel-time rewards.
//!
//! Every link falls in exactly one congestion band:
//! `q <= q_lc` free, `q_lc < q < q_hc` light, `q >= q_hc` heavy.
//! The region reward is the sum of per-link terms and is never positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Axis;
use crate::signal::{SignalConstants, SignalPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardVariant {
    #[serde(alias = "congestion_only")]
    Congestion,
    #[serde(alias = "travel_time")]
    TravelTime,
}

impl std::str::FromStr for RewardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "congestion" | "congestion-only" | "congestion_only" => Ok(RewardVariant::Congestion),
            "travel-time" | "travel_time" => Ok(RewardVariant::TravelTime),
            other => Err(Error::Usage(format!(
                "unknown reward `{other}` (expected congestion or travel-time)"
            ))),
        }
    }
}

impl RewardVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardVariant::Congestion => "congestion",
            RewardVariant::TravelTime => "travel-time",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub variant: RewardVariant,
    pub q_lc: u32,
    pub q_hc: u32,
    pub w_cp: f64,
    /// vehicles / cycle at the default split
    pub f_sat: f64,
    /// through green at the default split, NS then EW
    pub t_eg_default: [f64; 2],
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::for_constants(RewardVariant::Congestion, &SignalConstants::default())
            .expect("default constants are feasible")
    }
}

impl RewardConfig {
    pub fn for_constants(variant: RewardVariant, constants: &SignalConstants) -> Result<Self> {
        Ok(Self {
            variant,
            q_lc: 10,
            q_hc: 25,
            w_cp: 10.0,
            f_sat: 50.0,
            t_eg_default: [
                f64::from(SignalPlan::default_effective_green(constants, Axis::NorthSouth)?),
                f64::from(SignalPlan::default_effective_green(constants, Axis::EastWest)?),
            ],
        })
    }

    pub fn validate(&self, q_ub: u32) -> Result<()> {
        if !(0 < self.q_lc && self.q_lc < self.q_hc && self.q_hc <= q_ub) {
            return Err(Error::Config(format!(
                "need 0 < q_lc ({}) < q_hc ({}) <= q_ub ({q_ub})",
                self.q_lc, self.q_hc
            )));
        }
        if !(self.w_cp >= 1.0 && self.w_cp.is_finite()) {
            return Err(Error::Config(format!("w_cp must be >= 1, got {}", self.w_cp)));
        }
        if !(self.f_sat > 0.0 && self.f_sat.is_finite()) {
            return Err(Error::Config(format!(
                "f_sat must be positive, got {}",
                self.f_sat
            )));
        }
        if self.t_eg_default.iter().any(|g| g.is_nan() || *g <= 0.0) {
            return Err(Error::Config("default effective green must be positive".into()));
        }
        Ok(())
    }

    pub fn default_green(&self, axis: Axis) -> f64 {
        match axis {
            Axis::NorthSouth => self.t_eg_default[0],
            Axis::EastWest => self.t_eg_default[1],
        }
    }

    pub fn classify(&self, q: u32) -> Congestion {
        if q <= self.q_lc {
            Congestion::Free
        } else if q < self.q_hc {
            Congestion::Light
        } else {
            Congestion::Heavy
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Congestion {
    Free,
    Light,
    Heavy,
}

/// Inputs to the travel-time term of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRewardInput {
    pub q: u32,
    pub t_avg: f64,
    /// through green at the upstream intersection for this link's axis
    pub t_eg_u: f64,
    pub axis: Axis,
}

pub fn congestion_term(q: u32, cfg: &RewardConfig) -> f64 {
    let q = f64::from(q);
    match cfg.classify(q as u32) {
        Congestion::Free => 0.0,
        Congestion::Light => -q,
        Congestion::Heavy => -(cfg.w_cp * q),
    }
}

pub fn travel_time_term(input: &LinkRewardInput, cfg: &RewardConfig) -> Result<f64> {
    let t_eg_d = cfg.default_green(input.axis);
    if input.t_eg_u.is_nan() || input.t_eg_u <= 0.0 || t_eg_d.is_nan() || t_eg_d <= 0.0 {
        return Err(Error::Config(format!(
            "non-positive effective green (t_eg_u={}, t_eg_d={t_eg_d})",
            input.t_eg_u
        )));
    }
    Ok(match cfg.classify(input.q) {
        Congestion::Free => 0.0,
        Congestion::Light => -(input.t_avg * cfg.f_sat * input.t_eg_u / t_eg_d),
        Congestion::Heavy => -(cfg.w_cp * input.t_avg * cfg.f_sat),
    })
}

pub fn reward_congestion(queues: &[u32], cfg: &RewardConfig) -> f64 {
    queues.iter().map(|&q| congestion_term(q, cfg)).sum()
}

pub fn reward_travel_time(links: &[LinkRewardInput], cfg: &RewardConfig) -> Result<f64> {
    links
        .iter()
        .map(|l| travel_time_term(l, cfg))
        .sum::<Result<f64>>()
}
