use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Direction, LinkId, Movement, NetworkSpec, NodeId};

/// Turning fractions at one approach. Must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnProbabilities {
    pub left: f64,
    pub straight: f64,
    pub right: f64,
}

impl Default for TurnProbabilities {
    fn default() -> Self {
        Self {
            left: 0.1,
            straight: 0.8,
            right: 0.1,
        }
    }
}

impl TurnProbabilities {
    pub const STRAIGHT_ONLY: TurnProbabilities = TurnProbabilities {
        left: 0.0,
        straight: 1.0,
        right: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let p = [self.left, self.straight, self.right];
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config(format!("negative turn probability in {self:?}")));
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "turn probabilities {self:?} do not sum to 1"
            )));
        }
        Ok(())
    }

    /// Map a uniform draw in `[0, 1)` to a movement.
    pub fn pick(&self, u: f64) -> Movement {
        if u < self.left {
            Movement::Left
        } else if u < self.left + self.straight {
            Movement::Straight
        } else {
            Movement::Right
        }
    }
}

/// Poisson arrivals on one boundary approach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandEntry {
    pub node: NodeId,
    /// heading of travel into `node`
    pub heading: Direction,
    /// vehicles / hour
    pub rate: f64,
    /// active over `[start, end)` seconds
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DemandProfile {
    pub entries: Vec<DemandEntry>,
    pub default_turns: TurnProbabilities,
    /// Per-approach turning fractions overriding `default_turns`.
    pub turn_overrides: Vec<(NodeId, Direction, TurnProbabilities)>,
}

impl DemandProfile {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Every boundary approach gets `ns_rate` or `ew_rate` vehicles/hour
    /// depending on its axis.
    pub fn uniform(net: &NetworkSpec, ns_rate: f64, ew_rate: f64, start: u64, end: u64) -> Self {
        let entries = net
            .entry_links()
            .map(|l| {
                let node = l.to.node().expect("entry links end at a node");
                let rate = match l.direction.axis() {
                    crate::net::Axis::NorthSouth => ns_rate,
                    crate::net::Axis::EastWest => ew_rate,
                };
                DemandEntry {
                    node,
                    heading: l.direction,
                    rate,
                    start,
                    end,
                }
            })
            .collect();
        Self {
            entries,
            ..Default::default()
        }
    }

    pub fn with_turns(mut self, turns: TurnProbabilities) -> Self {
        self.default_turns = turns;
        self
    }

    pub fn turns_at(&self, node: NodeId, heading: Direction) -> TurnProbabilities {
        self.turn_overrides
            .iter()
            .rev()
            .find(|(n, h, _)| *n == node && *h == heading)
            .map(|(_, _, t)| *t)
            .unwrap_or(self.default_turns)
    }

    pub(crate) fn resolve(&self, net: &NetworkSpec) -> Result<ResolvedDemand> {
        self.default_turns.validate()?;
        for (node, heading, t) in &self.turn_overrides {
            if node.0 >= net.node_count() {
                return Err(Error::Config(format!("turn override for unknown node {node}")));
            }
            t.validate()
                .map_err(|e| Error::Config(format!("{node} {heading:?}: {e}")))?;
        }
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            if !(e.rate.is_finite() && e.rate >= 0.0) {
                return Err(Error::Config(format!("arrival rate {} must be >= 0", e.rate)));
            }
            if e.end < e.start {
                return Err(Error::Config(format!(
                    "demand interval [{}, {}) is reversed",
                    e.start, e.end
                )));
            }
            let link = net.entry_link(e.node, e.heading).ok_or_else(|| {
                Error::Config(format!(
                    "{} heading {:?} is not a boundary approach",
                    e.node, e.heading
                ))
            })?;
            entries.push(ResolvedEntry {
                link,
                per_second: e.rate / 3600.0,
                start: e.start,
                end: e.end,
            });
        }
        let mut turns = vec![[self.default_turns; 4]; net.node_count()];
        for (node, heading, t) in &self.turn_overrides {
            turns[node.0][heading.index()] = *t;
        }
        Ok(ResolvedDemand { entries, turns })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedEntry {
    pub link: LinkId,
    pub per_second: f64,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedDemand {
    pub entries: Vec<ResolvedEntry>,
    /// `[node][heading]`
    pub turns: Vec<[TurnProbabilities; 4]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_grid, GridGeometry};

    #[test]
    fn probabilities_must_sum_to_one() {
        assert!(TurnProbabilities::default().validate().is_ok());
        let bad = TurnProbabilities {
            left: 0.5,
            straight: 0.6,
            right: 0.0,
        };
        assert!(bad.validate().is_err());
        let neg = TurnProbabilities {
            left: -0.1,
            straight: 1.1,
            right: 0.0,
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn pick_partitions_unit_interval() {
        let t = TurnProbabilities::default();
        assert_eq!(t.pick(0.0), Movement::Left);
        assert_eq!(t.pick(0.1), Movement::Straight);
        assert_eq!(t.pick(0.89), Movement::Straight);
        assert_eq!(t.pick(0.95), Movement::Right);
    }

    #[test]
    fn uniform_covers_every_entry() {
        let net = build_grid(3, 2, GridGeometry::default()).unwrap();
        let d = DemandProfile::uniform(&net, 600.0, 300.0, 0, 100);
        assert_eq!(d.entries.len(), 2 * (3 + 2));
        assert!(d.resolve(&net).is_ok());
    }

    #[test]
    fn interior_approach_is_not_an_entry() {
        let net = build_grid(3, 3, GridGeometry::default()).unwrap();
        let d = DemandProfile {
            entries: vec![DemandEntry {
                node: NodeId(4),
                heading: Direction::N,
                rate: 100.0,
                start: 0,
                end: 10,
            }],
            ..Default::default()
        };
        assert!(matches!(d.resolve(&net), Err(Error::Config(_))));
    }
}
