use crate::env::{encode_action, ActionId, EpisodeConfig, Observation};
use crate::net::{Axis, NodeId};

use super::Policy;

#[derive(Debug, Clone, Copy)]
struct LinkEnds {
    axis: Axis,
    upstream: Option<NodeId>,
    downstream: NodeId,
}

/// Congestion-responsive heuristic.
///
/// Looks at the most congested observed link (lowest index on ties). Above
/// `q_lc` it either throttles the link's inflow at the upstream intersection
/// or widens its outflow at the downstream one, alternating between the two
/// on successive congested calls, upstream first. The split is NS green, so
/// for an EW link throttling means +delta_s upstream and widening means
/// -delta_s downstream; NS links use the opposite signs. A move that the
/// split bounds would absorb falls through to the other endpoint.
#[derive(Debug, Clone)]
pub struct Greedy {
    links: Vec<LinkEnds>,
    q_lc: u32,
    s_lb: u32,
    s_ub: u32,
    congested_calls: u64,
}

impl Greedy {
    pub fn new(cfg: &EpisodeConfig) -> Self {
        let net = &cfg.scenario.net;
        let links = cfg
            .observed_links()
            .into_iter()
            .map(|l| {
                let link = &net.links[l.0];
                LinkEnds {
                    axis: link.direction.axis(),
                    upstream: link.from.node(),
                    downstream: link.to.node().expect("observed links end at a signal"),
                }
            })
            .collect();
        let c = &cfg.scenario.constants;
        Self {
            links,
            q_lc: cfg.reward.q_lc,
            s_lb: c.s_lb,
            s_ub: c.s_ub,
            congested_calls: 0,
        }
    }

    fn absorbed(&self, split: u32, raise: bool) -> bool {
        if raise {
            split >= self.s_ub
        } else {
            split <= self.s_lb
        }
    }
}

fn noop() -> ActionId {
    encode_action(0, 1)
}

impl Policy for Greedy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn begin_episode(&mut self, _episode: usize) {
        self.congested_calls = 0;
    }

    fn act(&mut self, obs: &Observation) -> ActionId {
        let Some((worst, &q)) = obs.queues.iter().enumerate().rev().max_by_key(|&(_, q)| q) else {
            return noop();
        };
        if q <= self.q_lc {
            return noop();
        }
        let ends = self.links[worst];
        let upstream_first = self.congested_calls.is_multiple_of(2);
        self.congested_calls += 1;

        // raise = true means +delta_s
        let throttle_raise = ends.axis == Axis::EastWest;
        let mut options = Vec::with_capacity(2);
        if let Some(up) = ends.upstream {
            options.push((up, throttle_raise));
        }
        let down = (ends.downstream, !throttle_raise);
        if upstream_first {
            options.push(down);
        } else {
            options.insert(0, down);
        }
        for (node, raise) in options {
            if !self.absorbed(obs.splits[node.0], raise) {
                return encode_action(node.0, if raise { 2 } else { 0 });
            }
        }
        noop()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{decode_action, Scenario};
    use crate::net::{build_grid, Direction, GridGeometry};
    use crate::sim::DemandProfile;

    fn cfg() -> EpisodeConfig {
        let net = build_grid(1, 2, GridGeometry::default()).unwrap();
        EpisodeConfig::new(Scenario::new(net, DemandProfile::empty()))
    }

    fn obs(queues: Vec<u32>, splits: Vec<u32>) -> Observation {
        Observation {
            queues,
            splits,
            sim_time: 0,
        }
    }

    #[test]
    fn quiet_network_is_noop() {
        let mut g = Greedy::new(&cfg());
        assert_eq!(g.act(&obs(vec![0, 0], vec![50, 50])), ActionId(1));
        assert_eq!(g.act(&obs(vec![10, 3], vec![50, 50])), ActionId(1));
    }

    #[test]
    fn ew_link_throttles_upstream_then_widens_downstream() {
        let c = cfg();
        // link 0 is (0,0) -> (0,1), eastbound
        assert_eq!(c.scenario.net.links[0].direction, Direction::E);
        let mut g = Greedy::new(&c);
        let a = g.act(&obs(vec![30, 5], vec![50, 50]));
        assert_eq!(decode_action(a.0, 2, 3).unwrap(), (NodeId(0), 3));
        let a = g.act(&obs(vec![30, 5], vec![50, 50]));
        assert_eq!(decode_action(a.0, 2, 3).unwrap(), (NodeId(1), -3));
    }

    #[test]
    fn pinned_upstream_falls_through_to_downstream() {
        let mut g = Greedy::new(&cfg());
        let a = g.act(&obs(vec![30, 5], vec![70, 50]));
        assert_eq!(decode_action(a.0, 2, 3).unwrap(), (NodeId(1), -3));
        // both pinned
        let mut g = Greedy::new(&cfg());
        assert_eq!(g.act(&obs(vec![30, 5], vec![70, 30])), ActionId(1));
    }

    #[test]
    fn ns_link_uses_opposite_signs() {
        let net = build_grid(2, 1, GridGeometry::default()).unwrap();
        let c = EpisodeConfig::new(Scenario::new(net, DemandProfile::empty()));
        // link 0 is (0,0) -> (1,0), southbound
        assert_eq!(c.scenario.net.links[0].direction, Direction::S);
        let mut g = Greedy::new(&c);
        let a = g.act(&obs(vec![40, 0], vec![50, 50]));
        assert_eq!(decode_action(a.0, 2, 3).unwrap(), (NodeId(0), -3));
        let a = g.act(&obs(vec![40, 0], vec![50, 50]));
        assert_eq!(decode_action(a.0, 2, 3).unwrap(), (NodeId(1), 3));
    }

    #[test]
    fn ties_pick_lowest_link() {
        let mut g = Greedy::new(&cfg());
        // link 1 is westbound (0,1) -> (0,0); tie goes to link 0
        let a = g.act(&obs(vec![20, 20], vec![50, 50]));
        assert_eq!(decode_action(a.0, 2, 3).unwrap(), (NodeId(0), 3));
    }
}
