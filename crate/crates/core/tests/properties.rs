use proptest::prelude::*;

use gridtsc::controllers::Transition;
use gridtsc::net::{Axis, GridGeometry};
use gridtsc::reward::{reward_congestion, reward_travel_time, LinkRewardInput};
use gridtsc::signal::derive_phase_table;
use gridtsc::{
    build_grid, decode_action, encode_action, ActionId, DemandProfile, EpisodeConfig, Greedy, LinearQAgent,
    NodeId, Observation, Policy, QLearnConfig, RandomPolicy, RewardConfig, RewardVariant, Scenario,
    SignalConstants, SignalPlan, TscEnv,
};

fn grid_cfg(rows: usize, cols: usize) -> EpisodeConfig {
    let net = build_grid(rows, cols, GridGeometry::default()).unwrap();
    EpisodeConfig::new(Scenario::new(net, DemandProfile::empty()))
}

fn split() -> impl Strategy<Value = u32> {
    (0u32..=14).prop_map(|i| (30 + 3 * i).min(70))
}

fn observation(links: usize, intersections: usize) -> impl Strategy<Value = Observation> {
    (
        prop::collection::vec(0u32..=120, links),
        prop::collection::vec(split(), intersections),
    )
        .prop_map(|(queues, splits)| Observation {
            queues,
            splits,
            sim_time: 0,
        })
}

proptest! {
    #[test]
    fn split_stays_in_bounds(start in split(), deltas in prop::collection::vec(-1i32..=1, 0..60)) {
        let c = SignalConstants::default();
        let mut plan = SignalPlan::new(NodeId(0), start, c).unwrap();
        let mut expected = start;
        for (k, d) in deltas.iter().enumerate() {
            let delta = d * c.delta_s as i32;
            plan.apply_split_delta(delta).unwrap();
            if delta != 0 {
                prop_assert_eq!(
                    plan.pending_split(),
                    Some((plan.split() as i32 + delta).clamp(30, 70) as u32)
                );
            }
            plan.roll_over(100 * (k as u64 + 1));
            if delta != 0 {
                expected = (expected as i32 + delta).clamp(30, 70) as u32;
            }
            prop_assert_eq!(plan.split(), expected);
            prop_assert!((30..=70).contains(&plan.split()));
            let t = plan.phase_table();
            prop_assert_eq!(t.cycle(), 100);
        }
    }

    #[test]
    fn out_of_grid_deltas_are_rejected(d in any::<i32>().prop_filter("valid", |d| ![-3, 0, 3].contains(d))) {
        let mut plan = SignalPlan::new(NodeId(0), 50, SignalConstants::default()).unwrap();
        prop_assert!(plan.apply_split_delta(d).is_err());
        prop_assert_eq!(plan.pending_split(), None);
    }

    #[test]
    fn phase_durations_fill_cycle(s in 30u32..=70) {
        let t = derive_phase_table(s, &SignalConstants::default()).unwrap();
        prop_assert_eq!(t.cycle(), 100);
        prop_assert_eq!(t.phase1_ns_through + t.phase2_ns_left, s);
        prop_assert_eq!(t.phase3_ew_through + t.phase4_ew_left, 84 - s);
    }

    #[test]
    fn congestion_reward_nonpositive_and_monotone(
        queues in prop::collection::vec(0u32..=120, 1..40),
        pick in any::<prop::sample::Index>(),
        bump in 1u32..30,
    ) {
        let cfg = RewardConfig::for_constants(RewardVariant::Congestion, &SignalConstants::default()).unwrap();
        let r = reward_congestion(&queues, &cfg);
        prop_assert!(r <= 0.0);
        prop_assert_eq!(r == 0.0, queues.iter().all(|&q| q <= cfg.q_lc));
        let mut more = queues.clone();
        let i = pick.index(more.len());
        more[i] += bump;
        prop_assert!(reward_congestion(&more, &cfg) <= r);
    }

    #[test]
    fn travel_time_reward_nonpositive(
        links in prop::collection::vec((0u32..=120, 0.0f64..900.0, split(), any::<bool>()), 1..40),
    ) {
        let cfg = RewardConfig::for_constants(RewardVariant::TravelTime, &SignalConstants::default()).unwrap();
        let inputs: Vec<LinkRewardInput> = links
            .iter()
            .map(|&(q, t_avg, s, ns)| LinkRewardInput {
                q,
                t_avg,
                t_eg_u: if ns { s - 8 } else { 76 - s } as f64,
                axis: if ns { Axis::NorthSouth } else { Axis::EastWest },
            })
            .collect();
        let r = reward_travel_time(&inputs, &cfg).unwrap();
        prop_assert!(r <= 0.0);
        if links.iter().all(|l| l.0 <= cfg.q_lc) {
            prop_assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn action_codec_round_trips(m in 1usize..30, node in 0usize..30, j in 0usize..3) {
        prop_assume!(node < m);
        let id = encode_action(node, j);
        let (n, delta) = decode_action(id.0, m, 3).unwrap();
        prop_assert_eq!(n, NodeId(node));
        prop_assert_eq!(delta, (j as i32 - 1) * 3);
        prop_assert!(decode_action(3 * m, m, 3).is_err());
    }

    #[test]
    fn greedy_output_valid_and_never_absorbed(obs in observation(8, 4), calls in 0usize..4) {
        let cfg = grid_cfg(2, 2);
        let mut g = Greedy::new(&cfg);
        for _ in 0..calls {
            g.act(&obs);
        }
        let a = g.act(&obs);
        let (node, delta) = decode_action(a.0, 4, 3).unwrap();
        let s = obs.splits[node.0];
        if delta > 0 {
            prop_assert!(s < 70, "raised a split already at the upper bound");
        }
        if delta < 0 {
            prop_assert!(s > 30, "lowered a split already at the lower bound");
        }
        if obs.queues.iter().all(|&q| q <= cfg.reward.q_lc) {
            prop_assert_eq!(a, ActionId(1));
        }
    }

    #[test]
    fn random_and_learned_policies_stay_in_range(obs in observation(8, 4), seed in any::<u64>()) {
        let cfg = grid_cfg(2, 2);
        let mut r = RandomPolicy::new(cfg.action_count(), seed);
        let mut q = LinearQAgent::new(&cfg, QLearnConfig { seed, ..QLearnConfig::default() }).unwrap();
        q.set_epsilon(0.5);
        for _ in 0..20 {
            prop_assert!(r.act(&obs).0 < 12);
            prop_assert!(q.act(&obs).0 < 12);
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights(
        obs in observation(8, 4),
        next in observation(8, 4),
        action in 0usize..12,
        reward in -5000.0f64..0.0,
        done in any::<bool>(),
    ) {
        let cfg = grid_cfg(2, 2);
        let mut q = LinearQAgent::new(&cfg, QLearnConfig { alpha: 0.0, ..QLearnConfig::default() }).unwrap();
        for (i, row) in q.weights_mut().iter_mut().enumerate() {
            for (k, w) in row.iter_mut().enumerate() {
                *w = ((i * 31 + k * 7) % 13) as f64 - 6.0;
            }
        }
        let before = q.weights().to_vec();
        q.qlearn_step(&Transition { obs: &obs, action: ActionId(action), reward, next_obs: &next, done }).unwrap();
        prop_assert_eq!(q.weights(), &before[..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn episodes_respect_observation_bounds(
        ns in 0.0f64..1500.0,
        ew in 0.0f64..1500.0,
        seed in any::<u64>(),
        actions in prop::collection::vec(0usize..12, 40),
    ) {
        let net = build_grid(2, 2, GridGeometry::default()).unwrap();
        let demand = DemandProfile::uniform(&net, ns, ew, 0, 100_000);
        let mut cfg = EpisodeConfig::new(Scenario::new(net, demand));
        cfg.warmup = 200;
        cfg.duration = 1200;
        let q_ub = cfg.scenario.flow.queue_upper_bound;
        let mut env = TscEnv::new(cfg).unwrap();
        let mut obs = env.reset_with_seed(Some(seed)).unwrap();
        for &a in actions.iter().cycle() {
            prop_assert!(obs.queues.iter().all(|&q| q <= q_ub));
            prop_assert!(obs.splits.iter().all(|s| (30..=70).contains(s)));
            let r = env.step(ActionId(a)).unwrap();
            prop_assert!(r.reward <= 0.0);
            obs = r.obs;
            if r.done {
                break;
            }
        }
        prop_assert!(env.is_done());
    }
}

#[test]
fn training_is_reproducible() {
    let net = build_grid(1, 1, GridGeometry::default()).unwrap();
    let demand = DemandProfile::uniform(&net, 1000.0, 300.0, 0, 100_000);
    let mut cfg = EpisodeConfig::new(Scenario::new(net, demand));
    cfg.warmup = 300;
    cfg.duration = 2300;
    let run = || {
        let mut agent = LinearQAgent::new(
            &cfg,
            QLearnConfig {
                seed: 4,
                ..QLearnConfig::default()
            },
        )
        .unwrap();
        let curve = gridtsc::controllers::train(&cfg, &mut agent, 5, 17).unwrap();
        (curve, agent.weights().to_vec())
    };
    let (c1, w1) = run();
    let (c2, w2) = run();
    assert_eq!(c1.len(), 5);
    assert_eq!(c1, c2);
    assert_eq!(w1, w2);
}
