use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use gridtsc::controllers::run_episode;
use gridtsc::net::Axis;
use gridtsc::reward::{reward_congestion, reward_travel_time, LinkRewardInput};
use gridtsc::{FixedTime, Greedy, RewardConfig, RewardVariant, SignalConstants};
use gridtsc_bench::{reference_episode, warm_sim};

fn episodes(c: &mut Criterion) {
    let cfg = reference_episode();
    let mut g = c.benchmark_group("episode_5x5");
    g.sample_size(10);
    g.bench_function("fixed", |b| {
        b.iter(|| run_episode(&cfg, &mut FixedTime, black_box(7)).unwrap())
    });
    g.bench_function("greedy", |b| {
        b.iter(|| run_episode(&cfg, &mut Greedy::new(&cfg), black_box(7)).unwrap())
    });
    g.finish();
}

fn ticks(c: &mut Criterion) {
    let mut g = c.benchmark_group("advance_100s");
    g.throughput(Throughput::Elements(100));
    for n in [1usize, 3, 5, 8] {
        let sim = warm_sim(n, 3);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{n}x{n}")), &sim, |b, sim| {
            b.iter_batched(
                || sim.clone(),
                |mut s| s.advance(100),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn rewards(c: &mut Criterion) {
    let constants = SignalConstants::default();
    let cc = RewardConfig::for_constants(RewardVariant::Congestion, &constants).unwrap();
    let tc = RewardConfig::for_constants(RewardVariant::TravelTime, &constants).unwrap();
    let queues: Vec<u32> = (0..80).map(|i| (i * 7) % 40).collect();
    let links: Vec<LinkRewardInput> = queues
        .iter()
        .enumerate()
        .map(|(i, &q)| LinkRewardInput {
            q,
            t_avg: 20.0 + i as f64,
            t_eg_u: 42.0,
            axis: if i % 2 == 0 {
                Axis::NorthSouth
            } else {
                Axis::EastWest
            },
        })
        .collect();
    c.bench_function("reward_congestion_80", |b| {
        b.iter(|| reward_congestion(black_box(&queues), &cc))
    });
    c.bench_function("reward_travel_time_80", |b| {
        b.iter(|| reward_travel_time(black_box(&links), &tc).unwrap())
    });
}

criterion_group!(benches, episodes, ticks, rewards);
criterion_main!(benches);
