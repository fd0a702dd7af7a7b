use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use gridtsc::bridge::{serve_stdio, Endpoint, Server};
use gridtsc::controllers::{run_episode, train};
use gridtsc::metrics::{export_all, export_learning_curve};
use gridtsc::{
    export_sweep_csv, sweep_split, EpisodeConfig, EpisodeMetrics, Error, LinearQAgent, PolicySpec,
    RewardVariant, ScenarioConfig,
};

/// Signalized grid traffic simulator with reinforcement-learning controllers.
#[derive(Debug, Parser)]
#[command(name = "gridtsc", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run full episodes under a controller and export their metrics
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// fixed, greedy, random or qlearn:<weights.json>
        #[arg(long, default_value = "fixed")]
        policy: PolicySpec,
        /// Seed list such as `1,2,7` or `1-5`; defaults to the scenario seed
        #[arg(long)]
        seeds: Option<SeedList>,
        /// Metrics go to <out>/<policy>/seed-<seed>/
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reward: Option<RewardVariant>,
    },
    /// Hold each split fixed on a single intersection and report congestion
    SweepSplit {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seeds: Option<SeedList>,
        /// Directory for sweep.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the linear Q-learning controller
    Train {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        /// Master seed for the episode seeds; defaults to the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for learning_curve.csv and weights.json
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reward: Option<RewardVariant>,
    },
    /// Serve the environment over newline-delimited JSON
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        /// `tcp://host:port`, `host:port` or `stdio`
        #[arg(long, default_value = "tcp://127.0.0.1:7878")]
        endpoint: Endpoint,
        #[arg(long)]
        reward: Option<RewardVariant>,
    },
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| format!("bad seed `{}`", t.trim()))
        };
        let mut seeds = Vec::new();
        for part in s.split(',') {
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b) = (num(a)?, num(b)?);
                    if a > b {
                        return Err(format!("empty seed range `{part}`"));
                    }
                    seeds.extend(a..=b);
                }
                None => seeds.push(num(part)?),
            }
        }
        Ok(SeedList(seeds))
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

/// Anything wrong with the scenario file, including a missing one, is a
/// usage error.
fn load_config(
    path: &Path,
    reward: Option<RewardVariant>,
) -> Result<(ScenarioConfig, EpisodeConfig), Failure> {
    let usage = |e: Error| Failure::Usage(e.to_string());
    let mut sc = ScenarioConfig::load(path).map_err(usage)?;
    if let Some(r) = reward {
        sc.reward.variant = r;
    }
    let cfg = sc.episode_config().map_err(usage)?;
    Ok((sc, cfg))
}

fn policy_dir(spec: &PolicySpec) -> &'static str {
    match spec {
        PolicySpec::Fixed => "fixed",
        PolicySpec::Greedy => "greedy",
        PolicySpec::Random => "random",
        PolicySpec::QLearn(_) => "qlearn",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

fn cmd_run(
    scenario: &Path,
    policy: &PolicySpec,
    seeds: Option<SeedList>,
    out: Option<&Path>,
    reward: Option<RewardVariant>,
) -> Result<(), Failure> {
    let (sc, cfg) = load_config(scenario, reward)?;
    let seeds = seeds.map_or_else(|| vec![sc.seed], |s| s.0);
    if seeds.is_empty() {
        return Err(Failure::Usage("no seeds given".into()));
    }
    // surface a bad weights file before spending time on episodes
    policy
        .build(&cfg, seeds[0])
        .map_err(|e| Failure::Usage(e.to_string()))?;

    let results: Vec<(u64, EpisodeMetrics)> = seeds
        .par_iter()
        .map(|&seed| -> Result<_, Failure> {
            let mut p = policy.build(&cfg, seed)?;
            log::info!("{} seed {seed}: running", policy_dir(policy));
            let m = run_episode(&cfg, p.as_mut(), seed)?;
            if let Some(out) = out {
                let dir = out.join(policy_dir(policy)).join(format!("seed-{seed}"));
                export_all(&m, &dir)?;
            }
            Ok((seed, m))
        })
        .collect::<Result<_, _>>()?;

    println!(
        "{:<8} {:>20} {:>6} {:>6} {:>8} {:>12} {:>9} {:>7} {:>7} {:>8} {:>9}",
        "policy",
        "seed",
        "steps",
        "cycles",
        "samples",
        "return",
        "avg_tt",
        "trips",
        "heavy",
        "max_q",
        "dropped"
    );
    for (seed, m) in &results {
        println!(
            "{:<8} {:>20} {:>6} {:>6} {:>8} {:>12.2} {:>9} {:>7} {:>7} {:>8} {:>9}",
            policy_dir(policy),
            seed,
            m.control_steps,
            m.cycles,
            m.sample_count,
            m.episode_return,
            fmt_opt(m.avg_travel_time),
            m.completed_trips,
            m.heavy_samples,
            m.max_queue,
            m.dropped_arrivals,
        );
    }
    Ok(())
}

fn cmd_sweep(scenario: &Path, seeds: Option<SeedList>, out: Option<&Path>) -> Result<(), Failure> {
    let (sc, cfg) = load_config(scenario, None)?;
    let seeds = seeds.map_or_else(|| vec![sc.seed], |s| s.0);
    let result = sweep_split(&cfg, &seeds)?;
    if let Some(out) = out {
        std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
        export_sweep_csv(&result, &out.join("sweep.csv"))?;
    }
    println!(
        "{:>5} {:>14} {:>9} {:>7}",
        "split", "mean_queue_sum", "avg_tt", "trips"
    );
    for p in &result.points {
        println!(
            "{:>5} {:>14.3} {:>9} {:>7}{}",
            p.split,
            p.mean_queue_sum,
            fmt_opt(p.avg_travel_time),
            p.completed_trips,
            if p.split == result.argmin { "  *" } else { "" }
        );
    }
    println!("argmin split: {}", result.argmin);
    Ok(())
}

fn cmd_train(
    scenario: &Path,
    episodes: usize,
    seed: Option<u64>,
    out: &Path,
    reward: Option<RewardVariant>,
) -> Result<(), Failure> {
    let (sc, cfg) = load_config(scenario, reward)?;
    let seed = seed.unwrap_or(sc.seed);
    let mut agent = LinearQAgent::new(&cfg, sc.qlearn)?;
    let curve = train(&cfg, &mut agent, episodes, seed)?;
    let curve_path = export_learning_curve(&curve, out)?;
    let weights = out.join("weights.json");
    agent.save(&weights)?;
    let tail = (episodes / 10).max(1);
    println!("episodes: {}", curve.len());
    println!("first return: {:.2}", curve.returns[0]);
    println!(
        "mean return, last {tail}: {:.2}",
        curve.tail_mean(tail).expect("curve is non-empty")
    );
    println!("curve: {}", curve_path.display());
    println!("weights: {}", weights.display());
    Ok(())
}

fn cmd_serve(scenario: &Path, endpoint: &Endpoint, reward: Option<RewardVariant>) -> Result<(), Failure> {
    let (_, cfg) = load_config(scenario, reward)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&shutdown);
    ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst))
        .map_err(|e| Failure::Runtime(format!("cannot install signal handler: {e}")))?;
    match endpoint {
        Endpoint::Tcp(addr) => {
            let server = Server::bind(addr, cfg)?;
            let local = server.local_addr()?;
            eprintln!("listening on {local}");
            log::info!("listening on {local}");
            server.run(shutdown)?;
            log::info!("server stopped");
        }
        Endpoint::Stdio => {
            let end = serve_stdio(&cfg, &shutdown)?;
            log::info!("stdio session ended: {end:?}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let result = match &cli.command {
        Command::Run {
            scenario,
            policy,
            seeds,
            out,
            reward,
        } => cmd_run(scenario, policy, seeds.clone(), out.as_deref(), *reward),
        Command::SweepSplit { scenario, seeds, out } => cmd_sweep(scenario, seeds.clone(), out.as_deref()),
        Command::Train {
            scenario,
            episodes,
            seed,
            out,
            reward,
        } => cmd_train(scenario, *episodes, *seed, out, *reward),
        Command::Serve {
            scenario,
            endpoint,
            reward,
        } => cmd_serve(scenario, endpoint, *reward),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
