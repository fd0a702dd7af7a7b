//! Brute-force fixed-split sweep for single-intersection scenarios.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EpisodeConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub split: u32,
    /// mean over post-warm-up ticks of the summed observed queues, averaged
    /// over seeds
    pub mean_queue_sum: f64,
    pub avg_travel_time: Option<f64>,
    pub completed_trips: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// split with the lowest mean queue sum, lowest split on ties
    pub argmin: u32,
}

impl SweepResult {
    pub fn point(&self, split: u32) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.split == split)
    }
}

/// Hold every split of the grid fixed for a whole episode (warm-up
/// included) and measure congestion after the warm-up.
pub fn sweep_split(cfg: &EpisodeConfig, seeds: &[u64]) -> Result<SweepResult> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    if sc.intersections() != 1 {
        return Err(Error::Usage(format!(
            "split sweep needs a single-intersection scenario, got {} intersections",
            sc.intersections()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::Usage("split sweep needs at least one seed".into()));
    }
    let observed = cfg.observed_links();
    let mut points = Vec::new();
    for split in sc.constants.split_grid() {
        let mut queue_total = 0.0;
        let mut tt_sum = 0u64;
        let mut trips = 0u64;
        for &seed in seeds {
            let mut sim = sc.simulation(&[split], seed)?;
            sim.advance(cfg.warmup);
            let mut sum = 0u64;
            let mut ticks = 0u64;
            while sim.clock() < cfg.duration {
                sim.advance(1);
                for &l in &observed {
                    sum += u64::from(sim.measure_queue(l)?);
                }
                ticks += 1;
            }
            queue_total += sum as f64 / ticks.max(1) as f64;
            for t in sim.completed_trips().filter(|t| t.entry_time >= cfg.warmup) {
                tt_sum += t.travel_time().expect("completed");
                trips += 1;
            }
        }
        points.push(SweepPoint {
            split,
            mean_queue_sum: queue_total / seeds.len() as f64,
            avg_travel_time: (trips > 0).then(|| tt_sum as f64 / trips as f64),
            completed_trips: trips,
        });
    }
    let argmin = points
        .iter()
        .fold(None::<&SweepPoint>, |best, p| match best {
            Some(b) if b.mean_queue_sum <= p.mean_queue_sum => Some(b),
            _ => Some(p),
        })
        .expect("split grid is never empty")
        .split;
    Ok(SweepResult { points, argmin })
}

/// Write one row per split: `split,mean_queue_sum,avg_travel_time,completed_trips,argmin`.
pub fn export_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let csv_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => io(e),
        other => Error::Recorder(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record([
        "split",
        "mean_queue_sum",
        "avg_travel_time",
        "completed_trips",
        "argmin",
    ])
    .map_err(csv_io)?;
    for p in &result.points {
        w.serialize((
            p.split,
            p.mean_queue_sum,
            p.avg_travel_time,
            p.completed_trips,
            p.split == result.argmin,
        ))
        .map_err(csv_io)?;
    }
    w.flush().map_err(io)
}
