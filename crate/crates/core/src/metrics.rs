//! Episode metrics: per-cycle queue samples, trip travel times, and the
//! files they are exported to.
//!
//! File schemas (version [`SCHEMA_VERSION`]):
//!
//! * `queue_samples.csv`: `link_id,cycle_index,queue`, link-major order.
//! * `trips.csv`: `vehicle_id,entry_time,exit_time,travel_time`, completion order.
//! * `summary.json`: the scalar fields of [`EpisodeMetrics`].
//! * `learning_curve.csv`: `episode,return`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "1";

/// Upper edges of the queue histogram buckets. Each bucket is closed above:
/// `[0,10], (10,20], (20,30], (30,40], (40,50]`. Samples above the last edge
/// are counted in the last bucket.
pub const HISTOGRAM_EDGES: [u32; 5] = [10, 20, 30, 40, 50];

pub fn histogram_bucket(q: u32) -> usize {
    HISTOGRAM_EDGES
        .iter()
        .position(|&edge| q <= edge)
        .unwrap_or(HISTOGRAM_EDGES.len() - 1)
}

/// Queue samples, one column per recorded cycle.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueueSamples {
    links: usize,
    columns: Vec<Vec<u32>>,
}

impl QueueSamples {
    pub fn links(&self) -> usize {
        self.links
    }

    pub fn cycles(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.links * self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, link: usize, cycle: usize) -> u32 {
        self.columns[cycle][link]
    }

    pub fn column(&self, cycle: usize) -> &[u32] {
        &self.columns[cycle]
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.columns.iter().flatten().copied()
    }

    pub fn histogram(&self) -> [u64; 5] {
        let mut h = [0u64; 5];
        for q in self.iter() {
            h[histogram_bucket(q)] += 1;
        }
        h
    }

    pub fn max(&self) -> u32 {
        self.iter().max().unwrap_or(0)
    }

    pub fn count_at_least(&self, threshold: u32) -> u64 {
        self.iter().filter(|&q| q >= threshold).count() as u64
    }
}

/// Accumulates one column of link queues per cycle boundary.
#[derive(Debug, Clone)]
pub struct QueueRecorder {
    expected_cycles: usize,
    samples: QueueSamples,
}

impl QueueRecorder {
    pub fn new(links: usize, expected_cycles: usize) -> Self {
        Self {
            expected_cycles,
            samples: QueueSamples {
                links,
                columns: Vec::with_capacity(expected_cycles),
            },
        }
    }

    pub fn record_cycle(&mut self, queues: &[u32]) -> Result<()> {
        if queues.len() != self.samples.links {
            return Err(Error::Recorder(format!(
                "got {} queues, expected {}",
                queues.len(),
                self.samples.links
            )));
        }
        if self.samples.columns.len() >= self.expected_cycles {
            return Err(Error::Recorder(format!(
                "cycle {} exceeds the {} cycles of this episode",
                self.samples.columns.len() + 1,
                self.expected_cycles
            )));
        }
        self.samples.columns.push(queues.to_vec());
        Ok(())
    }

    pub fn samples(&self) -> &QueueSamples {
        &self.samples
    }

    pub fn into_samples(self) -> QueueSamples {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripTime {
    pub vehicle_id: u32,
    pub entry_time: u64,
    pub exit_time: u64,
    pub travel_time: u64,
}

impl TripTime {
    pub fn new(vehicle_id: u32, entry_time: u64, exit_time: u64) -> Self {
        Self {
            vehicle_id,
            entry_time,
            exit_time,
            travel_time: exit_time - entry_time,
        }
    }
}

/// Inputs to [`summarize`] that are not derivable from trips or samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTotals {
    pub episode_return: f64,
    pub control_steps: u64,
    pub dropped_arrivals: u64,
    pub unfinished_trips: u64,
    pub heavy_threshold: u32,
    /// mean over post-warm-up ticks of the summed observed queues
    pub mean_queue_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub schema_version: String,
    pub links: usize,
    pub cycles: usize,
    pub sample_count: usize,
    pub control_steps: u64,
    pub completed_trips: u64,
    pub unfinished_trips: u64,
    pub total_travel_time: u64,
    pub avg_travel_time: Option<f64>,
    pub dropped_arrivals: u64,
    pub episode_return: f64,
    pub queue_histogram: [u64; 5],
    pub max_queue: u32,
    pub heavy_threshold: u32,
    pub heavy_samples: u64,
    pub mean_queue_sum: f64,
    #[serde(skip)]
    pub queue_samples: QueueSamples,
    #[serde(skip)]
    pub trips: Vec<TripTime>,
}

pub fn summarize(trips: Vec<TripTime>, samples: QueueSamples, totals: EpisodeTotals) -> EpisodeMetrics {
    let total: u64 = trips.iter().map(|t| t.travel_time).sum();
    let n = trips.len() as u64;
    EpisodeMetrics {
        schema_version: SCHEMA_VERSION.to_string(),
        links: samples.links(),
        cycles: samples.cycles(),
        sample_count: samples.len(),
        control_steps: totals.control_steps,
        completed_trips: n,
        unfinished_trips: totals.unfinished_trips,
        total_travel_time: total,
        avg_travel_time: (n > 0).then(|| total as f64 / n as f64),
        dropped_arrivals: totals.dropped_arrivals,
        episode_return: totals.episode_return,
        queue_histogram: samples.histogram(),
        max_queue: samples.max(),
        heavy_threshold: totals.heavy_threshold,
        heavy_samples: samples.count_at_least(totals.heavy_threshold),
        mean_queue_sum: totals.mean_queue_sum,
        queue_samples: samples,
        trips,
    }
}

impl EpisodeMetrics {
    pub fn totals(&self) -> EpisodeTotals {
        EpisodeTotals {
            episode_return: self.episode_return,
            control_steps: self.control_steps,
            dropped_arrivals: self.dropped_arrivals,
            unfinished_trips: self.unfinished_trips,
            heavy_threshold: self.heavy_threshold,
            mean_queue_sum: self.mean_queue_sum,
        }
    }
}

/// Controlled run relative to a base case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub base_avg_travel_time: Option<f64>,
    pub controlled_avg_travel_time: Option<f64>,
    /// controlled / base
    pub travel_time_ratio: Option<f64>,
    pub base_heavy_samples: u64,
    pub controlled_heavy_samples: u64,
}

pub fn compare(base: &EpisodeMetrics, controlled: &EpisodeMetrics) -> Comparison {
    let ratio = match (base.avg_travel_time, controlled.avg_travel_time) {
        (Some(b), Some(c)) if b > 0.0 => Some(c / b),
        _ => None,
    };
    Comparison {
        base_avg_travel_time: base.avg_travel_time,
        controlled_avg_travel_time: controlled.avg_travel_time,
        travel_time_ratio: ratio,
        base_heavy_samples: base.heavy_samples,
        controlled_heavy_samples: controlled.heavy_samples,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub returns: Vec<f64>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Mean return of the last `n` episodes.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        let n = n.min(self.returns.len());
        (n > 0).then(|| self.returns[self.returns.len() - n..].iter().sum::<f64>() / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// `queue_samples.csv` and `trips.csv`
    Csv,
    /// `summary.json`
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" | "structured" | "structured-record" => Ok(ExportFormat::Json),
            other => Err(Error::Usage(format!("unknown export format `{other}`"))),
        }
    }
}

pub const QUEUE_SAMPLES_FILE: &str = "queue_samples.csv";
pub const TRIPS_FILE: &str = "trips.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!();
    }
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Write `metrics` into `dir` in the given format. Returns the files written.
pub fn export(metrics: &EpisodeMetrics, dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    match format {
        ExportFormat::Csv => {
            let qpath = dir.join(QUEUE_SAMPLES_FILE);
            let mut w = csv::Writer::from_path(&qpath).map_err(|e| csv_err(&qpath, e))?;
            w.write_record(["link_id", "cycle_index", "queue"])
                .map_err(|e| csv_err(&qpath, e))?;
            let s = &metrics.queue_samples;
            for link in 0..s.links() {
                for cycle in 0..s.cycles() {
                    w.serialize((link, cycle, s.get(link, cycle)))
                        .map_err(|e| csv_err(&qpath, e))?;
                }
            }
            w.flush().map_err(|e| Error::io(&qpath, e))?;

            let tpath = dir.join(TRIPS_FILE);
            let mut w = csv::Writer::from_path(&tpath).map_err(|e| csv_err(&tpath, e))?;
            if metrics.trips.is_empty() {
                w.write_record(["vehicle_id", "entry_time", "exit_time", "travel_time"])
                    .map_err(|e| csv_err(&tpath, e))?;
            }
            for t in &metrics.trips {
                w.serialize(t).map_err(|e| csv_err(&tpath, e))?;
            }
            w.flush().map_err(|e| Error::io(&tpath, e))?;
            Ok(vec![qpath, tpath])
        }
        ExportFormat::Json => {
            let path = dir.join(SUMMARY_FILE);
            let mut body = serde_json::to_string_pretty(metrics).expect("metrics serialize");
            body.push('\n');
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
    }
}

/// Write every format.
pub fn export_all(metrics: &EpisodeMetrics, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = export(metrics, dir, ExportFormat::Csv)?;
    files.extend(export(metrics, dir, ExportFormat::Json)?);
    Ok(files)
}

pub fn export_learning_curve(curve: &LearningCurve, dir: &Path) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(LEARNING_CURVE_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["episode", "return"])
        .map_err(|e| csv_err(&path, e))?;
    for (i, r) in curve.returns.iter().enumerate() {
        w.serialize((i, r)).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Rebuild metrics from a directory written by [`export_all`].
pub fn load(dir: &Path) -> Result<EpisodeMetrics> {
    let spath = dir.join(SUMMARY_FILE);
    let body = fs::read_to_string(&spath).map_err(|e| Error::io(&spath, e))?;
    let summary: EpisodeMetrics = serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: spath.clone(),
        message: e.to_string(),
    })?;

    let qpath = dir.join(QUEUE_SAMPLES_FILE);
    let mut r = csv::Reader::from_path(&qpath).map_err(|e| csv_err(&qpath, e))?;
    let mut columns = vec![vec![0u32; summary.links]; summary.cycles];
    let mut seen = 0usize;
    for row in r.deserialize::<(usize, usize, u32)>() {
        let (link, cycle, q) = row.map_err(|e| csv_err(&qpath, e))?;
        let slot = columns
            .get_mut(cycle)
            .and_then(|c| c.get_mut(link))
            .ok_or_else(|| Error::Parse {
                path: qpath.clone(),
                message: format!(
                    "sample ({link}, {cycle}) outside {}x{}",
                    summary.links, summary.cycles
                ),
            })?;
        *slot = q;
        seen += 1;
    }
    if seen != summary.links * summary.cycles {
        return Err(Error::Parse {
            path: qpath,
            message: format!("{seen} samples, expected {}", summary.links * summary.cycles),
        });
    }

    let tpath = dir.join(TRIPS_FILE);
    let mut r = csv::Reader::from_path(&tpath).map_err(|e| csv_err(&tpath, e))?;
    let trips = r
        .deserialize::<TripTime>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_err(&tpath, e))?;

    let samples = QueueSamples {
        links: summary.links,
        columns,
    };
    Ok(summarize(trips, samples, summary.totals()))
}
