//! Sweeps over goal error and the chattering demonstration.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EpisodeConfig, Mode};
use crate::engine::{run_episode, run_episode_summary, EpisodeResult, SimState};
use crate::error::{Error, Result};
use crate::operator::OperatorKind;

/// Lateral goal errors of the standard sweep, 0 to 3σ in seven steps (m).
pub const DX_GRID: [f64; 7] = [0.0, 0.005, 0.010, 0.015, 0.020, 0.025, 0.030];

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Goal error in whole micrometres, used as a stable cell key.
fn dx_key(dx: f64) -> i64 {
    (dx * 1e6).round() as i64
}

fn dx_mm(dx: f64) -> f64 {
    dx_key(dx) as f64 / 1e3
}

/// Seed for one episode, a pure function of its cell and run index.
pub fn derive_seed(base: u64, mode: Mode, dx: f64, run: u32) -> u64 {
    let mode_tag = match mode {
        Mode::Autonomous => 1,
        Mode::Shared => 2,
    };
    let mut h = splitmix64(base);
    h = splitmix64(h ^ mode_tag);
    h = splitmix64(h ^ dx_key(dx) as u64);
    splitmix64(h ^ u64::from(run))
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: EpisodeConfig,
    pub dx_values: Vec<f64>,
    pub runs: u32,
    pub modes: Vec<Mode>,
}

impl SweepSpec {
    pub fn standard(base: EpisodeConfig, runs: u32) -> Self {
        Self {
            base,
            dx_values: DX_GRID.to_vec(),
            runs,
            modes: vec![Mode::Autonomous, Mode::Shared],
        }
    }

    /// The config for one cell and run. The goal depth error is drawn from the seed.
    pub fn episode_config(&self, mode: Mode, dx: f64, run: u32) -> EpisodeConfig {
        let mut cfg = self.base.clone();
        cfg.mode = mode;
        cfg.goal_error.dx = dx;
        cfg.goal_error.dz = None;
        cfg.seed = derive_seed(self.base.seed, mode, dx, run);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub mode: Mode,
    pub dx_mm: f64,
    pub run: u32,
    pub seed: u64,
    pub success: bool,
    pub completion_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mode: Mode,
    pub dx_mm: f64,
    pub n: u32,
    pub success_rate: f64,
    /// Mean completion time over successful runs.
    pub mean_s: Option<f64>,
    /// Sample standard deviation over successful runs; empty below two successes.
    pub std_s: Option<f64>,
}

/// Runs every (mode, dx, run) episode, in parallel, and returns the records
/// ordered by mode, then dx, then run.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<EpisodeRecord>> {
    if spec.runs == 0 || spec.dx_values.is_empty() || spec.modes.is_empty() {
        return Err(Error::config("sweep needs at least one mode, one dx value and one run"));
    }
    let cells: Vec<(Mode, f64, u32)> = spec
        .modes
        .iter()
        .flat_map(|&m| {
            spec.dx_values
                .iter()
                .flat_map(move |&dx| (0..spec.runs).map(move |r| (m, dx, r)))
        })
        .collect();
    let mut records = cells
        .par_iter()
        .map(|&(mode, dx, run)| {
            let cfg = spec.episode_config(mode, dx, run);
            let result = run_episode_summary(&cfg)?;
            Ok(EpisodeRecord {
                mode,
                dx_mm: dx_mm(dx),
                run,
                seed: cfg.seed,
                success: result.success,
                completion_s: result.completion_time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|a| (a.mode, dx_key(a.dx_mm / 1e3), a.run));
    Ok(records)
}

pub fn summarize(records: &[EpisodeRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(Mode, i64), Vec<&EpisodeRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.mode, dx_key(r.dx_mm / 1e3))).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((mode, _), rs)| {
            let n = rs.len();
            let times: Vec<f64> = rs.iter().filter(|r| r.success).filter_map(|r| r.completion_s).collect();
            let successes = rs.iter().filter(|r| r.success).count();
            let mean = (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64);
            let std = match (mean, times.len()) {
                (Some(m), k) if k >= 2 => {
                    Some((times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt())
                }
                _ => None,
            };
            CellSummary {
                mode,
                dx_mm: rs[0].dx_mm,
                n: n as u32,
                success_rate: successes as f64 / n as f64,
                mean_s: mean,
                std_s: std,
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_episodes_csv(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    write_csv(path, records)
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    read_csv(path)
}

pub fn write_summary_csv(path: &Path, summary: &[CellSummary]) -> Result<()> {
    write_csv(path, summary)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<CellSummary>> {
    read_csv(path)
}

/// Writes `episodes.csv` and `summary.csv` into `dir`.
pub fn write_sweep(dir: &Path, records: &[EpisodeRecord]) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let episodes = dir.join("episodes.csv");
    let summary = dir.join("summary.csv");
    write_episodes_csv(&episodes, records)?;
    write_summary_csv(&summary, &summarize(records))?;
    Ok((episodes, summary))
}

/// Number of times α changes side of `threshold` at or after `from_t`.
/// Samples exactly on the threshold keep the previous side.
pub fn alpha_crossings(trace: &[SimState], threshold: f64, from_t: f64) -> usize {
    let mut side = 0.0_f64;
    let mut count = 0;
    for s in trace.iter().filter(|s| s.t >= from_t) {
        let d = s.alpha - threshold;
        if d == 0.0 {
            continue;
        }
        let this = d.signum();
        if side != 0.0 && this != side {
            count += 1;
        }
        side = this;
    }
    count
}

/// Largest per-tick change in α.
pub fn max_alpha_step(trace: &[SimState]) -> f64 {
    trace
        .windows(2)
        .map(|w| (w[1].alpha - w[0].alpha).abs())
        .fold(0.0, f64::max)
}

/// Shared-mode scenario that excites α near its decision boundary: the
/// operator rests 5 cm above the nominal hole while the machine presses 3 cm
/// off the actual hole, and the distance measurement carries 2 mm noise.
pub fn chatter_scenario() -> EpisodeConfig {
    let mut cfg = EpisodeConfig {
        mode: Mode::Shared,
        timeout: 8.0,
        ..EpisodeConfig::default()
    };
    cfg.goal_error.dx = 0.030;
    cfg.goal_error.dz = Some(0.0);
    cfg.operator.kind = OperatorKind::Passive;
    cfg.operator_start = Some(cfg.world.nominal_hole + cfg.world.surface_normal.normalize() * 0.05);
    cfg.arbitration.distance_noise = 0.002;
    cfg
}

/// Crossings are counted once the machine plan has finished.
pub const CHATTER_SETTLE_S: f64 = 3.5;

#[derive(Debug, Clone)]
pub struct ChatterReport {
    pub filtered: EpisodeResult,
    pub unfiltered: EpisodeResult,
    pub filtered_crossings: usize,
    pub unfiltered_crossings: usize,
    /// Length of the counting window (s).
    pub window_s: f64,
    pub max_filtered_step: f64,
}

impl ChatterReport {
    pub fn filtered_rate(&self) -> f64 {
        self.filtered_crossings as f64 / self.window_s
    }

    pub fn unfiltered_rate(&self) -> f64 {
        self.unfiltered_crossings as f64 / self.window_s
    }

    /// Filtered over unfiltered crossing count; `None` if the unfiltered run never crossed.
    pub fn ratio(&self) -> Option<f64> {
        (self.unfiltered_crossings > 0).then(|| self.filtered_crossings as f64 / self.unfiltered_crossings as f64)
    }

    /// CSV with columns `t,alpha_filtered,alpha_unfiltered`.
    pub fn write_alpha_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["t", "alpha_filtered", "alpha_unfiltered"])
            .map_err(|e| csv_error(path, e))?;
        for (f, u) in self.filtered.trace.iter().zip(&self.unfiltered.trace) {
            w.write_record([f.t.to_string(), f.alpha.to_string(), u.alpha.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs `config` twice, with and without the α filter, and counts crossings of 0.5.
pub fn chattering_demo(config: &EpisodeConfig) -> Result<ChatterReport> {
    if config.mode != Mode::Shared {
        return Err(Error::config("chattering demo needs shared mode"));
    }
    let run = |filtered: bool| {
        let mut cfg = config.clone();
        cfg.arbitration.filtered = filtered;
        run_episode(&cfg)
    };
    let filtered = run(true)?;
    let unfiltered = run(false)?;
    let end = filtered.trace.last().map_or(0.0, |s| s.t);
    let window_s = (end - CHATTER_SETTLE_S).max(config.dt);
    Ok(ChatterReport {
        filtered_crossings: alpha_crossings(&filtered.trace, 0.5, CHATTER_SETTLE_S),
        unfiltered_crossings: alpha_crossings(&unfiltered.trace, 0.5, CHATTER_SETTLE_S),
        max_filtered_step: max_alpha_step(&filtered.trace),
        window_s,
        filtered,
        unfiltered,
    })
}
