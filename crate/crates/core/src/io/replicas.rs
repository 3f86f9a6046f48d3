//! Independent replicas run in parallel and written out in replica order.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{OutputFormat, RunConfig};
use super::output::{self, ReplicaStats, Snapshot, SummaryRow};
use super::IoError;
use crate::model::{scenario, Scenario};
use crate::simulator::{SimError, SimParams, SimulationState};

/// Everything kept from one finished replica.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaResult {
    pub rows: Vec<SummaryRow>,
    pub stats: ReplicaStats,
}

/// Outcome of a batch: per-replica results in index order. A failed replica
/// does not discard the others.
#[derive(Debug)]
pub struct Batch {
    pub results: Vec<Result<ReplicaResult, SimError>>,
}

impl Batch {
    pub fn completed(&self) -> impl Iterator<Item = &ReplicaResult> {
        self.results.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &SimError)> {
        self.results.iter().enumerate().filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
    }
}

pub fn replica_name(index: usize, ext: &str) -> String {
    format!("replica_{index:04}.{ext}")
}

/// Runs one replica. When `snapshots` is given, every output time is appended
/// to it as one NDJSON line.
pub fn run_replica(
    sc: &Scenario,
    params: SimParams,
    index: usize,
    mut snapshots: Option<&mut dyn Write>,
) -> Result<ReplicaResult, SimError> {
    let seed = params.seed;
    let dim = sc.domain.dim();
    let d2 = sc.internal.dim();
    let mut state = SimulationState::from_scenario(sc, params)?;
    let mut rows = Vec::new();
    let mut write_err = None;
    state.run(sc.into(), |time, s| {
        rows.push(SummaryRow::observe(time, s));
        if let Some(w) = snapshots.as_deref_mut() {
            if let Err(e) = output::write_snapshot(w, &Snapshot::observe(time, s, dim, d2)) {
                write_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(SimError::BadParams(format!("snapshot write failed: {e}")));
    }
    Ok(ReplicaResult {
        rows,
        stats: ReplicaStats {
            replica: index,
            seed,
            counters: state.counters.clone(),
            final_t: state.t,
            final_u: state.u,
            particles: state.ensemble.len() as u64,
        },
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, IoError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| IoError::Workers(e.to_string()))
}

/// Runs `cfg.replicas` replicas with seeds `seed, seed + 1, …`. Snapshots go
/// straight to `snapshot_dir` when set, one file per replica.
pub fn run_batch(cfg: &RunConfig, snapshot_dir: Option<&Path>) -> Result<Batch, IoError> {
    let sc = scenario(&cfg.scenario, &cfg.params)?;
    let pool = pool(cfg.workers)?;
    let results = pool.install(|| {
        (0..cfg.replicas as usize)
            .into_par_iter()
            .map(|i| {
                let mut params = cfg.sim.clone();
                params.seed = cfg.sim.seed.wrapping_add(i as u64);
                match snapshot_dir {
                    Some(dir) => {
                        let path = dir.join(replica_name(i, "ndjson"));
                        let file = File::create(&path)
                            .map_err(|e| SimError::BadParams(format!("{}: {e}", path.display())))?;
                        let mut w = BufWriter::new(file);
                        let r = run_replica(&sc, params, i, Some(&mut w))?;
                        w.flush().map_err(|e| SimError::BadParams(format!("{}: {e}", path.display())))?;
                        Ok(r)
                    }
                    None => run_replica(&sc, params, i, None),
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(Batch { results })
}

/// Files written by [`simulate`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub completed: usize,
    pub failed: Vec<(usize, String)>,
    pub violations: u64,
}

/// Runs a batch and writes the config echo, per-replica CSVs, the pooled CSV
/// and the replica statistics into `cfg.out`.
pub fn simulate(cfg: &RunConfig) -> Result<RunSummary, IoError> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.ini"), cfg.emit())?;
    let snap_dir = (cfg.format == OutputFormat::Ndjson).then_some(cfg.out.as_path());
    let batch = run_batch(cfg, snap_dir)?;
    let sc = scenario(&cfg.scenario, &cfg.params)?;

    let mut stats = Vec::new();
    let mut series = Vec::new();
    for r in batch.completed() {
        let path = cfg.out.join(replica_name(r.stats.replica, "csv"));
        output::write_summary(BufWriter::new(File::create(path)?), &r.rows)?;
        stats.push(r.stats.clone());
        series.push(r.rows.as_slice());
    }
    if !series.is_empty() {
        let pooled = output::pool(&series, &sc.defaults.oracle);
        output::write_pooled(BufWriter::new(File::create(cfg.out.join("pooled.csv"))?), &pooled)?;
    }
    output::write_stats(BufWriter::new(File::create(cfg.out.join("replica_stats.csv"))?), &stats)?;
    Ok(RunSummary {
        out: cfg.out.clone(),
        completed: stats.len(),
        failed: batch.failures().map(|(i, e)| (i, e.to_string())).collect(),
        violations: stats.iter().map(|s| s.counters.violations()).sum(),
    })
}
