//! Output records and writers.
//!
//! Per-replica summary CSV (`replica_NNNN.csv`), in this column order:
//! `t,u,particles,count,mass,moment2,moment3,events_clock,events_source,`
//! `events_move,events_interact,events_self,events_fictitious`
//! where `count = n/N`, `mass = P(π_m)` and `momentq = P(π_m^q)`; event
//! counts are cumulative.
//!
//! Pooled CSV (`pooled.csv`):
//! `t,replicas,count_mean,count_sd,mass_mean,mass_sd,moment2_mean,moment2_sd,`
//! `u_minus_t_mean,u_minus_t_sd,oracle_count` (`oracle_count` empty when the
//! scenario has no closed form).
//!
//! Replica statistics (`replica_stats.csv`): one row per replica with seed,
//! event counters, violation counters, final `t` and `u` and `sup|u − t|`.
//!
//! Snapshots (`replica_NNNN.ndjson`, format `ndjson` only): one JSON object
//! per output time, `{"t":…,"u":…,"particles":[{"mass":…,"position":[…],"internal":[…]}]}`
//! with `position` cut to the spatial dimension and `internal` to `d2`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ensemble::Particle;
use crate::model::Oracle;
use crate::simulator::{Counters, SimulationState};

pub const SUMMARY_HEADER: [&str; 13] = [
    "t",
    "u",
    "particles",
    "count",
    "mass",
    "moment2",
    "moment3",
    "events_clock",
    "events_source",
    "events_move",
    "events_interact",
    "events_self",
    "events_fictitious",
];

pub const POOLED_HEADER: [&str; 11] = [
    "t",
    "replicas",
    "count_mean",
    "count_sd",
    "mass_mean",
    "mass_sd",
    "moment2_mean",
    "moment2_sd",
    "u_minus_t_mean",
    "u_minus_t_sd",
    "oracle_count",
];

pub const STATS_HEADER: [&str; 19] = [
    "replica",
    "seed",
    "events",
    "events_clock",
    "events_source",
    "events_move",
    "events_interact",
    "events_self",
    "events_fictitious",
    "source_blocked",
    "mass_violations",
    "cap_violations",
    "domain_violations",
    "gamma_cap_hits",
    "gamma_projections",
    "final_t",
    "final_u",
    "sup_u_minus_t",
    "particles",
];

/// Summary of the state held at one output time.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub t: f64,
    pub u: f64,
    pub particles: u64,
    pub count: f64,
    pub mass: f64,
    pub moment2: f64,
    pub moment3: f64,
    pub events: [u64; 6],
}

impl SummaryRow {
    pub fn observe(time: f64, s: &SimulationState) -> Self {
        let e = &s.ensemble;
        SummaryRow {
            t: time,
            u: s.u,
            particles: e.len() as u64,
            count: e.total_measure(),
            mass: e.mass(),
            moment2: e.moment(2),
            moment3: e.moment(3),
            events: s.counters.by_kind,
        }
    }

    fn fields(&self) -> Vec<String> {
        let mut v = vec![
            self.t.to_string(),
            self.u.to_string(),
            self.particles.to_string(),
            self.count.to_string(),
            self.mass.to_string(),
            self.moment2.to_string(),
            self.moment3.to_string(),
        ];
        v.extend(self.events.iter().map(u64::to_string));
        v
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self, String> {
        let f = |i: usize| -> Result<f64, String> { r.get(i).ok_or("short row")?.parse::<f64>().map_err(|e| e.to_string()) };
        let n = |i: usize| -> Result<u64, String> { r.get(i).ok_or("short row")?.parse::<u64>().map_err(|e| e.to_string()) };
        Ok(SummaryRow {
            t: f(0)?,
            u: f(1)?,
            particles: n(2)?,
            count: f(3)?,
            mass: f(4)?,
            moment2: f(5)?,
            moment3: f(6)?,
            events: [n(7)?, n(8)?, n(9)?, n(10)?, n(11)?, n(12)?],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotParticle {
    pub mass: u64,
    pub position: Vec<f64>,
    pub internal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: f64,
    pub particles: Vec<SnapshotParticle>,
}

impl Snapshot {
    pub fn observe(time: f64, s: &SimulationState, dim: usize, d2: usize) -> Self {
        Snapshot {
            t: time,
            u: s.u,
            particles: s.ensemble.particles().iter().map(|z| snapshot_particle(z, dim, d2)).collect(),
        }
    }
}

fn snapshot_particle(z: &Particle, dim: usize, d2: usize) -> SnapshotParticle {
    SnapshotParticle {
        mass: z.mass,
        position: z.position[..dim].to_vec(),
        internal: z.internal[..d2].to_vec(),
    }
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary<R: std::io::Read>(r: R) -> Result<Vec<SummaryRow>, String> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(SUMMARY_HEADER.iter().copied()) {
        return Err(format!("unexpected summary header {:?}", header));
    }
    rd.records()
        .map(|rec| rec.map_err(|e| e.to_string()).and_then(|r| SummaryRow::from_record(&r)))
        .collect()
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let sd = if n > 1.0 {
        (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// One pooled row per output time across replicas.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledRow {
    pub t: f64,
    pub replicas: usize,
    pub count: (f64, f64),
    pub mass: (f64, f64),
    pub moment2: (f64, f64),
    pub u_minus_t: (f64, f64),
    pub oracle_count: Option<f64>,
}

pub fn pool(series: &[&[SummaryRow]], oracle: &Oracle) -> Vec<PooledRow> {
    let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
    (0..len)
        .map(|k| {
            let col = |f: fn(&SummaryRow) -> f64| mean_sd(series.iter().map(move |s| f(&s[k])));
            let t = series[0][k].t;
            PooledRow {
                t,
                replicas: series.len(),
                count: col(|r| r.count),
                mass: col(|r| r.mass),
                moment2: col(|r| r.moment2),
                u_minus_t: col(|r| r.u - r.t),
                oracle_count: oracle.count(t),
            }
        })
        .collect()
}

pub fn write_pooled<W: Write>(w: W, rows: &[PooledRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(POOLED_HEADER)?;
    for r in rows {
        out.write_record([
            r.t.to_string(),
            r.replicas.to_string(),
            r.count.0.to_string(),
            r.count.1.to_string(),
            r.mass.0.to_string(),
            r.mass.1.to_string(),
            r.moment2.0.to_string(),
            r.moment2.1.to_string(),
            r.u_minus_t.0.to_string(),
            r.u_minus_t.1.to_string(),
            r.oracle_count.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Final statistics of one replica.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaStats {
    pub replica: usize,
    pub seed: u64,
    pub counters: Counters,
    pub final_t: f64,
    pub final_u: f64,
    pub particles: u64,
}

pub fn write_stats<W: Write>(w: W, stats: &[ReplicaStats]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STATS_HEADER)?;
    for s in stats {
        let c = &s.counters;
        let mut row = vec![s.replica.to_string(), s.seed.to_string(), c.events.to_string()];
        row.extend(c.by_kind.iter().map(u64::to_string));
        row.extend(
            [
                c.source_blocked,
                c.mass_violations,
                c.cap_violations,
                c.domain_violations,
                c.gamma_cap_hits,
                c.gamma_projections,
            ]
            .iter()
            .map(u64::to_string),
        );
        row.extend([
            s.final_t.to_string(),
            s.final_u.to_string(),
            c.sup_u_minus_t.to_string(),
            s.particles.to_string(),
        ]);
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `replica_stats.csv` back as `(replica, columns by name)`.
pub fn read_stats<R: std::io::Read>(r: R) -> Result<Vec<std::collections::BTreeMap<String, f64>>, String> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(STATS_HEADER.iter().copied()) {
        return Err(format!("unexpected replica_stats header {:?}", header));
    }
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            header
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| v.parse::<f64>().map(|x| (h.to_string(), x)).map_err(|e| e.to_string()))
                .collect()
        })
        .collect()
}

pub fn write_snapshot<W: Write>(mut w: W, snap: &Snapshot) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, snap)?;
    w.write_all(b"\n")
}

pub fn read_snapshots<R: std::io::BufRead>(r: R) -> Result<Vec<Snapshot>, String> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| e.to_string())?;
            serde_json::from_str(&l).map_err(|e| e.to_string())
        })
        .collect()
}
