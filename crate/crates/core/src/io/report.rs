//! Post-run reports computed from an output directory.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use super::config::{parse_config, RunConfig};
use super::output::{self, SummaryRow};
use super::replicas::replica_name;
use super::IoError;
use crate::diagnostics::{equilibrium_uniformity_check, fictitious_time_check, moment_bound_check, MomentBound};
use crate::model::{scenario, Scenario};

/// Relative tolerance of the coagulation report.
pub const COAGULATION_TOL: f64 = 0.03;
/// Significance level of the uniformity report.
pub const UNIFORMITY_ALPHA: f64 = 0.01;
pub const UNIFORMITY_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Moments,
    Coagulation,
    Uniformity,
    FictitiousTime,
}

impl ReportKind {
    pub const ALL: [ReportKind; 4] = [
        ReportKind::Moments,
        ReportKind::Coagulation,
        ReportKind::Uniformity,
        ReportKind::FictitiousTime,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReportKind::Moments => "moments",
            ReportKind::Coagulation => "coagulation",
            ReportKind::Uniformity => "uniformity",
            ReportKind::FictitiousTime => "fictitious-time",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn file(&self) -> String {
        format!("{}.csv", self.as_str().replace('-', "_"))
    }
}

/// Verdict of one report; the table is also written to `<dir>/<report>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub kind: ReportKind,
    pub passed: bool,
    pub summary: String,
}

struct RunDir {
    cfg: RunConfig,
    sc: Scenario,
    replicas: Vec<usize>,
}

fn open(dir: &Path) -> Result<RunDir, IoError> {
    let cfg = parse_config(&fs::read_to_string(dir.join("config.ini"))?)?;
    let sc = scenario(&cfg.scenario, &cfg.params)?;
    let replicas = (0..cfg.replicas as usize)
        .filter(|&i| dir.join(replica_name(i, "csv")).exists())
        .collect();
    Ok(RunDir { cfg, sc, replicas })
}

fn summaries(dir: &Path, run: &RunDir) -> Result<Vec<Vec<SummaryRow>>, IoError> {
    run.replicas
        .iter()
        .map(|&i| {
            let path = dir.join(replica_name(i, "csv"));
            output::read_summary(File::open(&path)?).map_err(|e| IoError::Format(format!("{}: {e}", path.display())))
        })
        .collect()
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn diagnose(kind: ReportKind, dir: &Path) -> Result<Report, IoError> {
    let run = open(dir)?;
    let out = dir.join(kind.file());
    match kind {
        ReportKind::Moments => moments(dir, &run, &out),
        ReportKind::Coagulation => coagulation(dir, &out),
        ReportKind::Uniformity => uniformity(dir, &run, &out),
        ReportKind::FictitiousTime => fictitious(dir, &run, &out),
    }
}

fn moments(dir: &Path, run: &RunDir, out: &Path) -> Result<Report, IoError> {
    let series: Vec<Vec<(f64, f64)>> = summaries(dir, run)?
        .into_iter()
        .map(|rows| rows.into_iter().map(|r| (r.t, r.mass)).collect())
        .collect();
    let lambdas = run.sc.model.source.as_ref().map(|s| s.moment_bounds.clone()).unwrap_or_default();
    let bound = MomentBound::new(run.sc.initial_mass(), lambdas);
    let rep = moment_bound_check(&series, &bound, run.cfg.sim.m_n)?;
    write_table(
        out,
        &["t", "mean_mass", "mean_mass_sq", "q1", "q2", "slack_bound", "max_mass", "passed"],
        rep.rows.iter().map(|r| {
            vec![
                r.t.to_string(),
                r.mean_mass.to_string(),
                r.mean_mass_sq.to_string(),
                r.q1.to_string(),
                r.q2.to_string(),
                r.slack_bound.to_string(),
                r.max_mass.to_string(),
                r.passed.to_string(),
            ]
        }),
    )?;
    let failing = rep.rows.iter().filter(|r| !r.passed).count();
    Ok(Report {
        kind: ReportKind::Moments,
        passed: rep.passed,
        summary: format!("{} replicas, {} of {} output times outside the bounds", series.len(), failing, rep.rows.len()),
    })
}

fn coagulation(dir: &Path, out: &Path) -> Result<Report, IoError> {
    let mut rd = csv::Reader::from_path(dir.join("pooled.csv"))?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| rec.get(i).unwrap_or("").parse::<f64>().ok();
        let (Some(t), Some(mean), Some(oracle)) = (num(0), num(2), num(10)) else {
            continue;
        };
        let rel = (mean - oracle).abs() / oracle;
        worst = worst.max(rel);
        rows.push(vec![t.to_string(), mean.to_string(), oracle.to_string(), rel.to_string()]);
    }
    if rows.is_empty() {
        return Err(IoError::Format("pooled.csv has no oracle column values".into()));
    }
    let n = rows.len();
    write_table(out, &["t", "count_mean", "oracle_count", "relative_error"], rows)?;
    Ok(Report {
        kind: ReportKind::Coagulation,
        passed: worst <= COAGULATION_TOL,
        summary: format!("{n} output times, worst relative error {worst:.4} (tolerance {COAGULATION_TOL})"),
    })
}

fn uniformity(dir: &Path, run: &RunDir, out: &Path) -> Result<Report, IoError> {
    let dim = run.sc.domain.dim();
    let mut positions = Vec::new();
    for &i in &run.replicas {
        let path = dir.join(replica_name(i, "ndjson"));
        let snaps = output::read_snapshots(BufReader::new(File::open(&path)?))
            .map_err(|e| IoError::Format(format!("{}: {e}", path.display())))?;
        let Some(last) = snaps.last() else { continue };
        positions.extend(last.particles.iter().map(|p| {
            let mut x = [0.0; 3];
            x[..dim].copy_from_slice(&p.position[..dim]);
            x
        }));
    }
    let rep = equilibrium_uniformity_check(&positions, &run.sc.domain, 0, UNIFORMITY_BINS)?;
    write_table(
        out,
        &["bin", "observed", "expected"],
        rep.observed
            .iter()
            .zip(&rep.expected)
            .enumerate()
            .map(|(b, (o, e))| vec![b.to_string(), o.to_string(), e.to_string()]),
    )?;
    Ok(Report {
        kind: ReportKind::Uniformity,
        passed: rep.p_value > UNIFORMITY_ALPHA,
        summary: format!(
            "{} positions, chi2 = {:.3} on {} dof, p = {:.4}",
            positions.len(),
            rep.statistic,
            rep.dof,
            rep.p_value
        ),
    })
}

fn fictitious(dir: &Path, run: &RunDir, out: &Path) -> Result<Report, IoError> {
    let offsets: Vec<f64> = summaries(dir, run)?
        .iter()
        .filter_map(|rows| rows.last().map(|r| r.u - r.t))
        .collect();
    let stats = output::read_stats(File::open(dir.join("replica_stats.csv"))?).map_err(IoError::Format)?;
    let sups: Vec<f64> = stats.iter().map(|s| s["sup_u_minus_t"]).collect();
    let sim = &run.cfg.sim;
    let rep = fictitious_time_check(&offsets, &sups, sim.t_end, sim.clock_rate, sim.n_scale);
    write_table(
        out,
        &["replicas", "mean_offset", "mean_band", "exceed_threshold", "exceed_fraction", "exceed_band", "passed"],
        [vec![
            rep.replicas.to_string(),
            rep.mean_offset.to_string(),
            rep.mean_band.to_string(),
            rep.exceed_threshold.to_string(),
            rep.exceed_fraction.to_string(),
            rep.exceed_band.to_string(),
            rep.passed.to_string(),
        ]],
    )?;
    Ok(Report {
        kind: ReportKind::FictitiousTime,
        passed: rep.passed,
        summary: format!(
            "mean(u - t) = {:.3e} (band {:.3e}), exceed fraction {:.4} (band {:.4})",
            rep.mean_offset, rep.mean_band, rep.exceed_fraction, rep.exceed_band
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::replicas::simulate;

    #[test]
    fn report_names_round_trip() {
        for k in ReportKind::ALL {
            assert_eq!(ReportKind::parse(k.as_str()), Some(k));
        }
        assert_eq!(ReportKind::FictitiousTime.file(), "fictitious_time.csv");
        assert_eq!(ReportKind::parse("bogus"), None);
    }

    #[test]
    fn reports_run_on_a_small_batch() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[scenario]\nname = constant_coag\n[simulation]\nparticles = 500\nt_end = 0.5\nseed = 3\n\
             [run]\nreplicas = 16\nformat = ndjson\nout = {}\n",
            dir.path().display()
        );
        simulate(&parse_config(&text).unwrap()).unwrap();
        let m = diagnose(ReportKind::Moments, dir.path()).unwrap();
        assert!(m.passed, "{}", m.summary);
        let c = diagnose(ReportKind::Coagulation, dir.path()).unwrap();
        assert!(c.passed, "{}", c.summary);
        assert!(dir.path().join("coagulation.csv").exists());
        diagnose(ReportKind::FictitiousTime, dir.path()).unwrap();
        diagnose(ReportKind::Uniformity, dir.path()).unwrap();
    }
}
