//! Acceptance suite. Runs every criterion in order and prints one PASS/FAIL
//! line each; the process fails if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use pbesim_core::diagnostics::{generator_estimate, TestFunction};
use pbesim_core::geometry::{LevelSetDomain, Point, TOL_BOUNDARY};
use pbesim_core::io::{diagnose, parse_config, run_batch, simulate, ReplicaResult, ReportKind, RunConfig};
use pbesim_core::model::{scenario, scenario_names};
use pbesim_core::rng::stream;
use pbesim_core::selection::{count_injections_oracle, nu_recursion};
use pbesim_core::Particle;

struct Outcome {
    passed: bool,
    detail: String,
}

/// Counters gathered from every simulation run of the suite.
#[derive(Default)]
struct Ledger {
    runs: usize,
    events: u64,
    violations: u64,
    problems: Vec<String>,
}

impl Ledger {
    fn record(&mut self, label: &str, cfg: &RunConfig, results: &[ReplicaResult]) {
        let sc = scenario(&cfg.scenario, &cfg.params).unwrap();
        let cap = (cfg.sim.m_n * cfg.sim.n_scale as f64).floor();
        let closed = sc.model.source.is_none();
        for r in results {
            self.runs += 1;
            self.events += r.stats.counters.events;
            self.violations += r.stats.counters.violations();
            let m0 = r.rows[0].mass;
            for row in &r.rows {
                // totals are integers over N, so products with N are exact enough to compare
                let total = (row.mass * cfg.sim.n_scale as f64).round();
                if total > cap {
                    self.problems.push(format!("{label} replica {}: mass {total} above cap {cap}", r.stats.replica));
                }
                if closed && row.mass != m0 {
                    self.problems.push(format!("{label} replica {}: closed mass moved {m0} -> {}", r.stats.replica, row.mass));
                }
            }
        }
    }
}

fn config(text: &str) -> RunConfig {
    parse_config(text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

fn batch(cfg: &RunConfig) -> Vec<ReplicaResult> {
    let b = run_batch(cfg, None).unwrap();
    let failed: Vec<_> = b.failures().map(|(i, e)| format!("{i}: {e}")).collect();
    assert!(failed.is_empty(), "replica failures: {failed:?}");
    b.completed().cloned().collect()
}

// ---------------------------------------------------------------------------

fn nu_oracle() -> Outcome {
    let mut cases = 0u64;
    let mut mismatches = Vec::new();
    for atoms in 1..=3usize {
        let subsets = 1u8 << atoms;
        let mut weights = vec![0u64; atoms];
        loop {
            if weights.iter().sum::<u64>() <= 6 {
                let items: Vec<usize> = weights
                    .iter()
                    .enumerate()
                    .flat_map(|(a, &w)| std::iter::repeat_n(a, w as usize))
                    .collect();
                for n in 0..=3usize {
                    let total = (subsets as usize).pow(n as u32);
                    for code in 0..total {
                        let boxes: Vec<u8> = (0..n).map(|r| ((code / (subsets as usize).pow(r as u32)) % subsets as usize) as u8).collect();
                        let preds: Vec<Box<dyn Fn(&usize) -> bool>> = boxes
                            .iter()
                            .map(|&b| Box::new(move |a: &usize| b & (1 << a) != 0) as Box<dyn Fn(&usize) -> bool>)
                            .collect();
                        let targets: Vec<&dyn Fn(&usize) -> bool> = preds.iter().map(|p| p.as_ref()).collect();
                        let want = count_injections_oracle(&items, &targets).unwrap() as i64;
                        let got = nu_recursion(&weights, &boxes);
                        cases += 1;
                        if want != got {
                            mismatches.push(format!("w={weights:?} boxes={boxes:?}: {got} != {want}"));
                        }
                    }
                }
            }
            // odometer over weights in 0..=6
            let mut i = 0;
            while i < atoms && weights[i] == 6 {
                weights[i] = 0;
                i += 1;
            }
            if i == atoms {
                break;
            }
            weights[i] += 1;
        }
    }
    Outcome {
        passed: mismatches.is_empty(),
        detail: format!("{cases} cases, {} mismatches {:?}", mismatches.len(), mismatches.iter().take(3).collect::<Vec<_>>()),
    }
}

// ---------------------------------------------------------------------------

fn fold(x: f64, k: f64, l: f64) -> f64 {
    let mut r = (x + k + l).rem_euclid(4.0 * l);
    if r > 2.0 * l {
        r = 4.0 * l - r;
    }
    r - l
}

/// Straight-line billiard in the unit disk; returns the end point and the
/// number of reflections.
fn disk_trace(x: [f64; 2], k: [f64; 2]) -> ([f64; 2], u32) {
    let mut len = k[0].hypot(k[1]);
    let mut p = x;
    if len == 0.0 {
        return (p, 0);
    }
    let mut d = [k[0] / len, k[1] / len];
    let mut n = 0;
    loop {
        let b = p[0] * d[0] + p[1] * d[1];
        let c = p[0] * p[0] + p[1] * p[1] - 1.0;
        let t = -b + (b * b - c).max(0.0).sqrt();
        if t >= len {
            return ([p[0] + len * d[0], p[1] + len * d[1]], n);
        }
        p = [p[0] + t * d[0], p[1] + t * d[1]];
        let r = p[0].hypot(p[1]);
        p = [p[0] / r, p[1] / r];
        len -= t;
        let dn = d[0] * p[0] + d[1] * p[1];
        d = [d[0] - 2.0 * dn * p[0], d[1] - 2.0 * dn * p[1]];
        n += 1;
    }
}

fn reflection() -> Outcome {
    let mut rng = stream(0xacc2);
    let u = |rng: &mut _| pbesim_core::rng::uniform(rng);

    let interval = LevelSetDomain::interval(1.0).unwrap();
    let (mut worst1, mut closure1) = (0.0f64, f64::MIN);
    for _ in 0..100_000 {
        let x = 2.0 * u(&mut rng) - 1.0;
        let k = 10.0 * u(&mut rng) - 5.0;
        let g = interval.gamma(&[x, 0.0, 0.0], &[k, 0.0, 0.0]);
        worst1 = worst1.max((g[0] - fold(x, k, 1.0)).abs());
        closure1 = closure1.max(interval.omega(&g));
    }

    let disk = LevelSetDomain::ball(2, 1.0).unwrap();
    let (mut worst2, mut closure2, mut max_refl, mut n) = (0.0f64, f64::MIN, 0, 0);
    while n < 10_000 {
        let x = disk.sample_interior(&mut rng);
        let phi = std::f64::consts::TAU * u(&mut rng);
        let len = 6.0 * u(&mut rng);
        let k = [len * phi.cos(), len * phi.sin()];
        let (want, refl) = disk_trace([x[0], x[1]], k);
        if refl > 8 {
            continue;
        }
        n += 1;
        max_refl = max_refl.max(refl);
        let g = disk.gamma(&x, &[k[0], k[1], 0.0]);
        worst2 = worst2.max((g[0] - want[0]).hypot(g[1] - want[1]));
        closure2 = closure2.max(disk.omega(&g));
    }
    Outcome {
        passed: worst1 <= 1e-9 && worst2 <= 1e-7 && closure1 <= TOL_BOUNDARY && closure2 <= TOL_BOUNDARY,
        detail: format!(
            "interval max err {worst1:.2e}, disk max err {worst2:.2e} (up to {max_refl} reflections), max omega {:.2e}",
            closure1.max(closure2)
        ),
    }
}

// ---------------------------------------------------------------------------

fn generator() -> Outcome {
    let overrides = BTreeMap::from([("swirl".to_string(), 0.5)]);
    let sc = scenario("diffusion_disk", &overrides).unwrap();
    let f = TestFunction::ball_quartic(2, 1.0);
    // f = (s - 1)², s = |x|²: ½Δf = 8s - 4, and the swirl is orthogonal to ∇f
    let exact = |x: &Point| 8.0 * (x[0] * x[0] + x[1] * x[1]) - 4.0;
    let scale = 4.0;
    let points: [Point; 5] = [[0.0, 0.0, 0.0], [0.3, -0.2, 0.0], [0.95, 0.0, 0.0], [0.0, -0.98, 0.0], [0.6, 0.78, 0.0]];
    let levels = [8.0, 16.0, 32.0, 64.0];
    let mut rng = stream(0xacc3);
    let mut passed = true;
    let mut lines = Vec::new();
    for x in &points {
        let z = Particle::new(1, *x);
        let target = exact(x);
        let est: Vec<_> = levels
            .iter()
            .map(|&c| generator_estimate((&sc).into(), &f, &z, 0.0, c, 1_000_000, &mut rng))
            .collect();
        let errs: Vec<f64> = est.iter().map(|e| (e.mean - target).abs()).collect();
        let last = est.last().unwrap();
        let close = errs[3] <= 0.05 * scale + 4.0 * last.std_error;
        let monotone = (1..4).all(|k| errs[k] <= errs[k - 1] + 4.0 * est[k].std_error.hypot(est[k - 1].std_error));
        passed &= close && monotone;
        lines.push(format!(
            "x=({:.2},{:.2}) errs {:?} se {:.3}",
            x[0],
            x[1],
            errs.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>(),
            last.std_error
        ));
    }
    Outcome {
        passed,
        detail: lines.join("; "),
    }
}

// ---------------------------------------------------------------------------

fn coagulation(ledger: &mut Ledger) -> Outcome {
    // κ = 2, n0 = 1: half the particles have merged by t* = 1
    let cfg = config(
        "[scenario]\nname = constant_coag\nkappa = 2\n[simulation]\nparticles = 10000\nt_end = 2\nseed = 4\n[run]\nreplicas = 32\n",
    );
    let res = batch(&cfg);
    ledger.record("coagulation", &cfg, &res);
    let times = res[0].rows.len();
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for k in 0..times {
        let t = res[0].rows[k].t;
        let mean = res.iter().map(|r| r.rows[k].count).sum::<f64>() / res.len() as f64;
        let oracle = 1.0 / (1.0 + t);
        let rel = (mean - oracle).abs() / oracle;
        if rel > worst {
            worst = rel;
            at = t;
        }
    }
    Outcome {
        passed: worst <= 0.03 && res.len() == 32,
        detail: format!("{} replicas, {times} output times on [0, 2], worst relative error {worst:.4} at t = {at}", res.len()),
    }
}

// ---------------------------------------------------------------------------

fn equilibrium(ledger: &mut Ledger, dir: &Path) -> Outcome {
    let cfg = config(&format!(
        "[scenario]\nname = pure_diffusion_interval\nsigma = 1\n[simulation]\nparticles = 10000\nt_end = 5\nseed = 6\n\
         [run]\nreplicas = 10\nformat = ndjson\nout = {}\n",
        dir.display()
    ));
    let res = batch(&cfg);
    ledger.record("equilibrium", &cfg, &res);
    simulate(&cfg).unwrap();
    let rep = diagnose(ReportKind::Uniformity, dir).unwrap();
    let samples: u64 = res.iter().map(|r| r.rows.last().unwrap().particles).sum();
    Outcome {
        passed: rep.passed && samples >= 100_000,
        detail: rep.summary,
    }
}

// ---------------------------------------------------------------------------

fn fictitious_time(ledger: &mut Ledger) -> Outcome {
    let cfg = config(
        "[scenario]\nname = pure_diffusion_interval\n[simulation]\nparticles = 10000\nt_end = 1\nseed = 7\n\
         mode = exponential\nclock_rate = 1\n[run]\nreplicas = 64\n",
    );
    let res = batch(&cfg);
    ledger.record("fictitious time", &cfg, &res);
    let (t_end, r, n) = (1.0f64, 1.0f64, 1e4f64);
    let offsets: Vec<f64> = res.iter().map(|x| x.rows.last().unwrap().u - t_end).collect();
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let mean_band = 4.0 * (t_end / (r * n)).sqrt();
    let threshold = n.powf(-0.25);
    let frac = res.iter().filter(|x| x.stats.counters.sup_u_minus_t >= threshold).count() as f64 / res.len() as f64;
    let p = 2.0 * (t_end + 1.0).sqrt() / r.sqrt() * threshold;
    let band = p + 4.0 * (p * (1.0 - p) / res.len() as f64).sqrt();
    let sup = res.iter().map(|x| x.stats.counters.sup_u_minus_t).fold(0.0, f64::max);
    Outcome {
        passed: res.len() == 64 && mean.abs() <= mean_band && frac < band,
        detail: format!(
            "mean(u_T - T) = {mean:.2e} (band {mean_band:.2e}), fraction with sup >= {threshold} is {frac} (band {band:.3}), largest sup {sup:.2e}"
        ),
    }
}

// ---------------------------------------------------------------------------

fn summary_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "ndjson"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism(ledger: &mut Ledger, root: &Path) -> Outcome {
    let mut runs = Vec::new();
    for (tag, workers) in [("a", 1), ("b", 1), ("c", 4)] {
        let dir = root.join(tag);
        let cfg = config(&format!(
            "[scenario]\nname = thermophoresis\n[simulation]\nparticles = 2000\nt_end = 0.5\nseed = 8\nmode = exponential\n\
             [run]\nreplicas = 4\nworkers = {workers}\nformat = ndjson\nout = {}\n",
            dir.display()
        ));
        let summary = simulate(&cfg).unwrap();
        assert!(summary.failed.is_empty());
        if tag == "a" {
            ledger.record("determinism", &cfg, &batch(&cfg));
        }
        runs.push(summary_files(&dir));
    }
    let same_runs = runs[0] == runs[1];
    let same_workers = runs[0] == runs[2];
    Outcome {
        passed: same_runs && same_workers && runs[0].len() == 10,
        detail: format!(
            "{} files; repeat run identical: {same_runs}; 1 vs 4 workers identical: {same_workers}",
            runs[0].len()
        ),
    }
}

// ---------------------------------------------------------------------------

fn conservation(ledger: &mut Ledger) -> Outcome {
    for name in scenario_names() {
        for (mode, exact) in [("deterministic", false), ("exponential", true)] {
            let cfg = config(&format!(
                "[scenario]\nname = {name}\n[simulation]\nparticles = {}\nt_end = 1\nseed = 5\nmode = {mode}\n\
                 [run]\nreplicas = 2\nexact_rates = {exact}\n",
                if exact { 60 } else { 2000 }
            ));
            let res = batch(&cfg);
            ledger.record(name, &cfg, &res);
        }
    }
    Outcome {
        passed: ledger.violations == 0 && ledger.problems.is_empty(),
        detail: format!(
            "{} runs, {} events, {} counted violations, {} mass or cap breaches {:?}",
            ledger.runs,
            ledger.events,
            ledger.violations,
            ledger.problems.len(),
            ledger.problems.iter().take(3).collect::<Vec<_>>()
        ),
    }
}

fn report(id: u32, name: &str, start: Instant, o: &Outcome) -> bool {
    println!(
        "criterion {id} [{name}]: {} ({:.1} s) {}",
        if o.passed { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        o.detail
    );
    o.passed
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let mut ledger = Ledger::default();
    let mut ok = true;

    let s = Instant::now();
    ok &= report(1, "selection count oracle", s, &nu_oracle());
    let s = Instant::now();
    ok &= report(2, "reflection map", s, &reflection());
    let s = Instant::now();
    ok &= report(3, "generator consistency", s, &generator());
    let s = Instant::now();
    let o = coagulation(&mut ledger);
    ok &= report(4, "constant-kernel coagulation", s, &o);
    let s = Instant::now();
    let o = equilibrium(&mut ledger, &tmp.path().join("equilibrium"));
    ok &= report(6, "reflecting-diffusion equilibrium", s, &o);
    let s = Instant::now();
    let o = fictitious_time(&mut ledger);
    ok &= report(7, "fictitious time", s, &o);
    let s = Instant::now();
    let o = determinism(&mut ledger, &tmp.path().join("determinism"));
    ok &= report(8, "determinism", s, &o);
    // every run above feeds the conservation ledger
    let s = Instant::now();
    let o = conservation(&mut ledger);
    ok &= report(5, "exact conservation", s, &o);

    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
