use std::fs;
use std::path::Path;
use std::process::Command;

fn pbesim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pbesim")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.ini");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn lists_every_preset() {
    let out = pbesim(&["scenarios", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["constant_coag", "additive_coag", "pure_diffusion_interval", "diffusion_disk", "sintering_ball", "active_sites", "thermophoresis"] {
        assert!(text.contains(&format!("{name}: ")), "{name}");
    }
    assert!(text.contains("    kappa = 2\n"));
}

#[test]
fn simulate_then_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "[scenario]\nname = constant_coag\n[simulation]\nparticles = 500\nt_end = 0.5\n[run]\nreplicas = 2\n",
    );
    let run = pbesim(&["simulate", "--config", &cfg, "--replicas", "16", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8(run.stdout).unwrap().starts_with("16 of 16 replicas completed"));

    let summary = fs::read_to_string(out.join("replica_0015.csv")).unwrap();
    assert_eq!(
        summary.lines().next().unwrap(),
        "t,u,particles,count,mass,moment2,moment3,events_clock,events_source,events_move,events_interact,events_self,events_fictitious"
    );
    assert!(summary.lines().nth(1).unwrap().starts_with("0,0,500,1,1,1,1,"));
    let pooled = fs::read_to_string(out.join("pooled.csv")).unwrap();
    assert_eq!(
        pooled.lines().next().unwrap(),
        "t,replicas,count_mean,count_sd,mass_mean,mass_sd,moment2_mean,moment2_sd,u_minus_t_mean,u_minus_t_sd,oracle_count"
    );
    // command-line values win over the file
    let echo = fs::read_to_string(out.join("config.ini")).unwrap();
    assert!(echo.contains("replicas = 16\n") && echo.contains("seed = 3\n"));

    let diag = pbesim(&["diagnose", "coagulation", "--in", out.to_str().unwrap()]);
    assert!(diag.status.success());
    assert!(String::from_utf8(diag.stdout).unwrap().starts_with("PASS coagulation"));
    assert!(out.join("coagulation.csv").exists());
    let diag = pbesim(&["diagnose", "moments", "--in", out.to_str().unwrap()]);
    assert!(diag.status.success());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[scenario]\nname = active_sites\n[simulation]\nparticles = 300\nt_end = 0.5\nmode = exponential\n[run]\nreplicas = 3\n",
    );
    let mut files = Vec::new();
    for (tag, workers) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(tag);
        let run = pbesim(&["simulate", "--config", &cfg, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(run.status.success());
        let mut names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        names.retain(|n| n.to_string_lossy().ends_with(".csv"));
        files.push(names.iter().map(|n| (n.clone(), fs::read(out.join(n)).unwrap())).collect::<Vec<_>>());
    }
    assert_eq!(files[0].len(), 5);
    assert_eq!(files[0], files[1]);
}

#[test]
fn bad_config_reports_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nname = constant_coag\n[simulation\n");
    let run = pbesim(&["simulate", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8(run.stderr).unwrap().contains("line 3"));

    let cfg = write_config(dir.path(), "[scenario]\nname = constant_coag\n[simulation]\nparticles = -4\nt_end = 1\n");
    let run = pbesim(&["simulate", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8(run.stderr).unwrap().contains("particles"));
}
