//! Sectioned `key = value` run configuration.
//!
//! ```text
//! # comment
//! [scenario]
//! name = constant_coag
//! kappa = 2.0            # any preset parameter
//!
//! [simulation]
//! particles = 10000      # N (required)
//! t_end = 2.0            # (required)
//! c_n = 10               # default ceil(N^(1/4))
//! m_n = 10               # default 10 x initial mass
//! clock_rate = 1         # default 1
//! seed = 42              # default 0
//! mode = deterministic   # or exponential
//! output_cadence = 0.04  # default t_end / 50
//!
//! [run]
//! replicas = 32          # default 1
//! out = runs/coag        # default "out"
//! format = csv           # or ndjson (adds particle snapshots)
//! debug_trace = false
//! exact_rates = false
//! workers = 0            # 0 = one per core
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::{scenario, scenario_params};
use crate::simulator::{default_c_n, default_cadence, HoldingMode, SimParams, TRACE_CAPACITY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Ndjson,
}

impl OutputFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Ndjson => "ndjson",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(OutputFormat::Csv),
            "ndjson" => Some(OutputFormat::Ndjson),
            _ => None,
        }
    }
}

/// A validated run description with every default filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    /// Explicitly set preset parameters.
    pub params: BTreeMap<String, f64>,
    pub sim: SimParams,
    pub replicas: u32,
    pub out: PathBuf,
    pub format: OutputFormat,
    /// Worker cap; 0 means one per core.
    pub workers: usize,
}

const SECTIONS: [&str; 3] = ["scenario", "simulation", "run"];
const SIM_KEYS: [&str; 8] = ["particles", "t_end", "c_n", "m_n", "clock_rate", "seed", "mode", "output_cadence"];
const RUN_KEYS: [&str; 6] = ["replicas", "out", "format", "debug_trace", "exact_rates", "workers"];

/// Syntactic form of a config file: section → key → (value, line).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::Parse {
                        line: line_no,
                        message: format!("unknown section [{name}]"),
                    });
                }
                raw.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("expected 'key = value', found '{line}'"),
            })?;
            let section = current.as_ref().ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: "key outside of any section".into(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            let entries = raw.sections.get_mut(section).expect("section inserted on header");
            if let Some((_, first)) = entries.get(key) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("duplicate key '{key}' (first set on line {first})"),
                });
            }
            entries.insert(key.to_string(), (value.trim().to_string(), line_no));
        }
        Ok(raw)
    }

    /// Sets or replaces a key, as a command-line override.
    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), (value.to_string(), 0));
    }

    fn get(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    /// Checks every key and fills defaults. All problems are collected.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut errs = Vec::new();
        let at = |line: usize| if line > 0 { format!(" (line {line})") } else { " (override)".to_string() };

        for (sec, allowed) in [("simulation", &SIM_KEYS[..]), ("run", &RUN_KEYS[..])] {
            if let Some(entries) = self.sections.get(sec) {
                for (k, (_, line)) in entries {
                    if !allowed.contains(&k.as_str()) {
                        errs.push(format!("unknown key '{k}' in [{sec}]{}", at(*line)));
                    }
                }
            }
        }

        let name = match self.get("scenario", "name") {
            Some((v, _)) => v.clone(),
            None => {
                errs.push("missing [scenario] name".into());
                String::new()
            }
        };
        let mut params = BTreeMap::new();
        let known = scenario_params(&name);
        if known.is_none() && !name.is_empty() {
            errs.push(format!("unknown scenario '{name}'"));
        }
        if let Some(entries) = self.sections.get("scenario") {
            for (k, (v, line)) in entries {
                if k == "name" {
                    continue;
                }
                if let Some(table) = known {
                    if !table.iter().any(|(p, _)| p == k) {
                        errs.push(format!("unknown key '{k}' for scenario '{name}'{}", at(*line)));
                        continue;
                    }
                }
                match v.parse::<f64>() {
                    Ok(x) => {
                        params.insert(k.clone(), x);
                    }
                    Err(_) => errs.push(format!("'{k}' must be a number, got '{v}'{}", at(*line))),
                }
            }
        }

        let num = |sec: &str, key: &str, errs: &mut Vec<String>| -> Option<f64> {
            let (v, line) = self.get(sec, key)?;
            match v.parse::<f64>() {
                Ok(x) => Some(x),
                Err(_) => {
                    errs.push(format!("'{key}' must be a number, got '{v}'{}", at(*line)));
                    None
                }
            }
        };
        let int = |sec: &str, key: &str, errs: &mut Vec<String>| -> Option<i128> {
            let (v, line) = self.get(sec, key)?;
            match v.parse::<i128>() {
                Ok(x) => Some(x),
                Err(_) => {
                    errs.push(format!("'{key}' must be an integer, got '{v}'{}", at(*line)));
                    None
                }
            }
        };
        let flag = |key: &str, errs: &mut Vec<String>| -> bool {
            match self.get("run", key) {
                None => false,
                Some((v, line)) => match v.as_str() {
                    "true" => true,
                    "false" => false,
                    _ => {
                        errs.push(format!("'{key}' must be true or false, got '{v}'{}", at(*line)));
                        false
                    }
                },
            }
        };

        let n_scale = match int("simulation", "particles", &mut errs) {
            Some(n) if n > 0 && n <= u64::MAX as i128 => n as u64,
            Some(n) => {
                errs.push(format!("particles must be a positive integer, got {n}"));
                1
            }
            None => {
                if self.get("simulation", "particles").is_none() {
                    errs.push("missing [simulation] particles".into());
                }
                1
            }
        };
        let t_end = match num("simulation", "t_end", &mut errs) {
            Some(t) if t >= 0.0 && t.is_finite() => t,
            Some(t) => {
                errs.push(format!("t_end must be non-negative, got {t}"));
                0.0
            }
            None => {
                if self.get("simulation", "t_end").is_none() {
                    errs.push("missing [simulation] t_end".into());
                }
                0.0
            }
        };
        let positive = |key: &str, default: f64, errs: &mut Vec<String>| -> f64 {
            match num("simulation", key, errs) {
                Some(v) if v > 0.0 && v.is_finite() => v,
                Some(v) => {
                    errs.push(format!("{key} must be positive, got {v}"));
                    default
                }
                None => default,
            }
        };
        let c_n = positive("c_n", default_c_n(n_scale), &mut errs);
        let clock_rate = positive("clock_rate", 1.0, &mut errs);
        let output_cadence = positive("output_cadence", default_cadence(t_end), &mut errs);
        let m_n_explicit = positive("m_n", f64::NAN, &mut errs);
        let seed = match int("simulation", "seed", &mut errs) {
            Some(s) if (0..=u64::MAX as i128).contains(&s) => s as u64,
            Some(s) => {
                errs.push(format!("seed must fit in an unsigned 64-bit integer, got {s}"));
                0
            }
            None => 0,
        };
        let holding = match self.get("simulation", "mode") {
            None => HoldingMode::Deterministic,
            Some((v, line)) => HoldingMode::parse(v).unwrap_or_else(|| {
                errs.push(format!("mode must be deterministic or exponential, got '{v}'{}", at(*line)));
                HoldingMode::Deterministic
            }),
        };
        let replicas = match int("run", "replicas", &mut errs) {
            Some(r) if r >= 1 && r <= u32::MAX as i128 => r as u32,
            Some(r) => {
                errs.push(format!("replicas must be at least 1, got {r}"));
                1
            }
            None => 1,
        };
        let workers = match int("run", "workers", &mut errs) {
            Some(w) if w >= 0 => w as usize,
            Some(w) => {
                errs.push(format!("workers must be non-negative, got {w}"));
                0
            }
            None => 0,
        };
        let format = match self.get("run", "format") {
            None => OutputFormat::Csv,
            Some((v, line)) => OutputFormat::parse(v).unwrap_or_else(|| {
                errs.push(format!("format must be csv or ndjson, got '{v}'{}", at(*line)));
                OutputFormat::Csv
            }),
        };
        let out = self.get("run", "out").map_or_else(|| PathBuf::from("out"), |(v, _)| PathBuf::from(v));
        let debug_trace = flag("debug_trace", &mut errs);
        let exact_rates = flag("exact_rates", &mut errs);

        // the preset is built last so that its own checks report alongside
        let mut initial_mass = 1.0;
        if known.is_some() && errs.is_empty() {
            match scenario(&name, &params) {
                Ok(s) => initial_mass = s.initial_mass(),
                Err(e) => errs.push(format!("scenario '{name}': {e}")),
            }
        }
        let m_n = if m_n_explicit.is_nan() { 10.0 * initial_mass } else { m_n_explicit };
        if m_n < initial_mass {
            errs.push(format!("m_n = {m_n} is below the initial mass {initial_mass}"));
        }

        if !errs.is_empty() {
            return Err(ConfigError::Validation(errs));
        }
        Ok(RunConfig {
            scenario: name,
            params,
            sim: SimParams {
                n_scale,
                c_n,
                m_n,
                clock_rate,
                t_end,
                seed,
                holding,
                output_cadence,
                exact_rates,
                debug_trace,
                trace_capacity: TRACE_CAPACITY,
            },
            replicas,
            out,
            format,
            workers,
        })
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    RawConfig::parse(text)?.resolve()
}

impl RunConfig {
    /// Writes every field explicitly; `parse_config(emit())` reproduces the
    /// configuration.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[scenario]");
        let _ = writeln!(s, "name = {}", self.scenario);
        for (k, v) in &self.params {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let p = &self.sim;
        let _ = writeln!(s, "\n[simulation]");
        let _ = writeln!(s, "particles = {}", p.n_scale);
        let _ = writeln!(s, "t_end = {:?}", p.t_end);
        let _ = writeln!(s, "c_n = {:?}", p.c_n);
        let _ = writeln!(s, "m_n = {:?}", p.m_n);
        let _ = writeln!(s, "clock_rate = {:?}", p.clock_rate);
        let _ = writeln!(s, "seed = {}", p.seed);
        let _ = writeln!(s, "mode = {}", p.holding.as_str());
        let _ = writeln!(s, "output_cadence = {:?}", p.output_cadence);
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "replicas = {}", self.replicas);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "format = {}", self.format.as_str());
        let _ = writeln!(s, "debug_trace = {}", p.debug_trace);
        let _ = writeln!(s, "exact_rates = {}", p.exact_rates);
        let _ = writeln!(s, "workers = {}", self.workers);
        s
    }
}
