//! Preset scenarios: coagulation, reflected diffusion, sintering, active-site
//! decay and thermophoretic drift.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::{AuditOptions, InteractionKernel, ModelError, ModelSpec, SelfKernel, Source};
use crate::ensemble::{EnsembleMeasure, InternalBoxSpec, Particle};
use crate::geometry::{GeometryError, LevelSetDomain, Point};
use crate::rng::{stream, SimRng};
use crate::vecops::{dot, sub};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("scenario '{scenario}' has no parameter '{key}'")]
    UnknownParameter { scenario: String, key: String },
    #[error("parameter '{key}' = {value} is out of range: {reason}")]
    BadParameter { key: String, value: f64, reason: &'static str },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where initial particles are placed.
#[derive(Clone, Debug, PartialEq)]
pub enum Placement {
    At(Point),
    Uniform,
}

/// Monodisperse initial condition: `round(density·N)` particles of `mass`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialCondition {
    pub density: f64,
    pub mass: u64,
    pub placement: Placement,
    pub internal: Vec<f64>,
}

/// Closed-form reference curve for the particle count density, when one is
/// known for the scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Oracle {
    None,
    /// `n(t) = n0 / (1 + κ n0 t / 2)`.
    ConstantCoagulation { kappa: f64, n0: f64 },
    /// `n(t) = n0 exp(−κ M t)` with conserved mass density `M`.
    AdditiveCoagulation { kappa: f64, n0: f64, mass: f64 },
    /// Count density conserved.
    Conserved { n0: f64 },
}

impl Oracle {
    pub fn count(&self, t: f64) -> Option<f64> {
        match *self {
            Oracle::None => None,
            Oracle::ConstantCoagulation { kappa, n0 } => Some(crate::diagnostics::coagulation_oracle(kappa, n0, t)),
            Oracle::AdditiveCoagulation { kappa, n0, mass } => Some(n0 * (-kappa * mass * t).exp()),
            Oracle::Conserved { n0 } => Some(n0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioDefaults {
    pub initial: InitialCondition,
    pub oracle: Oracle,
}

/// A fully validated preset.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub domain: LevelSetDomain,
    pub model: ModelSpec,
    pub internal: InternalBoxSpec,
    pub defaults: ScenarioDefaults,
}

impl Scenario {
    /// Initial empirical measure at scale `n_scale`.
    pub fn initial_ensemble(&self, n_scale: u64, rng: &mut SimRng) -> EnsembleMeasure {
        let ic = &self.defaults.initial;
        let count = (ic.density * n_scale as f64).round() as usize;
        let particles = (0..count)
            .map(|_| {
                let position = match &ic.placement {
                    Placement::At(p) => *p,
                    Placement::Uniform => self.domain.sample_interior(rng),
                };
                Particle::new(ic.mass, position).with_internal(&ic.internal)
            })
            .collect();
        EnsembleMeasure::from_particles(n_scale, particles).expect("scale is positive")
    }

    /// `P₀(π_m)` of the default initial condition.
    pub fn initial_mass(&self) -> f64 {
        self.defaults.initial.density * self.defaults.initial.mass as f64
    }
}

const SCENARIOS: &[(&str, &str, &[(&str, f64)])] = &[
    (
        "constant_coag",
        "constant pair-merge kernel in the unit disk",
        &[("kappa", 2.0), ("n0", 1.0), ("m0", 1.0), ("sigma", 1.0)],
    ),
    (
        "additive_coag",
        "additive pair-merge kernel in the unit disk",
        &[("kappa", 1.0), ("n0", 1.0), ("m0", 1.0), ("sigma", 1.0)],
    ),
    (
        "pure_diffusion_interval",
        "reflected Brownian motion on [-L, L] with optional unit-mass source",
        &[("sigma", 1.0), ("half_length", 1.0), ("x0", 0.0), ("n0", 1.0), ("m0", 1.0), ("source_rate", 0.0)],
    ),
    (
        "diffusion_disk",
        "reflected diffusion in the unit disk with tangential swirl",
        &[("sigma", 1.0), ("swirl", 0.0), ("n0", 1.0), ("m0", 1.0)],
    ),
    (
        "sintering_ball",
        "surface-area relaxation towards m^(2/3) in the unit ball, optional coagulation",
        &[("m0", 8.0), ("tau_s", 1.0), ("kappa", 0.0), ("n0", 1.0), ("sigma", 1.0)],
    ),
    (
        "active_sites",
        "active-site decay by self-interaction with a source of fresh particles",
        &[("k_d", 1.0), ("source_rate", 1.0), ("m_src", 1.0), ("n0", 1.0), ("m0", 1.0), ("sigma", 1.0)],
    ),
    (
        "thermophoresis",
        "mass-dependent drift in the unit disk with mollified coagulation",
        &[("v_t", 1.0), ("kappa", 1.0), ("range", 0.5), ("n0", 1.0), ("m0", 1.0), ("sigma", 1.0)],
    ),
];

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|s| s.0).collect()
}

pub fn scenario_description(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|s| s.0 == name).map(|s| s.1)
}

/// Parameters and defaults of a preset.
pub fn scenario_params(name: &str) -> Option<&'static [(&'static str, f64)]> {
    SCENARIOS.iter().find(|s| s.0 == name).map(|s| s.2)
}

struct Params<'a> {
    values: BTreeMap<String, f64>,
    _name: &'a str,
}

impl Params<'_> {
    fn get(&self, key: &str) -> f64 {
        self.values[key]
    }

    fn positive(&self, key: &str) -> Result<f64, ScenarioError> {
        let v = self.get(key);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(ScenarioError::BadParameter {
                key: key.into(),
                value: v,
                reason: "must be positive",
            })
        }
    }

    fn non_negative(&self, key: &str) -> Result<f64, ScenarioError> {
        let v = self.get(key);
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(ScenarioError::BadParameter {
                key: key.into(),
                value: v,
                reason: "must be non-negative",
            })
        }
    }

    fn mass(&self, key: &str) -> Result<u64, ScenarioError> {
        let v = self.get(key);
        if v >= 1.0 && v.fract() == 0.0 && v < 1e15 {
            Ok(v as u64)
        } else {
            Err(ScenarioError::BadParameter {
                key: key.into(),
                value: v,
                reason: "must be a positive integer",
            })
        }
    }
}

fn merge_pair(zs: &[Particle]) -> Particle {
    let (a, b) = (&zs[0], &zs[1]);
    let m = a.mass + b.mass;
    let wa = a.mass as f64 / m as f64;
    let position = std::array::from_fn(|i| wa * a.position[i] + (1.0 - wa) * b.position[i]);
    let mut internal = a.internal;
    for (x, y) in internal.iter_mut().zip(b.internal) {
        *x += y;
    }
    Particle { mass: m, position, internal }
}

/// Builds and validates a preset. `overrides` replaces default parameter
/// values; unknown keys are rejected.
pub fn scenario(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Scenario, ScenarioError> {
    let table = scenario_params(name).ok_or_else(|| ScenarioError::UnknownScenario(name.into()))?;
    let mut values: BTreeMap<String, f64> = table.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in overrides {
        if !values.contains_key(k) {
            return Err(ScenarioError::UnknownParameter {
                scenario: name.into(),
                key: k.clone(),
            });
        }
        values.insert(k.clone(), *v);
    }
    let p = Params { values, _name: name };
    let n0 = p.positive("n0")?;
    let sigma = p.positive("sigma")?;

    let (domain, model, internal, initial, oracle) = match name {
        "constant_coag" => {
            let kappa = p.non_negative("kappa")?;
            let m0 = p.mass("m0")?;
            let kernel = InteractionKernel::new(2, 1, move |_, _| kappa, |_, zs, _| vec![merge_pair(zs)]);
            let model = ModelSpec::new()
                .with_sigma(move |_, _| sigma, sigma)
                .with_kernel(kernel, kappa / 2.0);
            (
                LevelSetDomain::ball(2, 1.0)?,
                model,
                InternalBoxSpec::empty(),
                uniform_ic(n0, m0),
                Oracle::ConstantCoagulation { kappa, n0 },
            )
        }
        "additive_coag" => {
            let kappa = p.non_negative("kappa")?;
            let m0 = p.mass("m0")?;
            let kernel = InteractionKernel::new(
                2,
                1,
                move |_, zs| kappa * (zs[0].mass + zs[1].mass) as f64,
                |_, zs, _| vec![merge_pair(zs)],
            );
            let model = ModelSpec::new()
                .with_sigma(move |_, _| sigma, sigma)
                .with_kernel(kernel, kappa);
            (
                LevelSetDomain::ball(2, 1.0)?,
                model,
                InternalBoxSpec::empty(),
                uniform_ic(n0, m0),
                Oracle::AdditiveCoagulation {
                    kappa,
                    n0,
                    mass: n0 * m0 as f64,
                },
            )
        }
        "pure_diffusion_interval" => {
            let half = p.positive("half_length")?;
            let x0 = p.get("x0");
            if !(x0.abs() <= half) {
                return Err(ScenarioError::BadParameter {
                    key: "x0".into(),
                    value: x0,
                    reason: "must lie in [-half_length, half_length]",
                });
            }
            let m0 = p.mass("m0")?;
            let rate = p.non_negative("source_rate")?;
            let mut model = ModelSpec::new().with_sigma(move |_, _| sigma, sigma);
            if rate > 0.0 {
                let m = m0;
                model = model.with_source(Source::new(
                    move |_| rate,
                    move |_, rng: &mut SimRng| {
                        let x = half * (2.0 * crate::rng::uniform(rng) - 1.0);
                        Particle::new(m, [x, 0.0, 0.0])
                    },
                    vec![rate, rate * m as f64, rate * (m * m) as f64],
                ));
            }
            let oracle = if rate > 0.0 {
                Oracle::None
            } else {
                Oracle::Conserved { n0 }
            };
            (
                LevelSetDomain::interval(half)?,
                model,
                InternalBoxSpec::empty(),
                InitialCondition {
                    density: n0,
                    mass: m0,
                    placement: Placement::At([x0, 0.0, 0.0]),
                    internal: vec![],
                },
                oracle,
            )
        }
        "diffusion_disk" => {
            let beta = p.get("swirl");
            let m0 = p.mass("m0")?;
            let model = ModelSpec::new()
                .with_sigma(move |_, _| sigma, sigma)
                .with_drift(move |_, z| [-beta * z.position[1], beta * z.position[0], 0.0], beta.abs());
            (
                LevelSetDomain::ball(2, 1.0)?,
                model,
                InternalBoxSpec::empty(),
                uniform_ic(n0, m0),
                Oracle::Conserved { n0 },
            )
        }
        "sintering_ball" => {
            let m0 = p.mass("m0")?;
            let tau = p.positive("tau_s")?;
            let kappa = p.non_negative("kappa")?;
            let boxes = InternalBoxSpec::new(1, Arc::new(|m, _| ((m as f64).powf(2.0 / 3.0), m as f64)));
            let mut model = ModelSpec::new()
                .with_sigma(move |_, _| sigma, sigma)
                .with_internal_drift(
                    move |_, z| [-(z.internal[0] - (z.mass as f64).powf(2.0 / 3.0)) / tau, 0.0, 0.0, 0.0],
                    move |m| (m as f64 - (m as f64).powf(2.0 / 3.0)) / tau,
                );
            if kappa > 0.0 {
                model = model.with_kernel(InteractionKernel::new(2, 1, move |_, _| kappa, |_, zs, _| vec![merge_pair(zs)]), kappa / 2.0);
            }
            let oracle = if kappa > 0.0 {
                Oracle::ConstantCoagulation { kappa, n0 }
            } else {
                Oracle::Conserved { n0 }
            };
            (
                LevelSetDomain::ball(3, 1.0)?,
                model,
                boxes,
                InitialCondition {
                    density: n0,
                    mass: m0,
                    placement: Placement::Uniform,
                    internal: vec![m0 as f64],
                },
                oracle,
            )
        }
        "active_sites" => {
            let k_d = p.non_negative("k_d")?;
            let rate = p.non_negative("source_rate")?;
            let m_src = p.mass("m_src")?;
            let m0 = p.mass("m0")?;
            let boxes = InternalBoxSpec::new(1, Arc::new(|_, _| (0.0, 1.0)));
            let domain = LevelSetDomain::ball(2, 1.0)?;
            let src_dom = domain.clone();
            let mut model = ModelSpec::new()
                .with_sigma(move |_, _| sigma, sigma)
                .with_self_kernel(SelfKernel::new(
                    move |_, z| k_d * z.internal[0],
                    |_, z, _| {
                        let mut w = *z;
                        w.internal[0] *= 0.5;
                        w
                    },
                    k_d,
                ));
            if rate > 0.0 {
                model = model.with_source(Source::new(
                    move |_| rate,
                    move |_, rng: &mut SimRng| Particle::new(m_src, src_dom.sample_interior(rng)).with_internal(&[1.0]),
                    vec![rate, rate * m_src as f64, rate * (m_src * m_src) as f64],
                ));
            }
            (
                domain,
                model,
                boxes,
                InitialCondition {
                    density: n0,
                    mass: m0,
                    placement: Placement::Uniform,
                    internal: vec![1.0],
                },
                Oracle::None,
            )
        }
        "thermophoresis" => {
            let v_t = p.non_negative("v_t")?;
            let kappa = p.non_negative("kappa")?;
            let range = p.positive("range")?;
            let m0 = p.mass("m0")?;
            let kernel = InteractionKernel::new(
                2,
                1,
                move |_, zs| {
                    let d = sub(&zs[0].position, &zs[1].position);
                    kappa * (-dot(&d, &d) / (2.0 * range * range)).exp()
                },
                |_, zs, _| vec![merge_pair(zs)],
            );
            let model = ModelSpec::new()
                .with_sigma(move |_, _| sigma, sigma)
                .with_drift(
                    move |_, z| {
                        let r2 = z.position[0] * z.position[0] + z.position[1] * z.position[1];
                        [v_t * (1.0 - r2).max(0.0) * (z.mass as f64).powf(-1.0 / 3.0), 0.0, 0.0]
                    },
                    v_t,
                )
                .with_kernel(kernel, kappa / 2.0);
            (LevelSetDomain::ball(2, 1.0)?, model, InternalBoxSpec::empty(), uniform_ic(n0, m0), Oracle::None)
        }
        _ => unreachable!("name checked against the registry"),
    };

    let mut model = model;
    let mut rng = stream(0x5eed_0000 ^ name.len() as u64);
    model.validate(&domain, &internal, &AuditOptions::default(), &mut rng)?;

    Ok(Scenario {
        name: name.into(),
        params: p.values,
        domain,
        model,
        internal,
        defaults: ScenarioDefaults { initial, oracle },
    })
}

fn uniform_ic(n0: f64, m0: u64) -> InitialCondition {
    InitialCondition {
        density: n0,
        mass: m0,
        placement: Placement::Uniform,
        internal: vec![],
    }
}
