//! Model ingredients: diffusion, drift, internal drift, source, interaction
//! kernels and the clock rate, with runtime validators.

mod scenarios;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::ensemble::{Internal, InternalBoxSpec, Particle, MAX_INTERNAL};
use crate::geometry::{LevelSetDomain, Point};
use crate::rng::{uniform, SimRng};
use crate::vecops::{dot, norm};

pub use scenarios::{
    scenario, scenario_description, scenario_names, scenario_params, InitialCondition, Oracle, Placement, Scenario, ScenarioDefaults,
    ScenarioError,
};

pub type ScalarFn = Arc<dyn Fn(f64, &Particle) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64, &Particle) -> Point + Send + Sync>;
pub type InternalFn = Arc<dyn Fn(f64, &Particle) -> Internal + Send + Sync>;
pub type MassBoundFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;
pub type RateFn = Arc<dyn Fn(f64, &[Particle]) -> f64 + Send + Sync>;
pub type ProductFn = Arc<dyn Fn(f64, &[Particle], &mut SimRng) -> Vec<Particle> + Send + Sync>;
pub type SelfRateFn = Arc<dyn Fn(f64, &Particle) -> f64 + Send + Sync>;
pub type SelfProductFn = Arc<dyn Fn(f64, &Particle, &mut SimRng) -> Particle + Send + Sync>;
pub type LambdaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SourceSampler = Arc<dyn Fn(f64, &mut SimRng) -> Particle + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{check} failed: value {value} at u = {u}, particle {particle:?}")]
    ValidationFailed {
        check: &'static str,
        value: f64,
        u: f64,
        particle: Box<Particle>,
    },
    #[error("kernel ({arity_in},{arity_out}) is not supported: arities must lie in 1..=4 and differ from (1,1)")]
    BadArity { arity_in: usize, arity_out: usize },
    #[error("internal box is empty for mass {mass}, coordinate {mu}")]
    EmptyInternalBox { mass: u64, mu: usize },
}

/// Rule `(i, j)`: `i` particles are replaced by `j` particles with the same
/// total mass at total rate `K_{u,i,j}(z₁…z_i, 𝔉^j)`.
#[derive(Clone)]
pub struct InteractionKernel {
    pub arity_in: usize,
    pub arity_out: usize,
    rate: RateFn,
    products: ProductFn,
}

impl fmt::Debug for InteractionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InteractionKernel({},{})", self.arity_in, self.arity_out)
    }
}

impl InteractionKernel {
    pub fn new<R, P>(arity_in: usize, arity_out: usize, rate: R, products: P) -> Self
    where
        R: Fn(f64, &[Particle]) -> f64 + Send + Sync + 'static,
        P: Fn(f64, &[Particle], &mut SimRng) -> Vec<Particle> + Send + Sync + 'static,
    {
        InteractionKernel {
            arity_in,
            arity_out,
            rate: Arc::new(rate),
            products: Arc::new(products),
        }
    }

    #[inline]
    pub fn rate(&self, u: f64, zs: &[Particle]) -> f64 {
        (self.rate)(u, zs)
    }

    pub fn products(&self, u: f64, zs: &[Particle], rng: &mut SimRng) -> Vec<Particle> {
        (self.products)(u, zs, rng)
    }
}

/// Mass-preserving single-particle transformation `K_{1,1}`.
#[derive(Clone)]
pub struct SelfKernel {
    rate: SelfRateFn,
    product: SelfProductFn,
    /// Constant with `K_{u,1,1}(z) ≤ k_self · mass(z)`.
    pub k_self: f64,
}

impl fmt::Debug for SelfKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SelfKernel").field("k_self", &self.k_self).finish()
    }
}

impl SelfKernel {
    pub fn new<R, P>(rate: R, product: P, k_self: f64) -> Self
    where
        R: Fn(f64, &Particle) -> f64 + Send + Sync + 'static,
        P: Fn(f64, &Particle, &mut SimRng) -> Particle + Send + Sync + 'static,
    {
        SelfKernel {
            rate: Arc::new(rate),
            product: Arc::new(product),
            k_self,
        }
    }

    #[inline]
    pub fn rate(&self, u: f64, z: &Particle) -> f64 {
        (self.rate)(u, z)
    }

    pub fn product(&self, u: f64, z: &Particle, rng: &mut SimRng) -> Particle {
        (self.product)(u, z, rng)
    }
}

/// Particle source `I_u` with total rate `Λ_u`.
#[derive(Clone)]
pub struct Source {
    lambda: LambdaFn,
    sampler: SourceSampler,
    /// `moment_bounds[q]` bounds `∫ π_m^q dI_u` uniformly in `u`.
    pub moment_bounds: Vec<f64>,
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Source").field("moment_bounds", &self.moment_bounds).finish()
    }
}

impl Source {
    pub fn new<L, S>(lambda: L, sampler: S, moment_bounds: Vec<f64>) -> Self
    where
        L: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, &mut SimRng) -> Particle + Send + Sync + 'static,
    {
        Source {
            lambda: Arc::new(lambda),
            sampler: Arc::new(sampler),
            moment_bounds,
        }
    }

    #[inline]
    pub fn lambda(&self, u: f64) -> f64 {
        (self.lambda)(u)
    }

    pub fn sample(&self, u: f64, rng: &mut SimRng) -> Particle {
        (self.sampler)(u, rng)
    }

    /// `Λ^(q)`, zero when not supplied.
    pub fn moment_bound(&self, q: usize) -> f64 {
        self.moment_bounds.get(q).copied().unwrap_or(0.0)
    }
}

/// All model ingredients. Callbacks must be pure functions of their inputs;
/// randomness only enters through the supplied stream.
#[derive(Clone)]
pub struct ModelSpec {
    sigma: ScalarFn,
    pub sigma_inf: f64,
    drift: VectorFn,
    pub b_inf: f64,
    internal_drift: Option<InternalFn>,
    h_inf: MassBoundFn,
    pub source: Option<Source>,
    pub kernels: Vec<InteractionKernel>,
    pub self_kernel: Option<SelfKernel>,
    pub k_inf: f64,
    pub clock_rate: f64,
    validated: bool,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("sigma_inf", &self.sigma_inf)
            .field("b_inf", &self.b_inf)
            .field("source", &self.source)
            .field("kernels", &self.kernels)
            .field("self_kernel", &self.self_kernel)
            .field("k_inf", &self.k_inf)
            .field("clock_rate", &self.clock_rate)
            .field("validated", &self.validated)
            .finish()
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::new()
    }
}

impl ModelSpec {
    /// Unit diffusion, no drift, no internal drift, no source, no kernels,
    /// clock rate 1.
    pub fn new() -> Self {
        ModelSpec {
            sigma: Arc::new(|_, _| 1.0),
            sigma_inf: 1.0,
            drift: Arc::new(|_, _| [0.0; 3]),
            b_inf: 0.0,
            internal_drift: None,
            h_inf: Arc::new(|_| 0.0),
            source: None,
            kernels: Vec::new(),
            self_kernel: None,
            k_inf: 0.0,
            clock_rate: 1.0,
            validated: false,
        }
    }

    pub fn with_sigma<F>(mut self, sigma: F, sigma_inf: f64) -> Self
    where
        F: Fn(f64, &Particle) -> f64 + Send + Sync + 'static,
    {
        self.sigma = Arc::new(sigma);
        self.sigma_inf = sigma_inf;
        self.validated = false;
        self
    }

    pub fn with_drift<F>(mut self, drift: F, b_inf: f64) -> Self
    where
        F: Fn(f64, &Particle) -> Point + Send + Sync + 'static,
    {
        self.drift = Arc::new(drift);
        self.b_inf = b_inf;
        self.validated = false;
        self
    }

    pub fn with_internal_drift<F, B>(mut self, h: F, h_inf: B) -> Self
    where
        F: Fn(f64, &Particle) -> Internal + Send + Sync + 'static,
        B: Fn(u64) -> f64 + Send + Sync + 'static,
    {
        self.internal_drift = Some(Arc::new(h));
        self.h_inf = Arc::new(h_inf);
        self.validated = false;
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = Some(source);
        self.validated = false;
        self
    }

    /// Adds a kernel; `k_inf` is raised to cover it.
    pub fn with_kernel(mut self, kernel: InteractionKernel, k_inf: f64) -> Self {
        self.kernels.push(kernel);
        self.k_inf = self.k_inf.max(k_inf);
        self.validated = false;
        self
    }

    pub fn with_self_kernel(mut self, kernel: SelfKernel) -> Self {
        self.self_kernel = Some(kernel);
        self.validated = false;
        self
    }

    pub fn with_clock_rate(mut self, r: f64) -> Self {
        self.clock_rate = r;
        self
    }

    #[inline]
    pub fn sigma(&self, u: f64, z: &Particle) -> f64 {
        (self.sigma)(u, z)
    }

    #[inline]
    pub fn drift(&self, u: f64, z: &Particle) -> Point {
        (self.drift)(u, z)
    }

    #[inline]
    pub fn internal_drift(&self, u: f64, z: &Particle) -> Internal {
        match &self.internal_drift {
            Some(h) => h(u, z),
            None => [0.0; MAX_INTERNAL],
        }
    }

    pub fn has_internal_drift(&self) -> bool {
        self.internal_drift.is_some()
    }

    /// `H^∞_m`.
    pub fn h_inf(&self, mass: u64) -> f64 {
        (self.h_inf)(mass)
    }

    pub fn lambda(&self, u: f64) -> f64 {
        self.source.as_ref().map_or(0.0, |s| s.lambda(u))
    }

    pub fn is_validated(&self) -> bool {
        self.validated
    }

    /// Runs every validator and marks the spec as validated on success.
    pub fn validate(&mut self, dom: &LevelSetDomain, boxes: &InternalBoxSpec, opts: &AuditOptions, rng: &mut SimRng) -> Result<(), ModelError> {
        for k in &self.kernels {
            let ok = (1..=crate::selection::MAX_ARITY).contains(&k.arity_in)
                && (1..=crate::selection::MAX_ARITY).contains(&k.arity_out)
                && (k.arity_in, k.arity_out) != (1, 1);
            if !ok {
                return Err(ModelError::BadArity {
                    arity_in: k.arity_in,
                    arity_out: k.arity_out,
                });
            }
        }
        if let Err((mass, mu)) = boxes.check_ordered(opts.max_mass) {
            return Err(ModelError::EmptyInternalBox { mass, mu });
        }
        validate_coefficient_bounds(self, dom, boxes, opts, rng)?;
        validate_drift_tangency(self, dom, boxes, opts, rng)?;
        validate_internal_drift_signs(self, boxes, opts, rng)?;
        audit_kernels(self, dom, boxes, opts, rng)?;
        self.validated = true;
        Ok(())
    }
}

/// Sample sizes and ranges for the validators.
#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub samples: usize,
    pub max_mass: u64,
    pub max_time: f64,
    pub tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            samples: 10_000,
            max_mass: 64,
            max_time: 10.0,
            tol: 1e-9,
        }
    }
}

/// Worst value seen by a passing validator.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub check: &'static str,
    pub worst: f64,
    pub samples: usize,
}

fn random_internal(boxes: &InternalBoxSpec, mass: u64, rng: &mut SimRng) -> Internal {
    let mut x = [0.0; MAX_INTERNAL];
    for (mu, c) in x.iter_mut().enumerate().take(boxes.dim()) {
        let (a, b) = boxes.bounds(mass, mu);
        *c = a + (b - a) * uniform(rng);
    }
    x
}

fn random_particle(dom: &LevelSetDomain, boxes: &InternalBoxSpec, opts: &AuditOptions, boundary: bool, rng: &mut SimRng) -> Particle {
    let mass = rng.random_range(1..=opts.max_mass);
    let position = if boundary {
        dom.sample_boundary(rng)
    } else {
        dom.sample_interior(rng)
    };
    Particle {
        mass,
        position,
        internal: random_internal(boxes, mass, rng),
    }
}

fn failed(check: &'static str, value: f64, u: f64, z: Particle) -> ModelError {
    ModelError::ValidationFailed {
        check,
        value,
        u,
        particle: Box::new(z),
    }
}

/// `0 < σ ≤ σ_∞` and `‖b‖ ≤ b_∞` on sampled points.
pub fn validate_coefficient_bounds(
    spec: &ModelSpec,
    dom: &LevelSetDomain,
    boxes: &InternalBoxSpec,
    opts: &AuditOptions,
    rng: &mut SimRng,
) -> Result<AuditReport, ModelError> {
    let mut worst: f64 = 0.0;
    for k in 0..opts.samples {
        let z = random_particle(dom, boxes, opts, k % 2 == 0, rng);
        let u = opts.max_time * uniform(rng);
        let s = spec.sigma(u, &z);
        if !(s > 0.0 && s <= spec.sigma_inf * (1.0 + opts.tol)) {
            return Err(failed("sigma bound", s, u, z));
        }
        let b = norm(&spec.drift(u, &z));
        if !(b <= spec.b_inf * (1.0 + opts.tol) + opts.tol) {
            return Err(failed("drift bound", b, u, z));
        }
        worst = worst.max(b);
    }
    Ok(AuditReport {
        check: "coefficient bounds",
        worst,
        samples: opts.samples,
    })
}

/// `max |b·n|` over sampled boundary points; fails above `opts.tol`.
pub fn validate_drift_tangency(
    spec: &ModelSpec,
    dom: &LevelSetDomain,
    boxes: &InternalBoxSpec,
    opts: &AuditOptions,
    rng: &mut SimRng,
) -> Result<AuditReport, ModelError> {
    let mut worst: f64 = 0.0;
    let mut worst_at = None;
    for _ in 0..opts.samples {
        let z = random_particle(dom, boxes, opts, true, rng);
        let u = opts.max_time * uniform(rng);
        let n = match dom.normal(&z.position) {
            Ok(n) => n,
            Err(_) => continue,
        };
        let v = dot(&spec.drift(u, &z), &n).abs();
        if v > worst {
            worst = v;
            worst_at = Some((u, z));
        }
    }
    match worst_at {
        Some((u, z)) if worst > opts.tol => Err(failed("drift tangency", worst, u, z)),
        _ => Ok(AuditReport {
            check: "drift tangency",
            worst,
            samples: opts.samples,
        }),
    }
}

/// `H_μ ≥ 0` on lower faces and `H_μ ≤ 0` on upper faces of `Γ_m`.
pub fn validate_internal_drift_signs(
    spec: &ModelSpec,
    boxes: &InternalBoxSpec,
    opts: &AuditOptions,
    rng: &mut SimRng,
) -> Result<AuditReport, ModelError> {
    let mut worst: f64 = 0.0;
    if boxes.dim() > 0 && spec.has_internal_drift() {
        for k in 0..opts.samples {
            let mass = rng.random_range(1..=opts.max_mass);
            let mu = k % boxes.dim();
            let upper = (k / boxes.dim()) % 2 == 1;
            let mut internal = random_internal(boxes, mass, rng);
            let (a, b) = boxes.bounds(mass, mu);
            internal[mu] = if upper { b } else { a };
            let z = Particle {
                mass,
                position: [0.0; 3],
                internal,
            };
            let u = opts.max_time * uniform(rng);
            let h = spec.internal_drift(u, &z)[mu];
            // outward component must not be positive
            let outward = if upper { h } else { -h };
            if outward > opts.tol {
                return Err(failed("internal drift sign", h, u, z));
            }
            worst = worst.max(outward);
        }
    }
    Ok(AuditReport {
        check: "internal drift sign",
        worst,
        samples: opts.samples,
    })
}

/// Symmetry, exact mass preservation, closure of products in `𝔉` and the
/// majorant bound, for every kernel and the self-kernel.
pub fn audit_kernels(
    spec: &ModelSpec,
    dom: &LevelSetDomain,
    boxes: &InternalBoxSpec,
    opts: &AuditOptions,
    rng: &mut SimRng,
) -> Result<AuditReport, ModelError> {
    let fact = crate::selection::factorial;
    let mut worst: f64 = 0.0;
    let in_space = |w: &Particle| w.mass > 0 && dom.contains(&w.position) && boxes.contains(w, 1e-9);
    for kernel in &spec.kernels {
        for _ in 0..opts.samples {
            let zs: Vec<Particle> = (0..kernel.arity_in).map(|_| random_particle(dom, boxes, opts, false, rng)).collect();
            let u = opts.max_time * uniform(rng);
            let rate = kernel.rate(u, &zs);
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(failed("kernel rate sign", rate, u, zs[0]));
            }
            let mut rev = zs.clone();
            rev.reverse();
            let shift = 1.min(rev.len() - 1);
            rev.rotate_left(shift);
            let r2 = kernel.rate(u, &rev);
            if (r2 - rate).abs() > 1e-9 * rate.abs().max(1.0) {
                return Err(failed("kernel symmetry", r2 - rate, u, zs[0]));
            }
            let mass_prod: f64 = zs.iter().map(|z| z.mass as f64).product();
            let ratio = rate / (fact(kernel.arity_in) * fact(kernel.arity_out) * spec.k_inf * mass_prod);
            if rate > 0.0 && !(ratio <= 1.0 + 1e-9) {
                return Err(failed("kernel majorant", ratio, u, zs[0]));
            }
            worst = worst.max(if rate > 0.0 { ratio } else { 0.0 });
            let ws = kernel.products(u, &zs, rng);
            let m_in: u64 = zs.iter().map(|z| z.mass).sum();
            let m_out: u64 = ws.iter().map(|w| w.mass).sum();
            if ws.len() != kernel.arity_out || m_in != m_out {
                return Err(failed("kernel mass preservation", m_out as f64 - m_in as f64, u, zs[0]));
            }
            if let Some(w) = ws.iter().find(|w| !in_space(w)) {
                return Err(failed("kernel product in configuration space", w.mass as f64, u, *w));
            }
        }
    }
    if let Some(k) = &spec.self_kernel {
        for _ in 0..opts.samples {
            let z = random_particle(dom, boxes, opts, false, rng);
            let u = opts.max_time * uniform(rng);
            let rate = k.rate(u, &z);
            let ratio = rate / (k.k_self * z.mass as f64);
            if !(rate >= 0.0) || (rate > 0.0 && !(ratio <= 1.0 + 1e-9)) {
                return Err(failed("self-kernel majorant", ratio, u, z));
            }
            let w = k.product(u, &z, rng);
            if w.mass != z.mass {
                return Err(failed("self-kernel mass preservation", w.mass as f64 - z.mass as f64, u, z));
            }
            if !in_space(&w) {
                return Err(failed("self-kernel product in configuration space", w.mass as f64, u, w));
            }
        }
    }
    Ok(AuditReport {
        check: "kernel audit",
        worst,
        samples: opts.samples,
    })
}

/// Internal-drift step: `X_μ + c_N⁻² H_μ` clamped to `[a_μ(m), b_μ(m)]`.
pub fn j_id_step(spec: &ModelSpec, boxes: &InternalBoxSpec, u: f64, z: &Particle, c_n: f64) -> Internal {
    let mut x = z.internal;
    if boxes.dim() == 0 || !spec.has_internal_drift() {
        return x;
    }
    let h = spec.internal_drift(u, z);
    let s = 1.0 / (c_n * c_n);
    for mu in 0..boxes.dim() {
        let (a, b) = boxes.bounds(z.mass, mu);
        x[mu] = (x[mu] + s * h[mu]).min(b).max(a);
    }
    x
}
