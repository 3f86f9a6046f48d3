//! Numerical checks of the construction: generator consistency of the move
//! rule, martingale residuals along recorded paths, moment bounds, the
//! constant-kernel coagulation oracle, equilibrium uniformity and fictitious
//! time statistics.

mod martingale;
mod moments;

use std::fmt;
use std::sync::Arc;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::ensemble::{Internal, Particle, MAX_INTERNAL};
use crate::geometry::{LevelSetDomain, Point};
use crate::model::j_id_step;
use crate::rng::{normal_vector, SimRng};
use crate::simulator::System;
use crate::vecops::dot;

pub use martingale::martingale_residual;
pub use moments::{mass_slack, moment_bound_check, MomentBound, MomentReport, MomentRow};

/// Minimum pooled sample size of the uniformity test.
pub const MIN_UNIFORMITY_SAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("martingale residual needs a complete debug trace")]
    RequiresDebugTrace,
    #[error("kernel compensators need the exact-rate mode")]
    RequiresExactRates,
    #[error("too few samples: {have} < {need}")]
    TooFewSamples { have: usize, need: usize },
    #[error("too few replicas: {have} < {need}")]
    TooFewReplicas { have: usize, need: usize },
    #[error("test function violates the Neumann condition: |∇ω·∇f| = {value} at {point:?}")]
    NeumannViolated { value: f64, point: Point },
}

type Field<T> = Arc<dyn Fn(&Particle) -> T + Send + Sync>;

/// Test function `f` with its spatial gradient and Laplacian and its internal
/// gradient. `support_mass` is `R(f)`: `f` vanishes for masses above it
/// (0 means no restriction).
#[derive(Clone)]
pub struct TestFunction {
    f: Field<f64>,
    grad_x: Field<Point>,
    laplacian_x: Field<f64>,
    grad_internal: Field<Internal>,
    pub support_mass: u64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("support_mass", &self.support_mass).finish()
    }
}

impl TestFunction {
    pub fn new<F, G, L, H>(f: F, grad_x: G, laplacian_x: L, grad_internal: H, support_mass: u64) -> Self
    where
        F: Fn(&Particle) -> f64 + Send + Sync + 'static,
        G: Fn(&Particle) -> Point + Send + Sync + 'static,
        L: Fn(&Particle) -> f64 + Send + Sync + 'static,
        H: Fn(&Particle) -> Internal + Send + Sync + 'static,
    {
        TestFunction {
            f: Arc::new(f),
            grad_x: Arc::new(grad_x),
            laplacian_x: Arc::new(laplacian_x),
            grad_internal: Arc::new(grad_internal),
            support_mass,
        }
    }

    /// Function of position only.
    pub fn spatial<F, G, L>(f: F, grad_x: G, laplacian_x: L) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
        G: Fn(&Point) -> Point + Send + Sync + 'static,
        L: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        TestFunction::new(
            move |z| f(&z.position),
            move |z| grad_x(&z.position),
            move |z| laplacian_x(&z.position),
            |_| [0.0; MAX_INTERNAL],
            0,
        )
    }

    /// `f ≡ 1`.
    pub fn constant() -> Self {
        TestFunction::spatial(|_| 1.0, |_| [0.0; 3], |_| 0.0)
    }

    /// `f = π_m`.
    pub fn mass() -> Self {
        TestFunction::new(|z| z.mass as f64, |_| [0.0; 3], |_| 0.0, |_| [0.0; MAX_INTERNAL], 0)
    }

    /// `f(x) = (‖x‖² − R²)²`, compatible with reflection on the ball of
    /// radius `R` in dimension `dim`.
    pub fn ball_quartic(dim: usize, radius: f64) -> Self {
        let r2 = radius * radius;
        TestFunction::spatial(
            move |x| (dot(x, x) - r2).powi(2),
            move |x| {
                let c = 4.0 * (dot(x, x) - r2);
                [c * x[0], c * x[1], c * x[2]]
            },
            move |x| {
                let s = dot(x, x);
                8.0 * s + 4.0 * dim as f64 * (s - r2)
            },
        )
    }

    #[inline]
    pub fn value(&self, z: &Particle) -> f64 {
        (self.f)(z)
    }

    pub fn grad_x(&self, z: &Particle) -> Point {
        (self.grad_x)(z)
    }

    pub fn laplacian_x(&self, z: &Particle) -> f64 {
        (self.laplacian_x)(z)
    }

    pub fn grad_internal(&self, z: &Particle) -> Internal {
        (self.grad_internal)(z)
    }
}

/// `max |∇ω·∇f|` over a deterministic boundary grid; fails above `tol`.
pub fn neumann_check(dom: &LevelSetDomain, f: &TestFunction, points: usize, tol: f64) -> Result<f64, DiagnosticsError> {
    let mut worst: f64 = 0.0;
    for x in dom.boundary_grid(points) {
        let z = Particle::new(1, x);
        let v = dot(&dom.gradient(&x), &f.grad_x(&z)).abs();
        if v > tol {
            return Err(DiagnosticsError::NeumannViolated { value: v, point: x });
        }
        worst = worst.max(v);
    }
    Ok(worst)
}

/// `½σ²Δf + b·∇f + H·∇̂f` at `(u, z)`.
pub fn analytic_generator(sys: System<'_>, f: &TestFunction, u: f64, z: &Particle) -> f64 {
    let s = sys.model.sigma(u, z);
    let b = sys.model.drift(u, z);
    let h = sys.model.internal_drift(u, z);
    let gi = f.grad_internal(z);
    let internal: f64 = (0..sys.internal.dim()).map(|mu| h[mu] * gi[mu]).sum();
    0.5 * s * s * f.laplacian_x(z) + dot(&b, &f.grad_x(z)) + internal
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            samples: n,
        }
    }
}

/// Monte Carlo estimate of `c_N² E[f(z') − f(z)]` where `z'` is `z` after one
/// move: position `γ(x, σZ/c_N + b/c_N²)` and clamped internal drift step.
pub fn generator_estimate(
    sys: System<'_>,
    f: &TestFunction,
    z: &Particle,
    u: f64,
    c_n: f64,
    samples: usize,
    rng: &mut SimRng,
) -> Estimate {
    let sigma = sys.model.sigma(u, z);
    let b = sys.model.drift(u, z);
    let internal = j_id_step(sys.model, sys.internal, u, z, c_n);
    let f0 = f.value(z);
    let dim = sys.domain.dim();
    // Welford accumulation
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..samples {
        let g = normal_vector(rng, dim);
        let step: Point = std::array::from_fn(|i| sigma * g[i] / c_n + b[i] / (c_n * c_n));
        let w = Particle {
            mass: z.mass,
            position: sys.domain.gamma(&z.position, &step),
            internal,
        };
        let v = c_n * c_n * (f.value(&w) - f0);
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let var = if samples > 1 { m2 / (samples - 1) as f64 } else { 0.0 };
    Estimate {
        mean,
        std_error: (var / samples as f64).sqrt(),
        samples,
    }
}

/// Mean-field count density of the constant pair-merge kernel:
/// `n(t) = n0 / (1 + κ n0 t / 2)`.
pub fn coagulation_oracle(kappa: f64, n0: f64, t: f64) -> f64 {
    n0 / (1.0 + kappa * n0 * t / 2.0)
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
}

/// Chi-square of observed counts against expected fractions; adjacent bins
/// are merged until each has an expected count of at least 5.
pub fn chi_square(observed: &[u64], fractions: &[f64]) -> ChiSquareReport {
    let total: u64 = observed.iter().sum();
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0u64, 0.0);
    for (&o, &p) in observed.iter().zip(fractions) {
        o_acc += o;
        e_acc += p * total as f64;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0;
            e_acc = 0.0;
        }
    }
    if o_acc > 0 || e_acc > 0.0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(o), Some(e)) => {
                *o += o_acc;
                *e += e_acc;
            }
            _ => {
                obs.push(o_acc);
                exp.push(e_acc);
            }
        }
    }
    let statistic: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| if e > 0.0 { (o as f64 - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = obs.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN)
    };
    ChiSquareReport {
        statistic,
        dof,
        p_value,
        observed: obs,
        expected: exp,
    }
}

/// Chi-square of pooled positions along `axis` against the volume fractions
/// of `bins` equal slabs of the bounding box.
pub fn equilibrium_uniformity_check(
    positions: &[Point],
    dom: &LevelSetDomain,
    axis: usize,
    bins: usize,
) -> Result<ChiSquareReport, DiagnosticsError> {
    if positions.len() < MIN_UNIFORMITY_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            have: positions.len(),
            need: MIN_UNIFORMITY_SAMPLES,
        });
    }
    let bb = dom.bounding_box();
    let (lo, hi) = (bb.lo[axis], bb.hi[axis]);
    let edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
    let resolution = match dom.dim() {
        1 => 200 * bins,
        2 => 20 * bins,
        _ => 4 * bins,
    };
    let fractions = dom.slab_fractions(axis, &edges, resolution);
    let mut observed = vec![0u64; bins];
    for x in positions {
        let b = (((x[axis] - lo) / (hi - lo)) * bins as f64).floor();
        observed[(b.max(0.0) as usize).min(bins - 1)] += 1;
    }
    Ok(chi_square(&observed, &fractions))
}

/// Replica statistics of the fictitious time at the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct FictitiousTimeReport {
    pub replicas: usize,
    pub mean_offset: f64,
    pub mean_band: f64,
    pub exceed_fraction: f64,
    pub exceed_threshold: f64,
    pub exceed_band: f64,
    pub passed: bool,
}

/// `mean(u_T − T)` against `4(T/(rN))^{1/2}`, and the fraction of replicas
/// with `sup|u − t| ≥ N^{-1/4}` against `2(T+1)^{1/2} r^{-1/2} N^{-1/4}` plus a
/// four-sigma binomial allowance.
pub fn fictitious_time_check(offsets: &[f64], sups: &[f64], horizon: f64, clock_rate: f64, n_scale: u64) -> FictitiousTimeReport {
    let n = n_scale as f64;
    let r = offsets.len();
    let mean_offset = offsets.iter().sum::<f64>() / r as f64;
    let mean_band = 4.0 * (horizon / (clock_rate * n)).sqrt();
    let threshold = n.powf(-0.25);
    let exceed = sups.iter().filter(|&&s| s >= threshold).count();
    let exceed_fraction = exceed as f64 / sups.len().max(1) as f64;
    let p = (2.0 * (horizon + 1.0).sqrt() / clock_rate.sqrt() * threshold).min(1.0);
    let exceed_band = p + 4.0 * (p * (1.0 - p) / sups.len().max(1) as f64).sqrt();
    FictitiousTimeReport {
        replicas: r,
        mean_offset,
        mean_band,
        exceed_fraction,
        exceed_threshold: threshold,
        exceed_band,
        passed: mean_offset.abs() <= mean_band && exceed_fraction <= exceed_band,
    }
}
