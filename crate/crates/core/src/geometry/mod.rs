//! Level-set description of the physical domain and the reflecting
//! displacement map.
//!
//! A domain is `{x : ω(x) < 0}` for a C² function `ω` whose gradient has norm
//! larger than one on the zero set. Particles live in the closure, and every
//! diffusive displacement is pushed through [`LevelSetDomain::gamma`], which
//! folds the straight segment back into the domain by specular reflection.

mod domains;
mod reflect;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

pub use domains::{BallLevelSet, PolyTerm, PolynomialLevelSet, SuperellipseLevelSet};
pub use reflect::{reflect_direction, Bounce, GammaStats, GammaTrace};

use crate::rng::SimRng;
use crate::vecops::{add_scaled, dot, norm};

/// A point of ℝ^{d1}; components beyond the domain dimension are zero.
pub type Point = [f64; 3];

pub const MAX_DIM: usize = 3;

/// Closure-membership tolerance on `ω`.
pub const TOL_BOUNDARY: f64 = 1e-9;
/// Below this gradient norm the outward normal is considered undefined.
pub const TOL_GRAD: f64 = 1e-12;
/// Maximum number of reflections per displacement before the residual path
/// is absorbed by the nearest-point projection.
pub const REFLECTION_CAP: u32 = 64;
/// `|k̂·n|` below this at a hit counts as a grazing contact.
pub const GRAZING_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate level-set gradient at {point:?} (norm {norm:e})")]
    DegenerateGradient { point: Point, norm: f64 },
    #[error("projection into the domain failed from {point:?}")]
    ProjectionFailed { point: Point },
    #[error("spatial dimension must be 1, 2 or 3 (got {0})")]
    BadDimension(usize),
    #[error("hessian bound must be finite and positive (got {0})")]
    BadHessianBound(f64),
    #[error("level set has no interior point inside the bounding box")]
    EmptyDomain,
    #[error("level set is non-positive at {0:?} on the bounding box surface; domain not contained in the box")]
    Unbounded(Point),
    #[error("gradient norm {norm} <= 1 at boundary point {point:?}; renormalise ω")]
    GradientNormalization { point: Point, norm: f64 },
}

/// Scalar field `ω` with its gradient.
pub trait LevelSet: Send + Sync + fmt::Debug {
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Point;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub lo: Point,
    pub hi: Point,
}

impl BoundingBox {
    pub fn diagonal(&self, dim: usize) -> f64 {
        (0..dim)
            .map(|i| (self.hi[i] - self.lo[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Bounded domain `Ω = {ω < 0}` with the curvature constants used by the
/// reflection estimates.
#[derive(Clone)]
pub struct LevelSetDomain {
    name: String,
    level_set: Arc<dyn LevelSet>,
    dim: usize,
    hess_bound: f64,
    bbox: BoundingBox,
    b0: f64,
    a0: f64,
    delta: f64,
    diameter: f64,
    tol_hit: f64,
    interior: Point,
    min_boundary_grad: f64,
}

impl fmt::Debug for LevelSetDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSetDomain")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("hess_bound", &self.hess_bound)
            .field("bbox", &self.bbox)
            .field("b0", &self.b0)
            .field("a0", &self.a0)
            .field("delta", &self.delta)
            .finish()
    }
}

impl LevelSetDomain {
    /// Builds and validates a domain.
    ///
    /// `hess_bound` must bound the operator norm of the Hessian of `ω` over the
    /// convex hull of the closure; [`LevelSetDomain::audit_hess_bound`] checks
    /// it by finite differences. The boundary-shell half-width `delta` is
    /// estimated from the smallest gradient norm found on sampled boundary
    /// points.
    pub fn new(
        name: impl Into<String>,
        level_set: Arc<dyn LevelSet>,
        dim: usize,
        hess_bound: f64,
        bbox: BoundingBox,
    ) -> Result<Self, GeometryError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(GeometryError::BadDimension(dim));
        }
        if !(hess_bound.is_finite() && hess_bound > 0.0) {
            return Err(GeometryError::BadHessianBound(hess_bound));
        }
        let diameter = bbox.diagonal(dim);
        let mut dom = LevelSetDomain {
            name: name.into(),
            level_set,
            dim,
            hess_bound,
            bbox,
            b0: 0.5 * hess_bound,
            a0: 2.0 * hess_bound,
            delta: 0.0,
            diameter,
            tol_hit: 1e-12 * diameter,
            interior: [0.0; 3],
            min_boundary_grad: 0.0,
        };
        dom.interior = dom.find_interior_point()?;
        dom.check_box_surface()?;

        let mut min_grad = f64::INFINITY;
        for p in dom.boundary_grid(256) {
            let g = norm(&dom.gradient(&p));
            if g <= 1.0 {
                return Err(GeometryError::GradientNormalization { point: p, norm: g });
            }
            min_grad = min_grad.min(g);
        }
        dom.min_boundary_grad = min_grad;
        // gradient is hess_bound-Lipschitz, so within distance (min_grad-1)/H
        // of the boundary the gradient norm stays above one
        let delta0 = (min_grad - 1.0) / hess_bound;
        dom.delta = (0.5 * delta0).min(0.5 / dom.b0) * (1.0 - 1e-6);
        Ok(dom)
    }

    /// Interval `[-L, L]` with `ω(x) = (x² - L²)/L`.
    pub fn interval(half_length: f64) -> Result<Self, GeometryError> {
        let ls = BallLevelSet::new([0.0; 3], half_length, 1);
        Self::new(
            "interval",
            Arc::new(ls),
            1,
            2.0 / half_length,
            BoundingBox {
                lo: [-half_length, 0.0, 0.0],
                hi: [half_length, 0.0, 0.0],
            },
        )
    }

    /// Ball of radius `R` centred at the origin, `ω(x) = (‖x‖² - R²)/R`.
    pub fn ball(dim: usize, radius: f64) -> Result<Self, GeometryError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(GeometryError::BadDimension(dim));
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..dim {
            lo[i] = -radius;
            hi[i] = radius;
        }
        Self::new(
            "ball",
            Arc::new(BallLevelSet::new([0.0; 3], radius, dim)),
            dim,
            2.0 / radius,
            BoundingBox { lo, hi },
        )
    }

    /// Box `[-L, L]^d` with rounded corners: `ω = c(Σ (x_i/L)⁴ - 1)`.
    pub fn box_smooth(dim: usize, half_width: f64) -> Result<Self, GeometryError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(GeometryError::BadDimension(dim));
        }
        let ls = SuperellipseLevelSet::new(dim, half_width);
        let hess = ls.hess_bound();
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..dim {
            lo[i] = -half_width;
            hi[i] = half_width;
        }
        Self::new("box_smooth", Arc::new(ls), dim, hess, BoundingBox { lo, hi })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn hess_bound(&self) -> f64 {
        self.hess_bound
    }
    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }
    /// `B₀ = ½‖∇∇ω‖`.
    pub fn b0(&self) -> f64 {
        self.b0
    }
    /// `A₀ = 2‖∇∇ω‖`.
    pub fn a0(&self) -> f64 {
        self.a0
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
    pub fn tol_hit(&self) -> f64 {
        self.tol_hit
    }
    pub fn interior_point(&self) -> Point {
        self.interior
    }
    pub fn min_boundary_gradient(&self) -> f64 {
        self.min_boundary_grad
    }

    #[inline]
    pub fn omega(&self, x: &Point) -> f64 {
        self.level_set.value(x)
    }

    #[inline]
    pub fn gradient(&self, x: &Point) -> Point {
        self.level_set.gradient(x)
    }

    /// Closure membership with the numerical shell `ω ≤ TOL_BOUNDARY`.
    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        self.omega(x) <= TOL_BOUNDARY
    }

    /// Outward unit normal `∇ω/‖∇ω‖`.
    pub fn normal(&self, x: &Point) -> Result<Point, GeometryError> {
        let g = self.gradient(x);
        let n = norm(&g);
        if !(n >= TOL_GRAD) {
            return Err(GeometryError::DegenerateGradient { point: *x, norm: n });
        }
        Ok([g[0] / n, g[1] / n, g[2] / n])
    }

    /// Unit vector in the first `dim` components drawn uniformly on the sphere.
    pub fn random_direction(&self, rng: &mut SimRng) -> Point {
        loop {
            let z = crate::rng::normal_vector(rng, self.dim);
            let n = norm(&z);
            if n > 1e-12 {
                return [z[0] / n, z[1] / n, z[2] / n];
            }
        }
    }

    /// Uniform point of `Ω` by rejection from the bounding box.
    pub fn sample_interior(&self, rng: &mut SimRng) -> Point {
        loop {
            let mut x = [0.0; 3];
            for (i, c) in x.iter_mut().enumerate().take(self.dim) {
                *c = rng.random_range(self.bbox.lo[i]..=self.bbox.hi[i]);
            }
            if self.omega(&x) < 0.0 {
                return x;
            }
        }
    }

    /// Boundary point along a random ray from the interior reference point.
    pub fn sample_boundary(&self, rng: &mut SimRng) -> Point {
        loop {
            let dir = self.random_direction(rng);
            if let Some(p) = self.boundary_along(&self.interior, &dir) {
                return p;
            }
        }
    }

    /// Deterministic set of boundary points: first crossings of rays from the
    /// interior reference point in roughly `count` evenly spread directions.
    pub fn boundary_grid(&self, count: usize) -> Vec<Point> {
        directions(self.dim, count)
            .iter()
            .filter_map(|d| self.boundary_along(&self.interior, d))
            .collect()
    }

    fn boundary_along(&self, from: &Point, dir: &Point) -> Option<Point> {
        let len = 2.0 * self.diameter + 1.0;
        self.first_hit(from, dir, len)
            .map(|t| add_scaled(from, t, dir))
    }

    fn find_interior_point(&self) -> Result<Point, GeometryError> {
        let centre: Point = std::array::from_fn(|i| {
            if i < self.dim {
                0.5 * (self.bbox.lo[i] + self.bbox.hi[i])
            } else {
                0.0
            }
        });
        if self.omega(&centre) < 0.0 {
            return Ok(centre);
        }
        let res = match self.dim {
            1 => 4097,
            2 => 129,
            _ => 33,
        };
        let mut best = (f64::INFINITY, centre);
        for p in self.box_grid(res) {
            let w = self.omega(&p);
            if w < best.0 {
                best = (w, p);
            }
        }
        if best.0 < 0.0 {
            Ok(best.1)
        } else {
            Err(GeometryError::EmptyDomain)
        }
    }

    fn box_grid(&self, res: usize) -> Vec<Point> {
        let mut pts = Vec::new();
        let total = res.pow(self.dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut p = [0.0; 3];
            for (i, c) in p.iter_mut().enumerate().take(self.dim) {
                let k = rem % res;
                rem /= res;
                let s = (k as f64 + 0.5) / res as f64;
                *c = self.bbox.lo[i] + s * (self.bbox.hi[i] - self.bbox.lo[i]);
            }
            pts.push(p);
        }
        pts
    }

    // A nonpositive value of ω on the box surface means the zero set reaches
    // outside the box (or touches it); the domain must sit strictly inside.
    fn check_box_surface(&self) -> Result<(), GeometryError> {
        let res: usize = match self.dim {
            1 => 1,
            2 => 257,
            _ => 41,
        };
        let pad = 1e-9 * self.diameter.max(1.0);
        for face in 0..self.dim {
            for side in [0, 1] {
                let fixed = if side == 0 {
                    self.bbox.lo[face] - pad
                } else {
                    self.bbox.hi[face] + pad
                };
                let others: Vec<usize> = (0..self.dim).filter(|&i| i != face).collect();
                let total = res.pow(others.len() as u32);
                for idx in 0..total {
                    let mut rem = idx;
                    let mut p = [0.0; 3];
                    p[face] = fixed;
                    for &i in &others {
                        let k = rem % res;
                        rem /= res;
                        let s = k as f64 / (res - 1).max(1) as f64;
                        p[i] = self.bbox.lo[i] - pad + s * (self.bbox.hi[i] - self.bbox.lo[i] + 2.0 * pad);
                    }
                    if self.omega(&p) <= 0.0 {
                        return Err(GeometryError::Unbounded(p));
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest finite-difference Hessian operator norm observed over `samples`
    /// random points of the domain. Callers compare it with `hess_bound`.
    pub fn audit_hess_bound(&self, samples: usize, rng: &mut SimRng) -> f64 {
        let h = 1e-5 * self.diameter.max(1e-3);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = self.sample_interior(rng);
            let mut hess = [[0.0; 3]; 3];
            for j in 0..self.dim {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let gp = self.gradient(&xp);
                let gm = self.gradient(&xm);
                for i in 0..self.dim {
                    hess[i][j] = (gp[i] - gm[i]) / (2.0 * h);
                }
            }
            for i in 0..self.dim {
                for j in 0..i {
                    let s = 0.5 * (hess[i][j] + hess[j][i]);
                    hess[i][j] = s;
                    hess[j][i] = s;
                }
            }
            worst = worst.max(symmetric_operator_norm(&hess, self.dim));
        }
        worst
    }

    /// Fraction of the domain volume in each slab `edges[b] ≤ x_axis < edges[b+1]`,
    /// by midpoint quadrature on a regular grid over the bounding box.
    pub fn slab_fractions(&self, axis: usize, edges: &[f64], resolution: usize) -> Vec<f64> {
        let nb = edges.len().saturating_sub(1);
        let mut counts = vec![0.0; nb];
        let mut total = 0.0;
        for p in self.box_grid(resolution) {
            if self.omega(&p) >= 0.0 {
                continue;
            }
            total += 1.0;
            let v = p[axis];
            if let Some(b) = bin_index(edges, v) {
                counts[b] += 1.0;
            }
        }
        if total > 0.0 {
            for c in counts.iter_mut() {
                *c /= total;
            }
        }
        counts
    }
}

/// Bin of `v` for monotone `edges`; the last bin is closed on the right.
pub(crate) fn bin_index(edges: &[f64], v: f64) -> Option<usize> {
    let nb = edges.len().checked_sub(1)?;
    if nb == 0 || !(v >= edges[0] && v <= edges[nb]) {
        return None;
    }
    let b = edges.partition_point(|&e| e <= v).saturating_sub(1);
    Some(b.min(nb - 1))
}

fn symmetric_operator_norm(m: &[[f64; 3]; 3], dim: usize) -> f64 {
    // power iteration on m², whose top eigenvalue is the squared spectral norm
    let mut v = [1.0, 0.7, 0.3];
    for c in v.iter_mut().skip(dim) {
        *c = 0.0;
    }
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut w = [0.0; 3];
        for i in 0..dim {
            for j in 0..dim {
                w[i] += m[i][j] * v[j];
            }
        }
        let mut w2 = [0.0; 3];
        for i in 0..dim {
            for j in 0..dim {
                w2[i] += m[i][j] * w[j];
            }
        }
        let n = norm(&w2);
        if n == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &w2) / dot(&v, &v);
        v = [w2[0] / n, w2[1] / n, w2[2] / n];
    }
    lambda.max(0.0).sqrt()
}

fn directions(dim: usize, count: usize) -> Vec<Point> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|i| {
                let a = 2.0 * PI * (i as f64 + 0.5) / count as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect(),
        _ => {
            // Fibonacci sphere
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - y * y).sqrt();
                    let th = golden * i as f64;
                    [r * th.cos(), y, r * th.sin()]
                })
                .collect()
        }
    }
}
