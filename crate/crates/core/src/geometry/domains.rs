use serde::{Deserialize, Serialize};

use super::{LevelSet, Point};

/// `ω(x) = (‖x - c‖² - R²)/R`, so `‖∇ω‖ = 2` on the sphere and the Hessian
/// is `2I/R`.
#[derive(Clone, Debug)]
pub struct BallLevelSet {
    centre: Point,
    radius: f64,
    dim: usize,
}

impl BallLevelSet {
    pub fn new(centre: Point, radius: f64, dim: usize) -> Self {
        BallLevelSet { centre, radius, dim }
    }
}

impl LevelSet for BallLevelSet {
    #[inline]
    fn value(&self, x: &Point) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            let d = x[i] - self.centre[i];
            s += d * d;
        }
        (s - self.radius * self.radius) / self.radius
    }

    #[inline]
    fn gradient(&self, x: &Point) -> Point {
        let mut g = [0.0; 3];
        for i in 0..self.dim {
            g[i] = 2.0 * (x[i] - self.centre[i]) / self.radius;
        }
        g
    }
}

/// Rounded box `ω(x) = c(Σ (x_i/L)⁴ - 1)` with `c = L d^{1/4}/2`, which gives
/// `‖∇ω‖ ≥ 2` on the zero set. The Hessian is diagonal with entries
/// `12 c x_i²/L⁴ ≤ 12c/L²` inside the closure.
#[derive(Clone, Debug)]
pub struct SuperellipseLevelSet {
    dim: usize,
    half_width: f64,
    scale: f64,
}

impl SuperellipseLevelSet {
    pub fn new(dim: usize, half_width: f64) -> Self {
        let scale = half_width * (dim as f64).powf(0.25) / 2.0;
        SuperellipseLevelSet {
            dim,
            half_width,
            scale,
        }
    }

    pub fn hess_bound(&self) -> f64 {
        12.0 * self.scale / (self.half_width * self.half_width)
    }
}

impl LevelSet for SuperellipseLevelSet {
    fn value(&self, x: &Point) -> f64 {
        let s: f64 = (0..self.dim).map(|i| (x[i] / self.half_width).powi(4)).sum();
        self.scale * (s - 1.0)
    }

    fn gradient(&self, x: &Point) -> Point {
        let l4 = self.half_width.powi(4);
        let mut g = [0.0; 3];
        for i in 0..self.dim {
            g[i] = 4.0 * self.scale * x[i].powi(3) / l4;
        }
        g
    }
}

/// One monomial `coef · x^e0 · y^e1 · z^e2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coef: f64,
    pub exps: [u32; 3],
}

/// Polynomial level set given by its coefficient table.
#[derive(Clone, Debug)]
pub struct PolynomialLevelSet {
    terms: Vec<PolyTerm>,
}

impl PolynomialLevelSet {
    pub fn new(terms: Vec<PolyTerm>) -> Self {
        PolynomialLevelSet { terms }
    }

    pub fn terms(&self) -> &[PolyTerm] {
        &self.terms
    }
}

impl LevelSet for PolynomialLevelSet {
    fn value(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * x[0].powi(t.exps[0] as i32) * x[1].powi(t.exps[1] as i32) * x[2].powi(t.exps[2] as i32))
            .sum()
    }

    fn gradient(&self, x: &Point) -> Point {
        let mut g = [0.0; 3];
        for t in &self.terms {
            for (axis, gi) in g.iter_mut().enumerate() {
                let e = t.exps[axis];
                if e == 0 {
                    continue;
                }
                let mut v = t.coef * e as f64;
                for k in 0..3 {
                    let p = if k == axis { e - 1 } else { t.exps[k] };
                    v *= x[k].powi(p as i32);
                }
                *gi += v;
            }
        }
        g
    }
}
