// Ray/boundary intersection and the specular reflection map.

use super::{GeometryError, LevelSetDomain, Point, GRAZING_TOL, REFLECTION_CAP, TOL_GRAD};
use crate::vecops::{add, add_scaled, dot, norm, scale};

/// One specular bounce recorded by [`LevelSetDomain::gamma_traced`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounce {
    pub point: Point,
    pub incoming: Point,
    pub outgoing: Point,
    pub normal: Point,
}

/// Bookkeeping for one evaluation of the reflection map.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GammaStats {
    pub reflections: u32,
    /// Length travelled along straight segments.
    pub path_length: f64,
    /// Length handed to the nearest-point projection instead of being traced.
    pub residual: f64,
    pub cap_hit: bool,
    pub grazing: bool,
    pub projected: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaTrace {
    pub end: Point,
    pub bounces: Vec<Bounce>,
    pub stats: GammaStats,
}

/// Mirror `khat` in the plane orthogonal to `n`.
#[inline]
pub fn reflect_direction(khat: &Point, n: &Point) -> Point {
    add_scaled(khat, -2.0 * dot(khat, n), n)
}

impl LevelSetDomain {
    #[inline]
    fn omega_along(&self, x: &Point, khat: &Point, t: f64) -> f64 {
        self.omega(&add_scaled(x, t, khat))
    }

    /// Smallest `ϑ ∈ [0, len]` at which the ray `x + ϑ k̂` leaves `Ω`, or `None`
    /// when the whole segment stays in the closure.
    ///
    /// The segment is walked in substeps of `min(0.1/H, len/16)`. A substep is
    /// cleared when a curvature bound (`H` = Hessian bound) proves `ω ≤ 0` on
    /// it; otherwise it is split until cleared, until a positive value brackets
    /// the crossing, or until it is shorter than `tol_hit`. Brackets are
    /// refined by bisection and the inside end is returned.
    pub fn first_hit(&self, x: &Point, khat: &Point, len: f64) -> Option<f64> {
        if !(len > 0.0) {
            return None;
        }
        let h = self.hess_bound;
        let w0 = self.omega(x);
        let w_end = self.omega_along(x, khat, len);
        if w_end <= 0.0 {
            if w0.max(w_end) + 0.125 * h * len * len <= 0.0 {
                return None;
            }
            let g0 = dot(&self.gradient(x), khat);
            if w0.max(w0 + g0 * len + 0.5 * h * len * len) <= 0.0 {
                return None;
            }
        }

        let step = (0.1 / h).min(len / 16.0);
        let mut a = 0.0;
        let mut wa = w0;
        loop {
            let last = a + step >= len;
            let b = if last { len } else { a + step };
            let wb = if last { w_end } else { self.omega_along(x, khat, b) };
            if let Some(t) = self.scan(x, khat, a, wa, b, wb, 0) {
                return Some(t);
            }
            if last {
                return None;
            }
            a = b;
            wa = wb;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn scan(&self, x: &Point, khat: &Point, a: f64, wa: f64, b: f64, wb: f64, depth: u32) -> Option<f64> {
        if wb > 0.0 {
            return Some(self.bisect(x, khat, a, b));
        }
        let h = self.hess_bound;
        let l = b - a;
        // interpolation bound: ω ≤ max(ωa, ωb) + H l²/8 on [a, b]
        if wa.max(wb) + 0.125 * h * l * l <= 0.0 {
            return None;
        }
        if l <= self.tol_hit || depth >= 64 {
            return None;
        }
        let ga = dot(&self.gradient(&add_scaled(x, a, khat)), khat);
        if wa.max(wa + ga * l + 0.5 * h * l * l) <= 0.0 {
            return None;
        }
        let m = 0.5 * (a + b);
        let wm = self.omega_along(x, khat, m);
        if let Some(t) = self.scan(x, khat, a, wa, m, wm, depth + 1) {
            return Some(t);
        }
        self.scan(x, khat, m, wm, b, wb, depth + 1)
    }

    fn bisect(&self, x: &Point, khat: &Point, mut lo: f64, mut hi: f64) -> f64 {
        while hi - lo > self.tol_hit {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.omega_along(x, khat, mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Point of the closure near `x + k`.
    ///
    /// Returns `x + k` when it is already inside. Otherwise tries the candidate
    /// `x + k - 2B₀‖∇ω(x)‖⁻¹‖k‖² n(x)`, which lies in the closure whenever `x`
    /// is a boundary point, `k` is tangential and `‖k‖ < ½B₀⁻¹`. Failing that,
    /// walks from the candidate along the inward normal and bisects back to
    /// the boundary.
    pub fn project_xi(&self, x: &Point, k: &Point) -> Result<Point, GeometryError> {
        let target = add(x, k);
        if self.omega(&target) <= 0.0 {
            return Ok(target);
        }
        let kk = dot(k, k);
        let gx = self.gradient(x);
        let gxn = norm(&gx);
        let mut start = target;
        if gxn >= TOL_GRAD {
            let y = add_scaled(&target, -2.0 * self.b0 * kk / (gxn * gxn), &gx);
            if self.omega(&y) <= 0.0 {
                return Ok(y);
            }
            start = y;
        }
        let n = match self.normal(&start) {
            Ok(n) => n,
            Err(_) => self.normal(x).map_err(|_| GeometryError::ProjectionFailed { point: target })?,
        };
        let gs = norm(&self.gradient(&start)).max(1.0);
        let mut s = (self.omega(&start) / gs).max(self.tol_hit);
        let mut found = false;
        for _ in 0..80 {
            if self.omega(&add_scaled(&start, -s, &n)) <= 0.0 {
                found = true;
                break;
            }
            s *= 2.0;
        }
        if !found {
            return Err(GeometryError::ProjectionFailed { point: target });
        }
        let mut out = 0.0;
        let mut inside = s;
        while inside - out > self.tol_hit {
            let mid = 0.5 * (out + inside);
            if mid <= out || mid >= inside {
                break;
            }
            if self.omega(&add_scaled(&start, -mid, &n)) <= 0.0 {
                inside = mid;
            } else {
                out = mid;
            }
        }
        Ok(add_scaled(&start, -inside, &n))
    }

    /// Reflecting displacement of `x` by `k`.
    pub fn gamma(&self, x: &Point, k: &Point) -> Point {
        self.trace_path(x, k, |_| {}).0
    }

    /// Reflecting displacement together with its reflection count and flags.
    pub fn gamma_with_stats(&self, x: &Point, k: &Point) -> (Point, GammaStats) {
        self.trace_path(x, k, |_| {})
    }

    /// Reflecting displacement with every bounce recorded.
    pub fn gamma_traced(&self, x: &Point, k: &Point) -> GammaTrace {
        let mut bounces = Vec::new();
        let (end, stats) = self.trace_path(x, k, |b| bounces.push(b));
        GammaTrace { end, bounces, stats }
    }

    fn trace_path<F: FnMut(Bounce)>(&self, x: &Point, k: &Point, mut on_bounce: F) -> (Point, GammaStats) {
        let mut stats = GammaStats::default();
        let len = norm(k);
        if len == 0.0 {
            return (*x, stats);
        }
        let mut pos = *x;
        if self.omega(&pos) > 0.0 {
            // start point inside the tolerance shell but outside Ω̄
            pos = self.project_xi(x, &[0.0; 3]).unwrap_or(*x);
        }
        let mut dir = scale(1.0 / len, k);
        let mut remaining = len;
        loop {
            let Some(theta) = self.first_hit(&pos, &dir, remaining) else {
                stats.path_length += remaining;
                let end = if stats.reflections == 0 && pos == *x {
                    add(x, k)
                } else {
                    add_scaled(&pos, remaining, &dir)
                };
                return (end, stats);
            };
            pos = add_scaled(&pos, theta, &dir);
            remaining -= theta;
            stats.path_length += theta;
            if remaining <= self.tol_hit {
                stats.path_length += remaining.max(0.0);
                return (pos, stats);
            }
            let n = match self.normal(&pos) {
                Ok(n) => n,
                Err(_) => return self.absorb(pos, remaining, dir, stats),
            };
            let kn = dot(&dir, &n);
            if kn < GRAZING_TOL {
                stats.grazing = true;
                return self.absorb(pos, remaining, dir, stats);
            }
            if stats.reflections >= REFLECTION_CAP {
                stats.cap_hit = true;
                return self.absorb(pos, remaining, dir, stats);
            }
            let out = reflect_direction(&dir, &n);
            on_bounce(Bounce {
                point: pos,
                incoming: dir,
                outgoing: out,
                normal: n,
            });
            stats.reflections += 1;
            dir = out;
        }
    }

    fn absorb(&self, pos: Point, remaining: f64, dir: Point, mut stats: GammaStats) -> (Point, GammaStats) {
        stats.projected = true;
        stats.residual = remaining;
        let end = self.project_xi(&pos, &scale(remaining, &dir)).unwrap_or(pos);
        (end, stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn interval() -> LevelSetDomain {
        LevelSetDomain::interval(1.0).unwrap()
    }
    fn disk() -> LevelSetDomain {
        LevelSetDomain::ball(2, 1.0).unwrap()
    }

    #[test]
    fn first_hit_examples() {
        let i = interval();
        let t = i.first_hit(&[0.5, 0.0, 0.0], &[1.0, 0.0, 0.0], 1.0).unwrap();
        assert!((t - 0.5).abs() < 1e-11);
        assert_eq!(i.first_hit(&[0.5, 0.0, 0.0], &[-1.0, 0.0, 0.0], 1.0), None);
        let d = disk();
        let t = d.first_hit(&[0.0; 3], &[1.0, 0.0, 0.0], 2.0).unwrap();
        assert!((t - 1.0).abs() < 1e-11);
        let p = add_scaled(&[0.0; 3], t, &[1.0, 0.0, 0.0]);
        assert!(d.omega(&p).abs() <= 1e-11);
    }

    #[test]
    fn reflect_direction_examples() {
        assert_eq!(reflect_direction(&[0.0, -1.0, 0.0], &[0.0, -1.0, 0.0]), [0.0, 1.0, 0.0]);
        assert_eq!(reflect_direction(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), [1.0, 0.0, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = reflect_direction(&[s, -s, 0.0], &[0.0, -1.0, 0.0]);
        assert!((r[0] - s).abs() < 1e-15 && (r[1] - s).abs() < 1e-15);
    }

    #[test]
    fn project_xi_examples() {
        let d = disk();
        let x = [0.2, 0.1, 0.0];
        assert_eq!(d.project_xi(&x, &[0.1, 0.0, 0.0]).unwrap(), [0.30000000000000004, 0.1, 0.0]);
        assert_eq!(d.project_xi(&[1.0, 0.0, 0.0], &[0.0; 3]).unwrap(), [1.0, 0.0, 0.0]);
        let k = [0.0, 0.1, 0.0];
        let p = d.project_xi(&[1.0, 0.0, 0.0], &k).unwrap();
        let off = norm(&crate::vecops::sub(&[1.0, 0.1, 0.0], &p));
        assert!(off <= 2.0 * d.b0() * 0.01 + d.tol_hit());
        assert!(d.omega(&p) <= 0.0);
    }

    #[test]
    fn project_xi_pushes_far_points_inside() {
        let d = disk();
        let p = d.project_xi(&[0.9, 0.0, 0.0], &[2.0, 1.0, 0.0]).unwrap();
        assert!(d.omega(&p) <= 0.0);
    }

    #[test]
    fn gamma_examples() {
        let d = disk();
        assert_eq!(d.gamma(&[0.0; 3], &[0.5, 0.0, 0.0]), [0.5, 0.0, 0.0]);
        let i = interval();
        let g = i.gamma(&[0.5, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        assert!((g[0] - 0.5).abs() < 1e-10);
        let g = i.gamma(&[0.0; 3], &[5.0, 0.0, 0.0]);
        assert!((g[0] - 1.0).abs() < 1e-10, "{g:?}");
    }

    #[test]
    fn gamma_zero_displacement() {
        let d = disk();
        assert_eq!(d.gamma(&[0.3, 0.3, 0.0], &[0.0; 3]), [0.3, 0.3, 0.0]);
    }

    #[test]
    fn interior_segment_is_exact() {
        let d = disk();
        let mut rng = stream(3);
        for _ in 0..10_000 {
            let x = d.sample_interior(&mut rng);
            let k = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.0];
            // min of -ω along the segment, from a fine sample
            let margin = (0..=200)
                .map(|i| -d.omega(&add_scaled(&x, i as f64 / 200.0, &k)))
                .fold(f64::INFINITY, f64::min);
            if margin > 0.01 {
                assert_eq!(d.gamma(&x, &k), add(&x, &k));
            }
        }
    }

    #[test]
    fn bounces_are_specular_and_path_length_conserved() {
        let dom = LevelSetDomain::box_smooth(2, 1.0).unwrap();
        let mut rng = stream(5);
        let mut bounced = 0;
        for _ in 0..5_000 {
            let x = dom.sample_interior(&mut rng);
            let dir = dom.random_direction(&mut rng);
            let k = scale(rng.random_range(0.0..3.0), &dir);
            let tr = dom.gamma_traced(&x, &k);
            for b in &tr.bounces {
                let n = dom.normal(&b.point).unwrap();
                let (ni, no) = (dot(&b.incoming, &n), dot(&b.outgoing, &n));
                assert!((ni + no).abs() < 1e-9);
                let ti = add_scaled(&b.incoming, -ni, &n);
                let to = add_scaled(&b.outgoing, -no, &n);
                assert!(norm(&crate::vecops::sub(&ti, &to)) < 1e-9);
                assert!((norm(&b.outgoing) - 1.0).abs() < 1e-12);
            }
            bounced += tr.bounces.len();
            let total = tr.stats.path_length + tr.stats.residual;
            assert!((total - norm(&k)).abs() < 1e-9, "{total} vs {}", norm(&k));
            assert!(dom.contains(&tr.end));
        }
        assert!(bounced > 1000);
    }

    #[test]
    fn grazing_and_cap_paths_stay_closed() {
        let d = disk();
        // tangential start on the boundary
        let (p, _) = d.gamma_with_stats(&[1.0, 0.0, 0.0], &[0.0, 0.3, 0.0]);
        assert!(d.contains(&p));
        // long path with many bounces
        let (p, st) = d.gamma_with_stats(&[0.0; 3], &[300.0, 0.7, 0.0]);
        assert!(d.contains(&p));
        assert!(st.reflections <= REFLECTION_CAP);
    }

    proptest! {
        #[test]
        fn reflect_keeps_unit_norm(a in 0.0f64..std::f64::consts::TAU, b in 0.0f64..std::f64::consts::TAU) {
            let k = [a.cos(), a.sin(), 0.0];
            let n = [b.cos(), b.sin(), 0.0];
            let r = reflect_direction(&k, &n);
            prop_assert!((norm(&r) - 1.0).abs() < 1e-12);
            prop_assert!((dot(&r, &n) + dot(&k, &n)).abs() < 1e-12);
        }

        #[test]
        fn gamma_closure_in_ball(seed in any::<u64>(), len in 0.0f64..4.0) {
            let d = LevelSetDomain::ball(3, 1.0).unwrap();
            let mut rng = stream(seed);
            let x = d.sample_interior(&mut rng);
            let k = scale(len, &d.random_direction(&mut rng));
            prop_assert!(d.contains(&d.gamma(&x, &k)));
        }
    }
}
