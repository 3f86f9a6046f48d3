//! The empirical particle measure `P = N⁻¹ Σ δ_{z_i}`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{bin_index, Point};
use crate::selection::SelectionWeights;

/// Maximum number of internal coordinates per particle.
pub const MAX_INTERNAL: usize = 4;

pub type Internal = [f64; MAX_INTERNAL];

/// One point of configuration space: integer mass, position in the closed
/// domain and internal coordinates in the mass-dependent box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub mass: u64,
    pub position: Point,
    pub internal: Internal,
}

impl Particle {
    pub fn new(mass: u64, position: Point) -> Self {
        Particle {
            mass,
            position,
            internal: [0.0; MAX_INTERNAL],
        }
    }

    pub fn with_internal(mut self, internal: &[f64]) -> Self {
        for (dst, src) in self.internal.iter_mut().zip(internal) {
            *dst = *src;
        }
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("particle index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("scale N must be positive")]
    ZeroScale,
}

pub type BoundsFn = Arc<dyn Fn(u64, usize) -> (f64, f64) + Send + Sync>;

/// Mass-dependent boxes `Γ_m = Π_μ [a_μ(m), b_μ(m)]` for the internal
/// coordinates.
#[derive(Clone)]
pub struct InternalBoxSpec {
    dim: usize,
    bounds: BoundsFn,
}

impl fmt::Debug for InternalBoxSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InternalBoxSpec").field("dim", &self.dim).finish()
    }
}

impl InternalBoxSpec {
    pub fn new(dim: usize, bounds: BoundsFn) -> Self {
        assert!(dim <= MAX_INTERNAL, "at most {MAX_INTERNAL} internal coordinates");
        InternalBoxSpec { dim, bounds }
    }

    /// No internal coordinates.
    pub fn empty() -> Self {
        InternalBoxSpec::new(0, Arc::new(|_, _| (0.0, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn bounds(&self, mass: u64, mu: usize) -> (f64, f64) {
        (self.bounds)(mass, mu)
    }

    pub fn contains(&self, z: &Particle, tol: f64) -> bool {
        (0..self.dim).all(|mu| {
            let (a, b) = self.bounds(z.mass, mu);
            z.internal[mu] >= a - tol && z.internal[mu] <= b + tol
        })
    }

    /// Checks `a_μ(m) ≤ b_μ(m)` for all masses up to `max_mass`.
    pub fn check_ordered(&self, max_mass: u64) -> Result<(), (u64, usize)> {
        for m in 1..=max_mass {
            for mu in 0..self.dim {
                let (a, b) = self.bounds(m, mu);
                if !(a <= b) {
                    return Err((m, mu));
                }
            }
        }
        Ok(())
    }
}

/// Observable used to bin particles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Mass,
    Position(usize),
    Internal(usize),
}

impl Axis {
    pub fn value(&self, z: &Particle) -> f64 {
        match *self {
            Axis::Mass => z.mass as f64,
            Axis::Position(i) => z.position[i],
            Axis::Internal(i) => z.internal[i],
        }
    }
}

/// Empirical measure at scale `N` with exact integer mass bookkeeping.
///
/// Particles are stored densely and removed by swap-remove, so indices are
/// not stable across removals. The mass-weighted selection tree mirrors the
/// particle array.
#[derive(Clone, Debug)]
pub struct EnsembleMeasure {
    scale: u64,
    particles: Vec<Particle>,
    weights: SelectionWeights,
    mass_total: u64,
}

impl EnsembleMeasure {
    pub fn new(scale: u64) -> Result<Self, EnsembleError> {
        if scale == 0 {
            return Err(EnsembleError::ZeroScale);
        }
        Ok(EnsembleMeasure {
            scale,
            particles: Vec::new(),
            weights: SelectionWeights::new(),
            mass_total: 0,
        })
    }

    pub fn from_particles(scale: u64, particles: Vec<Particle>) -> Result<Self, EnsembleError> {
        let mut e = EnsembleMeasure::new(scale)?;
        e.weights = SelectionWeights::from_masses(particles.iter().map(|p| p.mass));
        e.mass_total = particles.iter().map(|p| p.mass).sum();
        e.particles = particles;
        Ok(e)
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn get(&self, index: usize) -> Option<&Particle> {
        self.particles.get(index)
    }

    pub fn weights(&self) -> &SelectionWeights {
        &self.weights
    }

    /// `Σ mass_i` as an integer.
    pub fn mass_total(&self) -> u64 {
        self.mass_total
    }

    /// `P(π_m) = Σ mass_i / N`.
    pub fn mass(&self) -> f64 {
        self.mass_total as f64 / self.scale as f64
    }

    /// `P(𝔉) = n / N`.
    pub fn total_measure(&self) -> f64 {
        self.particles.len() as f64 / self.scale as f64
    }

    /// `N⁻¹ Σ f(z_i)`.
    pub fn integrate<F: Fn(&Particle) -> f64>(&self, f: F) -> f64 {
        self.particles.iter().map(f).sum::<f64>() / self.scale as f64
    }

    /// `Σ mass_i^q`, accumulated in integers; `None` on overflow.
    pub fn moment_sum(&self, q: u32) -> Option<u128> {
        self.particles.iter().try_fold(0u128, |acc, p| {
            (p.mass as u128).checked_pow(q).and_then(|v| acc.checked_add(v))
        })
    }

    /// `P(π_m^q)`. Exact integer accumulation before the division; falls back
    /// to floating point only if the integer sum overflows.
    pub fn moment(&self, q: u32) -> f64 {
        match self.moment_sum(q) {
            Some(s) => s as f64 / self.scale as f64,
            None => self.integrate(|p| (p.mass as f64).powi(q as i32)),
        }
    }

    pub fn add(&mut self, z: Particle) {
        self.mass_total += z.mass;
        self.weights.push(z.mass);
        self.particles.push(z);
    }

    /// Removes the particle at `index`; the last particle takes its slot.
    pub fn remove(&mut self, index: usize) -> Result<Particle, EnsembleError> {
        if index >= self.particles.len() {
            return Err(EnsembleError::IndexOutOfRange {
                index,
                len: self.particles.len(),
            });
        }
        let z = self.particles.swap_remove(index);
        self.weights.swap_remove(index);
        self.mass_total -= z.mass;
        Ok(z)
    }

    /// Overwrites the particle at `index`, returning the old one.
    pub fn replace(&mut self, index: usize, z: Particle) -> Result<Particle, EnsembleError> {
        let len = self.particles.len();
        let slot = self
            .particles
            .get_mut(index)
            .ok_or(EnsembleError::IndexOutOfRange { index, len })?;
        let old = std::mem::replace(slot, z);
        if old.mass != z.mass {
            self.mass_total = self.mass_total - old.mass + z.mass;
            self.weights.set(index, z.mass);
        }
        Ok(old)
    }

    /// Bin counts of `axis` over monotone `edges`; values outside the range
    /// are counted in the nearest end bin so that counts sum to `len()`.
    pub fn histogram(&self, axis: Axis, edges: &[f64]) -> Vec<u64> {
        let nb = edges.len().saturating_sub(1);
        let mut counts = vec![0u64; nb];
        if nb == 0 {
            return counts;
        }
        for p in &self.particles {
            let v = axis.value(p);
            let b = match bin_index(edges, v) {
                Some(b) => b,
                None if v < edges[0] => 0,
                None => nb - 1,
            };
            counts[b] += 1;
        }
        counts
    }

    /// Recomputes cached sums from scratch and compares them with the cache.
    pub fn cache_consistent(&self) -> bool {
        let cold: u64 = self.particles.iter().map(|p| p.mass).sum();
        cold == self.mass_total && self.weights.total() == cold && self.weights.len() == self.particles.len()
    }

    /// Multiset equality, ignoring storage order.
    pub fn same_multiset(&self, other: &EnsembleMeasure) -> bool {
        if self.scale != other.scale || self.len() != other.len() {
            return false;
        }
        let key = |p: &Particle| {
            let mut k = vec![p.mass as f64];
            k.extend(p.position);
            k.extend(p.internal);
            k
        };
        let mut a: Vec<Vec<f64>> = self.particles.iter().map(key).collect();
        let mut b: Vec<Vec<f64>> = other.particles.iter().map(key).collect();
        let cmp = |x: &Vec<f64>, y: &Vec<f64>| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal);
        a.sort_by(cmp);
        b.sort_by(cmp);
        a == b
    }
}

/// Storage-order equality: same scale and the same particle array.
impl PartialEq for EnsembleMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.scale == other.scale && self.particles == other.particles
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_masses(n: u64, masses: &[u64]) -> EnsembleMeasure {
        EnsembleMeasure::from_particles(n, masses.iter().map(|&m| Particle::new(m, [0.0; 3])).collect()).unwrap()
    }

    #[test]
    fn integrate_examples() {
        let e = with_masses(3, &[1, 2, 3]);
        assert_eq!(e.integrate(|p| p.mass as f64), 2.0);
        assert_eq!(e.integrate(|_| 1.0), 1.0);
        assert_eq!(e.integrate(|p| (p.mass * p.mass) as f64), 14.0 / 3.0);
        let e = with_masses(5, &[1, 1]);
        assert_eq!(e.integrate(|_| 1.0), 2.0 / 5.0);
    }

    #[test]
    fn moment_examples() {
        let e = with_masses(3, &[1, 2, 3]);
        assert_eq!(e.moment(0), 1.0);
        assert_eq!(e.moment(1), e.mass());
        assert_eq!(with_masses(4, &[2, 2]).moment(3), 4.0);
    }

    #[test]
    fn add_remove_examples() {
        let mut e = EnsembleMeasure::new(5).unwrap();
        e.add(Particle::new(5, [0.0; 3]));
        assert_eq!(e.mass(), 1.0);
        e.remove(0).unwrap();
        assert!(e.is_empty());
        assert_eq!(e.mass(), 0.0);
        assert_eq!(e.remove(0), Err(EnsembleError::IndexOutOfRange { index: 0, len: 0 }));

        let orig = with_masses(7, &[1, 4, 2]);
        let mut e = orig.clone();
        e.add(Particle::new(9, [0.1, 0.2, 0.0]));
        e.remove(3).unwrap();
        assert!(e.same_multiset(&orig));
    }

    #[test]
    fn replace_updates_cache() {
        let mut e = with_masses(2, &[1, 4]);
        e.replace(1, Particle::new(6, [0.0; 3])).unwrap();
        assert_eq!(e.mass_total(), 7);
        assert!(e.cache_consistent());
        assert!(e.replace(2, Particle::new(1, [0.0; 3])).is_err());
    }

    #[test]
    fn histogram_examples() {
        let edges = [0.0, 1.0, 2.0, 3.0];
        let e = EnsembleMeasure::new(1).unwrap();
        assert_eq!(e.histogram(Axis::Mass, &edges), vec![0, 0, 0]);
        let e = with_masses(1, &[2]);
        assert_eq!(e.histogram(Axis::Mass, &edges), vec![0, 0, 1]);
        let e = with_masses(1, &[1, 2, 5, 1, 0]);
        let h = e.histogram(Axis::Mass, &edges);
        assert_eq!(h.iter().sum::<u64>(), 5);
    }

    #[test]
    fn internal_box_contains() {
        let b = InternalBoxSpec::new(1, Arc::new(|m, _| ((m as f64).powf(2.0 / 3.0), m as f64)));
        let z = Particle::new(8, [0.0; 3]).with_internal(&[5.0]);
        assert!(b.contains(&z, 0.0));
        let z = Particle::new(8, [0.0; 3]).with_internal(&[3.0]);
        assert!(!b.contains(&z, 0.0));
        assert!(b.check_ordered(100).is_ok());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Add(u64),
        Remove(usize),
        Replace(usize, u64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (1u64..50).prop_map(Op::Add),
            (0usize..64).prop_map(Op::Remove),
            ((0usize..64), (1u64..50)).prop_map(|(i, m)| Op::Replace(i, m)),
        ]
    }

    proptest! {
        #[test]
        fn cache_matches_cold_recomputation(ops in prop::collection::vec(op(), 0..200)) {
            let mut e = EnsembleMeasure::new(10).unwrap();
            for o in ops {
                match o {
                    Op::Add(m) => e.add(Particle::new(m, [0.0; 3])),
                    Op::Remove(i) => { let _ = e.remove(i); }
                    Op::Replace(i, m) => { let _ = e.replace(i, Particle::new(m, [0.0; 3])); }
                }
                prop_assert!(e.cache_consistent());
            }
        }
    }
}
