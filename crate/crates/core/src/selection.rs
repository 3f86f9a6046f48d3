//! Particle-selection measures and majorant sampling of interaction tuples.
//!
//! `ν_n(P, B₁×…×B_n)` counts the injections `α: {1..n} → {1..len}` with
//! `z_{α(r)} ∈ B_r`, i.e. ordered tuples of *distinct* particles. The event
//! loop never enumerates tuples: it draws indices mass-weighted with
//! replacement from a Fenwick tree, throws away draws that repeat an index,
//! and thins the rest by `K/(i!·j!·K_∞·Π mass)`. Rejected draws are
//! fictitious jumps that leave the state unchanged.

use rand::Rng;
use thiserror::Error;

use crate::ensemble::{EnsembleMeasure, Particle};
use crate::model::{InteractionKernel, SelfKernel};
use crate::rng::{uniform, SimRng};

/// Largest supported interaction arity (inputs or outputs).
pub const MAX_ARITY: usize = 4;
/// Size cap of the brute-force injection oracle.
pub const ORACLE_CAP: usize = 8;
/// Largest number of ordered tuples enumerated by the exact-rate mode.
pub const EXACT_TUPLE_CAP: u64 = 20_000_000;

const MAJORANT_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("oracle input too large: {particles} particles, {targets} targets (cap {ORACLE_CAP})")]
    OracleTooLarge { particles: usize, targets: usize },
    #[error("majorant violated: acceptance ratio {ratio} > 1 (kernel rate {rate}, bound {bound})")]
    MajorantViolated { ratio: f64, rate: f64, bound: f64 },
    #[error("exact rates need {tuples} tuple evaluations (cap {EXACT_TUPLE_CAP})")]
    ExactRatesTooLarge { tuples: u64 },
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Cumulative mass tree over the particle array (binary indexed tree).
///
/// Supports O(log n) point updates, swap-removal mirroring the particle
/// array, and O(log n) draws of an index with probability `mass_i / Σ mass`.
#[derive(Clone, Debug, Default)]
pub struct SelectionWeights {
    values: Vec<u64>,
    // 1-based Fenwick array of length cap + 1; cap is a power of two
    tree: Vec<u64>,
    total: u64,
}

impl SelectionWeights {
    pub fn new() -> Self {
        SelectionWeights {
            values: Vec::new(),
            tree: vec![0; 2],
            total: 0,
        }
    }

    pub fn from_masses<I: IntoIterator<Item = u64>>(masses: I) -> Self {
        let values: Vec<u64> = masses.into_iter().collect();
        let mut w = SelectionWeights {
            values,
            tree: Vec::new(),
            total: 0,
        };
        w.rebuild(w.values.len().next_power_of_two().max(1));
        w
    }

    fn capacity(&self) -> usize {
        self.tree.len() - 1
    }

    fn rebuild(&mut self, cap: usize) {
        let mut tree = vec![0u64; cap + 1];
        for (i, &v) in self.values.iter().enumerate() {
            tree[i + 1] = v;
        }
        for i in 1..=cap {
            let j = i + (i & i.wrapping_neg());
            if j <= cap {
                tree[j] = tree[j].wrapping_add(tree[i]);
            }
        }
        self.total = self.values.iter().sum();
        self.tree = tree;
    }

    fn add_at(&mut self, index: usize, delta: u64, negative: bool) {
        let cap = self.capacity();
        let mut i = index + 1;
        while i <= cap {
            self.tree[i] = if negative {
                self.tree[i].wrapping_sub(delta)
            } else {
                self.tree[i].wrapping_add(delta)
            };
            i += i & i.wrapping_neg();
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn value(&self, index: usize) -> u64 {
        self.values[index]
    }

    pub fn push(&mut self, mass: u64) {
        if self.values.len() == self.capacity() {
            self.values.push(mass);
            let cap = (self.capacity() * 2).max(1);
            self.rebuild(cap);
            return;
        }
        self.values.push(mass);
        self.add_at(self.values.len() - 1, mass, false);
        self.total += mass;
    }

    pub fn set(&mut self, index: usize, mass: u64) {
        let old = self.values[index];
        if old == mass {
            return;
        }
        self.values[index] = mass;
        if mass > old {
            self.add_at(index, mass - old, false);
            self.total += mass - old;
        } else {
            self.add_at(index, old - mass, true);
            self.total -= old - mass;
        }
    }

    pub fn swap_remove(&mut self, index: usize) {
        let last = self.values.len() - 1;
        if index != last {
            let moved = self.values[last];
            self.set(index, moved);
        }
        self.set(last, 0);
        self.values.pop();
    }

    /// `Σ_{k < index} mass_k`.
    pub fn prefix_sum(&self, index: usize) -> u64 {
        let mut i = index;
        let mut s = 0u64;
        while i > 0 {
            s = s.wrapping_add(self.tree[i]);
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Index whose cumulative mass interval `[prefix, prefix + mass)`
    /// contains `target`.
    pub fn find(&self, target: u64) -> usize {
        debug_assert!(target < self.total);
        let cap = self.capacity();
        let mut pos = 0usize;
        let mut rem = target;
        let mut step = cap;
        while step > 0 {
            let next = pos + step;
            if next <= cap && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }

    /// Mass-weighted index draw.
    pub fn sample(&self, rng: &mut SimRng) -> Option<usize> {
        if self.total == 0 {
            return None;
        }
        Some(self.find(rng.random_range(0..self.total)))
    }
}

/// Counts injections `α` with `items[α(r)]` satisfying `targets[r]`, by
/// exhaustive enumeration.
pub fn count_injections_oracle<T>(items: &[T], targets: &[&dyn Fn(&T) -> bool]) -> Result<u64, SelectionError> {
    if items.len() > ORACLE_CAP || targets.len() > ORACLE_CAP {
        return Err(SelectionError::OracleTooLarge {
            particles: items.len(),
            targets: targets.len(),
        });
    }
    fn rec<T>(items: &[T], targets: &[&dyn Fn(&T) -> bool], r: usize, used: u32) -> u64 {
        if r == targets.len() {
            return 1;
        }
        (0..items.len())
            .filter(|&i| used & (1 << i) == 0 && (targets[r])(&items[i]))
            .map(|i| rec(items, targets, r + 1, used | (1 << i)))
            .sum()
    }
    Ok(rec(items, targets, 0, 0))
}

/// `ν_n` of an integer-weighted measure over at most eight atoms, by the
/// recursion
/// `ν_{n+1}(B₁…B_{n+1}) = ν_n(B₁…B_n)·P(B_{n+1}) − Σ_j ν_n(B₁…B_j∩B_{n+1}…B_n)`
/// with `ν₁(B) = P(B)`. `weights[a]` is the multiplicity of atom `a`; each box
/// is a bit set of atoms.
pub fn nu_recursion(weights: &[u64], boxes: &[u8]) -> i64 {
    debug_assert!(weights.len() <= 8);
    let measure = |b: u8| -> i64 {
        weights
            .iter()
            .enumerate()
            .filter(|(a, _)| b & (1 << a) != 0)
            .map(|(_, &w)| w as i64)
            .sum()
    };
    fn rec(measure: &dyn Fn(u8) -> i64, boxes: &[u8]) -> i64 {
        match boxes.len() {
            0 => 1,
            1 => measure(boxes[0]),
            n => {
                let last = boxes[n - 1];
                let head = &boxes[..n - 1];
                let mut v = rec(measure, head) * measure(last);
                let mut tmp = head.to_vec();
                for j in 0..head.len() {
                    tmp[j] = head[j] & last;
                    v -= rec(measure, &tmp);
                    tmp[j] = head[j];
                }
                v
            }
        }
    }
    rec(&measure, boxes)
}

/// An accepted interaction tuple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TupleDraw {
    indices: [usize; MAX_ARITY],
    len: usize,
    pub accept_ratio: f64,
}

impl TupleDraw {
    pub fn indices(&self) -> &[usize] {
        &self.indices[..self.len]
    }
}

/// Majorant term `K_∞ · P(π_m)^i` of one kernel's contribution to the total
/// rate (before the outer factor `N`).
pub fn majorant_rate(ensemble: &EnsembleMeasure, arity_in: usize, k_inf: f64) -> f64 {
    k_inf * ensemble.mass().powi(arity_in as i32)
}

/// Draws `i` indices mass-weighted with replacement and thins by the kernel's
/// majorant ratio. `Ok(None)` is a fictitious jump: a repeated index or a
/// rejected thinning step.
pub fn sample_tuple(
    ensemble: &EnsembleMeasure,
    kernel: &InteractionKernel,
    u: f64,
    k_inf: f64,
    rng: &mut SimRng,
) -> Result<Option<TupleDraw>, SelectionError> {
    let i = kernel.arity_in;
    let w = ensemble.weights();
    let mut indices = [0usize; MAX_ARITY];
    for r in 0..i {
        match w.sample(rng) {
            Some(idx) => indices[r] = idx,
            None => return Ok(None),
        }
    }
    for a in 0..i {
        for b in 0..a {
            if indices[a] == indices[b] {
                return Ok(None);
            }
        }
    }
    let parts = gather(ensemble, &indices[..i]);
    let tuple = &parts[..i];
    let rate = kernel.rate(u, tuple);
    let mass_product: f64 = tuple.iter().map(|p| p.mass as f64).product();
    let bound = factorial(i) * factorial(kernel.arity_out) * k_inf * mass_product;
    let ratio = if rate == 0.0 { 0.0 } else { rate / bound };
    if ratio > 1.0 + MAJORANT_SLACK || !ratio.is_finite() {
        return Err(SelectionError::MajorantViolated { ratio, rate, bound });
    }
    if uniform(rng) < ratio {
        Ok(Some(TupleDraw {
            indices,
            len: i,
            accept_ratio: ratio,
        }))
    } else {
        Ok(None)
    }
}

fn gather(ensemble: &EnsembleMeasure, indices: &[usize]) -> [Particle; MAX_ARITY] {
    let blank = Particle::new(0, [0.0; 3]);
    let mut out = [blank; MAX_ARITY];
    for (o, &i) in out.iter_mut().zip(indices) {
        *o = ensemble.particles()[i];
    }
    out
}

fn for_each_injection<F: FnMut(&[usize])>(n: usize, k: usize, f: &mut F) {
    fn rec<F: FnMut(&[usize])>(n: usize, k: usize, cur: &mut Vec<usize>, f: &mut F) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, k, cur, f);
                cur.pop();
            }
        }
    }
    let mut cur = Vec::with_capacity(k);
    rec(n, k, &mut cur, f);
}

fn check_exact_size(n: usize, k: usize) -> Result<(), SelectionError> {
    let tuples = (0..k).fold(1u64, |acc, r| acc.saturating_mul(n.saturating_sub(r) as u64));
    if tuples > EXACT_TUPLE_CAP {
        return Err(SelectionError::ExactRatesTooLarge { tuples });
    }
    Ok(())
}

/// `∫ K/(i!·j!) dν_i^N = N^{-i} Σ_{distinct ordered tuples} K/(i!·j!)`.
pub fn exact_rate(ensemble: &EnsembleMeasure, kernel: &InteractionKernel, u: f64) -> Result<f64, SelectionError> {
    let i = kernel.arity_in;
    check_exact_size(ensemble.len(), i)?;
    let mut sum = 0.0;
    let mut buf = Vec::with_capacity(i);
    for_each_injection(ensemble.len(), i, &mut |idx: &[usize]| {
        buf.clear();
        buf.extend(idx.iter().map(|&k| ensemble.particles()[k]));
        sum += kernel.rate(u, &buf);
    });
    let n = ensemble.scale() as f64;
    Ok(sum / (factorial(i) * factorial(kernel.arity_out)) / n.powi(i as i32))
}

/// Ordered distinct tuple drawn with probability proportional to the kernel
/// rate. `None` when every tuple has zero rate.
pub fn sample_tuple_exact(
    ensemble: &EnsembleMeasure,
    kernel: &InteractionKernel,
    u: f64,
    rng: &mut SimRng,
) -> Result<Option<TupleDraw>, SelectionError> {
    let i = kernel.arity_in;
    check_exact_size(ensemble.len(), i)?;
    let mut rates = Vec::new();
    let mut tuples = Vec::new();
    let mut buf = Vec::with_capacity(i);
    for_each_injection(ensemble.len(), i, &mut |idx: &[usize]| {
        buf.clear();
        buf.extend(idx.iter().map(|&k| ensemble.particles()[k]));
        rates.push(kernel.rate(u, &buf));
        tuples.push(idx.to_vec());
    });
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return Ok(None);
    }
    let target = uniform(rng) * total;
    let mut acc = 0.0;
    let mut pick = rates.len() - 1;
    for (k, r) in rates.iter().enumerate() {
        acc += r;
        if target < acc {
            pick = k;
            break;
        }
    }
    let mut indices = [0usize; MAX_ARITY];
    indices[..i].copy_from_slice(&tuples[pick]);
    Ok(Some(TupleDraw {
        indices,
        len: i,
        accept_ratio: 1.0,
    }))
}

/// Mass-weighted particle draw thinned by `K₁₁(z)/(K_self·mass)`.
pub fn sample_self(
    ensemble: &EnsembleMeasure,
    kernel: &SelfKernel,
    u: f64,
    rng: &mut SimRng,
) -> Result<Option<usize>, SelectionError> {
    let Some(idx) = ensemble.weights().sample(rng) else {
        return Ok(None);
    };
    let z = &ensemble.particles()[idx];
    let rate = kernel.rate(u, z);
    let bound = kernel.k_self * z.mass as f64;
    let ratio = if rate == 0.0 { 0.0 } else { rate / bound };
    if ratio > 1.0 + MAJORANT_SLACK || !ratio.is_finite() {
        return Err(SelectionError::MajorantViolated { ratio, rate, bound });
    }
    Ok((uniform(rng) < ratio).then_some(idx))
}

/// `N⁻¹ Σ_z K₁₁(z)`.
pub fn exact_self_rate(ensemble: &EnsembleMeasure, kernel: &SelfKernel, u: f64) -> f64 {
    ensemble.integrate(|z| kernel.rate(u, z))
}

/// Particle drawn with probability proportional to `K₁₁(z)`.
pub fn sample_self_exact(ensemble: &EnsembleMeasure, kernel: &SelfKernel, u: f64, rng: &mut SimRng) -> Option<usize> {
    let rates: Vec<f64> = ensemble.particles().iter().map(|z| kernel.rate(u, z)).collect();
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = uniform(rng) * total;
    let mut acc = 0.0;
    for (k, r) in rates.iter().enumerate() {
        acc += r;
        if target < acc {
            return Some(k);
        }
    }
    Some(rates.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn ens(masses: &[u64]) -> EnsembleMeasure {
        EnsembleMeasure::from_particles(
            masses.len() as u64,
            masses.iter().enumerate().map(|(i, &m)| Particle::new(m, [i as f64, 0.0, 0.0])).collect(),
        )
        .unwrap()
    }

    fn constant_pair(kappa: f64) -> InteractionKernel {
        InteractionKernel::new(
            2,
            1,
            move |_, _| kappa,
            |_, zs, _| vec![Particle::new(zs.iter().map(|z| z.mass).sum(), zs[0].position)],
        )
    }

    #[test]
    fn fenwick_find_and_prefix() {
        let w = SelectionWeights::from_masses([3, 1, 4, 1, 5]);
        assert_eq!(w.total(), 14);
        assert_eq!(w.prefix_sum(3), 8);
        let expect = [0, 0, 0, 1, 2, 2, 2, 2, 3, 4, 4, 4, 4, 4];
        for (t, &e) in expect.iter().enumerate() {
            assert_eq!(w.find(t as u64), e, "target {t}");
        }
    }

    proptest! {
        #[test]
        fn fenwick_tracks_mutations(init in prop::collection::vec(1u64..20, 1..40),
                                    ops in prop::collection::vec((0usize..60, 0u64..20, any::<bool>()), 0..80)) {
            let mut w = SelectionWeights::from_masses(init.clone());
            let mut mirror = init;
            for (i, m, remove) in ops {
                if mirror.is_empty() || (!remove && i % 3 == 0) {
                    let m = m.max(1);
                    w.push(m);
                    mirror.push(m);
                } else if remove {
                    let i = i % mirror.len();
                    w.swap_remove(i);
                    mirror.swap_remove(i);
                } else {
                    let i = i % mirror.len();
                    let m = m.max(1);
                    w.set(i, m);
                    mirror[i] = m;
                }
                prop_assert_eq!(w.total(), mirror.iter().sum::<u64>());
                for k in 0..=mirror.len() {
                    prop_assert_eq!(w.prefix_sum(k), mirror[..k].iter().sum::<u64>());
                }
                if w.total() > 0 {
                    let mut acc = 0;
                    for (k, &m) in mirror.iter().enumerate() {
                        if m > 0 {
                            prop_assert_eq!(w.find(acc), k);
                            prop_assert_eq!(w.find(acc + m - 1), k);
                        }
                        acc += m;
                    }
                }
            }
        }
    }

    #[test]
    fn injection_oracle_examples() {
        let items = ['a', 'a', 'b'];
        let is_a = |c: &char| *c == 'a';
        let is_b = |c: &char| *c == 'b';
        let any = |_: &char| true;
        assert_eq!(count_injections_oracle(&items, &[&is_a, &is_b]).unwrap(), 2);
        assert_eq!(count_injections_oracle(&items, &[&is_a, &is_a]).unwrap(), 2);
        assert_eq!(count_injections_oracle(&items, &[&any]).unwrap(), 3);
        let big = [0u8; 9];
        let t = |_: &u8| true;
        assert!(matches!(
            count_injections_oracle(&big, &[&t]),
            Err(SelectionError::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn nu_recursion_examples() {
        // atoms: a = bit 0, b = bit 1
        assert_eq!(nu_recursion(&[2, 1], &[0b11]), 3);
        assert_eq!(nu_recursion(&[2, 1], &[0b01, 0b10]), 2);
        assert_eq!(nu_recursion(&[2], &[0b1, 0b1]), 2);
        assert_eq!(nu_recursion(&[3], &[0b1, 0b1, 0b1]), 6);
    }

    #[test]
    fn single_particle_never_pairs() {
        let e = ens(&[5]);
        let k = constant_pair(1.0);
        let mut rng = stream(1);
        for _ in 0..1000 {
            assert!(sample_tuple(&e, &k, 0.0, 0.5, &mut rng).unwrap().is_none());
        }
    }

    #[test]
    fn majorant_violation_is_reported() {
        let e = ens(&[1, 1, 1]);
        let k = constant_pair(4.0);
        let mut rng = stream(2);
        let mut seen = false;
        for _ in 0..100 {
            if let Err(SelectionError::MajorantViolated { ratio, .. }) = sample_tuple(&e, &k, 0.0, 1.0, &mut rng) {
                assert!((ratio - 2.0).abs() < 1e-12);
                seen = true;
            }
        }
        assert!(seen);
    }

    #[test]
    fn unequal_masses_draw_probabilities() {
        // masses (1,3): ordered pairs (0,1) and (1,0) each have majorant weight
        // 1·3/16, repeats (0,0) and (1,1) are fictitious.
        let e = ens(&[1, 3]);
        let k = InteractionKernel::new(
            2,
            1,
            |_, zs| 2.0 * zs[0].mass as f64 * zs[1].mass as f64,
            |_, zs, _| vec![Particle::new(zs[0].mass + zs[1].mass, zs[0].position)],
        );
        let mut rng = stream(3);
        let n = 200_000;
        let (mut c01, mut c10) = (0, 0);
        for _ in 0..n {
            if let Some(d) = sample_tuple(&e, &k, 0.0, 1.0, &mut rng).unwrap() {
                assert_eq!(d.accept_ratio, 1.0);
                match d.indices() {
                    [0, 1] => c01 += 1,
                    [1, 0] => c10 += 1,
                    other => panic!("repeated index {other:?}"),
                }
            }
        }
        let p = 3.0 / 16.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((c01 as f64 - n as f64 * p).abs() < 4.0 * sd);
        assert!((c10 as f64 - n as f64 * p).abs() < 4.0 * sd);
    }

    #[test]
    fn exact_rate_constant_kernel() {
        let e = ens(&[1, 2, 3, 4]);
        let k = constant_pair(2.0);
        // N^{-2} · 12 ordered pairs · 2 / 2
        let r = exact_rate(&e, &k, 0.0).unwrap();
        assert!((r - 12.0 / 16.0).abs() < 1e-15);
    }
}
