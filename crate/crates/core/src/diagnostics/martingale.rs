use super::{analytic_generator, DiagnosticsError, TestFunction};
use crate::ensemble::Particle;
use crate::rng::stream;
use crate::selection::factorial;
use crate::simulator::{SimulationState, System};

const SOURCE_POOL: usize = 4096;

/// Residual `P_t(f) − P_0(f) − ∫₀ᵗ compensator` after every event of a
/// recorded path, returned as `(t, residual)` pairs starting at `(0, 0)`.
///
/// The compensator of the move rule is the analytic limit
/// `N⁻¹ Σ_z (½σ²Δf + b·∇f + H·∇̂f)(z)`, so the residual carries an `O(1/c_N)`
/// discretisation bias on top of its martingale fluctuation. Source
/// contributions use a fixed pool of source draws (the source law is taken to
/// be time homogeneous); kernel contributions enumerate all ordered tuples and
/// therefore need the exact-rate mode. The state is rebuilt from the debug
/// log at `O(n)` cost per event.
pub fn martingale_residual(state: &SimulationState, sys: System<'_>, f: &TestFunction) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    let trace = &state.trace;
    let (Some(initial), Some(changes)) = (trace.initial(), trace.changes()) else {
        return Err(DiagnosticsError::RequiresDebugTrace);
    };
    if !trace.is_complete() {
        return Err(DiagnosticsError::RequiresDebugTrace);
    }
    let interacting = !sys.model.kernels.is_empty() || sys.model.self_kernel.is_some();
    if interacting && !state.params.exact_rates {
        return Err(DiagnosticsError::RequiresExactRates);
    }
    let n = initial.scale() as f64;
    let cap = state.params.mass_cap_total();
    let pool: Vec<Particle> = match &sys.model.source {
        Some(src) => {
            let mut rng = stream(state.params.seed ^ 0x9e37_79b9_7f4a_7c15);
            (0..SOURCE_POOL).map(|_| src.sample(0.0, &mut rng)).collect()
        }
        None => Vec::new(),
    };

    let mut particles: Vec<Particle> = initial.particles().to_vec();
    let p0: f64 = particles.iter().map(|z| f.value(z)).sum::<f64>() / n;
    let mut out = Vec::with_capacity(changes.len() + 1);
    out.push((0.0, 0.0));
    let (mut t, mut u) = (0.0, 0.0);
    let mut compensator = 0.0;
    let mut product_rng = stream(state.params.seed ^ 0x51ed_270b);

    for (rec, change) in trace.records().zip(changes) {
        let tau = rec.t - t;
        let mut rate = particles.iter().map(|z| analytic_generator(sys, f, u, z)).sum::<f64>() / n;
        if let Some(src) = &sys.model.source {
            let mass: u64 = particles.iter().map(|z| z.mass).sum();
            let mean: f64 = pool
                .iter()
                .filter(|z| mass + z.mass <= cap)
                .map(|z| f.value(z))
                .sum::<f64>()
                / pool.len() as f64;
            rate += src.lambda(u) * mean;
        }
        for k in &sys.model.kernels {
            let norm = factorial(k.arity_in) * factorial(k.arity_out) * n.powi(k.arity_in as i32);
            let mut acc = 0.0;
            for_each_tuple(particles.len(), k.arity_in, &mut |idx| {
                let zs: Vec<Particle> = idx.iter().map(|&i| particles[i]).collect();
                let r = k.rate(u, &zs);
                if r > 0.0 {
                    let gain: f64 = k.products(u, &zs, &mut product_rng).iter().map(|w| f.value(w)).sum();
                    let loss: f64 = zs.iter().map(|z| f.value(z)).sum();
                    acc += r * (gain - loss);
                }
            });
            rate += acc / norm;
        }
        if let Some(k) = &sys.model.self_kernel {
            let acc: f64 = particles
                .iter()
                .map(|z| {
                    let r = k.rate(u, z);
                    if r > 0.0 {
                        r * (f.value(&k.product(u, z, &mut product_rng)) - f.value(z))
                    } else {
                        0.0
                    }
                })
                .sum();
            rate += acc / n;
        }
        compensator += tau * rate;

        for z in &change.removed {
            if let Some(pos) = particles.iter().position(|p| p == z) {
                particles.swap_remove(pos);
            }
        }
        particles.extend_from_slice(&change.added);
        t = rec.t;
        u = rec.u;
        let pf: f64 = particles.iter().map(|z| f.value(z)).sum::<f64>() / n;
        out.push((t, pf - p0 - compensator));
    }
    Ok(out)
}

fn for_each_tuple<F: FnMut(&[usize])>(n: usize, k: usize, f: &mut F) {
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
    rec(n, k, &mut Vec::with_capacity(k), f);
}
