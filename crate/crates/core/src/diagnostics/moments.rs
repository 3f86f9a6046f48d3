use super::DiagnosticsError;

/// Minimum replica count of the moment check.
pub const MIN_REPLICAS: usize = 16;

/// Moment bounds `Q_i(t)` of `E[(P_t(π_m))^i]`, built from the initial mass
/// `Ξ` and the source moment bounds `Λ^(q)` by
/// `Q_0 = 1`, `Q_i(t) = Ξ^i + Σ_{r<i} C(i,r) Λ^(i−r) ∫₀ᵗ Q_r`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentBound {
    pub xi: f64,
    /// `lambdas[q] = Λ^(q)`.
    pub lambdas: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

impl MomentBound {
    pub fn new(xi: f64, lambdas: Vec<f64>) -> Self {
        MomentBound { xi, lambdas }
    }

    fn lambda(&self, q: usize) -> f64 {
        self.lambdas.get(q).copied().unwrap_or(0.0)
    }

    /// Coefficients of `Q_i` in increasing powers of `t`.
    pub fn coefficients(&self, i: usize) -> Vec<f64> {
        let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
        for k in 1..=i {
            let mut q = vec![self.xi.powi(k as i32)];
            for (r, qr) in polys.iter().enumerate() {
                let c = binomial(k, r) * self.lambda(k - r);
                if c == 0.0 {
                    continue;
                }
                if q.len() < qr.len() + 1 {
                    q.resize(qr.len() + 1, 0.0);
                }
                for (p, a) in qr.iter().enumerate() {
                    q[p + 1] += c * a / (p + 1) as f64;
                }
            }
            polys.push(q);
        }
        polys.swap_remove(i)
    }

    pub fn q(&self, i: usize, t: f64) -> f64 {
        self.coefficients(i).iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// `Ξ + tΛ^(1) + 2(tΛ^(2))^{1/2}`.
pub fn mass_slack(xi: f64, t: f64, lambda1: f64, lambda2: f64) -> f64 {
    xi + t * lambda1 + 2.0 * (t * lambda2).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentRow {
    pub t: f64,
    pub mean_mass: f64,
    pub mean_mass_sq: f64,
    pub q1: f64,
    pub q2: f64,
    pub slack_bound: f64,
    pub max_mass: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    pub passed: bool,
}

/// Compares replica averages of `P_t(π_m)` and `P_t(π_m)²` with the bounds
/// at every output time, and checks `P_t(π_m) ≤ m_N` on every replica.
/// `series[r][k] = (t_k, P_{t_k}(π_m))` for replica `r`; all replicas share
/// the output times.
pub fn moment_bound_check(series: &[Vec<(f64, f64)>], bound: &MomentBound, m_n: f64) -> Result<MomentReport, DiagnosticsError> {
    if series.len() < MIN_REPLICAS {
        return Err(DiagnosticsError::TooFewReplicas {
            have: series.len(),
            need: MIN_REPLICAS,
        });
    }
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let r = series.len() as f64;
    let tol = 1e-12;
    let mut rows = Vec::with_capacity(len);
    for k in 0..len {
        let t = series[0][k].0;
        let mean_mass = series.iter().map(|s| s[k].1).sum::<f64>() / r;
        let mean_mass_sq = series.iter().map(|s| s[k].1 * s[k].1).sum::<f64>() / r;
        let max_mass = series.iter().map(|s| s[k].1).fold(f64::MIN, f64::max);
        let q1 = bound.q(1, t);
        let q2 = bound.q(2, t);
        let slack_bound = mass_slack(bound.xi, t, bound.lambda(1), bound.lambda(2));
        let passed = mean_mass <= slack_bound * (1.0 + tol)
            && mean_mass_sq <= q2 * (1.0 + tol)
            && max_mass <= m_n * (1.0 + tol);
        rows.push(MomentRow {
            t,
            mean_mass,
            mean_mass_sq,
            q1,
            q2,
            slack_bound,
            max_mass,
            passed,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(MomentReport { rows, passed })
}
