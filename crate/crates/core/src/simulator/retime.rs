/// One point of a path: real time, fictitious time and the value held from
/// this point until the next.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint<T> {
    pub t: f64,
    pub u: f64,
    pub value: T,
}

/// Re-indexes a path by fictitious time: `Q_s` is the value after the last
/// event whose `u ≤ s`. The path must start at `u = 0` with `u` non-decreasing.
pub fn retime<T: Clone>(path: &[PathPoint<T>], times: &[f64]) -> Vec<T> {
    times
        .iter()
        .map(|&s| {
            let k = path.partition_point(|p| p.u <= s);
            path[k.max(1) - 1].value.clone()
        })
        .collect()
}

/// `sup_{s ≤ horizon} |v_s − s|` with `v_s = sup{t : u_t ≤ s}`, from the
/// `(t, u)` pairs after each event (starting with `(0, 0)`).
pub fn retime_deviation(points: &[(f64, f64)], horizon: f64) -> f64 {
    let mut sup: f64 = 0.0;
    for w in points.windows(2) {
        let (_, u_k) = w[0];
        let (t_next, u_next) = w[1];
        if u_k > horizon {
            break;
        }
        sup = sup.max((t_next - u_k).abs()).max((t_next - u_next.min(horizon)).abs());
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(t: f64, u: f64, value: u32) -> PathPoint<u32> {
        PathPoint { t, u, value }
    }

    #[test]
    fn identity_when_u_equals_t() {
        let path: Vec<_> = (0..10).map(|k| pp(k as f64 * 0.1, k as f64 * 0.1, k)).collect();
        let times: Vec<f64> = path.iter().map(|p| p.t).collect();
        let direct: Vec<u32> = path.iter().map(|p| p.value).collect();
        assert_eq!(retime(&path, &times), direct);
        let pts: Vec<(f64, f64)> = path.iter().map(|p| (p.t, p.u)).collect();
        assert!(retime_deviation(&pts, 0.9) < 0.1 + 1e-12);
    }

    #[test]
    fn two_phase_rate_doubling() {
        // events every 0.25 in t; u advances 0.25 per event up to t = 1, then
        // 0.125 per event (the rate doubled but holding stayed 0.25)
        let mut path = vec![pp(0.0, 0.0, 0)];
        for k in 1..=4 {
            path.push(pp(0.25 * k as f64, 0.25 * k as f64, k));
        }
        for k in 5..=8 {
            path.push(pp(0.25 * k as f64, 1.0 + 0.125 * (k - 4) as f64, k));
        }
        // by explicit inversion: u ≤ 1.3 last holds after event 6 (u = 1.25)
        assert_eq!(retime(&path, &[0.0, 0.6, 1.0, 1.3, 1.5, 9.0]), vec![0, 2, 4, 6, 8, 8]);
    }
}
