//! Phase-1 simplex for tiny dense feasibility problems.

const PIVOT_EPS: f64 = 1e-12;
const MAX_ITERS: usize = 50_000;

/// Finds `x ≥ 0` with `A x = b`, or `None` when the phase-1 optimum exceeds `tol`.
///
/// Entering and leaving variables follow Bland's rule, so results are deterministic.
pub fn feasible(a: &[Vec<f64>], b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let r = a.len();
    let n = a.first().map_or(0, Vec::len);
    let width = n + r + 1;
    let mut t = vec![vec![0.0; width]; r];
    for i in 0..r {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = s * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = s * b[i];
    }
    let mut basis: Vec<usize> = (n..n + r).collect();
    let mut cost = vec![0.0; width];
    for row in &t {
        for j in 0..n {
            cost[j] -= row[j];
        }
        cost[width - 1] -= row[width - 1];
    }
    for _ in 0..MAX_ITERS {
        let Some(enter) = (0..width - 1).find(|&j| cost[j] < -PIVOT_EPS) else { break };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..r {
            if t[i][enter] > PIVOT_EPS {
                let ratio = t[i][width - 1] / t[i][enter];
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[i] < basis[l]),
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(p) = leave else { break };
        let piv = t[p][enter];
        for v in t[p].iter_mut() {
            *v /= piv;
        }
        let prow = t[p].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != p && row[enter] != 0.0 {
                let f = row[enter];
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
            }
        }
        let f = cost[enter];
        for (c, pv) in cost.iter_mut().zip(&prow) {
            *c -= f * pv;
        }
        basis[p] = enter;
    }
    let infeas: f64 = (0..r).filter(|&i| basis[i] >= n).map(|i| t[i][width - 1].abs()).sum();
    if infeas > tol {
        return None;
    }
    let mut x = vec![0.0; n];
    for i in 0..r {
        if basis[i] < n {
            x[basis[i]] = t[i][width - 1];
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_systems() {
        let a = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
        let x = feasible(&a, &[2.0, 0.0], 1e-9).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!(feasible(&a, &[-1.0, 0.0], 1e-9).is_none());
        assert!(feasible(&[vec![1.0, 2.0, 3.0]], &[0.0], 1e-9).is_some());
    }

    #[test]
    fn degenerate_cycling_candidate() {
        // Beale-style degenerate system; Bland's rule must terminate.
        let a = vec![
            vec![0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0],
            vec![0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        assert!(feasible(&a, &[0.0, 0.0, 1.0], 1e-9).is_some());
    }

    #[test]
    fn deterministic() {
        let a = vec![vec![1.0, 2.0, 0.5, -1.0], vec![0.0, 1.0, 1.0, 1.0]];
        assert_eq!(feasible(&a, &[1.0, 2.0], 1e-9), feasible(&a, &[1.0, 2.0], 1e-9));
    }
}
