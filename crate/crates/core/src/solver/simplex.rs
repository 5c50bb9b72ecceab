//! Phase-1 feasibility test on a dense tableau with Bland's rule.

/// Pivots smaller than this are treated as zero.
const PIVOT_EPS: f64 = 1e-12;

/// Outcome of a phase-1 run.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PhaseOne {
    /// Sum of the artificial variables at the optimum (0 when feasible).
    pub infeasibility: f64,
    /// A point minimizing the infeasibility.
    pub point: Vec<f64>,
}

/// Finds `v` with `a v = b` and, if `bound` is given, `|v_j| <= bound`.
///
/// Free variables are split as `v = p - q` with `p, q >= 0`. Each equality
/// row gets an artificial variable; their sum is minimized.
pub(crate) fn phase_one(a: &[Vec<f64>], b: &[f64], n: usize, bound: Option<f64>) -> PhaseOne {
    let m = a.len();
    let n_bound_rows = if bound.is_some() { 2 * n } else { 0 };
    let rows = m + n_bound_rows;
    // columns: p (n), q (n), bound slacks (2n when bounded), artificials (m), rhs
    let slack0 = 2 * n;
    let art0 = slack0 + n_bound_rows;
    let cols = art0 + m;
    let width = cols + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    let mut basis = vec![0usize; rows];
    for (i, (row, &bi)) in a.iter().zip(b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            let c = sign * row[j];
            t[i * width + j] = c;
            t[i * width + n + j] = -c;
        }
        t[i * width + art0 + i] = 1.0;
        t[i * width + cols] = sign * bi;
        basis[i] = art0 + i;
    }
    if let Some(u) = bound {
        for j in 0..2 * n {
            let i = m + j;
            t[i * width + j] = 1.0;
            t[i * width + slack0 + j] = 1.0;
            t[i * width + cols] = u;
            basis[i] = slack0 + j;
        }
    }
    // objective row holds reduced costs of min sum(artificials)
    let obj = rows * width;
    for i in 0..m {
        for j in 0..width {
            if j < art0 || j == cols {
                t[obj + j] -= t[i * width + j];
            }
        }
    }

    let max_iter = 50 * (rows + cols) + 1000;
    for _ in 0..max_iter {
        let Some(enter) = (0..cols).find(|&j| t[obj + j] < -PIVOT_EPS) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            let aij = t[i * width + enter];
            if aij > PIVOT_EPS {
                let ratio = t[i * width + cols] / aij;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best || (ratio == best && basis[i] < basis[l]),
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        // unbounded direction cannot occur: the objective is bounded below by 0
        let Some(r) = leave else { break };
        pivot(&mut t, width, rows + 1, r, enter);
        basis[r] = enter;
    }

    let mut x = vec![0.0; cols];
    for (i, &bv) in basis.iter().enumerate() {
        x[bv] = t[i * width + cols];
    }
    let infeasibility = x[art0..].iter().sum::<f64>().max(0.0);
    let point = (0..n).map(|j| x[j] - x[n + j]).collect();
    PhaseOne { infeasibility, point }
}

fn pivot(t: &mut [f64], width: usize, nrows: usize, r: usize, c: usize) {
    let p = t[r * width + c];
    for j in 0..width {
        t[r * width + j] /= p;
    }
    for i in 0..nrows {
        if i == r {
            continue;
        }
        let f = t[i * width + c];
        if f == 0.0 {
            continue;
        }
        for j in 0..width {
            t[i * width + j] -= f * t[r * width + j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable() {
        let r = phase_one(&[vec![1.0]], &[2.0], 1, Some(10.0));
        assert!(r.infeasibility < 1e-12);
        assert!((r.point[0] - 2.0).abs() < 1e-12);
        let r = phase_one(&[vec![1.0]], &[20.0], 1, Some(10.0));
        assert!((r.infeasibility - 10.0).abs() < 1e-12);
        let r = phase_one(&[vec![1.0]], &[20.0], 1, None);
        assert!(r.infeasibility < 1e-12);
    }

    #[test]
    fn inconsistent_rows() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let r = phase_one(&a, &[1.0, -1.0], 2, None);
        assert!((r.infeasibility - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_targets() {
        let a = vec![vec![1.0, -2.0, 0.5], vec![0.0, 1.0, 1.0]];
        let b = [-3.0, 0.25];
        let r = phase_one(&a, &b, 3, Some(5.0));
        assert!(r.infeasibility < 1e-12);
        for (row, bi) in a.iter().zip(b) {
            let lhs: f64 = row.iter().zip(&r.point).map(|(x, y)| x * y).sum();
            assert!((lhs - bi).abs() < 1e-12);
        }
        assert!(r.point.iter().all(|v| v.abs() <= 5.0 + 1e-12));
    }
}
