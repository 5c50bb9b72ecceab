//! Mehrotra predictor-corrector interior-point method for the L1 program
//!
//! ```text
//! min  c_t * sum(t) + c_s * sum(s)
//! s.t. A v = b,  -t <= v <= t,  -s <= D v <= s,  |v| <= u (optional)
//! ```
//!
//! `t` and `s` are eliminated from the Newton system, which leaves a
//! block-diagonal matrix in `v` (blocks are the connected components of the
//! difference operator `D`) and a dense Schur complement in the equality
//! multipliers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const STEP_FRACTION: f64 = 0.99;
/// Give up after this many iterations without a better iterate.
const STALL_ITER: usize = 15;
/// A stalled run is still accepted when its best iterate is this close to
/// the tolerance; the final digits are lost to round-off.
const STALL_ACCEPT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &a)| a * x[i]).sum()
    }

    fn scatter(&self, c: f64, out: &mut [f64]) {
        for (&i, &a) in self.idx.iter().zip(&self.val) {
            out[i] += c * a;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub n: usize,
    /// Partition of `0..n`; every difference row lives inside one group.
    pub groups: Vec<Vec<usize>>,
    pub eq: Vec<SparseRow>,
    pub rhs: Vec<f64>,
    pub diff: Vec<SparseRow>,
    pub cost_abs: f64,
    pub cost_diff: f64,
    pub bound: Option<f64>,
    /// Relative feasibility and duality-gap target.
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub v: Vec<f64>,
    pub iterations: usize,
}

/// Variables and multipliers of one iterate. Inequality blocks:
/// 0: v - t <= 0, 1: -v - t <= 0, 2: Dv - s <= 0, 3: -Dv - s <= 0,
/// 4: v <= u, 5: -v <= u.
#[derive(Clone)]
struct Iterate {
    v: Vec<f64>,
    t: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    z: [Vec<f64>; 6],
    l: [Vec<f64>; 6],
}

struct Direction {
    v: Vec<f64>,
    t: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    z: [Vec<f64>; 6],
    l: [Vec<f64>; 6],
}

struct Residuals {
    dual_v: Vec<f64>,
    dual_t: Vec<f64>,
    dual_s: Vec<f64>,
    primal: Vec<f64>,
    ineq: [Vec<f64>; 6],
}

/// Factorized reduced Newton system for one set of weights.
struct Factor {
    blocks: Vec<Cholesky<f64, Dyn>>,
    schur: Cholesky<f64, Dyn>,
    w: [Vec<f64>; 6],
}

struct Layout<'a> {
    p: &'a Problem,
    /// group and position inside the group of every variable
    slot: Vec<(usize, usize)>,
    /// equality rows touching each group
    group_rows: Vec<Vec<usize>>,
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl<'a> Layout<'a> {
    fn new(p: &'a Problem) -> Result<Self> {
        let mut slot = vec![(usize::MAX, 0); p.n];
        for (g, members) in p.groups.iter().enumerate() {
            for (k, &i) in members.iter().enumerate() {
                slot[i] = (g, k);
            }
        }
        if slot.iter().any(|s| s.0 == usize::MAX) {
            return Err(Error::Numeric("variable groups do not cover every variable".into()));
        }
        for row in &p.diff {
            if let Some(&first) = row.idx.first() {
                if row.idx.iter().any(|&i| slot[i].0 != slot[first].0) {
                    return Err(Error::Numeric("difference row spans two groups".into()));
                }
            }
        }
        let mut group_rows = vec![Vec::new(); p.groups.len()];
        for (r, row) in p.eq.iter().enumerate() {
            let mut touched: Vec<usize> = row.idx.iter().map(|&i| slot[i].0).collect();
            touched.sort_unstable();
            touched.dedup();
            for g in touched {
                group_rows[g].push(r);
            }
        }
        Ok(Self { p, slot, group_rows })
    }

    fn n_ineq(&self, k: usize) -> usize {
        match k {
            0 | 1 => self.p.n,
            2 | 3 => self.p.diff.len(),
            _ => {
                if self.p.bound.is_some() {
                    self.p.n
                } else {
                    0
                }
            }
        }
    }

    fn d_mul(&self, v: &[f64]) -> Vec<f64> {
        self.p.diff.iter().map(|r| r.dot(v)).collect()
    }

    fn dt_mul(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p.n];
        for (r, &c) in self.p.diff.iter().zip(w) {
            r.scatter(c, &mut out);
        }
        out
    }

    fn a_mul(&self, v: &[f64]) -> Vec<f64> {
        self.p.eq.iter().map(|r| r.dot(v)).collect()
    }

    fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p.n];
        for (r, &c) in self.p.eq.iter().zip(y) {
            r.scatter(c, &mut out);
        }
        out
    }

    /// G_k applied to a step in (v, t, s), with `dv_d = D dv` precomputed.
    fn g_apply(&self, k: usize, dv: &[f64], dv_d: &[f64], dt: &[f64], ds: &[f64]) -> Vec<f64> {
        match k {
            0 => zip_map(dv, dt, |a, b| a - b),
            1 => zip_map(dv, dt, |a, b| -a - b),
            2 => zip_map(dv_d, ds, |a, b| a - b),
            3 => zip_map(dv_d, ds, |a, b| -a - b),
            4 if self.p.bound.is_some() => dv.to_vec(),
            5 if self.p.bound.is_some() => dv.iter().map(|x| -x).collect(),
            _ => Vec::new(),
        }
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let p = self.p;
        let l = &it.l;
        let mut dual_v = self.at_mul(&it.y);
        let d34 = zip_map(&l[2], &l[3], |a, b| a - b);
        let dt34 = self.dt_mul(&d34);
        for i in 0..p.n {
            dual_v[i] += l[0][i] - l[1][i] + dt34[i];
            if p.bound.is_some() {
                dual_v[i] += l[4][i] - l[5][i];
            }
        }
        let dual_t = zip_map(&l[0], &l[1], |a, b| p.cost_abs - a - b);
        let dual_s = zip_map(&l[2], &l[3], |a, b| p.cost_diff - a - b);
        let av = self.a_mul(&it.v);
        let primal = zip_map(&av, &p.rhs, |a, b| a - b);
        let dv = self.d_mul(&it.v);
        let u = p.bound.unwrap_or(0.0);
        let z = &it.z;
        let mut ineq: [Vec<f64>; 6] = Default::default();
        for k in 0..6 {
            let g = self.g_apply(k, &it.v, &dv, &it.t, &it.s);
            let h = if k >= 4 { u } else { 0.0 };
            ineq[k] = zip_map(&g, &z[k], |a, b| a + b - h);
        }
        Residuals {
            dual_v,
            dual_t,
            dual_s,
            primal,
            ineq,
        }
    }

    fn factor(&self, it: &Iterate) -> Result<Factor> {
        let p = self.p;
        let w: [Vec<f64>; 6] = std::array::from_fn(|k| zip_map(&it.l[k], &it.z[k], |l, z| l / z));
        let mut diag: Vec<f64> = (0..p.n)
            .map(|i| 4.0 * w[0][i] * w[1][i] / (w[0][i] + w[1][i]))
            .collect();
        if p.bound.is_some() {
            for i in 0..p.n {
                diag[i] += w[4][i] + w[5][i];
            }
        }
        let omega: Vec<f64> = (0..p.diff.len())
            .map(|r| 4.0 * w[2][r] * w[3][r] / (w[2][r] + w[3][r]))
            .collect();
        let mut dense: Vec<DMatrix<f64>> = p
            .groups
            .iter()
            .map(|g| {
                DMatrix::from_fn(g.len(), g.len(), |a, b| if a == b { diag[g[a]] } else { 0.0 })
            })
            .collect();
        for (row, &om) in p.diff.iter().zip(&omega) {
            let Some(&first) = row.idx.first() else { continue };
            let h = &mut dense[self.slot[first].0];
            for (&i, &ai) in row.idx.iter().zip(&row.val) {
                for (&j, &aj) in row.idx.iter().zip(&row.val) {
                    h[(self.slot[i].1, self.slot[j].1)] += om * ai * aj;
                }
            }
        }
        let blocks = dense
            .into_iter()
            .map(|h| regularized_cholesky(h, "interior-point block"))
            .collect::<Result<Vec<_>>>()?;

        let m = p.eq.len();
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for (g, rows) in self.group_rows.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let size = p.groups[g].len();
            let mut mt = DMatrix::<f64>::zeros(size, rows.len());
            for (c, &r) in rows.iter().enumerate() {
                let row = &p.eq[r];
                for (&i, &a) in row.idx.iter().zip(&row.val) {
                    if self.slot[i].0 == g {
                        mt[(self.slot[i].1, c)] += a;
                    }
                }
            }
            let y = blocks[g]
                .l_dirty()
                .solve_lower_triangular(&mt)
                .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
            let contrib = y.tr_mul(&y);
            for (a, &ra) in rows.iter().enumerate() {
                for (b, &rb) in rows.iter().enumerate() {
                    schur[(ra, rb)] += contrib[(a, b)];
                }
            }
        }
        let schur = regularized_cholesky(schur, "Schur complement")?;
        Ok(Factor { blocks, schur, w })
    }

    fn h_solve(&self, f: &Factor, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p.n];
        for (g, members) in self.p.groups.iter().enumerate() {
            let local = DVector::from_iterator(members.len(), members.iter().map(|&i| x[i]));
            let sol = f.blocks[g].solve(&local);
            for (k, &i) in members.iter().enumerate() {
                out[i] = sol[k];
            }
        }
        out
    }

    /// Newton direction for complementarity right-hand side `rc`.
    fn direction(&self, it: &Iterate, res: &Residuals, f: &Factor, rc: &[Vec<f64>; 6]) -> Direction {
        let p = self.p;
        let w = &f.w;
        let q: [Vec<f64>; 6] = std::array::from_fn(|k| {
            (0..rc[k].len())
                .map(|i| (-rc[k][i] + it.l[k][i] * res.ineq[k][i]) / it.z[k][i])
                .collect()
        });
        let q34 = zip_map(&q[2], &q[3], |a, b| a - b);
        let dq34 = self.dt_mul(&q34);
        let mut rhs_v: Vec<f64> = (0..p.n)
            .map(|i| -res.dual_v[i] - (q[0][i] - q[1][i]) - dq34[i])
            .collect();
        if p.bound.is_some() {
            for i in 0..p.n {
                rhs_v[i] -= q[4][i] - q[5][i];
            }
        }
        let rhs_t: Vec<f64> = (0..p.n).map(|i| -res.dual_t[i] + q[0][i] + q[1][i]).collect();
        let rhs_s: Vec<f64> = (0..p.diff.len())
            .map(|r| -res.dual_s[r] + q[2][r] + q[3][r])
            .collect();
        let alpha_t: Vec<f64> = (0..p.n).map(|i| (w[1][i] - w[0][i]) / (w[0][i] + w[1][i])).collect();
        let alpha_s: Vec<f64> = (0..p.diff.len())
            .map(|r| (w[3][r] - w[2][r]) / (w[2][r] + w[3][r]))
            .collect();
        let corr = self.dt_mul(&zip_map(&alpha_s, &rhs_s, |a, b| a * b));
        let reduced: Vec<f64> = (0..p.n)
            .map(|i| rhs_v[i] - alpha_t[i] * rhs_t[i] - corr[i])
            .collect();

        let hr = self.h_solve(f, &reduced);
        let ahr = self.a_mul(&hr);
        let sy = DVector::from_iterator(
            p.eq.len(),
            ahr.iter().zip(&res.primal).map(|(a, r)| a + r),
        );
        let dy: Vec<f64> = f.schur.solve(&sy).iter().copied().collect();
        let aty = self.at_mul(&dy);
        let dv = self.h_solve(f, &zip_map(&reduced, &aty, |a, b| a - b));
        let dv_d = self.d_mul(&dv);
        let dt: Vec<f64> = (0..p.n)
            .map(|i| (rhs_t[i] - (w[1][i] - w[0][i]) * dv[i]) / (w[0][i] + w[1][i]))
            .collect();
        let ds: Vec<f64> = (0..p.diff.len())
            .map(|r| (rhs_s[r] - (w[3][r] - w[2][r]) * dv_d[r]) / (w[2][r] + w[3][r]))
            .collect();
        let mut dz: [Vec<f64>; 6] = Default::default();
        let mut dl: [Vec<f64>; 6] = Default::default();
        for k in 0..6 {
            let g = self.g_apply(k, &dv, &dv_d, &dt, &ds);
            dz[k] = zip_map(&res.ineq[k], &g, |r, g| -r - g);
            dl[k] = (0..g.len()).map(|i| q[k][i] + w[k][i] * g[i]).collect();
        }
        Direction {
            v: dv,
            t: dt,
            s: ds,
            y: dy,
            z: dz,
            l: dl,
        }
    }
}

/// Cholesky factor of `h + delta I`, where `delta` starts at a tiny
/// multiple of the largest diagonal entry and grows until the
/// factorization succeeds. Near the optimum the barrier weights span many
/// orders of magnitude and round-off can cost definiteness.
fn regularized_cholesky(h: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let m = h.nrows();
    let scale = (0..m).fold(0.0f64, |acc, i| acc.max(h[(i, i)]));
    if !scale.is_finite() {
        return Err(Error::Numeric(format!("{what} has non-finite entries")));
    }
    let scale = scale.max(f64::MIN_POSITIVE);
    let mut reg = 1e-13 * scale;
    loop {
        let mut s = h.clone();
        for i in 0..m {
            s[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(s) {
            return Ok(c);
        }
        reg *= 100.0;
        if reg > scale {
            return Err(Error::Numeric(format!("{what} is not positive definite")));
        }
    }
}

fn max_step(x: &[Vec<f64>; 6], dx: &[Vec<f64>; 6]) -> f64 {
    let mut alpha = 1.0f64;
    for (xs, ds) in x.iter().zip(dx) {
        for (&xi, &di) in xs.iter().zip(ds) {
            if di < 0.0 {
                alpha = alpha.min(-xi / di);
            }
        }
    }
    alpha
}

fn complementarity(z: &[Vec<f64>; 6], l: &[Vec<f64>; 6]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for (zs, ls) in z.iter().zip(l) {
        sum += zs.iter().zip(ls).map(|(a, b)| a * b).sum::<f64>();
        count += zs.len();
    }
    (sum, count)
}

fn axpy(x: &mut [f64], a: f64, d: &[f64]) {
    for (xi, di) in x.iter_mut().zip(d) {
        *xi += a * di;
    }
}

pub(crate) fn solve(p: &Problem) -> Result<Solution> {
    let lay = Layout::new(p)?;
    let n = p.n;
    let nd = p.diff.len();
    let u = p.bound.unwrap_or(0.0);
    let nb = lay.n_ineq(4);
    let mut it = Iterate {
        v: vec![0.0; n],
        t: vec![1.0; n],
        s: vec![1.0; nd],
        y: vec![0.0; p.eq.len()],
        z: [
            vec![1.0; n],
            vec![1.0; n],
            vec![1.0; nd],
            vec![1.0; nd],
            vec![u; nb],
            vec![u; nb],
        ],
        l: std::array::from_fn(|k| vec![1.0; lay.n_ineq(k)]),
    };
    let b_scale = 1.0 + inf_norm(&p.rhs);
    let c_scale = 1.0 + p.cost_abs.max(p.cost_diff);
    let mut best: (f64, Vec<f64>, usize) = (f64::INFINITY, Vec::new(), 0);

    for iter in 0..MAX_ITER {
        let res = lay.residuals(&it);
        let (comp, count) = complementarity(&it.z, &it.l);
        let pobj = p.cost_abs * it.t.iter().sum::<f64>() + p.cost_diff * it.s.iter().sum::<f64>();
        let primal_err = res
            .ineq
            .iter()
            .map(|r| inf_norm(r))
            .fold(inf_norm(&res.primal), f64::max)
            / b_scale;
        let dual_err = inf_norm(&res.dual_v)
            .max(inf_norm(&res.dual_t))
            .max(inf_norm(&res.dual_s))
            / c_scale;
        // complementarity rather than pobj - dobj: with nearly dependent
        // rows the objective difference floors at the primal round-off
        let gap = comp / (1.0 + pobj.abs());
        let merit = primal_err.max(dual_err).max(gap);
        if merit <= p.tol {
            return Ok(Solution { v: it.v, iterations: iter });
        }
        if merit < best.0 {
            best = (merit, it.v.clone(), iter);
        } else if iter - best.2 > STALL_ITER {
            break;
        }
        if count == 0 {
            // nothing but equalities: one Newton step is exact
            return Err(Error::Numeric("empty inequality set".into()));
        }
        let mu = comp / count as f64;

        let f = match lay.factor(&it) {
            Ok(f) => f,
            Err(_) if best.0 <= STALL_ACCEPT * p.tol => break,
            Err(e) => return Err(e),
        };
        let rc_aff: [Vec<f64>; 6] = std::array::from_fn(|k| zip_map(&it.z[k], &it.l[k], |a, b| a * b));
        let aff = lay.direction(&it, &res, &f, &rc_aff);
        let ap = max_step(&it.z, &aff.z);
        let ad = max_step(&it.l, &aff.l);
        let mut comp_aff = 0.0;
        for k in 0..6 {
            for i in 0..it.z[k].len() {
                comp_aff += (it.z[k][i] + ap * aff.z[k][i]) * (it.l[k][i] + ad * aff.l[k][i]);
            }
        }
        let sigma = (comp_aff / comp).clamp(0.0, 1.0).powi(3);
        let rc: [Vec<f64>; 6] = std::array::from_fn(|k| {
            (0..it.z[k].len())
                .map(|i| it.z[k][i] * it.l[k][i] + aff.z[k][i] * aff.l[k][i] - sigma * mu)
                .collect()
        });
        let d = lay.direction(&it, &res, &f, &rc);
        let ap = (STEP_FRACTION * max_step(&it.z, &d.z)).min(1.0);
        let ad = (STEP_FRACTION * max_step(&it.l, &d.l)).min(1.0);
        axpy(&mut it.v, ap, &d.v);
        axpy(&mut it.t, ap, &d.t);
        axpy(&mut it.s, ap, &d.s);
        for k in 0..6 {
            axpy(&mut it.z[k], ap, &d.z[k]);
            axpy(&mut it.l[k], ad, &d.l[k]);
        }
        axpy(&mut it.y, ad, &d.y);
    }
    if best.0 <= STALL_ACCEPT * p.tol {
        return Ok(Solution {
            v: best.1,
            iterations: best.2,
        });
    }
    Err(Error::Numeric(format!(
        "interior-point method stalled at relative error {:.2e}",
        best.0
    )))
}
