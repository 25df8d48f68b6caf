//! Infeasible primal-dual path following with HKM scaling and a Mehrotra
//! predictor-corrector step.
//!
//! With `F(y) = C + Σ y_i F_i` the iterates are `(y, S)` on the primal side and
//! `(λ, X)` on the dual side. Each Newton step reduces to
//!
//! ```text
//! H dy = g + Aᵀ dλ,   (A H⁻¹ Aᵀ) dλ = r_p − A H⁻¹ g,   H_ij = tr(F_i X F_j S⁻¹)
//! ```
//!
//! `H` is block diagonal over variable groups because every PSD block reads a
//! single group.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Accum, Mat, Par, Side};
use log::debug;

use super::{primal_residual, ConicSolution, Residuals, SolveStatus, SolverSettings};
use crate::conic::{BlockData, ConicProblem, PsdBlock};
use crate::exec::map_slice;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("invalid settings: {0}")]
    Settings(String),
}

enum BlockOps {
    /// Pairs `(p, q)` grouped by local sum index, and shift maps relative
    /// to the group start.
    Hankel {
        pairs: Vec<Vec<(u32, u32)>>,
        sums: Vec<u32>,
        shifts: Vec<(f64, Vec<u32>)>,
    },
    /// Per local variable, every `(p, q, coeff)` of `F_i` in both triangles.
    Sparse {
        vars: Vec<(usize, Vec<(usize, usize, f64)>)>,
    },
}

struct Group {
    start: usize,
    len: usize,
    /// Rows with a nonzero in this group.
    rows: Vec<usize>,
    /// `rows.len() × len` slice of `A`.
    a: Mat<f64>,
    blocks: Vec<usize>,
}

struct Prepared<'a> {
    p: &'a ConicProblem,
    groups: Vec<Group>,
    ops: Vec<BlockOps>,
    /// `1 + max |C|` over all blocks.
    cscale: f64,
    bnorm: f64,
    cnorm: f64,
    /// `A Aᵀ`, factored.
    gram: Option<Llt<f64>>,
}

impl<'a> Prepared<'a> {
    fn new(p: &'a ConicProblem) -> Self {
        let mut group_of = vec![0usize; p.num_vars];
        for (gi, g) in p.groups.iter().enumerate() {
            for v in &mut group_of[g.start..g.start + g.len] {
                *v = gi;
            }
        }
        let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); p.groups.len()];
        for (r, row) in p.rows.iter().enumerate() {
            for (v, _) in &row.terms {
                let g = group_of[*v];
                if rows_of[g].last() != Some(&r) {
                    rows_of[g].push(r);
                }
            }
        }
        let groups = p
            .groups
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                let rows = std::mem::take(&mut rows_of[gi]);
                let mut a = Mat::<f64>::zeros(rows.len(), g.len);
                for (lr, &r) in rows.iter().enumerate() {
                    for (v, c) in &p.rows[r].terms {
                        if group_of[*v] == gi {
                            a[(lr, v - g.start)] = *c;
                        }
                    }
                }
                let blocks = p
                    .blocks
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| b.group == gi)
                    .map(|(bi, _)| bi)
                    .collect();
                Group {
                    start: g.start,
                    len: g.len,
                    rows,
                    a,
                    blocks,
                }
            })
            .collect();
        let ops = p
            .blocks
            .iter()
            .map(|b| block_ops(b, p.groups[b.group].start))
            .collect();
        let cscale = 1.0
            + p.blocks
                .iter()
                .map(|b| {
                    let z = b.eval(&vec![0.0; p.num_vars], true);
                    max_abs(&z)
                })
                .fold(0.0, f64::max);
        let bnorm = p.rows.iter().fold(0.0f64, |m, r| m.max(r.rhs.abs()));
        let cnorm = p.objective.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut pr = Prepared {
            p,
            groups,
            ops,
            cscale,
            bnorm,
            cnorm,
            gram: None,
        };
        pr.gram = pr.factor_gram();
        pr
    }

    fn factor_gram(&self) -> Option<Llt<f64>> {
        let m = self.p.rows.len();
        if m == 0 {
            return None;
        }
        let mut aat = Mat::<f64>::zeros(m, m);
        for g in &self.groups {
            let r = g.rows.len();
            if r == 0 {
                continue;
            }
            let mut kg = Mat::<f64>::zeros(r, r);
            matmul(kg.as_mut(), Accum::Replace, g.a.as_ref(), g.a.transpose(), 1.0, Par::Seq);
            for j in 0..r {
                for i in 0..r {
                    aat[(g.rows[i], g.rows[j])] += kg[(i, j)];
                }
            }
        }
        factor_regularized(aat)
    }

    /// Min-norm `v` with `A v = r`.
    fn min_norm(&self, r: &[f64]) -> Option<Vec<f64>> {
        let l = self.gram.as_ref()?;
        let mut w = Mat::from_fn(r.len(), 1, |i, _| r[i]);
        l.solve_in_place(w.as_mut());
        let wv: Vec<f64> = (0..r.len()).map(|i| w[(i, 0)]).collect();
        Some(self.at_mul(&wv))
    }

    fn a_mul(&self, y: &[f64]) -> Vec<f64> {
        self.p.rows.iter().map(|r| r.dot(y)).collect()
    }

    fn at_mul(&self, l: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p.num_vars];
        for (row, lr) in self.p.rows.iter().zip(l) {
            for (v, c) in &row.terms {
                out[*v] += c * lr;
            }
        }
        out
    }

    fn adjoint(&self, z: &[Mat<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.p.num_vars];
        for (b, zb) in self.p.blocks.iter().zip(z) {
            b.adjoint_add(zb, &mut out);
        }
        out
    }

    /// `H v` applied blockwise without forming `H`.
    fn h_mul(&self, x: &[Mat<f64>], sinv: &[Mat<f64>], v: &[f64]) -> Vec<f64> {
        let idx: Vec<usize> = (0..self.p.blocks.len()).collect();
        let z = map_slice(&idx, |&b| {
            sym(&(&(&x[b] * &self.p.blocks[b].eval(v, false)) * &sinv[b]))
        });
        self.adjoint(&z)
    }

    /// Cholesky factors of the group blocks of `H`.
    fn factor_h(&self, x: &[Mat<f64>], sinv: &[Mat<f64>]) -> Option<Vec<Llt<f64>>> {
        map_slice(&self.groups, |g| {
            let mut h = Mat::<f64>::zeros(g.len, g.len);
            for &bi in &g.blocks {
                add_h(&self.ops[bi], &x[bi], &sinv[bi], &mut h);
            }
            factor_regularized(h)
        })
        .into_iter()
        .collect()
    }

    fn h_solve(&self, lh: &[Llt<f64>], v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for (g, l) in self.groups.iter().zip(lh) {
            let mut col = Mat::from_fn(g.len, 1, |i, _| v[g.start + i]);
            l.solve_in_place(col.as_mut());
            for i in 0..g.len {
                out[g.start + i] = col[(i, 0)];
            }
        }
        out
    }

    /// `A H⁻¹ Aᵀ`, factored.
    fn factor_schur(&self, lh: &[Llt<f64>]) -> Option<Llt<f64>> {
        let m = self.p.rows.len();
        let mut k = Mat::<f64>::zeros(m, m);
        let pairs: Vec<(&Group, &Llt<f64>)> = self.groups.iter().zip(lh).collect();
        // Summed in group order afterwards so the result does not depend on scheduling.
        let parts = map_slice(&pairs, |(g, l)| {
            let mut z = g.a.transpose().to_owned();
            l.L().solve_lower_triangular_in_place(z.as_mut());
            let r = g.rows.len();
            let mut kg = Mat::<f64>::zeros(r, r);
            matmul(kg.as_mut(), Accum::Replace, z.transpose(), z.as_ref(), 1.0, Par::Seq);
            kg
        });
        for ((g, _), kg) in pairs.iter().zip(&parts) {
            let r = g.rows.len();
            for j in 0..r {
                for i in 0..r {
                    k[(g.rows[i], g.rows[j])] += kg[(i, j)];
                }
            }
        }
        factor_regularized(k)
    }
}

/// `H dy − Aᵀ dλ = g`, `A dy = r` through the factored `H` and Schur
/// complement, followed by refinement against the exact operator.
fn kkt_solve(
    pr: &Prepared,
    lh: &[Llt<f64>],
    lk: &Llt<f64>,
    x: &[Mat<f64>],
    sinv: &[Mat<f64>],
    g: &[f64],
    r: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let m = pr.p.rows.len();
    let base = |g: &[f64], r: &[f64]| {
        let hg = pr.h_solve(lh, g);
        let ahg = pr.a_mul(&hg);
        let mut rhs = Mat::from_fn(m, 1, |i, _| r[i] - ahg[i]);
        lk.solve_in_place(rhs.as_mut());
        let dl: Vec<f64> = (0..m).map(|i| rhs[(i, 0)]).collect();
        let atdl = pr.at_mul(&dl);
        let sum: Vec<f64> = g.iter().zip(&atdl).map(|(a, b)| a + b).collect();
        (pr.h_solve(lh, &sum), dl)
    };
    let residual = |dy: &[f64], dl: &[f64]| {
        let hdy = pr.h_mul(x, sinv, dy);
        let atdl = pr.at_mul(dl);
        let r1: Vec<f64> = (0..g.len()).map(|i| g[i] - hdy[i] + atdl[i]).collect();
        let ady = pr.a_mul(dy);
        let r2: Vec<f64> = (0..m).map(|i| r[i] - ady[i]).collect();
        (r1, r2)
    };
    let scale = norm_inf(g).max(norm_inf(r)).max(1e-300);
    let (mut dy, mut dl) = base(g, r);
    let (mut r1, mut r2) = residual(&dy, &dl);
    let mut err = norm_inf(&r1).max(norm_inf(&r2));
    for _ in 0..REFINEMENT_STEPS {
        if err <= 1e-14 * scale {
            break;
        }
        let (cy, cl) = base(&r1, &r2);
        let ty: Vec<f64> = dy.iter().zip(&cy).map(|(a, b)| a + b).collect();
        let tl: Vec<f64> = dl.iter().zip(&cl).map(|(a, b)| a + b).collect();
        let (s1, s2) = residual(&ty, &tl);
        let terr = norm_inf(&s1).max(norm_inf(&s2));
        if terr >= err {
            break;
        }
        (dy, dl, r1, r2, err) = (ty, tl, s1, s2, terr);
    }
    (dy, dl)
}

const REFINEMENT_STEPS: usize = 30;
const NEIGHBORHOOD_FRACTION: f64 = 0.1;
/// Iterations without a `PROGRESS` relative drop of the merit before giving up.
const STALL_WINDOW: usize = 25;
const PROGRESS: f64 = 0.9;

fn max_abs(m: &Mat<f64>) -> f64 {
    let mut v = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v = v.max(m[(i, j)].abs());
        }
    }
    v
}

fn block_ops(b: &PsdBlock, start: usize) -> BlockOps {
    match &b.data {
        BlockData::Hankel(h) => {
            let s = b.size;
            let mut pairs = vec![Vec::new(); h.local_len];
            for p in 0..s {
                for q in 0..s {
                    pairs[h.sums[p * s + q] as usize].push((p as u32, q as u32));
                }
            }
            let shifts = h
                .shifts
                .iter()
                .map(|(c, m)| (*c, m.iter().map(|v| v - start as u32).collect()))
                .collect();
            BlockOps::Hankel {
                pairs,
                sums: h.sums.clone(),
                shifts,
            }
        }
        BlockData::Sparse { entries } => {
            let mut by_var: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> =
                Default::default();
            for e in entries {
                for (v, c) in &e.terms {
                    let list = by_var.entry(v - start).or_default();
                    list.push((e.i, e.j, *c));
                    if e.i != e.j {
                        list.push((e.j, e.i, *c));
                    }
                }
            }
            BlockOps::Sparse {
                vars: by_var.into_iter().collect(),
            }
        }
    }
}

/// `H += [tr(F_i X F_j S⁻¹)]` for one block.
fn add_h(ops: &BlockOps, x: &Mat<f64>, sinv: &Mat<f64>, h: &mut Mat<f64>) {
    match ops {
        BlockOps::Hankel {
            pairs,
            sums,
            shifts,
        } => {
            let s = x.nrows();
            let l = pairs.len();
            let widest = pairs.iter().map(|p| p.len()).max().unwrap_or(0);
            let mut xq = Mat::<f64>::zeros(s, widest);
            let mut sp = Mat::<f64>::zeros(widest, s);
            let mut w = Mat::<f64>::zeros(s, s);
            let mut krow = vec![0.0; l];
            for (a, pa) in pairs.iter().enumerate() {
                let na = pa.len();
                for (t, &(p, q)) in pa.iter().enumerate() {
                    for r in 0..s {
                        xq[(r, t)] = x[(r, q as usize)];
                        sp[(t, r)] = sinv[(p as usize, r)];
                    }
                }
                matmul(
                    w.as_mut(),
                    Accum::Replace,
                    xq.get(.., ..na),
                    sp.get(..na, ..),
                    1.0,
                    Par::Seq,
                );
                krow.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..s {
                    let col = w.col(c);
                    let idx = &sums[c * s..(c + 1) * s];
                    for r in 0..s {
                        krow[idx[r] as usize] += col[r];
                    }
                }
                for (ca, ma) in shifts {
                    let row = ma[a] as usize;
                    for (cb, mb) in shifts {
                        let f = ca * cb;
                        for (b, kv) in krow.iter().enumerate() {
                            h[(row, mb[b] as usize)] += f * kv;
                        }
                    }
                }
            }
        }
        BlockOps::Sparse { vars } => {
            for (i, fi) in vars {
                for (j, fj) in vars {
                    let mut v = 0.0;
                    for &(p, q, f) in fi {
                        for &(r, c, g) in fj {
                            v += f * g * x[(q, r)] * sinv[(c, p)];
                        }
                    }
                    h[(*i, *j)] += v;
                }
            }
        }
    }
}

/// A maximal linearly independent subset of the rows, in original order,
/// picked by diagonally pivoted Cholesky on `A Aᵀ`.
fn independent_rows(p: &ConicProblem) -> Vec<usize> {
    let m = p.rows.len();
    if m == 0 {
        return Vec::new();
    }
    let mut by_var: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.num_vars];
    for (r, row) in p.rows.iter().enumerate() {
        for (v, c) in &row.terms {
            by_var[*v].push((r, *c));
        }
    }
    let mut g = Mat::<f64>::zeros(m, m);
    for col in &by_var {
        for &(i, a) in col {
            for &(j, b) in col {
                g[(i, j)] += a * b;
            }
        }
    }
    let dmax = (0..m).map(|i| g[(i, i)]).fold(0.0, f64::max);
    let tol = 1e-10 * dmax.max(1e-300);
    let mut diag: Vec<f64> = (0..m).map(|i| g[(i, i)]).collect();
    let mut l: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::new();
    let mut free = vec![true; m];
    loop {
        let Some(piv) = (0..m)
            .filter(|&i| free[i])
            .max_by(|&a, &b| diag[a].total_cmp(&diag[b]))
        else {
            break;
        };
        if diag[piv] <= tol {
            break;
        }
        let d = diag[piv].sqrt();
        let col: Vec<f64> = (0..m)
            .map(|i| {
                if !free[i] {
                    return 0.0;
                }
                let mut v = g[(i, piv)];
                for lc in &l {
                    v -= lc[i] * lc[piv];
                }
                v / d
            })
            .collect();
        free[piv] = false;
        for i in 0..m {
            if free[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        l.push(col);
        chosen.push(piv);
    }
    chosen.sort_unstable();
    chosen
}

/// Cholesky with a growing diagonal shift on failure.
fn factor_regularized(mut m: Mat<f64>) -> Option<Llt<f64>> {
    let n = m.nrows();
    if n == 0 {
        return m.llt(Side::Lower).ok();
    }
    let dmax = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 1e-14 * dmax;
    for i in 0..n {
        m[(i, i)] += shift;
    }
    for _ in 0..8 {
        if let Ok(l) = m.llt(Side::Lower) {
            if shift > 1e-14 * dmax {
                debug!("factored {n}x{n} with relative shift {:.1e}", shift / dmax);
            }
            return Some(l);
        }
        let extra = shift * 99.0;
        for i in 0..n {
            m[(i, i)] += extra;
        }
        shift += extra;
    }
    None
}

fn inner(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut v = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            v += a[(i, j)] * b[(i, j)];
        }
    }
    v
}

fn sym(m: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

fn inv_spd(m: &Mat<f64>) -> Option<Mat<f64>> {
    let l = m.llt(Side::Lower).ok()?;
    Some(sym(&l.inverse()))
}

/// Largest `α` with `M + α dM ⪰ 0` (infinite if `dM ⪰ 0`).
fn max_step(m: &Mat<f64>, dm: &Mat<f64>) -> f64 {
    let Ok(l) = m.llt(Side::Lower) else {
        return 0.0;
    };
    let mut t = dm.clone();
    l.L().solve_lower_triangular_in_place(t.as_mut());
    let mut w = t.transpose().to_owned();
    l.L().solve_lower_triangular_in_place(w.as_mut());
    let w = sym(&w);
    match w.self_adjoint_eigenvalues(Side::Lower) {
        Ok(ev) => {
            let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
            if lo >= 0.0 {
                f64::INFINITY
            } else {
                -1.0 / lo
            }
        }
        Err(_) => 0.0,
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn frob(m: &Mat<f64>) -> f64 {
    inner(m, m).sqrt()
}

struct Direction {
    dy: Vec<f64>,
    dl: Vec<f64>,
    ds: Vec<Mat<f64>>,
    dx: Vec<Mat<f64>>,
}

struct Iterate {
    y: Vec<f64>,
    lambda: Vec<f64>,
    s: Vec<Mat<f64>>,
    x: Vec<Mat<f64>>,
}

#[derive(Clone, Copy, Debug)]
struct Metrics {
    pinf: f64,
    dinf: f64,
    gap: f64,
    dobj: f64,
}

impl Metrics {
    fn merit(&self, st: &SolverSettings) -> f64 {
        (self.pinf / st.feasibility_tolerance)
            .max(self.dinf / st.feasibility_tolerance)
            .max(self.gap / st.gap_tolerance)
    }
}

fn initial_point(pr: &Prepared) -> Iterate {
    let b: Vec<f64> = pr.p.rows.iter().map(|r| r.rhs).collect();
    let y = pr
        .min_norm(&b)
        .unwrap_or_else(|| vec![0.0; pr.p.num_vars]);
    let s = pr
        .p
        .blocks
        .iter()
        .map(|b| {
            let mut f = b.eval(&y, true);
            let lo = crate::moments::min_eigenvalue(&f);
            let scale = 1.0f64.max(max_abs(&f));
            let shift = (scale - lo).max(0.0);
            for i in 0..b.size {
                f[(i, i)] += shift;
            }
            f
        })
        .collect();
    let x = pr
        .p
        .blocks
        .iter()
        .map(|b| Mat::<f64>::identity(b.size, b.size))
        .collect();
    Iterate {
        y,
        lambda: vec![0.0; pr.p.rows.len()],
        s,
        x,
    }
}

pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution, SolveError> {
    settings.validate().map_err(SolveError::Settings)?;
    problem.check().map_err(SolveError::Malformed)?;
    let kept = independent_rows(problem);
    if kept.len() == problem.rows.len() {
        return Ok(solve_full_rank(problem, settings));
    }
    debug!(
        "dropping {} linearly dependent rows of {}",
        problem.rows.len() - kept.len(),
        problem.rows.len()
    );
    let mut reduced = problem.clone();
    reduced.rows = kept.iter().map(|&r| problem.rows[r].clone()).collect();
    reduced.row_scale = kept
        .iter()
        .map(|&r| problem.row_scale.get(r).copied().unwrap_or(1.0))
        .collect();
    let mut sol = solve_full_rank(&reduced, settings);
    let mut multipliers = vec![0.0; problem.rows.len()];
    for (&r, l) in kept.iter().zip(&sol.multipliers) {
        multipliers[r] = *l;
    }
    sol.multipliers = multipliers;
    // Dropped rows can only be violated when the system is inconsistent.
    sol.residuals.primal = primal_residual(problem, &sol.y);
    if sol.status.is_usable() && sol.residuals.primal > 100.0 * settings.feasibility_tolerance {
        sol.status = SolveStatus::PrimalInfeasible;
    }
    Ok(sol)
}

fn solve_full_rank(problem: &ConicProblem, settings: &SolverSettings) -> ConicSolution {
    let pr = Prepared::new(problem);
    let nblk: usize = problem.cone_dim();
    let mut it = initial_point(&pr);
    let mut best: Option<(Iterate, Metrics)> = None;
    let mut stalls = 0;
    let mut since_best = 0;
    let mut status = None;
    let mut iterations = 0;
    // Residual to complementarity ratio at the start, used to keep μ from
    // outrunning the infeasibilities.
    let mut neighborhood: Option<f64> = None;

    for iter in 0..settings.max_iterations {
        iterations = iter + 1;
        let Some(sinv) = map_slice(&it.s, inv_spd).into_iter().collect::<Option<Vec<_>>>() else {
            debug!("slack lost definiteness at iteration {iter}");
            break;
        };
        let fy = problem.block_values(&it.y);
        let e: Vec<Mat<f64>> = fy.iter().zip(&it.s).map(|(f, s)| f - s).collect();
        let ay = pr.a_mul(&it.y);
        let rp: Vec<f64> = problem.rows.iter().zip(&ay).map(|(r, a)| r.rhs - a).collect();
        let atl = pr.at_mul(&it.lambda);
        let fx = pr.adjoint(&it.x);
        let rd: Vec<f64> = (0..problem.num_vars)
            .map(|i| problem.objective[i] - atl[i] - fx[i])
            .collect();
        let pobj = problem.objective_value(&it.y);
        let cx: f64 = problem
            .blocks
            .iter()
            .zip(&it.x)
            .map(|(b, x)| b.constant_dot(x))
            .sum();
        let dobj = dot(
            &problem.rows.iter().map(|r| r.rhs).collect::<Vec<_>>(),
            &it.lambda,
        ) - cx
            + problem.objective_constant;
        let mu = if nblk > 0 {
            it.x.iter().zip(&it.s).map(|(x, s)| inner(x, s)).sum::<f64>() / nblk as f64
        } else {
            0.0
        };
        let epsnorm = e.iter().map(frob).fold(0.0, f64::max);
        let metrics = Metrics {
            pinf: (norm_inf(&rp) / (1.0 + pr.bnorm)).max(epsnorm / pr.cscale),
            dinf: norm_inf(&rd) / (1.0 + pr.cnorm),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            dobj,
        };
        debug!(
            "it {iter:3} pobj {pobj:+.9e} dobj {dobj:+.9e} pinf {:.2e} dinf {:.2e} gap {:.2e} mu {mu:.2e}",
            metrics.pinf, metrics.dinf, metrics.gap
        );
        since_best += 1;
        if best
            .as_ref()
            .is_none_or(|(_, m)| metrics.merit(settings) <= m.merit(settings))
        {
            if best
                .as_ref()
                .is_none_or(|(_, m)| metrics.merit(settings) < PROGRESS * m.merit(settings))
            {
                since_best = 0;
            }
            best = Some((
                Iterate {
                    y: it.y.clone(),
                    lambda: it.lambda.clone(),
                    s: it.s.clone(),
                    x: it.x.clone(),
                },
                metrics,
            ));
        }
        if metrics.pinf <= settings.feasibility_tolerance
            && metrics.dinf <= settings.feasibility_tolerance
            && metrics.gap <= settings.gap_tolerance
        {
            status = Some(SolveStatus::Optimal);
            break;
        }
        if since_best >= STALL_WINDOW {
            debug!("no progress for {STALL_WINDOW} iterations, stopping at {iter}");
            break;
        }
        let big = settings.infeasibility_threshold;
        let xnorm = it.x.iter().map(frob).fold(0.0, f64::max);
        if xnorm > big && dobj - cx.min(0.0) > 0.0 && metrics.dinf < 1e-3 {
            status = Some(SolveStatus::PrimalInfeasible);
            break;
        }
        if norm_inf(&it.y) > big && pobj < 0.0 && metrics.pinf < 1e-3 {
            status = Some(SolveStatus::DualInfeasible);
            break;
        }

        let Some(lh) = pr.factor_h(&it.x, &sinv) else {
            debug!("H factorization failed at iteration {iter}");
            break;
        };
        let Some(lk) = pr.factor_schur(&lh) else {
            debug!("Schur factorization failed at iteration {iter}");
            break;
        };
        let xes: Vec<Mat<f64>> = (0..problem.blocks.len())
            .map(|b| &(&it.x[b] * &e[b]) * &sinv[b])
            .collect();
        let fxes = pr.adjoint(&xes);

        let direction = |g: &[Mat<f64>]| -> Direction {
            let fg = pr.adjoint(g);
            let gv: Vec<f64> = (0..problem.num_vars).map(|i| fg[i] - fxes[i] - rd[i]).collect();
            let (dy, dl) = kkt_solve(&pr, &lh, &lk, &it.x, &sinv, &gv, &rp);
            let ds: Vec<Mat<f64>> = problem
                .blocks
                .iter()
                .zip(&e)
                .map(|(b, eb)| &b.eval(&dy, false) + eb)
                .collect();
            let dx: Vec<Mat<f64>> = (0..problem.blocks.len())
                .map(|b| &g[b] - &sym(&(&(&it.x[b] * &ds[b]) * &sinv[b])))
                .collect();
            Direction { dy, dl, ds, dx }
        };
        let steps = |d: &Direction| -> (f64, f64) {
            let ap = it
                .s
                .iter()
                .zip(&d.ds)
                .map(|(s, ds)| max_step(s, ds))
                .fold(f64::INFINITY, f64::min);
            let ad = it
                .x
                .iter()
                .zip(&d.dx)
                .map(|(x, dx)| max_step(x, dx))
                .fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        let g_aff: Vec<Mat<f64>> = it.x.iter().map(|x| -x).collect();
        let aff = direction(&g_aff);
        let (ap, ad) = steps(&aff);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = if nblk > 0 {
            (0..problem.blocks.len())
                .map(|b| {
                    let xs = &it.x[b] + &(&aff.dx[b] * ad);
                    let ss = &it.s[b] + &(&aff.ds[b] * ap);
                    inner(&xs, &ss)
                })
                .sum::<f64>()
                / nblk as f64
        } else {
            0.0
        };
        let infeas = metrics.pinf.max(metrics.dinf);
        let ratio = *neighborhood.get_or_insert(if infeas > 0.0 { mu / infeas } else { 0.0 });
        let mut sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let floor = NEIGHBORHOOD_FRACTION * ratio * infeas;
        if mu > 0.0 && sigma * mu < floor {
            sigma = (floor / mu).min(1.0);
        }
        let g_cor: Vec<Mat<f64>> = (0..problem.blocks.len())
            .map(|b| {
                let mut g = &(&sinv[b] * (sigma * mu)) - &it.x[b];
                let corr = sym(&(&(&aff.dx[b] * &aff.ds[b]) * &sinv[b]));
                g -= &corr;
                g
            })
            .collect();
        let d = direction(&g_cor);
        let (ap, ad) = steps(&d);
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);
        // A common step length keeps the two residuals shrinking together.
        let ap = ap.min(ad);
        let ad = ap;
        log::trace!("steps primal {ap:.3e} dual {ad:.3e} sigma {sigma:.2e}");

        for (y, dy) in it.y.iter_mut().zip(&d.dy) {
            *y += ap * dy;
        }
        for (s, ds) in it.s.iter_mut().zip(&d.ds) {
            *s += &(ds * ap);
        }
        for (x, dx) in it.x.iter_mut().zip(&d.dx) {
            *x += &(dx * ad);
        }
        for (l, dl) in it.lambda.iter_mut().zip(&d.dl) {
            *l += ad * dl;
        }
        if ap < 1e-8 && ad < 1e-8 {
            stalls += 1;
            if stalls >= 3 {
                debug!("step length stalled at iteration {iter}");
                break;
            }
        } else {
            stalls = 0;
        }
    }

    let (final_it, m) = match status {
        Some(SolveStatus::Optimal) | None => best.expect("at least one iterate is evaluated"),
        Some(_) => {
            let m = best.as_ref().map(|b| b.1).expect("evaluated");
            (it, m)
        }
    };
    let tol = settings;
    let status = status.unwrap_or_else(|| {
        if m.pinf <= 100.0 * tol.feasibility_tolerance
            && m.dinf <= 100.0 * tol.feasibility_tolerance
            && m.gap <= 100.0 * tol.gap_tolerance
        {
            SolveStatus::NearOptimal
        } else {
            SolveStatus::IterationLimit
        }
    });
    let primal = primal_residual(problem, &final_it.y);
    ConicSolution {
        status,
        objective: problem.objective_value(&final_it.y),
        dual_objective: Some(m.dobj),
        y: final_it.y,
        multipliers: final_it.lambda,
        dual_blocks: final_it.x,
        residuals: Residuals {
            primal,
            dual: Some(m.dinf),
            gap: Some(m.gap),
        },
        iterations,
    }
}
