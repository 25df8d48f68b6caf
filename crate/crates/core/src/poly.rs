//! Sparse multivariate polynomials over `f64`, graded monomial bases and the
//! Lie derivatives used to write Liouville-type constraints.
//!
//! Variables are always ordered `(t, x_1..x_n, u_1..u_m)`. Polynomials over
//! `(t, x)` are lifted into `(t, x, u)` by zero-padding exponents.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("variable count mismatch: {left} vs {right}")]
    VarCountMismatch { left: usize, right: usize },
    #[error("variable index {var} out of range for {nvars} variables")]
    VarOutOfRange { var: usize, nvars: usize },
    #[error("point has length {got}, expected {expected}")]
    PointLength { got: usize, expected: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Exponent vector of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        MultiIndex(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.0.len(), other.0.len());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Graded lexicographic comparison: total degree first, then the larger
    /// power of the earliest variable comes first.
    pub fn grlex_cmp(&self, other: &MultiIndex) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .map(|(&e, &x)| if e == 0 { 1.0 } else { x.powi(e as i32) })
            .product()
    }
}

/// All monomials of total degree at most `max_degree`, in graded
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    nvars: usize,
    max_degree: usize,
    monomials: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, max_degree: usize) -> Self {
        let mut monomials = Vec::with_capacity(binomial(nvars + max_degree, max_degree));
        for d in 0..=max_degree {
            let mut cur = vec![0u32; nvars];
            push_compositions(&mut monomials, &mut cur, 0, d as u32);
        }
        let lookup = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialBasis {
            nvars,
            max_degree,
            monomials,
            lookup,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.monomials[i]
    }

    pub fn index_of(&self, m: &MultiIndex) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    /// Number of monomials of degree at most `d` (a prefix of this basis).
    pub fn prefix_len(&self, d: usize) -> usize {
        binomial(self.nvars + d, d)
    }
}

// emits degree-`rem` exponent vectors with the first variable descending
fn push_compositions(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, var: usize, rem: u32) {
    let n = cur.len();
    if n == 0 {
        if rem == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    if var == n - 1 {
        cur[var] = rem;
        out.push(MultiIndex(cur.clone()));
        cur[var] = 0;
        return;
    }
    for e in (0..=rem).rev() {
        cur[var] = e;
        push_compositions(out, cur, var + 1, rem - e);
    }
    cur[var] = 0;
}

/// `C(n, k)` for the small arguments that appear in basis sizes.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Sparse polynomial; zero coefficients are never stored.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.sorted_terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, e) in m.0.iter().enumerate() {
                if *e > 0 {
                    write!(f, "*z{i}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(nvars, MultiIndex::zero(nvars), c)
    }

    /// The polynomial `z_var`.
    pub fn var(nvars: usize, var: usize) -> Self {
        Self::monomial(nvars, MultiIndex::unit(nvars, var), 1.0)
    }

    pub fn monomial(nvars: usize, exps: MultiIndex, coeff: f64) -> Self {
        assert_eq!(exps.nvars(), nvars, "exponent length must equal nvars");
        let mut p = Self::zero(nvars);
        p.add_term(exps, coeff);
        p
    }

    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(PolyError::VarCountMismatch {
                    left: nvars,
                    right: e.len(),
                });
            }
            p.add_term(MultiIndex(e), c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    /// Terms in graded lexicographic order.
    pub fn sorted_terms(&self) -> Vec<(&MultiIndex, f64)> {
        let mut v: Vec<_> = self.terms().collect();
        v.sort_by(|a, b| a.0.grlex_cmp(b.0));
        v
    }

    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Maximum total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.degree() as usize).max().unwrap_or(0)
    }

    /// Maximum exponent of a single variable.
    pub fn degree_in(&self, var: usize) -> usize {
        self.terms.keys().map(|m| m.0[var] as usize).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: MultiIndex, c: f64) {
        debug_assert_eq!(m.nvars(), self.nvars);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    fn check_same(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::VarCountMismatch {
                left: self.nvars,
                right: other.nvars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.add(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        if s != 0.0 {
            for (m, c) in self.terms() {
                out.add_term(m.clone(), c * s);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..e {
            acc = acc.mul(self).expect("same nvars");
        }
        acc
    }

    pub fn differentiate(&self, var: usize) -> Result<Polynomial, PolyError> {
        if var >= self.nvars {
            return Err(PolyError::VarOutOfRange {
                var,
                nvars: self.nvars,
            });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in self.terms() {
            let e = m.0[var];
            if e > 0 {
                let mut d = m.clone();
                d.0[var] -= 1;
                out.add_term(d, c * e as f64);
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::PointLength {
                got: point.len(),
                expected: self.nvars,
            });
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Re-indexes variables: variable `i` of `self` becomes variable
    /// `positions[i]` of a polynomial over `nvars` variables.
    pub fn embed(&self, nvars: usize, positions: &[usize]) -> Polynomial {
        assert_eq!(positions.len(), self.nvars);
        let mut out = Polynomial::zero(nvars);
        for (m, c) in self.terms() {
            let mut e = vec![0u32; nvars];
            for (i, &p) in positions.iter().enumerate() {
                e[p] += m.0[i];
            }
            out.add_term(MultiIndex(e), c);
        }
        out
    }

    /// Embeds into a larger space keeping variables in place (zero-padding
    /// trailing exponents).
    pub fn pad(&self, nvars: usize) -> Polynomial {
        let pos: Vec<usize> = (0..self.nvars).collect();
        self.embed(nvars, &pos)
    }

    /// Substitutes `z_var = value` and removes that variable.
    pub fn restrict(&self, var: usize, value: f64) -> Polynomial {
        assert!(var < self.nvars);
        let mut out = Polynomial::zero(self.nvars - 1);
        for (m, c) in self.terms() {
            let mut e = m.0.clone();
            let p = e.remove(var);
            out.add_term(MultiIndex(e), c * value.powi(p as i32));
        }
        out
    }

    /// Returns `p(offset + scale * z)` componentwise.
    pub fn substitute_affine(&self, offset: &[f64], scale: &[f64]) -> Polynomial {
        assert_eq!(offset.len(), self.nvars);
        assert_eq!(scale.len(), self.nvars);
        let n = self.nvars;
        let affine: Vec<Polynomial> = (0..n)
            .map(|i| {
                let mut p = Polynomial::constant(n, offset[i]);
                p.add_term(MultiIndex::unit(n, i), scale[i]);
                p
            })
            .collect();
        self.compose(&affine)
    }

    /// Substitutes each variable `z_i` by the polynomial `subs[i]`.
    pub fn compose(&self, subs: &[Polynomial]) -> Polynomial {
        assert_eq!(subs.len(), self.nvars);
        let target = subs.first().map(|p| p.nvars).unwrap_or(0);
        let mut cache: HashMap<(usize, u32), Polynomial> = HashMap::new();
        let mut out = Polynomial::zero(target);
        for (m, c) in self.terms() {
            let mut term = Polynomial::constant(target, c);
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let pw = cache
                    .entry((i, e))
                    .or_insert_with(|| subs[i].pow(e))
                    .clone();
                term = term.mul(&pw).expect("substitutions share nvars");
            }
            for (mm, cc) in term.terms() {
                out.add_term(mm.clone(), cc);
            }
        }
        out
    }

    /// Coefficient vector over `basis` (positions not in the support are 0).
    pub fn coefficients_in(&self, basis: &MonomialBasis) -> Option<Vec<f64>> {
        let mut v = vec![0.0; basis.len()];
        for (m, c) in self.terms() {
            v[basis.index_of(m)?] = c;
        }
        Some(v)
    }

    pub fn from_coefficients(basis: &MonomialBasis, coeffs: &[f64]) -> Polynomial {
        let mut p = Polynomial::zero(basis.nvars());
        for (m, &c) in basis.monomials().iter().zip(coeffs) {
            p.add_term(m.clone(), c);
        }
        p
    }

    /// Drops terms with `|coeff| <= tol`.
    pub fn prune(&self, tol: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in self.terms() {
            if c.abs() > tol {
                out.add_term(m.clone(), c);
            }
        }
        out
    }
}

/// Arithmetic selector mirroring the four supported binary operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolyOp {
    Add,
    Sub,
    Mul,
    Scale(f64),
}

pub fn poly_arith(a: &Polynomial, b: &Polynomial, op: PolyOp) -> Result<Polynomial, PolyError> {
    match op {
        PolyOp::Add => a.add(b),
        PolyOp::Sub => a.sub(b),
        PolyOp::Mul => a.mul(b),
        PolyOp::Scale(s) => Ok(a.scale(s)),
    }
}

/// Interchange record `{coeff, exps}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

impl Polynomial {
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.sorted_terms()
            .into_iter()
            .map(|(m, c)| TermRecord {
                coeff: c,
                exps: m.0.clone(),
            })
            .collect()
    }

    pub fn from_records(nvars: usize, records: &[TermRecord]) -> Result<Polynomial, PolyError> {
        Polynomial::from_terms(nvars, records.iter().map(|r| (r.exps.clone(), r.coeff)))
    }
}

fn check_vector_field(v: &Polynomial, f: &[Polynomial]) -> Result<usize, PolyError> {
    let nv = v.nvars();
    let n = f.len();
    if nv != 1 + n {
        return Err(PolyError::Dimension(format!(
            "test function has {nv} variables but the state has dimension {n} (+1 for time)"
        )));
    }
    for fk in f {
        if fk.nvars() != nv {
            return Err(PolyError::VarCountMismatch {
                left: nv,
                right: fk.nvars(),
            });
        }
    }
    Ok(n)
}

/// `∂v/∂t + Σ_k ∂v/∂x_k f_k` for `v`, `f` over `(t, x)`.
pub fn lie_f(v: &Polynomial, f: &[Polynomial]) -> Result<Polynomial, PolyError> {
    check_vector_field(v, f)?;
    let mut out = v.differentiate(0)?;
    for (k, fk) in f.iter().enumerate() {
        let dv = v.differentiate(k + 1)?;
        if dv.is_zero() || fk.is_zero() {
            continue;
        }
        out = out.add(&dv.mul(fk)?)?;
    }
    Ok(out)
}

/// Column-wise contraction of the state gradient of `v` with `g` (`n × m`).
pub fn lie_g(v: &Polynomial, g: &[Vec<Polynomial>]) -> Result<Vec<Polynomial>, PolyError> {
    let n = g.len();
    let nv = v.nvars();
    if nv != 1 + n {
        return Err(PolyError::Dimension(format!(
            "test function has {nv} variables but g has {n} rows"
        )));
    }
    let m = g.first().map(|r| r.len()).unwrap_or(0);
    if g.iter().any(|r| r.len() != m) {
        return Err(PolyError::Dimension("ragged input matrix g".into()));
    }
    let grads: Vec<Polynomial> = (0..n)
        .map(|k| v.differentiate(k + 1))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let mut acc = Polynomial::zero(nv);
        for k in 0..n {
            let gkj = &g[k][j];
            if gkj.nvars() != nv {
                return Err(PolyError::VarCountMismatch {
                    left: nv,
                    right: gkj.nvars(),
                });
            }
            if grads[k].is_zero() || gkj.is_zero() {
                continue;
            }
            acc = acc.add(&grads[k].mul(gkj)?)?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// `L_F v = L_f v + Σ_j u_j [L_g v]_j`, returned over `(t, x, u)`.
#[allow(non_snake_case)]
pub fn lie_F(
    v: &Polynomial,
    f: &[Polynomial],
    g: &[Vec<Polynomial>],
) -> Result<Polynomial, PolyError> {
    let n = check_vector_field(v, f)?;
    if g.len() != n {
        return Err(PolyError::Dimension(format!(
            "f has {n} rows, g has {}",
            g.len()
        )));
    }
    let lg = lie_g(v, g)?;
    let m = lg.len();
    let total = 1 + n + m;
    let mut out = lie_f(v, f)?.pad(total);
    for (j, lgj) in lg.iter().enumerate() {
        let uj = Polynomial::var(total, 1 + n + j);
        out = out.add(&lgj.pad(total).mul(&uj)?)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(nvars: usize, terms: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(nvars, terms.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap()
    }

    #[test]
    fn basis_orders_and_sizes() {
        let b = MonomialBasis::new(1, 1);
        assert_eq!(b.monomials(), &[MultiIndex(vec![0]), MultiIndex(vec![1])]);
        let b = MonomialBasis::new(2, 2);
        let want: Vec<MultiIndex> = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
            .iter()
            .map(|e| MultiIndex(e.to_vec()))
            .collect();
        assert_eq!(b.monomials(), want.as_slice());
        assert_eq!(MonomialBasis::new(4, 6).len(), 210);
    }

    #[test]
    fn basis_len_matches_binomial() {
        for n in 1..=6 {
            for d in 0..=12 {
                let b = MonomialBasis::new(n, d);
                assert_eq!(b.len(), binomial(n + d, d), "n={n} d={d}");
                assert_eq!(b.get(0).degree(), 0);
                for w in b.monomials().windows(2) {
                    assert_eq!(w[0].grlex_cmp(&w[1]), Ordering::Less);
                }
            }
        }
    }

    #[test]
    fn arithmetic_examples() {
        let a = p(1, &[(&[1], 1.0), (&[0], 1.0)]);
        let b = p(1, &[(&[1], 1.0), (&[0], -1.0)]);
        assert_eq!(poly_arith(&a, &b, PolyOp::Add).unwrap(), p(1, &[(&[1], 2.0)]));
        let x1 = Polynomial::var(2, 0);
        let x2 = Polynomial::var(2, 1);
        assert_eq!(
            poly_arith(&x1, &x2, PolyOp::Mul).unwrap(),
            p(2, &[(&[1, 1], 1.0)])
        );
        let sq = p(1, &[(&[2], 1.0)]);
        let z = poly_arith(&sq, &sq, PolyOp::Scale(0.0)).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.num_terms(), 0);
        assert!(matches!(
            x1.add(&a),
            Err(PolyError::VarCountMismatch { .. })
        ));
    }

    #[test]
    fn differentiate_examples() {
        let x3 = p(1, &[(&[3], 1.0)]);
        assert_eq!(x3.differentiate(0).unwrap(), p(1, &[(&[2], 3.0)]));
        let tx = p(2, &[(&[1, 1], 1.0)]);
        assert_eq!(tx.differentiate(0).unwrap(), Polynomial::var(2, 1));
        assert!(Polynomial::constant(1, 5.0).differentiate(0).unwrap().is_zero());
        assert!(matches!(
            x3.differentiate(1),
            Err(PolyError::VarOutOfRange { .. })
        ));
    }

    fn double_integrator() -> (Vec<Polynomial>, Vec<Vec<Polynomial>>) {
        let f = vec![Polynomial::var(3, 2), Polynomial::zero(3)];
        let g = vec![vec![Polynomial::zero(3)], vec![Polynomial::constant(3, 1.0)]];
        (f, g)
    }

    #[test]
    fn lie_examples() {
        let (f, g) = double_integrator();
        let t = Polynomial::var(3, 0);
        let x1 = Polynomial::var(3, 1);
        let x2 = Polynomial::var(3, 2);
        assert_eq!(lie_f(&t, &f).unwrap(), Polynomial::constant(3, 1.0));
        assert_eq!(lie_f(&x1, &f).unwrap(), x2);
        let x1sq = x1.mul(&x1).unwrap();
        assert_eq!(lie_f(&x1sq, &f).unwrap(), p(3, &[(&[0, 1, 1], 2.0)]));

        assert_eq!(lie_g(&x2, &g).unwrap(), vec![Polynomial::constant(3, 1.0)]);
        assert_eq!(lie_g(&t, &g).unwrap(), vec![Polynomial::zero(3)]);
        let x1x2 = x1.mul(&x2).unwrap();
        assert_eq!(lie_g(&x1x2, &g).unwrap(), vec![x1.clone()]);

        assert_eq!(lie_F(&x2, &f, &g).unwrap(), Polynomial::var(4, 3));
        assert!(lie_F(&Polynomial::constant(3, 1.0), &f, &g).unwrap().is_zero());
        assert_eq!(lie_F(&t, &f, &g).unwrap(), Polynomial::constant(4, 1.0));
        assert!(lie_f(&Polynomial::var(2, 0), &f).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let q = p(1, &[(&[2], 1.0), (&[0], 1.0)]);
        assert_eq!(q.evaluate(&[2.0]).unwrap(), 5.0);
        assert_eq!(Polynomial::zero(3).evaluate(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let x1x2 = p(2, &[(&[1, 1], 1.0)]);
        assert_eq!(x1x2.evaluate(&[3.0, -2.0]).unwrap(), -6.0);
        assert!(x1x2.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn affine_substitution_and_restriction() {
        // (1 + z)^2 with z -> 2 + 3w gives 9 + 18w + 9w^2
        let q = p(1, &[(&[2], 1.0), (&[1], 2.0), (&[0], 1.0)]);
        let s = q.substitute_affine(&[2.0], &[3.0]);
        assert_eq!(s, p(1, &[(&[0], 9.0), (&[1], 18.0), (&[2], 9.0)]));
        let tx = p(2, &[(&[2, 1], 4.0), (&[0, 2], 1.0)]);
        assert_eq!(tx.restrict(0, 0.5), p(1, &[(&[1], 1.0), (&[2], 1.0)]));
    }

    #[test]
    fn records_round_trip() {
        let q = p(2, &[(&[2, 0], 1.5), (&[0, 1], -2.0)]);
        let r = q.to_records();
        assert_eq!(Polynomial::from_records(2, &r).unwrap(), q);
    }
}
