//! Order-`k` moment relaxation: variable layout over the six families of
//! measures, linear equality rows, PSD blocks and the objective.
//!
//! All data live in scaled coordinates (`s ∈ [0,1]`, `z ∈ [-1,1]^n`,
//! `u ∈ [-1,1]^m`), see [`ScaledProblem`].

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{
    BlockData, ConicProblem, HankelBlock, ProblemMeta, PsdBlock, RowFamily, SparseRow, VarGroup,
};
use crate::moments::HankelIndex;
use crate::ocp::{NormalizedProblem, OcpError, ScaledProblem, TimeMode, SCALED_TIME_START};
use crate::poly::{lie_F, lie_f, lie_g, MonomialBasis, MultiIndex, PolyError, Polynomial};

#[derive(Debug, Error)]
pub enum RelaxationError {
    #[error("relaxation order k={k} is below the minimum admissible order {min}")]
    OrderTooSmall { k: usize, min: usize },
    #[error("test degree {requested} exceeds the admissible cap {cap}")]
    TestDegree { requested: usize, cap: usize },
    #[error("row {0} reduces to 0 = nonzero: the relaxation is infeasible")]
    InconsistentRow(usize),
    #[error("polynomial of degree {degree} does not fit into moments of degree {available}")]
    DegreeOverflow { degree: usize, available: usize },
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Mu,
    MuT,
    Gamma,
    SigmaPlus(usize),
    SigmaMinus(usize),
    SigmaHat(usize),
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKind::Mu => write!(f, "mu"),
            MeasureKind::MuT => write!(f, "mu_T"),
            MeasureKind::Gamma => write!(f, "gamma"),
            MeasureKind::SigmaPlus(j) => write!(f, "sigma_plus[{j}]"),
            MeasureKind::SigmaMinus(j) => write!(f, "sigma_minus[{j}]"),
            MeasureKind::SigmaHat(j) => write!(f, "sigma_hat[{j}]"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeasureLayout {
    pub kind: MeasureKind,
    /// Whether variable 0 is time.
    pub has_time: bool,
    pub basis: Arc<MonomialBasis>,
    pub offset: usize,
    /// Values of ambient coordinates that were removed from `basis` because
    /// the support fixes them; empty when nothing is pinned.
    pub pinned: Vec<Option<f64>>,
}

impl MeasureLayout {
    pub fn nvars(&self) -> usize {
        self.basis.nvars()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn var(&self, m: &MultiIndex) -> Option<usize> {
        self.basis.index_of(m).map(|i| self.offset + i)
    }

    /// Number of coordinates before pinned ones are removed.
    pub fn ambient_nvars(&self) -> usize {
        if self.pinned.is_empty() {
            self.nvars()
        } else {
            self.pinned.len()
        }
    }

    /// `p` with pinned coordinates substituted, over the basis variables.
    pub fn reduce_poly(&self, p: &Polynomial) -> Result<Polynomial, RelaxationError> {
        if p.nvars() != self.ambient_nvars() {
            return Err(PolyError::VarCountMismatch {
                left: self.ambient_nvars(),
                right: p.nvars(),
            }
            .into());
        }
        if self.pinned.is_empty() {
            return Ok(p.clone());
        }
        let mut out = Polynomial::zero(self.nvars());
        for (m, c) in p.terms() {
            let mut coeff = c;
            let mut kept = Vec::with_capacity(self.nvars());
            for (e, pin) in m.0.iter().zip(&self.pinned) {
                match pin {
                    Some(v) => coeff *= v.powi(*e as i32),
                    None => kept.push(*e),
                }
            }
            out.add_term(MultiIndex(kept), coeff);
        }
        Ok(out)
    }

    /// Drops pinned coordinates of an ambient point.
    pub fn reduce_point(&self, point: &[f64]) -> Vec<f64> {
        if self.pinned.is_empty() {
            return point.to_vec();
        }
        point
            .iter()
            .zip(&self.pinned)
            .filter(|(_, p)| p.is_none())
            .map(|(x, _)| *x)
            .collect()
    }

    /// Riesz coefficients of `p` as `(global variable, coefficient)` pairs.
    pub fn riesz_terms(&self, p: &Polynomial) -> Result<Vec<(usize, f64)>, RelaxationError> {
        let p = self.reduce_poly(p)?;
        p.terms()
            .map(|(m, c)| {
                self.var(m).map(|v| (v, c)).ok_or(RelaxationError::DegreeOverflow {
                    degree: p.degree(),
                    available: self.basis.max_degree(),
                })
            })
            .collect()
    }
}

/// Offsets of every measure's moments in the global vector `y`.
#[derive(Debug, Clone)]
pub struct VariableLayout {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub time_mode: TimeMode,
    pub measures: Vec<MeasureLayout>,
    pub total: usize,
}

impl VariableLayout {
    pub fn new(n: usize, m: usize, k: usize, time_mode: TimeMode) -> Self {
        Self::with_terminal_pins(n, m, k, time_mode, &[])
    }

    /// Layout where `μ_T` carries no moments in the state coordinates
    /// `pins[i] = Some(c)`, since its support forces `z_i = c`.
    pub fn with_terminal_pins(
        n: usize,
        m: usize,
        k: usize,
        time_mode: TimeMode,
        pins: &[Option<f64>],
    ) -> Self {
        let mut kinds = vec![MeasureKind::Mu, MeasureKind::MuT, MeasureKind::Gamma];
        kinds.extend((0..m).map(MeasureKind::SigmaPlus));
        kinds.extend((0..m).map(MeasureKind::SigmaMinus));
        kinds.extend((0..m).map(MeasureKind::SigmaHat));
        let tx = Arc::new(MonomialBasis::new(1 + n, 2 * k));
        let mu = Arc::new(MonomialBasis::new(1 + n + m, 2 * k));
        let (mu_t, mu_t_time) = match time_mode {
            TimeMode::Fixed => (Arc::new(MonomialBasis::new(n, 2 * k)), false),
            TimeMode::Free => (tx.clone(), true),
        };
        let mut terminal_pins = Vec::new();
        let mut mu_t = mu_t;
        if pins.iter().any(|p| p.is_some()) {
            if mu_t_time {
                terminal_pins.push(None);
            }
            terminal_pins.extend_from_slice(pins);
            let free = terminal_pins.iter().filter(|p| p.is_none()).count();
            mu_t = Arc::new(MonomialBasis::new(free, 2 * k));
        }
        let mut offset = 0;
        let measures = kinds
            .into_iter()
            .map(|kind| {
                let (basis, has_time) = match kind {
                    MeasureKind::Mu => (mu.clone(), true),
                    MeasureKind::MuT => (mu_t.clone(), mu_t_time),
                    _ => (tx.clone(), true),
                };
                let pinned = if kind == MeasureKind::MuT {
                    terminal_pins.clone()
                } else {
                    Vec::new()
                };
                let ml = MeasureLayout {
                    kind,
                    has_time,
                    basis,
                    offset,
                    pinned,
                };
                offset += ml.len();
                ml
            })
            .collect();
        VariableLayout {
            k,
            n,
            m,
            time_mode,
            measures,
            total: offset,
        }
    }

    pub fn measure(&self, kind: MeasureKind) -> &MeasureLayout {
        self.measures
            .iter()
            .find(|ml| ml.kind == kind)
            .expect("layout contains every measure kind")
    }

    /// Moments of one measure inside the global vector.
    pub fn slice<'a>(&self, y: &'a [f64], kind: MeasureKind) -> &'a [f64] {
        &y[self.measure(kind).range()]
    }

    pub fn groups(&self) -> Vec<VarGroup> {
        self.measures
            .iter()
            .map(|ml| VarGroup {
                label: ml.kind.to_string(),
                start: ml.offset,
                len: ml.len(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationConfig {
    pub k: usize,
    /// Lower the degree of test monomials below the admissible cap.
    #[serde(default)]
    pub test_degree: Option<usize>,
    #[serde(default = "default_true")]
    pub filter_redundant: bool,
}

fn default_true() -> bool {
    true
}

impl RelaxationConfig {
    pub fn new(k: usize) -> Self {
        RelaxationConfig {
            k,
            test_degree: None,
            filter_redundant: true,
        }
    }
}

/// `r` such that `deg L_F v <= deg v - 1 + r`.
fn lie_degree_increase(sp: &ScaledProblem) -> usize {
    let df = sp.f.iter().map(|p| p.degree()).max().unwrap_or(0);
    let dg = sp
        .g
        .iter()
        .flatten()
        .filter(|p| !p.is_zero())
        .map(|p| p.degree() + 1)
        .max()
        .unwrap_or(0);
    df.max(dg).max(1)
}

fn half_up(d: usize) -> usize {
    d.div_ceil(2)
}

/// Smallest `k` for which every block and row of the relaxation is defined.
pub fn min_order(sp: &ScaledProblem) -> usize {
    let constraint_deg = sp
        .state_constraints
        .iter()
        .chain(&sp.target_constraints)
        .map(|h| h.degree())
        .max()
        .unwrap_or(0);
    [
        2,
        half_up(sp.running_cost.degree()),
        half_up(sp.terminal_cost.degree()),
        half_up(constraint_deg),
        half_up(lie_degree_increase(sp)),
    ]
    .into_iter()
    .max()
    .unwrap_or(2)
}

/// Admissible degree of test monomials at order `k`.
pub fn test_degree_cap(sp: &ScaledProblem, k: usize) -> usize {
    (2 * k + 1).saturating_sub(lie_degree_increase(sp))
}

/// Coordinate `i` and value `c` when `h ≥ 0` reads `a (z_i − c)² ≤ 0`.
pub fn pinned_coordinate(h: &Polynomial) -> Option<(usize, f64)> {
    let mut var = None;
    for (m, _) in h.terms() {
        for (i, e) in m.0.iter().enumerate() {
            if *e > 0 {
                if var.is_some_and(|v| v != i) || *e > 2 {
                    return None;
                }
                var = Some(i);
            }
        }
    }
    let i = var?;
    let n = h.nvars();
    let power = |e: u32| {
        let mut m = MultiIndex::zero(n);
        m.0[i] = e;
        h.coeff(&m)
    };
    let (a, b, d) = (power(2), power(1), power(0));
    if !(a < 0.0) {
        return None;
    }
    let disc = b * b - 4.0 * a * d;
    let scale = (b * b).max((4.0 * a * d).abs()).max(a * a);
    if disc.abs() > 1e-12 * scale {
        return None;
    }
    Some((i, -b / (2.0 * a)))
}

/// Pinned state coordinates of the target set.
pub fn target_pins(sp: &ScaledProblem) -> Vec<Option<f64>> {
    let mut pins = vec![None; sp.n];
    for h in &sp.target_constraints {
        if let Some((i, c)) = pinned_coordinate(h) {
            pins[i] = Some(c);
        }
    }
    pins
}

/// Everything the row and block builders share.
struct Context {
    sp: ScaledProblem,
    layout: VariableLayout,
    test_degree: usize,
}

impl Context {
    fn new(np: &NormalizedProblem, config: &RelaxationConfig) -> Result<Self, RelaxationError> {
        let sp = ScaledProblem::from_normalized(np)?;
        let min = min_order(&sp);
        if config.k < min {
            return Err(RelaxationError::OrderTooSmall { k: config.k, min });
        }
        let cap = test_degree_cap(&sp, config.k);
        let test_degree = match config.test_degree {
            Some(d) if d > cap => {
                return Err(RelaxationError::TestDegree {
                    requested: d,
                    cap,
                })
            }
            Some(d) => d,
            None => cap,
        };
        let pins = target_pins(&sp);
        let layout = VariableLayout::with_terminal_pins(sp.n, sp.m, config.k, sp.time_mode, &pins);
        Ok(Context {
            sp,
            layout,
            test_degree,
        })
    }

    fn test_monomials(&self) -> Vec<Polynomial> {
        let nv = 1 + self.sp.n;
        MonomialBasis::new(nv, self.test_degree)
            .monomials()
            .iter()
            .map(|a| Polynomial::monomial(nv, a.clone(), 1.0))
            .collect()
    }

    fn x_positions(&self) -> Vec<usize> {
        (1..=self.sp.n).collect()
    }

    /// A polynomial over `z` written in `μ_T`'s variables.
    fn on_terminal(&self, p: &Polynomial) -> Polynomial {
        match self.sp.time_mode {
            TimeMode::Fixed => p.clone(),
            TimeMode::Free => p.embed(1 + self.sp.n, &self.x_positions()),
        }
    }

    fn liouville_rows(&self) -> Result<Vec<SparseRow>, RelaxationError> {
        let mu = self.layout.measure(MeasureKind::Mu);
        let mu_t = self.layout.measure(MeasureKind::MuT);
        let mut rows = Vec::new();
        for v in self.test_monomials() {
            let lf = lie_F(&v, &self.sp.f, &self.sp.g)?;
            let vt = match self.sp.time_mode {
                TimeMode::Fixed => v.restrict(0, 1.0),
                TimeMode::Free => v.clone(),
            };
            let mut terms = mu.riesz_terms(&lf)?;
            terms.extend(mu_t.riesz_terms(&vt)?.into_iter().map(|(i, c)| (i, -c)));
            let mut start = vec![SCALED_TIME_START];
            start.extend_from_slice(&self.sp.x0);
            let rhs = -v.evaluate(&start)?;
            rows.push(SparseRow::from_terms(terms, rhs, RowFamily::Liouville));
        }
        Ok(rows)
    }

    fn dynamics_split_rows(&self) -> Result<Vec<SparseRow>, RelaxationError> {
        let mu = self.layout.measure(MeasureKind::Mu);
        let gamma = self.layout.measure(MeasureKind::Gamma);
        let mut rows = Vec::new();
        for v in self.test_monomials() {
            let lfull = lie_F(&v, &self.sp.f, &self.sp.g)?;
            let ldrift = lie_f(&v, &self.sp.f)?;
            let lg = lie_g(&v, &self.sp.g)?;
            let mut terms = mu.riesz_terms(&lfull)?;
            terms.extend(gamma.riesz_terms(&ldrift)?.into_iter().map(|(i, c)| (i, -c)));
            for (j, lgj) in lg.iter().enumerate() {
                let sp = self.layout.measure(MeasureKind::SigmaPlus(j));
                let sm = self.layout.measure(MeasureKind::SigmaMinus(j));
                terms.extend(sp.riesz_terms(lgj)?.into_iter().map(|(i, c)| (i, -c)));
                terms.extend(sm.riesz_terms(lgj)?);
            }
            rows.push(SparseRow::from_terms(terms, 0.0, RowFamily::DynamicsSplit));
        }
        Ok(rows)
    }

    fn box_decomposition_rows(&self) -> Vec<SparseRow> {
        let gamma = self.layout.measure(MeasureKind::Gamma);
        let mut rows = Vec::new();
        for j in 0..self.sp.m {
            let sp = self.layout.measure(MeasureKind::SigmaPlus(j));
            let sm = self.layout.measure(MeasureKind::SigmaMinus(j));
            let sh = self.layout.measure(MeasureKind::SigmaHat(j));
            for i in 0..gamma.len() {
                rows.push(SparseRow::from_terms(
                    [
                        (sp.offset + i, 1.0),
                        (sm.offset + i, 1.0),
                        (sh.offset + i, 1.0),
                        (gamma.offset + i, -1.0),
                    ],
                    0.0,
                    RowFamily::BoxDecomposition,
                ));
            }
        }
        rows
    }

    fn marginal_rows(&self) -> Vec<SparseRow> {
        let mu = self.layout.measure(MeasureKind::Mu);
        let gamma = self.layout.measure(MeasureKind::Gamma);
        gamma
            .basis
            .monomials()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut e = a.0.clone();
                e.resize(mu.nvars(), 0);
                let v = mu.var(&MultiIndex(e)).expect("marginal monomial in μ basis");
                SparseRow::from_terms(
                    [(gamma.offset + i, 1.0), (v, -1.0)],
                    0.0,
                    RowFamily::Marginal,
                )
            })
            .collect()
    }

    /// Replaces every `γ` moment by the matching `μ` marginal moment.
    fn eliminate_gamma(&self, row: &SparseRow) -> SparseRow {
        let mu = self.layout.measure(MeasureKind::Mu);
        let gamma = self.layout.measure(MeasureKind::Gamma);
        let terms = row.terms.iter().map(|&(v, c)| {
            if gamma.range().contains(&v) {
                let mut e = gamma.basis.get(v - gamma.offset).0.clone();
                e.resize(mu.nvars(), 0);
                (mu.var(&MultiIndex(e)).expect("marginal monomial in μ basis"), c)
            } else {
                (v, c)
            }
        });
        SparseRow::from_terms(terms, row.rhs, row.family)
    }

    fn hankel_block(
        &self,
        label: String,
        ml: &MeasureLayout,
        h: &Polynomial,
        order: usize,
        group: usize,
    ) -> Result<PsdBlock, RelaxationError> {
        if h.degree() + 2 * order > ml.basis.max_degree() {
            return Err(RelaxationError::DegreeOverflow {
                degree: h.degree() + 2 * order,
                available: ml.basis.max_degree(),
            });
        }
        let local = MonomialBasis::new(ml.nvars(), 2 * order);
        let index = HankelIndex::new(&local, order, None);
        let s = index.size();
        let mut sums = Vec::with_capacity(s * s);
        for p in 0..s {
            for q in 0..s {
                sums.push(index.at(p, q) as u32);
            }
        }
        let shifts = h
            .sorted_terms()
            .into_iter()
            .map(|(g, c)| {
                let map = local
                    .monomials()
                    .iter()
                    .map(|a| ml.var(&a.add(g)).expect("degree checked") as u32)
                    .collect();
                (c, map)
            })
            .collect();
        Ok(PsdBlock {
            label,
            size: s,
            group,
            data: BlockData::Hankel(HankelBlock {
                local_len: local.len(),
                sums,
                shifts,
            }),
        })
    }

    fn psd_blocks(&self) -> Result<Vec<PsdBlock>, RelaxationError> {
        let k = self.layout.k;
        let (n, m) = (self.sp.n, self.sp.m);
        let mut blocks = Vec::new();
        for (group, ml) in self.layout.measures.iter().enumerate() {
            let nv = ml.nvars();
            let name = ml.kind.to_string();
            blocks.push(self.hankel_block(
                format!("moment[{name}]"),
                ml,
                &Polynomial::constant(nv, 1.0),
                k,
                group,
            )?);
            let is_terminal = ml.kind == MeasureKind::MuT;
            if !is_terminal {
                for (i, h) in self.sp.state_constraints.iter().enumerate() {
                    let hx = h.embed(nv, &self.x_positions());
                    let order = k - half_up(h.degree());
                    blocks.push(self.hankel_block(format!("X[{i}]@{name}"), ml, &hx, order, group)?);
                }
            } else {
                for (i, h) in self.sp.target_constraints.iter().enumerate() {
                    let ht = ml.reduce_poly(&self.on_terminal(h))?;
                    if ht.degree() == 0 && ht.coeff(&MultiIndex::zero(nv)) >= 0.0 {
                        continue;
                    }
                    let order = k - half_up(ht.degree());
                    blocks.push(self.hankel_block(format!("XT[{i}]@{name}"), ml, &ht, order, group)?);
                }
            }
            if ml.kind == MeasureKind::Mu {
                for j in 0..m {
                    let u = Polynomial::var(nv, 1 + n + j);
                    let hu = Polynomial::constant(nv, 1.0).sub(&u.mul(&u)?)?;
                    blocks.push(self.hankel_block(format!("U[{j}]@{name}"), ml, &hu, k - 1, group)?);
                }
            }
            if ml.has_time {
                // (s - s0)(1 - s) ≥ 0
                let t = Polynomial::var(nv, 0);
                let lo = t.sub(&Polynomial::constant(nv, SCALED_TIME_START))?;
                let ht = lo.mul(&Polynomial::constant(nv, 1.0).sub(&t)?)?;
                blocks.push(self.hankel_block(format!("time@{name}"), ml, &ht, k - 1, group)?);
            }
        }
        Ok(blocks)
    }

    fn objective(&self) -> Result<Vec<f64>, RelaxationError> {
        let mut c = vec![0.0; self.layout.total];
        let mu = self.layout.measure(MeasureKind::Mu);
        let mu_t = self.layout.measure(MeasureKind::MuT);
        for (v, w) in mu.riesz_terms(&self.sp.running_cost)? {
            c[v] += w;
        }
        for (v, w) in mu_t.riesz_terms(&self.on_terminal(&self.sp.terminal_cost))? {
            c[v] += w;
        }
        Ok(c)
    }
}

pub fn layout(np: &NormalizedProblem, k: usize) -> Result<VariableLayout, RelaxationError> {
    Ok(Context::new(np, &RelaxationConfig::new(k))?.layout)
}

pub fn liouville_rows(np: &NormalizedProblem, k: usize) -> Result<Vec<SparseRow>, RelaxationError> {
    Context::new(np, &RelaxationConfig::new(k))?.liouville_rows()
}

pub fn dynamics_split_rows(
    np: &NormalizedProblem,
    k: usize,
) -> Result<Vec<SparseRow>, RelaxationError> {
    Context::new(np, &RelaxationConfig::new(k))?.dynamics_split_rows()
}

pub fn box_decomposition_rows(
    np: &NormalizedProblem,
    k: usize,
) -> Result<Vec<SparseRow>, RelaxationError> {
    Ok(Context::new(np, &RelaxationConfig::new(k))?.box_decomposition_rows())
}

pub fn marginal_rows(np: &NormalizedProblem, k: usize) -> Result<Vec<SparseRow>, RelaxationError> {
    Ok(Context::new(np, &RelaxationConfig::new(k))?.marginal_rows())
}

pub fn psd_blocks(np: &NormalizedProblem, k: usize) -> Result<Vec<PsdBlock>, RelaxationError> {
    Context::new(np, &RelaxationConfig::new(k))?.psd_blocks()
}

/// Bit pattern key of a normalized row, used to spot exact duplicates.
fn row_key(row: &SparseRow) -> (Vec<(usize, u64)>, u64) {
    (
        row.terms.iter().map(|(v, c)| (*v, c.to_bits())).collect(),
        row.rhs.to_bits(),
    )
}

/// Scales to unit infinity norm with a positive leading coefficient.
fn normalize_row(row: &mut SparseRow) -> f64 {
    let norm = row.inf_norm();
    let sign = if row.terms.first().is_some_and(|(_, c)| *c < 0.0) {
        -1.0
    } else {
        1.0
    };
    let s = sign / norm;
    for t in &mut row.terms {
        t.1 *= s;
    }
    row.rhs *= s;
    s
}

pub fn assemble(
    np: &NormalizedProblem,
    config: &RelaxationConfig,
) -> Result<ConicProblem, RelaxationError> {
    let ctx = Context::new(np, config)?;
    let mut raw = ctx.liouville_rows()?;
    let dyn_rows = ctx.dynamics_split_rows()?;
    if config.filter_redundant {
        raw.extend(dyn_rows.iter().map(|r| ctx.eliminate_gamma(r)));
    } else {
        raw.extend(dyn_rows);
    }
    raw.extend(ctx.box_decomposition_rows());
    raw.extend(ctx.marginal_rows());

    let mut rows = Vec::with_capacity(raw.len());
    let mut row_scale = Vec::with_capacity(raw.len());
    let mut seen: HashMap<(Vec<(usize, u64)>, u64), ()> = HashMap::new();
    let mut dropped = 0;
    for (i, mut row) in raw.into_iter().enumerate() {
        if row.terms.is_empty() {
            if row.rhs != 0.0 {
                return Err(RelaxationError::InconsistentRow(i));
            }
            dropped += 1;
            continue;
        }
        let s = normalize_row(&mut row);
        if config.filter_redundant && seen.insert(row_key(&row), ()).is_some() {
            dropped += 1;
            continue;
        }
        rows.push(row);
        row_scale.push(s);
    }

    let sp = &ctx.sp;
    Ok(ConicProblem {
        num_vars: ctx.layout.total,
        objective: ctx.objective()?,
        objective_constant: 0.0,
        rows,
        row_scale,
        blocks: ctx.psd_blocks()?,
        groups: ctx.layout.groups(),
        meta: Some(ProblemMeta {
            order: config.k,
            time_mode: sp.time_mode,
            time_scale: sp.time_scale,
            state_offset: sp.state_offset.clone(),
            state_scale: sp.state_scale.clone(),
            input_offset: np.input_map.offset.clone(),
            input_scale: np.input_map.scale.clone(),
            test_degree: ctx.test_degree,
            dropped_rows: dropped,
        }),
    })
}

/// Global moment vector of an admissible trajectory, built by composite
/// Simpson quadrature of scaled samples `(s_i, z_i, u_i)` on a uniform grid.
///
/// `u` is split into `σ_±` by sign and `σ̂ = γ - σ_+ - σ_-`.
pub fn trajectory_moments(
    layout: &VariableLayout,
    samples: &[(f64, Vec<f64>, Vec<f64>)],
) -> Vec<f64> {
    let n_int = samples.len() - 1;
    assert!(n_int >= 2 && n_int % 2 == 0, "Simpson needs an even number of intervals");
    let h = samples[n_int].0 - samples[0].0;
    let mut y = vec![0.0; layout.total];
    let (n, m) = (layout.n, layout.m);
    for (i, (s, z, u)) in samples.iter().enumerate() {
        let w = h / (3.0 * n_int as f64)
            * if i == 0 || i == n_int {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
        let mut full = vec![*s];
        full.extend_from_slice(z);
        full.extend_from_slice(u);
        let tx = &full[..1 + n];
        for ml in &layout.measures {
            let pt: &[f64] = match ml.kind {
                MeasureKind::Mu => &full,
                MeasureKind::MuT => continue,
                _ => tx,
            };
            let weight = match ml.kind {
                MeasureKind::SigmaPlus(j) => w * u[j].max(0.0),
                MeasureKind::SigmaMinus(j) => w * (-u[j]).max(0.0),
                MeasureKind::SigmaHat(j) => w * (1.0 - u[j].abs()),
                _ => w,
            };
            if weight == 0.0 {
                continue;
            }
            for (idx, a) in ml.basis.monomials().iter().enumerate() {
                y[ml.offset + idx] += weight * a.eval(pt);
            }
        }
    }
    let (s_end, z_end, _) = &samples[n_int];
    let mu_t = layout.measure(MeasureKind::MuT);
    let mut end = Vec::with_capacity(1 + n);
    if mu_t.has_time {
        end.push(*s_end);
    }
    end.extend_from_slice(z_end);
    let end = mu_t.reduce_point(&end);
    for (idx, a) in mu_t.basis.monomials().iter().enumerate() {
        y[mu_t.offset + idx] = a.eval(&end);
    }
    let _ = m;
    y
}
