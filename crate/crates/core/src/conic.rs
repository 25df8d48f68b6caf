//! Linear objective, sparse equality rows and PSD blocks affine in a single
//! free variable vector `y`:
//!
//! ```text
//! minimize    c·y + c0
//! subject to  A y = b
//!             F_b(y) = C_b + Σ_i y_i F_{b,i} ⪰ 0   for every block b
//! ```

use std::collections::BTreeMap;

use faer::Mat;
use serde::{Deserialize, Serialize};

/// Contiguous range of variables; every PSD block reads variables of one group
/// only, which makes the Schur complement block diagonal by group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarGroup {
    pub label: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFamily {
    Liouville,
    DynamicsSplit,
    BoxDecomposition,
    Marginal,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
    pub family: RowFamily,
}

impl SparseRow {
    /// Builds a row from possibly repeated terms, merging and dropping zeros.
    pub fn from_terms<I: IntoIterator<Item = (usize, f64)>>(
        terms: I,
        rhs: f64,
        family: RowFamily,
    ) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (v, c) in terms {
            *acc.entry(v).or_insert(0.0) += c;
        }
        let terms = acc.into_iter().filter(|(_, c)| *c != 0.0).collect();
        SparseRow { terms, rhs, family }
    }

    pub fn dot(&self, y: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * y[*v]).sum()
    }

    pub fn inf_norm(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, (_, c)| m.max(c.abs()))
    }
}

/// One upper-triangular entry `(i, j)`, `i <= j`, of a sparse block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub i: usize,
    pub j: usize,
    #[serde(default)]
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

/// Hankel-type block `Σ_γ c_γ y[map_γ[sum(p, q)]]`, the shape shared by moment
/// and localizing matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HankelBlock {
    /// Number of distinct local sum indices.
    pub local_len: usize,
    /// Row-major `size × size` local sum index table.
    pub sums: Vec<u32>,
    /// `(c_γ, map_γ)` with `map_γ` sending local sum indices to variables.
    pub shifts: Vec<(f64, Vec<u32>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockData {
    Sparse { entries: Vec<BlockEntry> },
    Hankel(HankelBlock),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub label: String,
    pub size: usize,
    pub group: usize,
    pub data: BlockData,
}

impl PsdBlock {
    pub fn sparse(label: impl Into<String>, size: usize, group: usize, entries: Vec<BlockEntry>) -> Self {
        PsdBlock {
            label: label.into(),
            size,
            group,
            data: BlockData::Sparse { entries },
        }
    }

    /// `F(y)`; with `affine = false` the constant part is skipped.
    pub fn eval(&self, y: &[f64], affine: bool) -> Mat<f64> {
        let s = self.size;
        let mut out = Mat::<f64>::zeros(s, s);
        match &self.data {
            BlockData::Sparse { entries } => {
                for e in entries {
                    let mut v = if affine { e.constant } else { 0.0 };
                    for (var, c) in &e.terms {
                        v += c * y[*var];
                    }
                    out[(e.i, e.j)] = v;
                    out[(e.j, e.i)] = v;
                }
            }
            BlockData::Hankel(h) => {
                let mut local = vec![0.0; h.local_len];
                for (c, map) in &h.shifts {
                    for (l, v) in local.iter_mut().zip(map) {
                        *l += c * y[*v as usize];
                    }
                }
                for j in 0..s {
                    for i in 0..s {
                        out[(i, j)] = local[h.sums[i * s + j] as usize];
                    }
                }
            }
        }
        out
    }

    /// `out_i += <F_i, Z>` for symmetric `Z`.
    pub fn adjoint_add(&self, z: &Mat<f64>, out: &mut [f64]) {
        let s = self.size;
        match &self.data {
            BlockData::Sparse { entries } => {
                for e in entries {
                    let w = if e.i == e.j {
                        z[(e.i, e.i)]
                    } else {
                        z[(e.i, e.j)] + z[(e.j, e.i)]
                    };
                    for (var, c) in &e.terms {
                        out[*var] += c * w;
                    }
                }
            }
            BlockData::Hankel(h) => {
                let mut local = vec![0.0; h.local_len];
                for j in 0..s {
                    for i in 0..s {
                        local[h.sums[i * s + j] as usize] += z[(i, j)];
                    }
                }
                for (c, map) in &h.shifts {
                    for (l, v) in local.iter().zip(map) {
                        out[*v as usize] += c * l;
                    }
                }
            }
        }
    }

    /// `<C_b, Z>`.
    pub fn constant_dot(&self, z: &Mat<f64>) -> f64 {
        match &self.data {
            BlockData::Sparse { entries } => entries
                .iter()
                .filter(|e| e.constant != 0.0)
                .map(|e| {
                    if e.i == e.j {
                        e.constant * z[(e.i, e.i)]
                    } else {
                        e.constant * (z[(e.i, e.j)] + z[(e.j, e.i)])
                    }
                })
                .sum(),
            BlockData::Hankel(_) => 0.0,
        }
    }

    pub fn has_constant(&self) -> bool {
        match &self.data {
            BlockData::Sparse { entries } => entries.iter().any(|e| e.constant != 0.0),
            BlockData::Hankel(_) => false,
        }
    }

    /// Every variable referenced by the block.
    pub fn variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = match &self.data {
            BlockData::Sparse { entries } => entries
                .iter()
                .flat_map(|e| e.terms.iter().map(|(v, _)| *v))
                .collect(),
            BlockData::Hankel(h) => h
                .shifts
                .iter()
                .flat_map(|(_, m)| m.iter().map(|v| *v as usize))
                .collect(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Expands to explicit upper-triangular entries.
    pub fn to_entries(&self) -> Vec<BlockEntry> {
        match &self.data {
            BlockData::Sparse { entries } => entries.clone(),
            BlockData::Hankel(h) => {
                let s = self.size;
                let mut out = Vec::with_capacity(s * (s + 1) / 2);
                for i in 0..s {
                    for j in i..s {
                        let a = h.sums[i * s + j] as usize;
                        let row = SparseRow::from_terms(
                            h.shifts.iter().map(|(c, m)| (m[a] as usize, *c)),
                            0.0,
                            RowFamily::Other,
                        );
                        out.push(BlockEntry {
                            i,
                            j,
                            constant: 0.0,
                            terms: row.terms,
                        });
                    }
                }
                out
            }
        }
    }

    /// True when every off-diagonal entry is identically zero.
    pub fn is_diagonal(&self) -> bool {
        self.size == 1
            || self
                .to_entries()
                .iter()
                .all(|e| e.i == e.j || (e.constant == 0.0 && e.terms.is_empty()))
    }
}

/// Relaxation bookkeeping carried along with the conic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub order: usize,
    pub time_mode: crate::ocp::TimeMode,
    pub time_scale: f64,
    pub state_offset: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub input_offset: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub test_degree: usize,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub num_vars: usize,
    /// Dense objective `c`.
    pub objective: Vec<f64>,
    #[serde(default)]
    pub objective_constant: f64,
    pub rows: Vec<SparseRow>,
    /// Factor each original row was multiplied by before it was stored.
    #[serde(default)]
    pub row_scale: Vec<f64>,
    pub blocks: Vec<PsdBlock>,
    pub groups: Vec<VarGroup>,
    #[serde(default)]
    pub meta: Option<ProblemMeta>,
}

impl ConicProblem {
    /// A problem without structural metadata: one variable group.
    pub fn new(num_vars: usize, objective: Vec<f64>) -> Self {
        ConicProblem {
            num_vars,
            objective,
            objective_constant: 0.0,
            rows: Vec::new(),
            row_scale: Vec::new(),
            blocks: Vec::new(),
            groups: vec![VarGroup {
                label: "y".into(),
                start: 0,
                len: num_vars,
            }],
            meta: None,
        }
    }

    pub fn add_row(&mut self, row: SparseRow) {
        self.rows.push(row);
        self.row_scale.push(1.0);
    }

    pub fn add_block(&mut self, block: PsdBlock) {
        self.blocks.push(block);
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(y).map(|(c, v)| c * v).sum::<f64>()
    }

    /// `b - A y`.
    pub fn equality_residual(&self, y: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs - r.dot(y)).collect()
    }

    pub fn block_values(&self, y: &[f64]) -> Vec<Mat<f64>> {
        self.blocks.iter().map(|b| b.eval(y, true)).collect()
    }

    /// Total PSD dimension `Σ_b size_b`.
    pub fn cone_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }

    /// Checks indices, group membership and block shapes.
    pub fn check(&self) -> Result<(), String> {
        if self.objective.len() != self.num_vars {
            return Err("objective length differs from the variable count".into());
        }
        for (r, row) in self.rows.iter().enumerate() {
            if let Some((v, _)) = row.terms.iter().find(|(v, _)| *v >= self.num_vars) {
                return Err(format!("row {r} references variable {v} out of range"));
            }
        }
        let mut covered = 0;
        for g in &self.groups {
            if g.start != covered {
                return Err("variable groups must partition the variables in order".into());
            }
            covered += g.len;
        }
        if covered != self.num_vars {
            return Err("variable groups do not cover every variable".into());
        }
        for b in &self.blocks {
            let g = self
                .groups
                .get(b.group)
                .ok_or_else(|| format!("block {} has unknown group", b.label))?;
            let vars = b.variables();
            if vars.iter().any(|v| *v < g.start || *v >= g.start + g.len) {
                return Err(format!("block {} reads variables outside its group", b.label));
            }
            match &b.data {
                BlockData::Sparse { entries } => {
                    if entries.iter().any(|e| e.i > e.j || e.j >= b.size) {
                        return Err(format!("block {} has an entry outside its upper triangle", b.label));
                    }
                }
                BlockData::Hankel(h) => {
                    if h.sums.len() != b.size * b.size
                        || h.sums.iter().any(|a| *a as usize >= h.local_len)
                        || h.shifts.iter().any(|(_, m)| m.len() != h.local_len)
                    {
                        return Err(format!("block {} has inconsistent tables", b.label));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_hankel() -> PsdBlock {
        // [[y0, y1], [y1, y2]]
        PsdBlock {
            label: "m".into(),
            size: 2,
            group: 0,
            data: BlockData::Hankel(HankelBlock {
                local_len: 3,
                sums: vec![0, 1, 1, 2],
                shifts: vec![(1.0, vec![0, 1, 2])],
            }),
        }
    }

    #[test]
    fn hankel_eval_and_adjoint_agree_with_entries() {
        let b = toy_hankel();
        let y = [1.0, 0.5, 0.25];
        let m = b.eval(&y, true);
        assert_eq!(m[(0, 1)], 0.5);
        assert_eq!(m[(1, 1)], 0.25);
        let sp = PsdBlock::sparse("m", 2, 0, b.to_entries());
        assert_eq!(sp.eval(&y, true), m);
        let z = Mat::from_fn(2, 2, |i, j| (1 + i + j) as f64);
        let mut a = vec![0.0; 3];
        let mut c = vec![0.0; 3];
        b.adjoint_add(&z, &mut a);
        sp.adjoint_add(&z, &mut c);
        assert_eq!(a, c);
        assert_eq!(a, vec![1.0, 4.0, 3.0]);
    }

    #[test]
    fn rows_merge_terms() {
        let r = SparseRow::from_terms([(2, 1.0), (0, 2.0), (2, -1.0)], 3.0, RowFamily::Other);
        assert_eq!(r.terms, vec![(0, 2.0)]);
        assert_eq!(r.dot(&[1.5, 9.0, 9.0]), 3.0);
    }

    #[test]
    fn check_rejects_bad_groups() {
        let mut p = ConicProblem::new(3, vec![0.0; 3]);
        p.add_block(toy_hankel());
        assert!(p.check().is_ok());
        p.groups[0].len = 2;
        assert!(p.check().is_err());
    }
}
