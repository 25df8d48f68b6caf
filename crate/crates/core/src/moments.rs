//! Truncated moment sequences, the Riesz functional, moment matrices and
//! localizing matrices.

use std::sync::Arc;

use faer::Mat;
use thiserror::Error;

use crate::poly::{MonomialBasis, MultiIndex, Polynomial};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("polynomial over {got} variables, moments over {expected}")]
    VarCount { got: usize, expected: usize },
    #[error("degree {needed} exceeds available moment degree {available}")]
    DegreeOverflow { needed: usize, available: usize },
    #[error("moment vector length {got} does not match basis size {expected}")]
    Length { got: usize, expected: usize },
}

/// Moments `y_α` of one measure, indexed by a graded basis.
#[derive(Debug, Clone)]
pub struct MomentVector {
    basis: Arc<MonomialBasis>,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn new(basis: Arc<MonomialBasis>, values: Vec<f64>) -> Result<Self, MomentError> {
        if values.len() != basis.len() {
            return Err(MomentError::Length {
                got: values.len(),
                expected: basis.len(),
            });
        }
        Ok(MomentVector { basis, values })
    }

    pub fn zeros(basis: Arc<MonomialBasis>) -> Self {
        let values = vec![0.0; basis.len()];
        MomentVector { basis, values }
    }

    /// Moments of `Σ w_i δ_{p_i}`.
    pub fn from_atoms(basis: Arc<MonomialBasis>, points: &[Vec<f64>], weights: &[f64]) -> Self {
        let mut values = vec![0.0; basis.len()];
        for (p, w) in points.iter().zip(weights) {
            for (v, m) in values.iter_mut().zip(basis.monomials()) {
                *v += w * m.eval(p);
            }
        }
        MomentVector { basis, values }
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mass(&self) -> f64 {
        self.values[0]
    }

    pub fn degree(&self) -> usize {
        self.basis.max_degree()
    }

    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.basis.index_of(m).map(|i| self.values[i])
    }

    pub fn riesz(&self, p: &Polynomial) -> Result<f64, MomentError> {
        riesz(self, p)
    }
}

/// `L_y(p) = Σ_α p_α y_α`.
pub fn riesz(y: &MomentVector, p: &Polynomial) -> Result<f64, MomentError> {
    if p.nvars() != y.basis.nvars() {
        return Err(MomentError::VarCount {
            got: p.nvars(),
            expected: y.basis.nvars(),
        });
    }
    if p.degree() > y.degree() {
        return Err(MomentError::DegreeOverflow {
            needed: p.degree(),
            available: y.degree(),
        });
    }
    Ok(p
        .terms()
        .map(|(m, c)| c * y.values[y.basis.index_of(m).expect("degree checked")])
        .sum())
}

/// Precomputed `(α, β) -> α + β` positions for matrices indexed by the
/// degree-`order` basis, looked up in a larger ambient basis.
#[derive(Debug, Clone)]
pub struct HankelIndex {
    order: usize,
    rows: Vec<MultiIndex>,
    /// Row-major `size × size` table of positions in the ambient basis.
    sums: Vec<u32>,
}

impl HankelIndex {
    pub fn new(ambient: &MonomialBasis, order: usize, shift: Option<&MultiIndex>) -> Self {
        let rows_basis = MonomialBasis::new(ambient.nvars(), order);
        let rows: Vec<MultiIndex> = rows_basis.monomials().to_vec();
        let s = rows.len();
        let mut sums = vec![0u32; s * s];
        for p in 0..s {
            for q in p..s {
                let mut a = rows[p].add(&rows[q]);
                if let Some(g) = shift {
                    a = a.add(g);
                }
                let idx = ambient
                    .index_of(&a)
                    .expect("ambient basis must contain every product") as u32;
                sums[p * s + q] = idx;
                sums[q * s + p] = idx;
            }
        }
        HankelIndex { order, rows, sums }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[MultiIndex] {
        &self.rows
    }

    #[inline]
    pub fn at(&self, p: usize, q: usize) -> usize {
        self.sums[p * self.rows.len() + q] as usize
    }
}

/// `[M_k(y)]_{α,β} = y_{α+β}`.
pub fn moment_matrix(y: &MomentVector, k: usize) -> Result<Mat<f64>, MomentError> {
    if 2 * k > y.degree() {
        return Err(MomentError::DegreeOverflow {
            needed: 2 * k,
            available: y.degree(),
        });
    }
    let idx = HankelIndex::new(&y.basis, k, None);
    let s = idx.size();
    Ok(Mat::from_fn(s, s, |i, j| y.values[idx.at(i, j)]))
}

/// `[M_k(h, y)]_{α,β} = Σ_γ h_γ y_{γ+α+β}`.
pub fn localizing_matrix(
    y: &MomentVector,
    h: &Polynomial,
    k_h: usize,
) -> Result<Mat<f64>, MomentError> {
    if h.nvars() != y.basis.nvars() {
        return Err(MomentError::VarCount {
            got: h.nvars(),
            expected: y.basis.nvars(),
        });
    }
    let needed = 2 * k_h + h.degree();
    if needed > y.degree() {
        return Err(MomentError::DegreeOverflow {
            needed,
            available: y.degree(),
        });
    }
    let s = MonomialBasis::new(y.basis.nvars(), k_h).len();
    let mut out = Mat::<f64>::zeros(s, s);
    for (gamma, c) in h.terms() {
        let idx = HankelIndex::new(&y.basis, k_h, Some(gamma));
        for j in 0..s {
            for i in 0..s {
                out[(i, j)] += c * y.values[idx.at(i, j)];
            }
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.self_adjoint_eigenvalues(faer::Side::Lower)
        .map(|v| v[0])
        .unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lebesgue01(degree: usize) -> MomentVector {
        let b = Arc::new(MonomialBasis::new(1, degree));
        let v = (0..=degree).map(|j| 1.0 / (j as f64 + 1.0)).collect();
        MomentVector::new(b, v).unwrap()
    }

    fn dirac(a: f64, degree: usize) -> MomentVector {
        let b = Arc::new(MonomialBasis::new(1, degree));
        MomentVector::from_atoms(b, &[vec![a]], &[1.0])
    }

    #[test]
    fn riesz_examples() {
        let y = lebesgue01(2);
        assert!((riesz(&y, &Polynomial::var(1, 0)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(riesz(&y, &Polynomial::zero(1)).unwrap(), 0.0);
        let d = dirac(2.0, 4);
        let x2 = Polynomial::var(1, 0).pow(2);
        assert_eq!(riesz(&d, &x2).unwrap(), 4.0);
        assert_eq!(riesz(&d, &Polynomial::constant(1, 1.0)).unwrap(), d.mass());
        assert!(matches!(
            riesz(&y, &x2.pow(2)),
            Err(MomentError::DegreeOverflow { .. })
        ));
        assert!(riesz(&y, &Polynomial::var(2, 0)).is_err());
    }

    #[test]
    fn moment_matrix_examples() {
        let m = moment_matrix(&lebesgue01(2), 1).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(0, 1)], 0.5);
        assert_eq!(m[(1, 0)], 0.5);
        assert!((m[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);

        let a = -1.5;
        let m = moment_matrix(&dirac(a, 6), 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((m[(i, j)] - a.powi((i + j) as i32)).abs() < 1e-12);
            }
        }
        let z = MomentVector::zeros(Arc::new(MonomialBasis::new(2, 4)));
        let m = moment_matrix(&z, 2).unwrap();
        assert!(m.col_iter().flat_map(|c| c.iter().copied().collect::<Vec<_>>()).all(|v| v == 0.0));
        assert!(moment_matrix(&lebesgue01(2), 2).is_err());
    }

    #[test]
    fn localizing_examples() {
        let y = lebesgue01(4);
        let one = Polynomial::constant(1, 1.0);
        let a = localizing_matrix(&y, &one, 2).unwrap();
        let b = moment_matrix(&y, 2).unwrap();
        assert_eq!(a, b);

        let x = Polynomial::var(1, 0);
        let h = x.sub(&x.pow(2)).unwrap();
        let l = localizing_matrix(&y, &h, 0).unwrap();
        assert!((l[(0, 0)] - 1.0 / 6.0).abs() < 1e-15);

        let h = one.sub(&x.pow(2)).unwrap();
        let l = localizing_matrix(&dirac(2.0, 2), &h, 0).unwrap();
        assert_eq!(l[(0, 0)], -3.0);
        assert!(min_eigenvalue(&l) < 0.0);
        assert!(localizing_matrix(&dirac(2.0, 2), &h, 1).is_err());
    }

    fn random_poly(nvars: usize, deg: usize, coeffs: &[f64]) -> Polynomial {
        let b = MonomialBasis::new(nvars, deg);
        Polynomial::from_coefficients(&b, &coeffs[..b.len()])
    }

    fn quad(v: &[f64], m: &Mat<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..v.len() {
            for j in 0..v.len() {
                acc += v[i] * m[(i, j)] * v[j];
            }
        }
        acc
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn riesz_product_is_bilinear_form(
            pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..6),
            ws in prop::collection::vec(0.0f64..1.0, 6),
            pc in prop::collection::vec(-1.0f64..1.0, 10),
            qc in prop::collection::vec(-1.0f64..1.0, 10),
        ) {
            let k = 2;
            let basis = Arc::new(MonomialBasis::new(2, 2 * k));
            let y = MomentVector::from_atoms(basis, &pts, &ws[..pts.len()]);
            let p = random_poly(2, k, &pc);
            let q = random_poly(2, k, &qc);
            let mk = moment_matrix(&y, k).unwrap();
            let half = MonomialBasis::new(2, k);
            let vp = p.coefficients_in(&half).unwrap();
            let vq = q.coefficients_in(&half).unwrap();
            let mut bil = 0.0;
            for i in 0..vp.len() {
                for j in 0..vq.len() {
                    bil += vp[i] * mk[(i, j)] * vq[j];
                }
            }
            let direct = riesz(&y, &p.mul(&q).unwrap()).unwrap();
            prop_assert!((bil - direct).abs() <= 1e-10 * (1.0 + direct.abs()));

            // localizing identity with h = 1 - x1^2 - x2^2 at order k - 1
            let h = Polynomial::constant(2, 1.0)
                .sub(&Polynomial::var(2, 0).pow(2)).unwrap()
                .sub(&Polynomial::var(2, 1).pow(2)).unwrap();
            let r = random_poly(2, k - 1, &pc);
            let loc = localizing_matrix(&y, &h, k - 1).unwrap();
            let vr = r.coefficients_in(&MonomialBasis::new(2, k - 1)).unwrap();
            let lhs = quad(&vr, &loc);
            let rhs = riesz(&y, &h.mul(&r.pow(2)).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));

            // atoms in the unit disc give PSD localizing matrices as well
            prop_assert!(min_eigenvalue(&mk) >= -1e-10);
        }
    }
}
