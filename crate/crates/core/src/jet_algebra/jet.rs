use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::basis::{MonomialBasis, MultiIndex};
use crate::error::{Error, Result};

/// Smallest-to-largest singular value ratio below which a linear part counts
/// as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// A truncated polynomial map `R^n -> R^n` of degree at most `r`.
///
/// Coefficients are stored densely, one block of [`MonomialBasis::len`]
/// entries per target coordinate, in graded lexicographic monomial order.
/// Index 0 of every block is the constant term.
#[derive(Clone)]
pub struct JetMap {
    basis: Arc<MonomialBasis>,
    coeffs: Vec<f64>,
}

impl PartialEq for JetMap {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.degree() == other.degree() && self.coeffs == other.coeffs
    }
}

impl JetMap {
    pub fn zero(dim: usize, degree: usize) -> Self {
        let basis = MonomialBasis::get(dim, degree);
        let coeffs = vec![0.0; dim * basis.len()];
        Self { basis, coeffs }
    }

    pub fn identity(dim: usize, degree: usize) -> Self {
        let mut out = Self::zero(dim, degree);
        for i in 0..dim {
            out.set_slot(i, 1 + i, 1.0);
        }
        out
    }

    /// Linear map `u -> M u` viewed as a jet of the given degree.
    pub fn from_linear(matrix: &DMatrix<f64>, degree: usize) -> Self {
        assert!(matrix.is_square(), "linear part must be square");
        let dim = matrix.nrows();
        let mut out = Self::zero(dim, degree);
        for i in 0..dim {
            for j in 0..dim {
                out.set_slot(i, 1 + j, matrix[(i, j)]);
            }
        }
        out
    }

    /// Builds a jet from `(target, alpha, value)` triples. Repeated slots add.
    pub fn from_terms<I>(dim: usize, degree: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Vec<u32>, f64)>,
    {
        let mut out = Self::zero(dim, degree);
        for (target, alpha, value) in terms {
            let alpha = MultiIndex::new(alpha);
            let idx = out.checked_index(target, &alpha)?;
            out.coeffs[target * out.basis.len() + idx] += value;
        }
        Ok(out)
    }

    pub(crate) fn from_raw(basis: Arc<MonomialBasis>, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), basis.dim() * basis.len());
        Self { basis, coeffs }
    }

    pub(crate) fn checked_index(&self, target: usize, alpha: &MultiIndex) -> Result<usize> {
        if target >= self.dim() {
            return Err(Error::Invalid(format!(
                "target {target} out of range for dimension {}",
                self.dim()
            )));
        }
        if alpha.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: alpha.dim(),
            });
        }
        self.basis.index_of(alpha).ok_or_else(|| {
            Error::Invalid(format!(
                "multi-index {alpha:?} exceeds degree {}",
                self.degree()
            ))
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn coeff(&self, target: usize, alpha: &[u32]) -> f64 {
        let alpha = MultiIndex::new(alpha.to_vec());
        match self.checked_index(target, &alpha) {
            Ok(idx) => self.coeffs[target * self.basis.len() + idx],
            Err(_) => 0.0,
        }
    }

    pub fn set_coeff(&mut self, target: usize, alpha: &[u32], value: f64) -> Result<()> {
        let alpha = MultiIndex::new(alpha.to_vec());
        let idx = self.checked_index(target, &alpha)?;
        self.coeffs[target * self.basis.len() + idx] = value;
        Ok(())
    }

    #[inline]
    pub fn slot(&self, target: usize, idx: usize) -> f64 {
        self.coeffs[target * self.basis.len() + idx]
    }

    #[inline]
    pub fn set_slot(&mut self, target: usize, idx: usize, value: f64) {
        let len = self.basis.len();
        self.coeffs[target * len + idx] = value;
    }

    pub fn component(&self, target: usize) -> &[f64] {
        let len = self.basis.len();
        &self.coeffs[target * len..(target + 1) * len]
    }

    pub(crate) fn component_mut(&mut self, target: usize) -> &mut [f64] {
        let len = self.basis.len();
        &mut self.coeffs[target * len..(target + 1) * len]
    }

    pub fn raw_coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn constant(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.slot(i, 0)).collect()
    }

    pub fn set_constant(&mut self, c: &[f64]) {
        for (i, &v) in c.iter().enumerate() {
            self.set_slot(i, 0, v);
        }
    }

    pub fn without_constant(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim() {
            out.set_slot(i, 0, 0.0);
        }
        out
    }

    /// Matrix of the degree-one coefficients.
    pub fn linear_part(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.slot(i, 1 + j))
    }

    /// True when the linear part passes the singular-value test.
    pub fn has_invertible_linear_part(&self) -> bool {
        linear_condition_ratio(&self.linear_part()) >= SINGULAR_RATIO
    }

    /// Element of the jet group: zero constant term, invertible linear part.
    pub fn is_group_element(&self) -> bool {
        self.constant().iter().all(|&c| c == 0.0) && self.has_invertible_linear_part()
    }

    /// Element of the jet Lie algebra: zero constant term.
    pub fn is_algebra_element(&self) -> bool {
        self.constant().iter().all(|&c| c == 0.0)
    }

    /// Truncation to degree `s <= degree`, or zero-extension when `s` is larger.
    pub fn with_degree(&self, s: usize) -> Self {
        if s == self.degree() {
            return self.clone();
        }
        let target = MonomialBasis::get(self.dim(), s);
        let keep = self.basis.len().min(target.len());
        let mut out = Self::zero(self.dim(), s);
        for i in 0..self.dim() {
            out.component_mut(i)[..keep].copy_from_slice(&self.component(i)[..keep]);
        }
        out
    }

    /// Truncation to degree `s`; panics if `s` exceeds the degree.
    pub fn truncate(&self, s: usize) -> Self {
        assert!(s <= self.degree(), "cannot truncate up");
        self.with_degree(s)
    }

    /// Only the terms of total degree exactly `d`.
    pub fn homogeneous_part(&self, d: usize) -> Self {
        let mut out = Self::zero(self.dim(), self.degree());
        if d > self.degree() {
            return out;
        }
        let range = self.basis.degree_range(d);
        for i in 0..self.dim() {
            out.component_mut(i)[range.clone()].copy_from_slice(&self.component(i)[range.clone()]);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self::from_raw(self.basis.clone(), coeffs))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_raw(self.basis.clone(), coeffs))
    }

    pub fn scale(&self, t: f64) -> Self {
        Self::from_raw(self.basis.clone(), self.coeffs.iter().map(|c| c * t).collect())
    }

    /// `v -> J(c v) / c`: degree-`d` coefficients pick up `c^(d-1)`.
    pub fn rescaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        let len = self.basis.len();
        for (k, v) in out.coeffs.iter_mut().enumerate() {
            if *v != 0.0 {
                let d = self.basis.monomial(k % len).degree() as i32;
                *v *= c.powi(d - 1);
            }
        }
        out
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        if self.degree() != other.degree() {
            return Err(Error::DegreeMismatch {
                expected: self.degree(),
                got: other.degree(),
            });
        }
        Ok(())
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let a = self.with_degree(self.degree().max(other.degree()));
        let b = other.with_degree(a.degree());
        a.coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Iterator over nonzero coefficients as `(target, monomial index, value)`.
    pub fn nonzero_slots(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let len = self.basis.len();
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(move |(k, &v)| (k / len, k % len, v))
    }

    /// Pointwise evaluation.
    pub fn evaluate(&self, u: &[f64]) -> Vec<f64> {
        let powers = self.monomial_values(u);
        (0..self.dim())
            .map(|i| {
                self.component(i)
                    .iter()
                    .zip(&powers)
                    .map(|(c, m)| c * m)
                    .sum()
            })
            .collect()
    }

    /// Jacobian matrix at `u`.
    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let powers = self.monomial_values(u);
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let comp = self.component(i);
            for (a, &c) in comp.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let alpha = self.basis.monomial(a).as_slice();
                for p in 0..n {
                    if let Some(lower) = self.basis.lowered(p, a) {
                        jac[(i, p)] += c * alpha[p] as f64 * powers[lower];
                    }
                }
            }
        }
        jac
    }

    fn monomial_values(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim(), "point dimension mismatch");
        let mut values = vec![0.0; self.basis.len()];
        values[0] = 1.0;
        for a in 1..self.basis.len() {
            let (p, parent) = self.basis.parent(a);
            values[a] = values[parent] * u[p];
        }
        values
    }
}

impl fmt::Debug for JetMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("JetMap");
        s.field("dim", &self.dim()).field("degree", &self.degree());
        let terms: Vec<String> = self
            .nonzero_slots()
            .map(|(i, a, v)| format!("[{i}]{:?}={v}", self.basis.monomial(a)))
            .collect();
        s.field("terms", &terms).finish()
    }
}

/// Ratio of smallest to largest singular value (0 for the zero matrix).
pub fn linear_condition_ratio(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 || !max.is_finite() {
        0.0
    } else {
        min / max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_and_jacobian_of_quadratic() {
        // f(u) = (2u1 + u2^2, u1 u2)
        let f = JetMap::from_terms(
            2,
            2,
            [(0, vec![1, 0], 2.0), (0, vec![0, 2], 1.0), (1, vec![1, 1], 1.0)],
        )
        .unwrap();
        assert_eq!(f.evaluate(&[1.0, 3.0]), vec![11.0, 3.0]);
        let jac = f.jacobian(&[1.0, 3.0]);
        assert_eq!(jac, DMatrix::from_row_slice(2, 2, &[2.0, 6.0, 3.0, 1.0]));
    }

    #[test]
    fn group_predicates() {
        assert!(JetMap::identity(3, 2).is_group_element());
        assert!(!JetMap::zero(3, 2).is_group_element());
        assert!(JetMap::zero(3, 2).is_algebra_element());
        let mut shifted = JetMap::identity(2, 2);
        shifted.set_constant(&[1.0, 0.0]);
        assert!(!shifted.is_group_element());
        assert!(!shifted.is_algebra_element());
    }

    #[test]
    fn degree_out_of_range_is_rejected() {
        assert!(JetMap::from_terms(1, 2, [(0, vec![3], 1.0)]).is_err());
        assert!(JetMap::from_terms(2, 2, [(2, vec![1, 0], 1.0)]).is_err());
        assert!(JetMap::from_terms(2, 2, [(0, vec![1], 1.0)]).is_err());
    }

    #[test]
    fn truncation_and_extension() {
        let f = JetMap::from_terms(1, 3, [(0, vec![1], 1.0), (0, vec![3], 5.0)]).unwrap();
        let t = f.truncate(2);
        assert_eq!(t.degree(), 2);
        assert_eq!(t.coeff(0, &[1]), 1.0);
        assert_eq!(t.with_degree(3).coeff(0, &[3]), 0.0);
        assert_eq!(f.with_degree(5).truncate(3), f);
    }
}
