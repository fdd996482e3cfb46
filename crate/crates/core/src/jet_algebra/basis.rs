//! Monomial enumeration shared by every dense coefficient vector in the crate.
//!
//! Monomials in `n` variables of total degree `0..=r` are listed in graded
//! lexicographic order: ascending total degree, and within one degree in
//! descending lexicographic order of the exponent tuple. For `n = 2, r = 2`:
//!
//! ```text
//! 0: (0,0)  1: (1,0)  2: (0,1)  3: (2,0)  4: (1,1)  5: (0,2)
//! ```
//!
//! Because the order is graded, the basis for degree `s < r` is a prefix of
//! the basis for degree `r`, so truncation is a slice.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

/// Exponent tuple of a monomial `u_1^{a_1} ... u_n^{a_n}`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(alpha: Vec<u32>) -> Self {
        Self(alpha)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// The unit index `e_p`.
    pub fn unit(dim: usize, p: usize) -> Self {
        let mut alpha = vec![0; dim];
        alpha[p] = 1;
        Self(alpha)
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// Graded lexicographic comparison: lower degree first, then larger
    /// leading exponents first.
    pub fn graded_cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "{}", parts.join(";"))
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(alpha: Vec<u32>) -> Self {
        Self(alpha)
    }
}

const NONE: u32 = u32::MAX;

type BasisCache = HashMap<(usize, usize), Arc<MonomialBasis>>;

/// Dense monomial basis with precomputed multiplication and differentiation
/// tables. Obtain one through [`MonomialBasis::get`], which caches per
/// `(dim, degree)`.
pub struct MonomialBasis {
    dim: usize,
    degree: usize,
    monomials: Vec<MultiIndex>,
    /// `degree_start[d]` is the index of the first monomial of degree `d`;
    /// `degree_start[degree + 1] == len`.
    degree_start: Vec<usize>,
    lookup: HashMap<MultiIndex, usize>,
    /// `mul[a * len + b]` is the index of `a + b`, or `NONE` past the degree.
    mul: Vec<u32>,
    /// `lower[p * len + a]` is the index of `a - e_p`, or `NONE` when `a_p = 0`.
    lower: Vec<u32>,
    /// For every monomial of degree >= 1: a variable `p` with `a_p > 0` and
    /// the index of `a - e_p`.
    parent: Vec<(usize, usize)>,
}

fn enumerate(dim: usize, degree: usize) -> Vec<MultiIndex> {
    fn rec(dim: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == dim {
            prefix.push(remaining);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for a in (0..=remaining).rev() {
            prefix.push(a);
            rec(dim, remaining - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=degree as u32 {
        rec(dim, d, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

impl MonomialBasis {
    fn build(dim: usize, degree: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let monomials = enumerate(dim, degree);
        let len = monomials.len();
        let mut degree_start = vec![0; degree + 2];
        for (idx, m) in monomials.iter().enumerate().rev() {
            degree_start[m.degree()] = idx;
        }
        degree_start[degree + 1] = len;

        let lookup: HashMap<MultiIndex, usize> = monomials
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, m)| (m, i))
            .collect();

        let mut mul = vec![NONE; len * len];
        for (a, ma) in monomials.iter().enumerate() {
            let da = ma.degree();
            for (b, mb) in monomials[..degree_start[degree - da + 1]].iter().enumerate() {
                let sum: Vec<u32> = ma.0.iter().zip(&mb.0).map(|(x, y)| x + y).collect();
                mul[a * len + b] = lookup[&MultiIndex(sum)] as u32;
            }
        }

        let mut lower = vec![NONE; dim * len];
        for p in 0..dim {
            for (a, ma) in monomials.iter().enumerate() {
                if ma.0[p] > 0 {
                    let mut alpha = ma.0.clone();
                    alpha[p] -= 1;
                    lower[p * len + a] = lookup[&MultiIndex(alpha)] as u32;
                }
            }
        }

        let parent = monomials
            .iter()
            .map(|m| match m.0.iter().position(|&a| a > 0) {
                Some(p) => {
                    let mut alpha = m.0.clone();
                    alpha[p] -= 1;
                    (p, lookup[&MultiIndex(alpha)])
                }
                None => (usize::MAX, usize::MAX),
            })
            .collect();

        Self {
            dim,
            degree,
            monomials,
            degree_start,
            lookup,
            mul,
            lower,
            parent,
        }
    }

    /// Shared basis for `(dim, degree)`.
    pub fn get(dim: usize, degree: usize) -> Arc<MonomialBasis> {
        static CACHE: OnceLock<Mutex<BasisCache>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("basis cache poisoned");
        guard
            .entry((dim, degree))
            .or_insert_with(|| Arc::new(MonomialBasis::build(dim, degree)))
            .clone()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, idx: usize) -> &MultiIndex {
        &self.monomials[idx]
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// Index range of the monomials of exactly degree `d`.
    pub fn degree_range(&self, d: usize) -> std::ops::Range<usize> {
        self.degree_start[d]..self.degree_start[d + 1]
    }

    /// Number of monomials of degree `<= d`.
    pub fn len_up_to(&self, d: usize) -> usize {
        self.degree_start[d + 1]
    }

    /// Index of `u^a · u^b`, or `None` past the basis degree.
    #[inline]
    pub fn product_index(&self, a: usize, b: usize) -> Option<usize> {
        let idx = self.mul[a * self.len() + b];
        (idx != NONE).then_some(idx as usize)
    }

    #[inline]
    pub(crate) fn lowered(&self, p: usize, a: usize) -> Option<usize> {
        let idx = self.lower[p * self.len() + a];
        (idx != NONE).then_some(idx as usize)
    }

    #[inline]
    pub(crate) fn parent(&self, a: usize) -> (usize, usize) {
        self.parent[a]
    }

    /// Truncated product of two scalar polynomials in this basis.
    pub(crate) fn mul_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let len = self.len();
        for (a, &xa) in x.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            let da = self.monomials[a].degree();
            let end = self.degree_start[self.degree - da + 1];
            let row = &self.mul[a * len..a * len + end];
            for (b, &target) in row.iter().enumerate() {
                let yb = y[b];
                if yb != 0.0 {
                    out[target as usize] += xa * yb;
                }
            }
        }
    }
}

/// Binomial coefficient as f64 (exact for the small arguments used here).
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0_f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order_two_variables() {
        let b = MonomialBasis::get(2, 2);
        let got: Vec<Vec<u32>> = b.monomials().iter().map(|m| m.0.clone()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        for w in b.monomials().windows(2) {
            assert_eq!(w[0].graded_cmp(&w[1]), Ordering::Less);
        }
    }

    #[test]
    fn counts_match_binomials() {
        for n in 1..=4 {
            for r in 1..=5 {
                let b = MonomialBasis::get(n, r);
                assert_eq!(b.len() as f64, binomial(n + r, r));
                for d in 0..=r {
                    assert_eq!(b.degree_range(d).len() as f64, binomial(n + d - 1, d));
                }
            }
        }
    }

    #[test]
    fn lower_degree_basis_is_prefix() {
        let big = MonomialBasis::get(3, 4);
        let small = MonomialBasis::get(3, 2);
        assert_eq!(&big.monomials()[..small.len()], small.monomials());
    }

    #[test]
    fn product_table_adds_exponents() {
        let b = MonomialBasis::get(2, 3);
        let x = b.index_of(&MultiIndex::new(vec![1, 0])).unwrap();
        let y = b.index_of(&MultiIndex::new(vec![1, 1])).unwrap();
        let xy = b.product_index(x, y).unwrap();
        assert_eq!(b.monomial(xy).as_slice(), &[2, 1]);
        let big = b.index_of(&MultiIndex::new(vec![0, 3])).unwrap();
        assert!(b.product_index(x, big).is_none());
    }
}
