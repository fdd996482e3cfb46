use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::{binomial, MonomialBasis};
use super::jet::{linear_condition_ratio, JetMap, SINGULAR_RATIO};
use crate::error::{Error, Result};

/// Max-norm of the monomial coefficients of a jet.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct JetNorm(pub f64);

impl JetNorm {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Polynomials `inner^alpha` for every monomial `alpha` of the basis,
/// truncated at the basis degree.
pub(crate) struct MonomialPowers {
    values: Vec<Vec<f64>>,
}

impl MonomialPowers {
    pub(crate) fn new(inner: &JetMap) -> Self {
        let basis = inner.basis();
        let len = basis.len();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(len);
        let mut one = vec![0.0; len];
        one[0] = 1.0;
        values.push(one);
        for a in 1..len {
            let (p, parent) = basis.parent(a);
            let mut out = vec![0.0; len];
            basis.mul_into(&values[parent], inner.component(p), &mut out);
            values.push(out);
        }
        Self { values }
    }

    /// `p(inner(u))` for a scalar polynomial `p` given by its coefficients.
    pub(crate) fn substitute(&self, p: &[f64], out: &mut [f64]) {
        for (a, &c) in p.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&self.values[a]) {
                *o += c * v;
            }
        }
    }

    pub(crate) fn monomial(&self, a: usize) -> &[f64] {
        &self.values[a]
    }
}

fn check_compatible(a: &JetMap, b: &JetMap) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.degree() != b.degree() {
        return Err(Error::DegreeMismatch {
            expected: a.degree(),
            got: b.degree(),
        });
    }
    Ok(())
}

/// Degree-`r` truncation of `outer ∘ inner`.
///
/// `inner` may carry a constant term, in which case the result is still the
/// truncation of the exact polynomial composition.
pub fn compose(outer: &JetMap, inner: &JetMap) -> Result<JetMap> {
    check_compatible(outer, inner)?;
    let powers = MonomialPowers::new(inner);
    Ok(compose_with_powers(outer, &powers))
}

pub(crate) fn compose_with_powers(outer: &JetMap, powers: &MonomialPowers) -> JetMap {
    let mut out = JetMap::zero(outer.dim(), outer.degree());
    for i in 0..outer.dim() {
        powers.substitute(outer.component(i), out.component_mut(i));
    }
    out
}

/// Inverse in the jet group, solved degree by degree: invert the linear
/// part, then each degree `d >= 2` from the lower-degree solution.
pub fn invert(g: &JetMap) -> Result<JetMap> {
    if g.constant().iter().any(|&c| c != 0.0) {
        return Err(Error::Invalid(
            "only jets fixing the origin can be inverted".into(),
        ));
    }
    let lin = g.linear_part();
    let ratio = linear_condition_ratio(&lin);
    if ratio < SINGULAR_RATIO {
        return Err(Error::NonInvertible { ratio });
    }
    let lin_inv = lin
        .try_inverse()
        .ok_or(Error::NonInvertible { ratio })?;
    let n = g.dim();
    let r = g.degree();
    let mut h = JetMap::from_linear(&lin_inv, r);
    let basis = g.basis().clone();
    for d in 2..=r {
        let gh = compose(g, &h)?;
        let range = basis.degree_range(d);
        for a in range {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc -= lin_inv[(i, j)] * gh.slot(j, a);
                }
                h.set_slot(i, a, acc);
            }
        }
    }
    Ok(h)
}

/// Max-norm of the monomial coefficients, constant term included.
pub fn jet_norm(x: &JetMap) -> JetNorm {
    JetNorm(x.raw_coeffs().iter().fold(0.0, |m, c| m.max(c.abs())))
}

/// Explicit constant `c(r, n)` for the composition bound
/// `|Y∘X| <= |Y| max(|X|, |X|^r) c(r, n)` on vector fields vanishing at 0.
///
/// With `N = C(n + r, r) - 1` nonconstant monomials, a coefficient of a
/// product of `j` such polynomials is a sum of at most `N^{j-1}` products,
/// and there are `C(n + j - 1, j)` monomials of degree `j`:
///
/// ```text
/// c(r, n) = sum_{j=1}^{r} C(n + j - 1, j) N^{j - 1}
/// ```
pub fn combinatorial_constant(r: usize, n: usize) -> f64 {
    let terms = binomial(n + r, r) - 1.0;
    (1..=r)
        .map(|j| binomial(n + j - 1, j) * terms.powi(j as i32 - 1))
        .sum()
}

/// Both sides of the composition norm inequality.
pub fn compose_norm_bound(y: &JetMap, x: &JetMap) -> Result<(f64, f64)> {
    let lhs = jet_norm(&compose(y, x)?).value();
    let xn = jet_norm(x).value();
    let r = x.degree();
    let rhs = jet_norm(y).value() * xn.max(xn.powi(r as i32)) * combinatorial_constant(r, x.dim());
    Ok((lhs, rhs))
}

/// Scalar partial derivative `∂_p` of a polynomial stored in `basis`.
pub(crate) fn partial(basis: &MonomialBasis, p: usize, poly: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis.len()];
    for (a, &c) in poly.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        if let Some(lower) = basis.lowered(p, a) {
            out[lower] += c * basis.monomial(a).as_slice()[p] as f64;
        }
    }
    out
}

/// Pushforward of the polynomial vector field `x` by the jet `g`:
/// `(Ad g X)(u) = Dg(g⁻¹u) X(g⁻¹u)`, truncated at degree `r`.
pub fn adjoint(g: &JetMap, x: &JetMap) -> Result<JetMap> {
    check_compatible(g, x)?;
    let ad = AdjointAction::new(g)?;
    Ok(ad.apply(x))
}

/// Precomputed pieces of `Ad g`: the monomial powers of `g⁻¹` and the
/// Jacobian entries `∂_j g_i ∘ g⁻¹`.
pub(crate) struct AdjointAction {
    dim: usize,
    basis: std::sync::Arc<MonomialBasis>,
    powers: MonomialPowers,
    jac: Vec<Vec<f64>>,
}

impl AdjointAction {
    pub(crate) fn new(g: &JetMap) -> Result<Self> {
        let ginv = invert(g)?;
        let powers = MonomialPowers::new(&ginv);
        let basis = g.basis().clone();
        let n = g.dim();
        let mut jac = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let d = partial(&basis, j, g.component(i));
                let mut out = vec![0.0; basis.len()];
                powers.substitute(&d, &mut out);
                jac.push(out);
            }
        }
        Ok(Self {
            dim: n,
            basis,
            powers,
            jac,
        })
    }

    pub(crate) fn apply(&self, x: &JetMap) -> JetMap {
        let n = self.dim;
        let len = self.basis.len();
        let mut pulled = vec![vec![0.0; len]; n];
        for (j, slot) in pulled.iter_mut().enumerate() {
            self.powers.substitute(x.component(j), slot);
        }
        let mut out = JetMap::zero(n, self.basis.degree());
        for i in 0..n {
            let dst = out.component_mut(i);
            for (j, pj) in pulled.iter().enumerate() {
                self.basis.mul_into(&self.jac[i * n + j], pj, dst);
            }
        }
        out
    }

    /// `Ad g (u^alpha e_j)` written into `dst` (component-major, full basis).
    pub(crate) fn apply_monomial(&self, j: usize, a: usize, dst: &mut JetMap) {
        let mono = self.powers.monomial(a);
        for i in 0..self.dim {
            let comp = dst.component_mut(i);
            comp.iter_mut().for_each(|c| *c = 0.0);
            self.basis.mul_into(&self.jac[i * self.dim + j], mono, comp);
        }
    }
}

/// Matrix of `Ad g` on the Lie algebra of jets vanishing at 0, in the slot
/// order `(target, monomial)` with monomials of degree `1..=r` in graded
/// lexicographic order.
pub fn adjoint_matrix(g: &JetMap) -> Result<DMatrix<f64>> {
    let ad = AdjointAction::new(g)?;
    let n = g.dim();
    let len = g.basis().len();
    let slots = len - 1;
    let mut m = DMatrix::zeros(n * slots, n * slots);
    let mut image = JetMap::zero(n, g.degree());
    for j in 0..n {
        for a in 1..len {
            ad.apply_monomial(j, a, &mut image);
            let col = j * slots + (a - 1);
            for i in 0..n {
                for b in 1..len {
                    m[(i * slots + (b - 1), col)] = image.slot(i, b);
                }
            }
        }
    }
    Ok(m)
}

/// Jet at `u` moved to the origin: `v -> J(u + v) - J(u)`, truncated.
pub fn recenter(j: &JetMap, u: &[f64]) -> Result<JetMap> {
    if u.len() != j.dim() {
        return Err(Error::DimensionMismatch {
            expected: j.dim(),
            got: u.len(),
        });
    }
    let mut shift = JetMap::identity(j.dim(), j.degree());
    shift.set_constant(u);
    Ok(compose(j, &shift)?.without_constant())
}

/// Bracket of polynomial vector fields, oriented as `DY·X - DX·Y`.
pub fn lie_bracket(x: &JetMap, y: &JetMap) -> Result<JetMap> {
    check_compatible(x, y)?;
    let basis = x.basis().clone();
    let n = x.dim();
    let mut out = JetMap::zero(n, x.degree());
    let mut pos = vec![0.0; basis.len()];
    let mut neg = vec![0.0; basis.len()];
    for i in 0..n {
        pos.iter_mut().for_each(|c| *c = 0.0);
        neg.iter_mut().for_each(|c| *c = 0.0);
        for j in 0..n {
            basis.mul_into(&partial(&basis, j, y.component(i)), x.component(j), &mut pos);
            basis.mul_into(&partial(&basis, j, x.component(i)), y.component(j), &mut neg);
        }
        for (dst, (p, q)) in out.component_mut(i).iter_mut().zip(pos.iter().zip(&neg)) {
            *dst = p - q;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet1(coeffs: &[(u32, f64)], r: usize) -> JetMap {
        JetMap::from_terms(1, r, coeffs.iter().map(|&(a, v)| (0, vec![a], v))).unwrap()
    }

    // Hand expansion: 2(u + u^2) + (u + u^2)^2 = 2u + 3u^2 + O(u^3).
    #[test]
    fn compose_one_dimensional_quadratic() {
        let outer = jet1(&[(1, 2.0), (2, 1.0)], 2);
        let inner = jet1(&[(1, 1.0), (2, 1.0)], 2);
        let c = compose(&outer, &inner).unwrap();
        assert_eq!(c, jet1(&[(1, 2.0), (2, 3.0)], 2));
    }

    #[test]
    fn compose_linear_is_matrix_product() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]);
        let c = compose(&JetMap::from_linear(&a, 1), &JetMap::from_linear(&b, 1)).unwrap();
        assert_eq!(c.linear_part(), &a * &b);
    }

    #[test]
    fn compose_rejects_mismatch() {
        let a = JetMap::identity(2, 2);
        assert!(matches!(
            compose(&a, &JetMap::identity(3, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            compose(&a, &JetMap::identity(2, 3)),
            Err(Error::DegreeMismatch { .. })
        ));
    }

    // Solve 2 h2 + h1^2 = 0 with h1 = 1/2: h2 = -1/8.
    #[test]
    fn invert_one_dimensional_quadratic() {
        let g = jet1(&[(1, 2.0), (2, 1.0)], 2);
        let h = invert(&g).unwrap();
        assert_eq!(h, jet1(&[(1, 0.5), (2, -0.125)], 2));
        assert_eq!(compose(&h, &g).unwrap(), JetMap::identity(1, 2));
    }

    #[test]
    fn invert_rejects_singular() {
        let g = JetMap::from_linear(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]), 2);
        assert!(matches!(invert(&g), Err(Error::NonInvertible { .. })));
        assert!(invert(&JetMap::zero(2, 2)).is_err());
    }

    #[test]
    fn norm_reads_largest_coefficient() {
        assert_eq!(jet_norm(&jet1(&[(1, 2.0), (2, -3.0)], 2)).value(), 3.0);
        assert_eq!(jet_norm(&JetMap::zero(3, 3)).value(), 0.0);
    }

    #[test]
    fn combinatorial_constant_small_cases() {
        // n = 1, r = 2: N = 2 -> 1 + 1*2 = 3
        assert_eq!(combinatorial_constant(2, 1), 3.0);
        // r = 1: linear composition, c = n
        assert_eq!(combinatorial_constant(1, 3), 3.0);
        let id = JetMap::identity(2, 3);
        let (lhs, rhs) = compose_norm_bound(&id, &id).unwrap();
        assert_eq!(lhs, 1.0);
        assert!(lhs <= rhs);
    }

    // g(u) = 2u pushes u^2 forward to 2 (u/2)^2 = u^2 / 2.
    #[test]
    fn adjoint_by_scaling() {
        let g = jet1(&[(1, 2.0)], 2);
        let x = jet1(&[(2, 1.0)], 2);
        assert_eq!(adjoint(&g, &x).unwrap(), jet1(&[(2, 0.5)], 2));
        assert_eq!(adjoint(&JetMap::identity(1, 2), &x).unwrap(), x);
    }

    #[test]
    fn adjoint_on_top_degree_is_linear_conjugation() {
        let g = jet1(&[(1, 3.0), (2, 0.7)], 2);
        let x = jet1(&[(2, 1.0)], 2);
        // T X T^{-1} with T = 3: 3 (u/3)^2 = u^2 / 3.
        let got = adjoint(&g, &x).unwrap();
        assert!((got.coeff(0, &[2]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(got.coeff(0, &[1]), 0.0);
    }

    #[test]
    fn adjoint_matrix_matches_adjoint() {
        let g = JetMap::from_terms(
            2,
            2,
            [
                (0, vec![1, 0], 0.5),
                (0, vec![0, 1], 0.2),
                (1, vec![0, 1], 1.5),
                (1, vec![2, 0], 0.3),
            ],
        )
        .unwrap();
        let m = adjoint_matrix(&g).unwrap();
        assert_eq!(m.nrows(), 10);
        let x = JetMap::from_terms(2, 2, [(1, vec![1, 0], 1.0)]).unwrap();
        let ad = adjoint(&g, &x).unwrap();
        // slot (target 1, monomial (1,0)) is column 5 + 0
        for i in 0..2 {
            for b in 1..6 {
                assert!((m[(i * 5 + b - 1, 5)] - ad.slot(i, b)).abs() < 1e-15);
            }
        }
    }

    // (1 + v)^2 - 1 = 2v + v^2
    #[test]
    fn recenter_square() {
        let j = jet1(&[(2, 1.0)], 2);
        assert_eq!(recenter(&j, &[1.0]).unwrap(), jet1(&[(1, 2.0), (2, 1.0)], 2));
        let lin = JetMap::from_linear(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]), 3);
        assert_eq!(recenter(&lin, &[0.3, -2.0]).unwrap(), lin);
    }

    // [u, u^2] = D(u^2) u - D(u) u^2 = 2u^2 - u^2 = u^2.
    #[test]
    fn bracket_orientation() {
        let x = jet1(&[(1, 1.0)], 2);
        let y = jet1(&[(2, 1.0)], 2);
        assert_eq!(lie_bracket(&x, &y).unwrap(), jet1(&[(2, 1.0)], 2));
        assert_eq!(lie_bracket(&y, &y).unwrap(), JetMap::zero(1, 2));
    }
}
