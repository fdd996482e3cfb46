use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::cocycle::{LinearCocycle, MatrixSequence};
use super::spectrum::{
    cluster_exponents, exponents_qr, generic_frame, qr_sweep, LyapunovSpectrum,
};
use crate::error::{Error, Result};

/// Smallest principal-angle sine accepted when intersecting filtrations.
pub const MIN_SPLITTING_ANGLE: f64 = 1e-8;
/// Relative defect below which a subspace family counts as invariant.
pub const INVARIANCE_TOL: f64 = 1e-8;

/// Nested subspaces `V^1 ⊂ ... ⊂ V^s`: `V^i` is spanned by the first
/// `d_1 + ... + d_i` (orthonormal) columns of `basis`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Filtration {
    pub basis: DMatrix<f64>,
    pub block_dims: Vec<usize>,
    pub spectrum: LyapunovSpectrum,
}

impl Filtration {
    /// Orthonormal basis of `V^i` (1-based level `i`).
    pub fn level(&self, i: usize) -> DMatrix<f64> {
        let d: usize = self.block_dims[..i].iter().sum();
        self.basis.columns(0, d).into_owned()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.block_dims
            .iter()
            .scan(0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect()
    }
}

/// Splitting `R^n = W^1 ⊕ ... ⊕ W^s` given by column blocks of `basis`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovSplitting {
    pub basis: DMatrix<f64>,
    pub block_dims: Vec<usize>,
    pub spectrum: LyapunovSpectrum,
}

impl LyapunovSplitting {
    fn offset(&self, i: usize) -> usize {
        self.block_dims[..i].iter().sum()
    }

    /// Basis of `W^{i+1}` (0-based block index).
    pub fn block(&self, i: usize) -> DMatrix<f64> {
        self.basis
            .columns(self.offset(i), self.block_dims[i])
            .into_owned()
    }

    /// Filtration `V^i = W^1 ⊕ ... ⊕ W^i`, orthonormalized.
    pub fn filtration(&self) -> Filtration {
        Filtration {
            basis: self.basis.clone().qr().q(),
            block_dims: self.block_dims.clone(),
            spectrum: self.spectrum.clone(),
        }
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.basis.clone().singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// `B⁻¹ M B`.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let inv = self
            .basis
            .clone()
            .try_inverse()
            .expect("splitting basis is invertible");
        inv * m * &self.basis
    }

    /// Block index of every basis column.
    pub fn block_of_columns(&self) -> Vec<usize> {
        self.block_dims
            .iter()
            .enumerate()
            .flat_map(|(b, &d)| std::iter::repeat_n(b, d))
            .collect()
    }
}

fn inverses<C: LinearCocycle>(c: &C, range: impl Iterator<Item = usize>) -> Result<Vec<DMatrix<f64>>> {
    range
        .map(|k| {
            c.matrix(k)
                .try_inverse()
                .ok_or(Error::SingularStep { step: k })
        })
        .collect()
}

/// Future-determined filtration at time `start`, from the inverse cocycle
/// run backwards over steps `start + n_steps - 1` down to `start`.
fn filtration_from_future<C: LinearCocycle>(
    c: &C,
    start: usize,
    n_steps: usize,
    gap_tol: f64,
) -> Result<Filtration> {
    let n = c.dim();
    let inv = inverses(c, (start..start + n_steps).rev())?;
    let sweep = qr_sweep(generic_frame(n), inv)?;
    // Columns come out with descending inverse growth, i.e. ascending
    // forward exponents.
    let forward: Vec<f64> = sweep.column_exponents.iter().map(|x| -x).collect();
    let spectrum = cluster_exponents(&forward, gap_tol)?;
    check_column_order(&forward, &spectrum, gap_tol)?;
    Ok(Filtration {
        basis: sweep.q,
        block_dims: spectrum.multiplicities().to_vec(),
        spectrum,
    })
}

fn check_column_order(columns: &[f64], spectrum: &LyapunovSpectrum, gap_tol: f64) -> Result<()> {
    let expected = spectrum.expanded();
    for (c, e) in columns.iter().zip(&expected) {
        if (c - e).abs() >= gap_tol {
            return Err(Error::SplittingFailure(format!(
                "QR frame did not order its columns: {columns:?}"
            )));
        }
    }
    Ok(())
}

/// Filtration `V^1 ⊂ ... ⊂ V^s` at time 0: `V^i` is spanned by the right
/// singular directions of the `n_steps`-step product whose singular values
/// grow like `e^{N λ^(j)}`, `j <= i`. Computed stably by QR on the inverse
/// cocycle run backwards from time `n_steps` to 0.
pub fn backward_filtration<C: LinearCocycle>(
    c: &C,
    n_steps: usize,
    gap_tol: f64,
) -> Result<Filtration> {
    if n_steps < c.dim() {
        return Err(Error::Invalid(format!(
            "window {n_steps} shorter than dimension {}",
            c.dim()
        )));
    }
    filtration_from_future(c, 0, n_steps, gap_tol)
}

/// Orthonormal basis of the orthogonal complement of the column span of `b`.
pub(crate) fn orthogonal_complement(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let q = if b.ncols() == 0 {
        DMatrix::zeros(n, 0)
    } else {
        b.clone().qr().q()
    };
    let proj = DMatrix::identity(n, n) - &q * q.transpose();
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<_> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Deterministic basis for a subspace given by orthonormal columns: pivoted
/// Gram-Schmidt on the columns of its projector, so that coordinate
/// subspaces come back as coordinate vectors.
fn canonical_basis(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let d = w.ncols();
    let proj = w * w.transpose();
    let mut chosen: Vec<(usize, nalgebra::DVector<f64>)> = Vec::new();
    let mut residual: Vec<nalgebra::DVector<f64>> =
        (0..n).map(|j| proj.column(j).into_owned()).collect();
    for _ in 0..d {
        let (j, _) = residual
            .iter()
            .enumerate()
            .filter(|(j, _)| chosen.iter().all(|(c, _)| c != j))
            .map(|(j, v)| (j, v.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("subspace has enough columns");
        let v = residual[j].normalize();
        for r in residual.iter_mut() {
            let dot = v.dot(r);
            *r -= &v * dot;
        }
        chosen.push((j, v));
    }
    chosen.sort_by_key(|(j, _)| *j);
    let mut cols: Vec<_> = chosen.into_iter().map(|(_, v)| v).collect();
    for v in cols.iter_mut() {
        let lead = v.iter().cloned().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        if lead < 0.0 {
            *v = -v.clone();
        }
    }
    DMatrix::from_columns(&cols)
}

/// Oseledec splitting at time `n_steps`, using steps `0..n_steps` (past)
/// and `n_steps..2 n_steps` (future): `W^i` is the intersection of the
/// future-determined `V^i` with the past-determined span of the exponents
/// `>= λ^(i)`.
pub fn adapted_splitting<C: LinearCocycle>(
    c: &C,
    n_steps: usize,
    gap_tol: f64,
) -> Result<LyapunovSplitting> {
    let n = c.dim();
    if n_steps < n {
        return Err(Error::Invalid(format!(
            "window {n_steps} shorter than dimension {n}"
        )));
    }
    let future = filtration_from_future(c, n_steps, n_steps, gap_tol)?;
    let past = qr_sweep(generic_frame(n), (0..n_steps).map(|k| c.matrix(k)))?;
    let past_spectrum = cluster_exponents(&past.column_exponents, gap_tol)?;
    if past_spectrum.multiplicities() != future.spectrum.multiplicities() {
        return Err(Error::SplittingFailure(format!(
            "past multiplicities {:?} differ from future multiplicities {:?}",
            past_spectrum.multiplicities(),
            future.spectrum.multiplicities()
        )));
    }
    let mut descending = past_spectrum.expanded();
    descending.reverse();
    for (c_exp, e) in past.column_exponents.iter().zip(&descending) {
        if (c_exp - e).abs() >= gap_tol {
            return Err(Error::SplittingFailure(format!(
                "past QR frame did not order its columns: {:?}",
                past.column_exponents
            )));
        }
    }

    let dims = future.block_dims.clone();
    let s = dims.len();
    if s == 1 {
        return Ok(LyapunovSplitting {
            basis: DMatrix::identity(n, n),
            block_dims: dims,
            spectrum: future.spectrum,
        });
    }

    let mut blocks = Vec::with_capacity(s);
    let mut below = 0usize;
    for &d in &dims {
        let v = future.basis.columns(0, below + d).into_owned();
        let w = if below == 0 {
            v
        } else {
            // past columns are descending: the last `below` span the
            // exponents < λ^(i); their complement is the past flag we need.
            let u_perp = past.q.columns(n - below, below).into_owned();
            let p = u_perp.transpose() * &v;
            let eig = SymmetricEigen::new(p.transpose() * &p);
            let mut order: Vec<usize> = (0..below + d).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let gap = eig.eigenvalues[order[d]].max(0.0).sqrt();
            if gap < MIN_SPLITTING_ANGLE {
                return Err(Error::SplittingFailure(format!(
                    "filtrations are not transverse (angle {gap:e}) at block of dimension {d}"
                )));
            }
            let null: Vec<_> = order[..d]
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect();
            &v * DMatrix::from_columns(&null)
        };
        blocks.push(canonical_basis(&w));
        below += d;
    }
    let cols: Vec<_> = blocks
        .iter()
        .flat_map(|b| b.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
        .collect();
    let basis = DMatrix::from_columns(&cols);
    if basis.clone().try_inverse().is_none() {
        return Err(Error::SplittingFailure("blocks are linearly dependent".into()));
    }
    Ok(LyapunovSplitting {
        basis,
        block_dims: dims,
        spectrum: future.spectrum,
    })
}

/// Spectra of a cocycle restricted to an invariant subspace family and of the
/// induced quotient cocycle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubbundleReport {
    pub ambient: LyapunovSpectrum,
    pub restricted: LyapunovSpectrum,
    pub quotient: Option<LyapunovSpectrum>,
    pub max_invariance_defect: f64,
    pub restricted_is_subset: bool,
    pub quotient_is_subset: bool,
}

impl SubbundleReport {
    pub fn passed(&self) -> bool {
        self.restricted_is_subset && self.quotient_is_subset
    }
}

/// Checks `T_k U_k ⊂ U_{k+1}` along the window and compares the restricted
/// and quotient spectra with the ambient one.
pub fn subbundle_spectrum_check<C, U>(
    c: &C,
    subspace: U,
    n_steps: usize,
    gap_tol: f64,
) -> Result<SubbundleReport>
where
    C: LinearCocycle,
    U: Fn(usize) -> DMatrix<f64>,
{
    let n = c.dim();
    let ambient = exponents_qr(c, n_steps, gap_tol)?;
    let orth = |k: usize| -> Result<DMatrix<f64>> {
        let b = subspace(k);
        if b.nrows() != n || b.ncols() == 0 || b.ncols() > n {
            return Err(Error::Invalid("subspace basis has wrong shape".into()));
        }
        Ok(b.qr().q())
    };
    let mut restricted = Vec::with_capacity(n_steps);
    let mut quotient = Vec::with_capacity(n_steps);
    let mut max_defect = 0.0f64;
    let mut b_k = orth(0)?;
    let mut c_k = orthogonal_complement(&b_k);
    for k in 0..n_steps {
        let t = c.matrix(k);
        let b_next = orth(k + 1)?;
        let c_next = orthogonal_complement(&b_next);
        let image = &t * &b_k;
        let outside = &image - &b_next * (b_next.transpose() * &image);
        let defect = outside.norm() / image.norm().max(f64::MIN_POSITIVE);
        if defect > INVARIANCE_TOL {
            return Err(Error::NotInvariant { step: k, defect });
        }
        max_defect = max_defect.max(defect);
        restricted.push(b_next.transpose() * &image);
        if c_k.ncols() > 0 {
            quotient.push(c_next.transpose() * &t * &c_k);
        }
        b_k = b_next;
        c_k = c_next;
    }
    let restricted = exponents_qr(&MatrixSequence(restricted), n_steps, gap_tol)?;
    let quotient = if quotient.is_empty() {
        None
    } else {
        Some(exponents_qr(&MatrixSequence(quotient), n_steps, gap_tol)?)
    };
    Ok(SubbundleReport {
        restricted_is_subset: restricted.is_subset_of(&ambient, gap_tol),
        quotient_is_subset: quotient
            .as_ref()
            .is_none_or(|q| q.is_subset_of(&ambient, gap_tol)),
        ambient,
        restricted,
        quotient,
        max_invariance_defect: max_defect,
    })
}
