use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cocycle::LinearCocycle;
use crate::error::{Error, Result};

/// Default clustering tolerance for finite-window exponents.
pub const DEFAULT_GAP_TOL: f64 = 0.05;

/// Distinct Lyapunov exponents, strictly increasing, with multiplicities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    exponents: Vec<f64>,
    multiplicities: Vec<usize>,
}

impl LyapunovSpectrum {
    pub fn new(exponents: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        if exponents.is_empty() || exponents.len() != multiplicities.len() {
            return Err(Error::Invalid(
                "spectrum needs matching, nonempty exponent and multiplicity lists".into(),
            ));
        }
        if multiplicities.contains(&0) {
            return Err(Error::Invalid("multiplicities must be positive".into()));
        }
        if exponents.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("exponents must be finite".into()));
        }
        if exponents.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("exponents must be strictly increasing".into()));
        }
        Ok(Self {
            exponents,
            multiplicities,
        })
    }

    /// Simple spectrum (all multiplicities one).
    pub fn simple(exponents: Vec<f64>) -> Result<Self> {
        let m = vec![1; exponents.len()];
        Self::new(exponents, m)
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Number of distinct exponents `s`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Most contracting exponent.
    pub fn bottom(&self) -> f64 {
        self.exponents[0]
    }

    /// Least contracting exponent.
    pub fn top(&self) -> f64 {
        *self.exponents.last().expect("nonempty spectrum")
    }

    pub fn is_contracting(&self) -> bool {
        self.top() < 0.0
    }

    /// Exponents repeated by multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.exponents
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(&x, &d)| std::iter::repeat_n(x, d))
            .collect()
    }

    /// Index of the exponent within `tol` of `x`, if any.
    pub fn nearest_within(&self, x: f64, tol: f64) -> Option<usize> {
        self.exponents
            .iter()
            .enumerate()
            .map(|(i, &e)| (i, (e - x).abs()))
            .filter(|&(_, d)| d < tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Every exponent of `self` lies within `tol` of an exponent of `other`.
    pub fn is_subset_of(&self, other: &Self, tol: f64) -> bool {
        self.exponents
            .iter()
            .all(|&x| other.nearest_within(x, tol).is_some())
    }
}

/// Spectrum file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub window: usize,
    pub gap_tol: f64,
}

impl SpectrumReport {
    pub fn new(spectrum: &LyapunovSpectrum, window: usize, gap_tol: f64) -> Self {
        Self {
            exponents: spectrum.exponents().to_vec(),
            multiplicities: spectrum.multiplicities().to_vec(),
            window,
            gap_tol,
        }
    }
}

/// Groups ascending raw exponents by single linkage at `gap_tol`.
///
/// A group whose total spread reaches `gap_tol` means neighbours chained
/// together, and the grouping is reported as ambiguous.
pub fn cluster_exponents(raw: &[f64], gap_tol: f64) -> Result<LyapunovSpectrum> {
    if gap_tol.is_nan() || gap_tol <= 0.0 {
        return Err(Error::Invalid("gap_tol must be positive".into()));
    }
    let mut sorted = raw.to_vec();
    if sorted.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid(format!("non-finite raw exponents {raw:?}")));
    }
    sorted.sort_by(f64::total_cmp);
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for x in sorted.iter().copied() {
        match groups.last_mut() {
            Some(g) if x - *g.last().unwrap() < gap_tol => g.push(x),
            _ => groups.push(vec![x]),
        }
    }
    if groups
        .iter()
        .any(|g| g.last().unwrap() - g.first().unwrap() >= gap_tol)
    {
        return Err(Error::AmbiguousSpectrum {
            raw: sorted,
            gap_tol,
        });
    }
    let exponents = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let multiplicities = groups.iter().map(Vec::len).collect();
    LyapunovSpectrum::new(exponents, multiplicities)
}

/// Result of a QR re-orthonormalization sweep.
pub(crate) struct QrSweep {
    /// Final orthonormal frame.
    pub q: DMatrix<f64>,
    /// Time-averaged `ln |R_ii|` per column of the frame.
    pub column_exponents: Vec<f64>,
}

/// Runs `Q_{k+1} R_k = M_k Q_k` over the given matrices.
pub(crate) fn qr_sweep<I>(start: DMatrix<f64>, matrices: I) -> Result<QrSweep>
where
    I: IntoIterator<Item = DMatrix<f64>>,
{
    let n = start.nrows();
    let d = start.ncols();
    let mut q = start;
    let mut sums = vec![0.0; d];
    let mut steps = 0usize;
    for (k, m) in matrices.into_iter().enumerate() {
        let qr = (m * &q).qr();
        let r = qr.r();
        for (i, s) in sums.iter_mut().enumerate() {
            let rii = r[(i, i)].abs();
            if rii == 0.0 || !rii.is_finite() {
                return Err(Error::SingularStep { step: k });
            }
            *s += rii.ln();
        }
        q = qr.q();
        steps += 1;
    }
    debug_assert_eq!(q.nrows(), n);
    let column_exponents = sums.iter().map(|s| s / steps.max(1) as f64).collect();
    Ok(QrSweep {
        q,
        column_exponents,
    })
}

/// Fixed generic orthonormal frame, so that flags computed by QR sweeps do
/// not depend on accidental alignment with coordinate axes.
pub(crate) fn generic_frame(n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c79_6170);
    let m = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    m.qr().q()
}

/// Raw per-direction exponents of `c` over `n_steps`, ascending.
pub fn raw_exponents_qr<C: LinearCocycle>(c: &C, n_steps: usize) -> Result<Vec<f64>> {
    let n = c.dim();
    if n == 0 {
        return Err(Error::Invalid("cocycle has dimension 0".into()));
    }
    if n_steps < n {
        return Err(Error::Invalid(format!(
            "window {n_steps} shorter than dimension {n}"
        )));
    }
    let sweep = qr_sweep(DMatrix::identity(n, n), (0..n_steps).map(|k| c.matrix(k)))?;
    let mut raw = sweep.column_exponents;
    raw.sort_by(f64::total_cmp);
    Ok(raw)
}

/// Lyapunov spectrum by sequential QR over `n_steps`, clustered at `gap_tol`.
pub fn exponents_qr<C: LinearCocycle>(
    c: &C,
    n_steps: usize,
    gap_tol: f64,
) -> Result<LyapunovSpectrum> {
    cluster_exponents(&raw_exponents_qr(c, n_steps)?, gap_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{ConstantCocycle, FnCocycle};
    use rand::Rng;

    #[test]
    fn constant_diagonal_is_exact() {
        let c = ConstantCocycle(DMatrix::from_diagonal(&nalgebra::dvector![
            (-2.0f64).exp(),
            (-1.0f64).exp()
        ]));
        let s = exponents_qr(&c, 100, DEFAULT_GAP_TOL).unwrap();
        assert_eq!(s.multiplicities(), &[1, 1]);
        assert!((s.exponents()[0] + 2.0).abs() < 1e-8);
        assert!((s.exponents()[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn rotation_is_isometric() {
        let t: f64 = 0.7;
        let c = ConstantCocycle(DMatrix::from_row_slice(
            2,
            2,
            &[t.cos(), -t.sin(), t.sin(), t.cos()],
        ));
        let s = exponents_qr(&c, 50, DEFAULT_GAP_TOL).unwrap();
        assert_eq!(s.multiplicities(), &[2]);
        assert!(s.exponents()[0].abs() < 1e-12);
    }

    // Law of large numbers: the exponents are the means -2 and -1.
    #[test]
    fn iid_diagonal_noise_averages_out() {
        let c = FnCocycle::new(2, |k| {
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let xi: f64 = rng.random_range(-0.1..0.1);
            let eta: f64 = rng.random_range(-0.1..0.1);
            DMatrix::from_diagonal(&nalgebra::dvector![(-2.0 + xi).exp(), (-1.0 + eta).exp()])
        });
        let s = exponents_qr(&c, 100_000, DEFAULT_GAP_TOL).unwrap();
        assert!((s.exponents()[0] + 2.0).abs() < 0.01);
        assert!((s.exponents()[1] + 1.0).abs() < 0.01);
    }

    #[test]
    fn chained_cluster_is_ambiguous() {
        let err = cluster_exponents(&[-1.0, -0.96, -0.92], 0.05).unwrap_err();
        assert!(matches!(err, Error::AmbiguousSpectrum { .. }));
        let ok = cluster_exponents(&[-1.0, -0.99, -0.5], 0.05).unwrap();
        assert_eq!(ok.multiplicities(), &[2, 1]);
    }

    #[test]
    fn singular_step_fails() {
        let c = ConstantCocycle(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(exponents_qr(&c, 10, 0.05).is_err());
        assert!(exponents_qr(&ConstantCocycle(DMatrix::identity(3, 3)), 2, 0.05).is_err());
    }

    #[test]
    fn spectrum_validation() {
        assert!(LyapunovSpectrum::new(vec![-1.0, -2.0], vec![1, 1]).is_err());
        assert!(LyapunovSpectrum::new(vec![-1.0], vec![0]).is_err());
        let s = LyapunovSpectrum::new(vec![-2.0, -1.0], vec![1, 2]).unwrap();
        assert_eq!(s.expanded(), vec![-2.0, -1.0, -1.0]);
        assert!(s.is_contracting());
        assert_eq!(s.dim(), 3);
    }
}
