use nalgebra::DMatrix;

/// A discrete-time linear cocycle: step `k` maps the fiber at time `k` to
/// the fiber at time `k + 1` by `matrix(k)`.
///
/// Implementations must be re-entrant: `matrix(k)` is a pure function of
/// `k` for a fixed seed or orbit.
pub trait LinearCocycle {
    fn dim(&self) -> usize;
    fn matrix(&self, k: usize) -> DMatrix<f64>;
}

impl<C: LinearCocycle + ?Sized> LinearCocycle for &C {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn matrix(&self, k: usize) -> DMatrix<f64> {
        (**self).matrix(k)
    }
}

/// The same matrix at every step.
#[derive(Clone, Debug)]
pub struct ConstantCocycle(pub DMatrix<f64>);

impl LinearCocycle for ConstantCocycle {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn matrix(&self, _k: usize) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// A finite recorded window of matrices. Steps past the end panic.
#[derive(Clone, Debug)]
pub struct MatrixSequence(pub Vec<DMatrix<f64>>);

impl MatrixSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inverse matrices in reversed order: the cocycle run backwards.
    pub fn reversed_inverse(&self) -> Option<Self> {
        self.0
            .iter()
            .rev()
            .map(|m| m.clone().try_inverse())
            .collect::<Option<Vec<_>>>()
            .map(MatrixSequence)
    }
}

impl LinearCocycle for MatrixSequence {
    fn dim(&self) -> usize {
        self.0.first().map_or(0, |m| m.nrows())
    }
    fn matrix(&self, k: usize) -> DMatrix<f64> {
        assert!(
            k < self.0.len(),
            "step {k} outside recorded window of {}",
            self.0.len()
        );
        self.0[k].clone()
    }
}

/// A cocycle given by a closure.
pub struct FnCocycle<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(usize) -> DMatrix<f64>> FnCocycle<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(usize) -> DMatrix<f64>> LinearCocycle for FnCocycle<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn matrix(&self, k: usize) -> DMatrix<f64> {
        (self.f)(k)
    }
}

/// `B⁻¹ T_k B` for a fixed change of basis `B`.
pub struct Conjugated<C> {
    inner: C,
    basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
}

impl<C: LinearCocycle> Conjugated<C> {
    pub fn new(inner: C, basis: DMatrix<f64>) -> Option<Self> {
        let basis_inv = basis.clone().try_inverse()?;
        Some(Self {
            inner,
            basis,
            basis_inv,
        })
    }
}

impl<C: LinearCocycle> LinearCocycle for Conjugated<C> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn matrix(&self, k: usize) -> DMatrix<f64> {
        &self.basis_inv * self.inner.matrix(k) * &self.basis
    }
}
