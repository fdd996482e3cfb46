//! Lyapunov spectra, filtrations and Oseledec splittings for finite windows
//! of invertible matrix products.

mod cocycle;
mod spectrum;
mod splitting;

pub use cocycle::{ConstantCocycle, Conjugated, FnCocycle, LinearCocycle, MatrixSequence};
pub use spectrum::{
    cluster_exponents, exponents_qr, raw_exponents_qr, LyapunovSpectrum, SpectrumReport,
    DEFAULT_GAP_TOL,
};
pub use splitting::{
    adapted_splitting, backward_filtration, subbundle_spectrum_check, Filtration,
    LyapunovSplitting, SubbundleReport, INVARIANCE_TOL, MIN_SPLITTING_ANGLE,
};

