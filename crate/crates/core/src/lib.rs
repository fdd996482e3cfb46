//! Resonance-polynomial normal forms for contracting cocycles of jets.
//!
//! The crate is organised bottom-up:
//!
//! - [`jet_algebra`]: truncated polynomial maps and the jet group.
//! - [`lyapunov`]: Lyapunov spectra, filtrations and splittings of linear cocycles.
//! - [`resonance`]: monomial weights and the resonance classes they induce.
//! - [`prolongation`]: prolonged cocycles and their spectra.
//! - [`normal_form`]: stationary and orbitwise normal-form solvers.
//! - [`cocycle_lab`]: seeded base systems and cocycle generators.
//! - [`cli_report`]: the `resonance-forge` command-line pipelines.

pub mod cli_report;
pub mod cocycle_lab;
pub mod error;
pub mod jet_algebra;
pub mod lyapunov;
pub mod normal_form;
pub mod prolongation;
pub mod resonance;

pub use error::{Error, Result};
pub use jet_algebra::{JetMap, MultiIndex};
