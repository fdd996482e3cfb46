//! Truncated polynomial maps: the jet group, its Lie algebra, and their
//! operations (composition, inversion, adjoint action, recentering, bracket).

mod basis;
mod jet;
mod json;
mod ops;

pub use basis::{MonomialBasis, MultiIndex};
pub use jet::{linear_condition_ratio, JetMap, SINGULAR_RATIO};
pub use ops::{
    adjoint, adjoint_matrix, combinatorial_constant, compose, compose_norm_bound, invert,
    jet_norm, lie_bracket, recenter, JetNorm,
};


pub(crate) use ops::MonomialPowers;
