#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resonance_forge::jet_algebra::{JetMap, MonomialBasis};
use resonance_forge::lyapunov::LyapunovSpectrum;
use resonance_forge::resonance::{ClassSelector, ResonanceStructure};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Diagonally dominant linear part, nonlinear coefficients in `(-0.5, 0.5)`.
pub fn group_element(rng: &mut ChaCha8Rng, n: usize, r: usize) -> JetMap {
    let lin = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let m = 0.6 + rng.random::<f64>();
            if rng.random::<bool>() { m } else { -m }
        } else {
            rng.random_range(-0.2..0.2)
        }
    });
    let mut j = JetMap::from_linear(&lin, r);
    let basis = MonomialBasis::get(n, r);
    for t in 0..n {
        for a in basis.len_up_to(1)..basis.len() {
            j.set_slot(t, a, rng.random_range(-0.5..0.5));
        }
    }
    j
}

/// Coefficients uniform in `(-1, 1)`, no constant term.
pub fn algebra_element(rng: &mut ChaCha8Rng, n: usize, r: usize) -> JetMap {
    let mut j = JetMap::zero(n, r);
    for t in 0..n {
        for a in 1..j.basis().len() {
            j.set_slot(t, a, rng.random_range(-1.0..1.0));
        }
    }
    j
}

pub fn spectra() -> Vec<LyapunovSpectrum> {
    [
        (vec![-2.0, -1.0], vec![1, 1]),
        (vec![-3.0, -1.0], vec![1, 1]),
        (vec![-3.0, -2.0, -1.0], vec![1, 1, 1]),
        (vec![-2.0, -1.0], vec![1, 2]),
        (vec![-1.0, -0.6], vec![1, 1]),
    ]
    .into_iter()
    .map(|(e, m)| LyapunovSpectrum::new(e, m).unwrap())
    .collect()
}

/// Random member of the class-`selector` group: a diagonal linear part plus
/// the class projection of a random jet.
pub fn class_member(rng: &mut ChaCha8Rng, rs: &ResonanceStructure, selector: ClassSelector) -> JetMap {
    let n = rs.dim();
    let r = rs.degree();
    let raw = algebra_element(rng, n, r).scale(0.5);
    let mut j = rs.project_class(&raw, selector);
    for p in 0..n {
        let d = 0.6 + rng.random::<f64>();
        j.set_coeff(p, &unit(n, p), d).unwrap();
    }
    j
}

/// `Id` plus strict-subresonance terms.
pub fn strict_member(rng: &mut ChaCha8Rng, rs: &ResonanceStructure) -> JetMap {
    let raw = algebra_element(rng, rs.dim(), rs.degree()).scale(0.5);
    JetMap::identity(rs.dim(), rs.degree())
        .add(&rs.project_class(&raw, ClassSelector::StrictSubresonance))
        .unwrap()
}

pub fn unit(n: usize, p: usize) -> Vec<u32> {
    (0..n).map(|q| u32::from(q == p)).collect()
}
