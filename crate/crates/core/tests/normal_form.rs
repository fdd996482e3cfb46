use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resonance_forge::jet_algebra::{compose, invert, JetMap};
use resonance_forge::lyapunov::LyapunovSpectrum;
use resonance_forge::normal_form::*;
use resonance_forge::prolongation::{ConstantJets, JetSequence};
use resonance_forge::resonance::{ClassSelector, ResonanceStructure, DEFAULT_EPS_RES};
use resonance_forge::Error;

fn e(x: f64) -> f64 {
    x.exp()
}

fn rs(lam: &[f64], degree: usize) -> ResonanceStructure {
    let spec = LyapunovSpectrum::simple(lam.to_vec()).unwrap();
    let blocks = resonance_forge::resonance::BlockAssignment::contiguous(&vec![1; lam.len()]).unwrap();
    ResonanceStructure::new(spec, blocks, degree, DEFAULT_EPS_RES).unwrap()
}

const A: f64 = 0.3;

fn worked_example() -> JetMap {
    JetMap::from_terms(
        2,
        2,
        [
            (0, vec![1, 0], e(-2.0)),
            (0, vec![0, 2], A),
            (0, vec![1, 1], 0.5),
            (1, vec![0, 1], e(-1.0)),
            (1, vec![1, 1], -0.4),
            (1, vec![0, 2], 0.2),
        ],
    )
    .unwrap()
}

fn cfg(tail: usize, degree: usize) -> SolverConfig {
    SolverConfig {
        degree,
        tail,
        eps_res: DEFAULT_EPS_RES,
        tol_residual: 1e-6,
    }
}

#[test]
fn sternberg_worked_example() {
    let r = rs(&[-2.0, -1.0], 2);
    let (h, nf) = sternberg(&worked_example(), &r).unwrap();
    let expected = JetMap::from_terms(
        2,
        2,
        [(0, vec![1, 0], e(-2.0)), (0, vec![0, 2], A), (1, vec![0, 1], e(-1.0))],
    )
    .unwrap();
    assert!(nf.max_abs_diff(&expected) < 1e-10, "{nf:?}");
    // b-slot divisor
    assert!((h.coeff(0, &[1, 1]) - 0.5 / (e(-2.0) - e(-3.0))).abs() < 1e-12);
    let direct = compose(&compose(&h, &worked_example()).unwrap(), &invert(&h).unwrap()).unwrap();
    assert!(direct.max_abs_diff(&nf) < 1e-12);
}

#[test]
fn sternberg_trivial_inputs() {
    let r = rs(&[-2.0, -1.0], 2);
    let lin = worked_example().truncate(1).with_degree(2);
    let (h, nf) = sternberg(&lin, &r).unwrap();
    assert_eq!(h, JetMap::identity(2, 2));
    assert_eq!(nf, lin);
    let res_only = r.project_class(&worked_example(), ClassSelector::Resonance);
    let (h, _) = sternberg(&res_only, &r).unwrap();
    assert_eq!(h, JetMap::identity(2, 2));
}

#[test]
fn stationary_input_matches_sternberg() {
    let r = rs(&[-2.0, -1.0], 2);
    let f = worked_example();
    let (h, _) = sternberg(&f, &r).unwrap();
    let run = ConstantJets { jet: f, steps: 300 };
    let fam = nonstationary_normal_form(&run, &r, &cfg(60, 2)).unwrap();
    assert!(fam.residual <= 1e-8);
    for k in fam.interior() {
        assert!(fam.charts[k].max_abs_diff(&h) < 1e-7, "step {k}");
    }
}

fn iid_benchmark(seed: u64, n_steps: usize) -> JetSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    JetSequence(
        (0..n_steps)
            .map(|_| {
                let mut j = JetMap::zero(2, 2);
                j.set_coeff(0, &[1, 0], e(-2.0 + rng.random_range(-0.05..0.05))).unwrap();
                j.set_coeff(1, &[0, 1], e(-1.0 + rng.random_range(-0.05..0.05))).unwrap();
                for t in 0..2 {
                    for alpha in [[2, 0], [1, 1], [0, 2]] {
                        j.set_coeff(t, &alpha, rng.random_range(-0.1..0.1)).unwrap();
                    }
                }
                j
            })
            .collect(),
    )
}

#[test]
fn iid_benchmark_residual_and_tail_convergence() {
    let r = rs(&[-2.0, -1.0], 2);
    let run = iid_benchmark(11, 2000);
    let m60 = nonstationary_normal_form(&run, &r, &cfg(60, 2)).unwrap();
    assert!(m60.residual <= 1e-6, "{}", m60.residual);
    let m120 = nonstationary_normal_form(&run, &r, &cfg(120, 2)).unwrap();
    let ratio = m60.residual.max(1e-300) / m120.residual.max(1e-300);
    assert!((0.5..2.0).contains(&ratio), "{} vs {}", m60.residual, m120.residual);
    assert_eq!(m60.history.len(), 1);
}

#[test]
fn short_tails_decay_geometrically() {
    let r = rs(&[-2.0, -1.0], 2);
    let run = iid_benchmark(12, 400);
    let loose = |m| SolverConfig { tol_residual: 1.0, ..cfg(m, 2) };
    let a = nonstationary_normal_form(&run, &r, &loose(4)).unwrap().residual;
    let b = nonstationary_normal_form(&run, &r, &loose(8)).unwrap().residual;
    assert!(a / b >= e(0.5 * 4.0), "{a} vs {b}");
}

#[test]
fn resonance_only_cocycle_keeps_identity_charts() {
    let r = rs(&[-2.0, -1.0], 2);
    let run = JetSequence(
        iid_benchmark(3, 200)
            .0
            .iter()
            .map(|j| r.project_class(j, ClassSelector::Resonance))
            .collect(),
    );
    let fam = nonstationary_normal_form(&run, &r, &cfg(20, 2)).unwrap();
    assert_eq!(fam.residual, 0.0);
    assert!(fam.charts.iter().all(|h| *h == JetMap::identity(2, 2)));
}

#[test]
fn solver_errors() {
    let r = rs(&[-2.0, -1.0], 2);
    let run = iid_benchmark(4, 100);
    assert!(matches!(
        nonstationary_normal_form(&run, &r, &cfg(60, 2)),
        Err(Error::WindowTooShort { needed: 121, .. })
    ));
    let tight = SolverConfig { tol_residual: 1e-12, ..cfg(3, 2) };
    match nonstationary_normal_form(&run, &r, &tight) {
        Err(Error::TailTooLarge { required_tail, .. }) => assert!(required_tail > 3),
        other => panic!("{other:?}"),
    }
    let mut skew = run.0.clone();
    skew[5].set_coeff(0, &[0, 1], 0.1).unwrap();
    assert!(matches!(
        nonstationary_normal_form(&JetSequence(skew), &r, &cfg(10, 2)),
        Err(Error::NotAdapted { step: 5, .. })
    ));
}

#[test]
fn chart_family_json_round_trip() {
    let r = rs(&[-2.0, -1.0], 2);
    let fam = nonstationary_normal_form(&iid_benchmark(5, 30), &r, &SolverConfig { tol_residual: 1.0, ..cfg(5, 2) }).unwrap();
    let json = fam.to_json().unwrap();
    assert!(json.starts_with(r#"{"window":[0,30],"margin":5,"residual":"#));
    let back = ChartFamily::from_json(&json).unwrap();
    assert_eq!(back.charts, fam.charts);
    let mut csv = Vec::new();
    fam.write_history_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("degree,defect,tail_estimate,residual\n2,"));
}

#[test]
fn square_of_cocycle_is_normalized_by_the_same_charts() {
    let r = rs(&[-2.0, -1.0], 2);
    let run = iid_benchmark(6, 600);
    let fam = nonstationary_normal_form(&run, &r, &cfg(60, 2)).unwrap();
    let squared = JetSequence(
        (0..run.0.len() - 1)
            .map(|k| compose(&run.0[k + 1], &run.0[k]).unwrap())
            .collect(),
    );
    let rep = centralizer_check(&run, &squared, 2, &fam, &r).unwrap();
    assert!(rep.passed, "{rep:?}");

    let constant = ConstantJets { jet: worked_example(), steps: 300 };
    let fam = nonstationary_normal_form(&constant, &r, &cfg(60, 2)).unwrap();
    let sq = ConstantJets { jet: compose(&worked_example(), &worked_example()).unwrap(), steps: 300 };
    let rep = centralizer_check(&constant, &sq, 2, &fam, &r).unwrap();
    assert!(rep.residual_g <= 1e-7 && rep.passed, "{rep:?}");
}

#[test]
fn commuting_resonance_map_is_normalized() {
    let r = rs(&[-2.0, -1.0], 2);
    let (a, b, c) = (0.4, -0.7, e(-0.5));
    let f = JetMap::from_terms(2, 2, [(0, vec![1, 0], e(-2.0)), (0, vec![0, 2], a), (1, vec![0, 1], e(-1.0))]).unwrap();
    let g = JetMap::from_terms(2, 2, [(0, vec![1, 0], c * c), (0, vec![0, 2], b), (1, vec![0, 1], c)]).unwrap();
    let h0 = JetMap::from_terms(
        2,
        2,
        [(0, vec![1, 0], 1.0), (1, vec![0, 1], 1.0), (0, vec![1, 1], 0.3), (1, vec![2, 0], -0.5), (1, vec![0, 2], 0.2)],
    )
    .unwrap();
    let h0_inv = invert(&h0).unwrap();
    let conj = |x: &JetMap| compose(&compose(&h0, x).unwrap(), &h0_inv).unwrap();
    let fc = ConstantJets { jet: conj(&f), steps: 300 };
    let gc = ConstantJets { jet: conj(&g), steps: 300 };
    let fam = nonstationary_normal_form(&fc, &r, &cfg(60, 2)).unwrap();
    let rep = centralizer_check(&fc, &gc, 0, &fam, &r).unwrap();
    assert!(rep.passed, "{rep:?}");

    let not_commuting = ConstantJets { jet: conj(&worked_example()), steps: 300 };
    assert!(matches!(
        centralizer_check(&fc, &not_commuting, 0, &fam, &r),
        Err(Error::CommutationViolation { .. })
    ));
}

fn cubic_half_pinched(seed: u64, n_steps: usize, lam: &[f64]) -> JetSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = lam.len();
    let basis = resonance_forge::jet_algebra::MonomialBasis::get(n, 3);
    JetSequence(
        (0..n_steps)
            .map(|_| {
                let mut j = JetMap::zero(n, 3);
                for (i, l) in lam.iter().enumerate() {
                    j.set_slot(i, 1 + i, e(l + rng.random_range(-0.05..0.05)));
                    for a in basis.len_up_to(1)..basis.len() {
                        j.set_slot(i, a, rng.random_range(-0.1..0.1));
                    }
                }
                j
            })
            .collect(),
    )
}

#[test]
fn half_pinched_cubic_benchmark_linearizes() {
    let r = rs(&[-1.0, -0.6], 3);
    assert_eq!(r.max_degree(), 1);
    let run = cubic_half_pinched(7, 2000, &[-1.0, -0.6]);
    let fam = linearize_half_pinched(&run, &r, &cfg(150, 3)).unwrap();
    let worst = max_nonlinear(&run, &fam.charts, fam.margin).unwrap();
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn single_exponent_quadratic_slots_are_expanding() {
    let r = rs(&[-1.0], 2);
    let run = JetSequence(cubic_half_pinched(8, 400, &[-1.0]).0.iter().map(|j| j.truncate(2)).collect());
    let fam = linearize_half_pinched(&run, &r, &cfg(40, 2)).unwrap();
    assert!(max_nonlinear(&run, &fam.charts, fam.margin).unwrap() < 1e-12);
    assert!(matches!(
        linearize_half_pinched(&run, &rs(&[-2.0, -1.0], 2), &cfg(40, 2)),
        Err(Error::DimensionMismatch { .. } | Error::Invalid(_) | Error::NotHalfPinched { .. })
    ));
}

#[test]
fn already_linear_cocycle_needs_no_charts() {
    let r = rs(&[-1.0, -0.6], 3);
    let run = JetSequence(cubic_half_pinched(9, 400, &[-1.0, -0.6]).0.iter().map(|j| j.truncate(1).with_degree(3)).collect());
    let fam = linearize_half_pinched(&run, &r, &cfg(150, 3)).unwrap();
    assert!(fam.charts.iter().all(|h| *h == JetMap::identity(2, 3)));
}
