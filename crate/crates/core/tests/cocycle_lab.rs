use nalgebra::{DMatrix, DVector};

use resonance_forge::cocycle_lab::*;
use resonance_forge::jet_algebra::JetMap;
use resonance_forge::lyapunov::{exponents_qr, ConstantCocycle, LyapunovSpectrum, DEFAULT_GAP_TOL};
use resonance_forge::prolongation::{JetCocycle, LinearParts};
use resonance_forge::Error;

fn e(x: f64) -> f64 {
    x.exp()
}

fn iid_generator(seed: u64, noise: f64) -> CocycleGenerator {
    CocycleGenerator {
        base: BaseSystem { kind: BaseKind::Iid, seed },
        linear: LinearLaw {
            exponents: vec![-2.0, -1.0],
            multiplicities: vec![1, 1],
            noise,
            rotation: 0.0,
        },
        nonlinear: NonlinearLaw {
            degree: 2,
            amplitude: 0.1,
            mean: Vec::new(),
            resonance_only: false,
        },
        injected: Vec::new(),
        fixed: None,
    }
}

fn upper_triangular() -> JetMap {
    JetMap::from_linear(&DMatrix::from_row_slice(2, 2, &[e(-2.0), 1.0, 0.0, e(-1.0)]), 2)
}

#[test]
fn constant_generator_repeats_its_jet() {
    let gen = CocycleGenerator::constant(upper_triangular(), 1).unwrap();
    let run = generate(&gen, 25).unwrap();
    assert_eq!(run.jets.len(), 25);
    assert!(run.jets.iter().all(|j| *j == upper_triangular()));
    assert_eq!(gen.linear.exponents, vec![-2.0, -1.0]);
}

#[test]
fn seeded_runs_replay_bit_for_bit() {
    for kind in [
        BaseKind::Iid,
        BaseKind::MarkovShift { transition: vec![vec![0.9, 0.1], vec![0.3, 0.7]] },
        BaseKind::CircleRotation { angle: (5f64.sqrt() - 1.0) / 2.0 },
    ] {
        let mut gen = iid_generator(42, 0.05);
        gen.base.kind = kind;
        let a = generate(&gen, 500).unwrap();
        let b = generate(&gen, 500).unwrap();
        assert_eq!(a.jets, b.jets);
        assert_eq!(a.orbit, b.orbit);
        let (mut ma, mut mb) = (Vec::new(), Vec::new());
        a.write_manifest(&mut ma).unwrap();
        b.write_manifest(&mut mb).unwrap();
        assert_eq!(ma, mb);
        assert!(a.met.max_window_log_norm.is_finite() && a.met.max_window_log_inverse_norm < 10.0);
        gen.base.seed = 43;
        assert_ne!(generate(&gen, 500).unwrap().jets, a.jets);
    }
}

#[test]
fn reducible_markov_chain_is_rejected() {
    let mut gen = iid_generator(1, 0.05);
    gen.base.kind = BaseKind::MarkovShift { transition: vec![vec![1.0, 0.0], vec![0.5, 0.5]] };
    assert!(matches!(generate(&gen, 10), Err(Error::Config(_))));
}

#[test]
fn noisy_exponents_average_to_the_mean_law() {
    let run = generate(&iid_generator(7, 0.05), 100_000).unwrap();
    let s = exponents_qr(&LinearParts(&run), 100_000, DEFAULT_GAP_TOL).unwrap();
    assert!((s.exponents()[0] + 2.0).abs() < 0.02);
    assert!((s.exponents()[1] + 1.0).abs() < 0.02);
}

#[test]
fn rotating_block_keeps_the_block_exponent() {
    let mut gen = iid_generator(8, 0.05);
    gen.linear = LinearLaw {
        exponents: vec![-2.0, -1.0],
        multiplicities: vec![1, 2],
        noise: 0.05,
        rotation: 1.0,
    };
    let run = generate(&gen, 20_000).unwrap();
    let s = exponents_qr(&LinearParts(&run), 20_000, DEFAULT_GAP_TOL).unwrap();
    assert_eq!(s.multiplicities(), &[1, 2]);
}

fn triangular_run(k: usize) -> CocycleRun {
    generate(&CocycleGenerator::constant(upper_triangular(), 3).unwrap(), k + 1).unwrap()
}

#[test]
fn stable_class_of_fast_line_and_generic_points() {
    let k = 10_000;
    let run = triangular_run(k);
    let spec = LyapunovSpectrum::simple(vec![-2.0, -1.0]).unwrap();
    let fast = stable_class(&run, 0, &[0.3, 0.0], k, &spec, DEFAULT_GAP_TOL).unwrap();
    assert!((fast.slope.unwrap() + 2.0).abs() < 0.02);
    assert_eq!((fast.exponent, fast.index), (Some(-2.0), Some(1)));
    let generic = stable_class(&run, 0, &[0.3, -0.2], k, &spec, DEFAULT_GAP_TOL).unwrap();
    assert!((generic.slope.unwrap() + 1.0).abs() < 0.02);
    assert_eq!(generic.index, Some(2));

    let moved = push_forward(&run, 0, 1, &[0.3, -0.2]).unwrap().unwrap();
    let shifted = stable_class(&run, 1, &moved, k, &spec, DEFAULT_GAP_TOL).unwrap();
    assert_eq!(shifted.index, generic.index);

    assert!(matches!(
        stable_class(&run, 0, &[0.0, 0.0], k, &spec, DEFAULT_GAP_TOL),
        Err(Error::DegenerateInput(_))
    ));
}

#[test]
fn escaping_orbit_is_reported() {
    let gen = CocycleGenerator::constant(
        JetMap::from_terms(1, 2, [(0, vec![1], 2.0), (0, vec![2], 1.0)]).unwrap(),
        0,
    )
    .unwrap();
    let run = generate(&gen, 200).unwrap();
    let spec = LyapunovSpectrum::simple(vec![2f64.ln()]).unwrap();
    let class = stable_class(&run, 0, &[0.5], 200, &spec, DEFAULT_GAP_TOL).unwrap();
    assert!(class.diverged && class.slope.is_none());
    let mut out = Vec::new();
    write_results_csv(&[(vec![0.5], class)], &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "u,slope,exponent,index\n0.5,,,\n");
}

#[test]
fn derivative_along_stable_orbit_has_the_linear_spectrum() {
    let f = JetMap::from_terms(
        2,
        2,
        [(0, vec![1, 0], e(-2.0)), (0, vec![0, 2], 0.1), (1, vec![0, 1], e(-1.0))],
    )
    .unwrap();
    let run = generate(&CocycleGenerator::constant(f, 0).unwrap(), 10_000).unwrap();
    let rep = perturbed_spectrum(&run, &[0.2, 0.3], 10_000, DEFAULT_GAP_TOL).unwrap();
    assert!(rep.passed && rep.max_deviation.unwrap() < 0.02, "{rep:?}");
    let at_zero = perturbed_spectrum(&run, &[0.0, 0.0], 10_000, DEFAULT_GAP_TOL).unwrap();
    assert_eq!(at_zero.max_deviation, Some(0.0));

    let noisy = generate(&iid_generator(9, 0.05), 10_000).unwrap();
    let rep = perturbed_spectrum(&noisy, &[0.1, -0.1], 10_000, DEFAULT_GAP_TOL).unwrap();
    assert!(rep.max_deviation.unwrap() < 0.02, "{rep:?}");

    let expanding = generate(
        &CocycleGenerator::constant(JetMap::from_terms(1, 2, [(0, vec![1], 1.5), (0, vec![2], 0.2)]).unwrap(), 0)
            .unwrap(),
        1_000,
    )
    .unwrap();
    assert!(!perturbed_spectrum(&expanding, &[0.1], 1_000, DEFAULT_GAP_TOL).unwrap().passed);
}

#[test]
fn tensor_sections_drift_at_their_exponents() {
    let t = ConstantCocycle(DMatrix::from_diagonal(&DVector::from_vec(vec![e(-2.0), e(-1.0)])));
    let end = EndomorphismCocycle(&t);
    // projector onto the first Lyapunov space, column-major
    let projector = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
    let d = invariant_section_stability(&end, &projector, 500, DEFAULT_GAP_TOL).unwrap();
    assert!(d.invariant && d.slope.abs() < 1e-12);
    // E_21 scales by e^{λ2 - λ1}
    let injected = DVector::from_vec(vec![1.0, 0.5, 0.0, 1.0]);
    let d = invariant_section_stability(&end, &injected, 500, DEFAULT_GAP_TOL).unwrap();
    assert!((d.slope - 1.0).abs() < 1e-3 && !d.invariant);
    let random = DVector::from_vec(vec![0.3, -0.7, 0.2, 0.9]);
    let d = invariant_section_stability(&end, &random, 500, DEFAULT_GAP_TOL).unwrap();
    assert!((d.slope - 1.0).abs() < 1e-3);
}

#[test]
fn run_implements_jet_cocycle() {
    let run = generate(&iid_generator(1, 0.05), 10).unwrap();
    assert_eq!((run.dim(), run.degree(), run.steps()), (2, 2, 10));
    let json = serde_json::to_string(&run.manifest()).unwrap();
    assert!(json.contains(r#""kind":"iid""#) && json.contains(r#""seed":1"#));
}
