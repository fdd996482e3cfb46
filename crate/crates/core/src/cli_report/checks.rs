use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{analyse, prolonged_spectrum, solve, Experiment, JET_RESONANCE_TOL, SCHEMA_VERSION};
use crate::cocycle_lab::{perturbed_spectrum, CocycleRun};
use crate::error::Result;
use crate::jet_algebra::{compose, invert, JetMap};
use crate::normal_form::centralizer_check;
use crate::prolongation::{jet_resonance_check, JetCocycle, JetSequence};
use crate::resonance::{ClassSelector, JetGroup, ResonanceStructure};

/// Tolerance on offending coefficients after compose and invert.
pub const CLOSURE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub details: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub schema_version: u32,
    pub seed: u64,
    pub passed: bool,
    pub first_failure: Option<String>,
    pub checks: Vec<CheckResult>,
}

fn check<T: Serialize, E: std::fmt::Display>(name: &str, outcome: std::result::Result<(bool, T), E>) -> CheckResult {
    match outcome {
        Ok((passed, details)) => CheckResult {
            name: name.into(),
            passed,
            details: serde_json::to_value(details).unwrap_or(Value::Null),
        },
        Err(e) => CheckResult {
            name: name.into(),
            passed: false,
            details: json!({ "error": e.to_string() }),
        },
    }
}

/// Random group element: diagonal linear part in `[0.6, 1.6)` plus the class
/// projection of uniform `(-0.5, 0.5)` coefficients.
fn class_member(rng: &mut ChaCha8Rng, rs: &ResonanceStructure, selector: ClassSelector, unipotent: bool) -> JetMap {
    let n = rs.dim();
    let mut raw = JetMap::zero(n, rs.degree());
    for t in 0..n {
        for a in 1..raw.basis().len() {
            raw.set_slot(t, a, rng.random_range(-0.5..0.5));
        }
    }
    let mut j = rs.project_class(&raw, selector);
    for p in 0..n {
        let d = if unipotent { 1.0 } else { rng.random_range(0.6..1.6) };
        j.set_slot(p, 1 + p, d);
    }
    j
}

#[derive(Serialize)]
struct ClosureDetails {
    trials: usize,
    max_offending_h: f64,
    max_offending_h0: f64,
    max_offending_x: f64,
    tolerance: f64,
}

fn group_closure(rs: &ResonanceStructure, trials: usize, seed: u64) -> Result<(bool, ClosureDetails)> {
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut worst = [0.0f64; 3];
            let cases = [
                (JetGroup::H, ClassSelector::Subresonance, false),
                (JetGroup::H0, ClassSelector::Resonance, false),
                (JetGroup::X, ClassSelector::StrictSubresonance, true),
            ];
            for (slot, (group, selector, unipotent)) in cases.into_iter().enumerate() {
                let a = class_member(&mut rng, rs, selector, unipotent);
                let b = class_member(&mut rng, rs, selector, unipotent);
                for j in [compose(&a, &b)?, invert(&a)?] {
                    worst[slot] = worst[slot].max(rs.membership(&j, group, CLOSURE_TOL).max_offending);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    let max = |i: usize| per_trial.iter().map(|w| w[i]).fold(0.0, f64::max);
    let d = ClosureDetails {
        trials,
        max_offending_h: max(0),
        max_offending_h0: max(1),
        max_offending_x: max(2),
        tolerance: CLOSURE_TOL,
    };
    let passed = [d.max_offending_h, d.max_offending_h0, d.max_offending_x]
        .iter()
        .all(|&x| x <= CLOSURE_TOL);
    Ok((passed, d))
}

/// `G_k = F_{k+1} ∘ F_k`, a time-2 element of the centralizer.
fn square_cocycle(run: &CocycleRun, degree: usize) -> Result<JetSequence> {
    (0..run.steps().saturating_sub(1))
        .map(|k| compose(&run.jet(k + 1).with_degree(degree), &run.jet(k).with_degree(degree)))
        .collect::<Result<Vec<_>>>()
        .map(JetSequence)
}

/// Runs the full check battery: group closure, prolonged spectrum, jets at
/// the fixed point, normal-form residual, perturbation spectrum and
/// centralizer covariance.
pub fn verify(exp: &Experiment) -> Result<Verdict> {
    let w = exp.windows().clone();
    let tol = exp.tolerances().clone();
    let run = exp.run(w.n)?;
    let an = analyse(exp, &run)?;
    let mut checks = Vec::new();

    checks.push(check(
        "group_closure",
        group_closure(&an.rs, exp.config.closure_trials, exp.seed),
    ));

    let r = an.rs.max_degree().min(run.degree());
    checks.push(check(
        "prolonged_spectrum",
        prolonged_spectrum(exp, &run, r).map(|rep| (rep.passed, rep)),
    ));

    checks.push(check(
        "jet_resonance",
        jet_resonance_check(&run, &an.rs, w.n, JET_RESONANCE_TOL).map(|rep| (rep.passed, rep)),
    ));

    let charts = solve(exp, &run, &an);
    checks.push(check(
        "normal_form",
        charts.as_ref().map(|c| {
            let passed = c.residual <= tol.tol_residual;
            (
                passed,
                json!({
                    "r": an.rs.max_degree(),
                    "degree": an.degree,
                    "margin": c.margin,
                    "residual": c.residual,
                    "tol_residual": tol.tol_residual,
                    "eps_res": an.eps_res,
                    "linear_normal_form": an.linear_normal_form(),
                    "history": c.history,
                    "warnings": c.warnings,
                }),
            )
        }),
    ));

    let long = if w.k > w.n { exp.run(w.k)? } else { run.clone() };
    let u = exp.samples().into_iter().next().unwrap_or_else(|| vec![0.1; run.dim()]);
    checks.push(check(
        "perturbation_spectrum",
        perturbed_spectrum(&long, &u, w.k.min(long.steps()), tol.gap_tol).map(|rep| (rep.passed, rep)),
    ));

    checks.push(check(
        "centralizer",
        match &charts {
            Ok(c) => square_cocycle(&run, an.degree)
                .and_then(|g| centralizer_check(&run, &g, 2, c, &an.rs))
                .map(|rep| (rep.passed, rep))
                .map_err(|e| e.to_string()),
            Err(e) => Err(format!("no charts to test: {e}")),
        },
    ));

    let first_failure = checks.iter().find(|c| !c.passed).map(|c| c.name.clone());
    Ok(Verdict {
        schema_version: SCHEMA_VERSION,
        seed: exp.seed,
        passed: first_failure.is_none(),
        first_failure,
        checks,
    })
}
