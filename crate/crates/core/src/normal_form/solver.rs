use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{
    inverse_linear, interior, residual, transport_matrices, ChartFamily, DegreePass, DegreeSlots,
    NearResonanceWarning, SolverConfig, ADAPTED_TOL,
};
use crate::error::{Error, Result};
use crate::jet_algebra::{compose, invert, JetMap, MonomialBasis};
use crate::prolongation::{JetCocycle, JetSequence};
use crate::resonance::{ClassSelector, ResonanceStructure, WeightClass};

/// Per-step data of one degree pass.
struct Transport {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    /// `f_k ∘ T_k⁻¹` restricted to contracting slots
    g_contracting: DVector<f64>,
    /// and to expanding slots
    g_expanding: DVector<f64>,
}

fn masked(v: &DVector<f64>, mask: &[bool]) -> DVector<f64> {
    DVector::from_fn(v.len(), |s, _| if mask[s] { v[s] } else { 0.0 })
}

fn interior_max(steps: &[JetMap], rs: &ResonanceStructure, margin: usize, d: Option<usize>) -> f64 {
    interior(steps.len(), margin)
        .into_par_iter()
        .map(|k| {
            let j = match d {
                Some(d) => steps[k].homogeneous_part(d),
                None => steps[k].clone(),
            };
            crate::jet_algebra::jet_norm(&rs.project_class(&j, ClassSelector::NonResonance)).value()
        })
        .reduce(|| 0.0, f64::max)
}

/// Orbitwise normal form. Degree by degree, the homogeneous correction
/// `P_k` solves `P_{k+1} = A_k P_k - g_k` with `A_k = Ad_{T_k}` and
/// `g_k = f_k ∘ T_k⁻¹`: contracting slots by `M`-term forward sums from the
/// past, expanding slots by `M`-term backward sums from the future.
/// Resonance slots are kept.
pub fn nonstationary_normal_form<C: JetCocycle + Sync>(
    c: &C,
    rs: &ResonanceStructure,
    cfg: &SolverConfig,
) -> Result<ChartFamily> {
    cfg.validate()?;
    let n_steps = c.steps();
    let m = cfg.tail;
    if n_steps < 2 * m + 1 {
        return Err(Error::WindowTooShort {
            steps: n_steps,
            tail: m,
            needed: 2 * m + 1,
        });
    }
    let n = c.dim();
    let dmax = cfg.degree;
    if rs.dim() != n || rs.degree() < dmax {
        return Err(Error::Invalid(format!(
            "resonance table ({}, degree {}) does not cover dimension {n}, degree {dmax}",
            rs.dim(),
            rs.degree()
        )));
    }
    let mut steps = Vec::with_capacity(n_steps);
    let mut lin = Vec::with_capacity(n_steps);
    let mut lin_inv = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let j = c.jet(k);
        if !j.is_algebra_element() {
            return Err(Error::Invalid(format!("jet at step {k} does not fix the origin")));
        }
        let t = j.linear_part();
        let off = rs.blocks().off_block_max(&t);
        if off > ADAPTED_TOL {
            return Err(Error::NotAdapted { step: k, value: off });
        }
        lin_inv.push(inverse_linear(&t)?);
        lin.push(t);
        steps.push(j.with_degree(dmax));
    }
    let basis = MonomialBasis::get(n, dmax);
    let mut charts = vec![JetMap::identity(n, dmax); n_steps + 1];
    let mut history = Vec::new();
    let mut warnings = Vec::new();
    let eps = rs.eps_res();

    for d in 2..=dmax {
        let slots = DegreeSlots::new(&basis, n, d);
        let contracting = slots.mask(rs, |c, _| c != WeightClass::Resonance && c != WeightClass::Expanding);
        let expanding = slots.mask(rs, |c, _| c == WeightClass::Expanding);
        let defects: Vec<DVector<f64>> = steps
            .par_iter()
            .map(|j| {
                let f = slots.gather(j);
                DVector::from_fn(f.len(), |s, _| {
                    if contracting[s] || expanding[s] { f[s] } else { 0.0 }
                })
            })
            .collect();
        let window_max = defects.iter().map(|f| f.amax()).fold(0.0, f64::max);
        let defect = interior_max(&steps, rs, m, Some(d));

        let mut tail_estimate = 0.0f64;
        for s in 0..slots.size() {
            let (target, a) = slots.slot(s);
            let sigma = rs.weight(target, a);
            let abs = sigma.abs();
            if !(contracting[s] || expanding[s]) {
                continue;
            }
            let bound = window_max * (-abs * m as f64).exp() / (1.0 - (-abs).exp());
            if abs < 3.0 * eps {
                let kept = defects.iter().map(|f| f[s].abs()).fold(0.0, f64::max);
                warnings.push(NearResonanceWarning {
                    degree: d,
                    target,
                    alpha: basis.monomial(a).as_slice().to_vec(),
                    sigma,
                    residual_if_kept: kept,
                    residual_if_eliminated: bound,
                });
            }
            if bound > cfg.tol_residual {
                let required = ((window_max / (cfg.tol_residual * (1.0 - (-abs).exp()))).ln() / abs)
                    .ceil() as usize;
                return Err(Error::TailTooLarge {
                    sigma,
                    estimate: bound,
                    tolerance: cfg.tol_residual,
                    required_tail: required.max(m + 1),
                });
            }
            tail_estimate = tail_estimate.max(bound);
        }

        let transport: Vec<Transport> = (0..n_steps)
            .into_par_iter()
            .map(|k| {
                let (cm, a) = transport_matrices(&lin[k], &lin_inv[k], &slots, dmax);
                let (_, a_inv) = transport_matrices(&lin_inv[k], &lin[k], &slots, dmax);
                let g = cm * &defects[k];
                Transport {
                    a,
                    a_inv,
                    g_contracting: masked(&g, &contracting),
                    g_expanding: masked(&g, &expanding),
                }
            })
            .collect();

        let size = slots.size();
        let corrections: Vec<DVector<f64>> = (0..=n_steps)
            .into_par_iter()
            .map(|k| {
                let mut past = DVector::zeros(size);
                for tr in &transport[k.saturating_sub(m)..k] {
                    past = &tr.a * past - &tr.g_contracting;
                }
                let mut future = DVector::zeros(size);
                for tr in transport[k..(k + m).min(n_steps)].iter().rev() {
                    future = &tr.a_inv * (future + &tr.g_expanding);
                }
                past + future
            })
            .collect();

        let changes: Vec<JetMap> = corrections
            .iter()
            .map(|p| slots.identity_plus(p, dmax))
            .collect();
        let inverses: Vec<JetMap> = changes.par_iter().map(invert).collect::<Result<_>>()?;
        steps = (0..n_steps)
            .into_par_iter()
            .map(|k| compose(&compose(&changes[k + 1], &steps[k])?, &inverses[k]))
            .collect::<Result<_>>()?;
        charts = charts
            .par_iter()
            .zip(&changes)
            .map(|(h, p)| compose(p, h))
            .collect::<Result<_>>()?;
        history.push(DegreePass {
            degree: d,
            defect,
            tail_estimate,
            residual: interior_max(&steps, rs, m, None),
        });
    }

    let truncated = JetSequence(steps_from(c, dmax));
    let residual = residual(&truncated, &charts, rs, m)?;
    Ok(ChartFamily {
        charts,
        margin: m,
        residual,
        history,
        warnings,
    })
}

fn steps_from<C: JetCocycle>(c: &C, d: usize) -> Vec<JetMap> {
    (0..c.steps()).map(|k| c.jet(k).with_degree(d)).collect()
}

/// Linearization for 1/2-pinched spectra, where the resonance group is
/// block-linear and every slot of degree >= 2 is eliminated. The solver
/// degree must cover the input jets.
pub fn linearize_half_pinched<C: JetCocycle + Sync>(
    c: &C,
    rs: &ResonanceStructure,
    cfg: &SolverConfig,
) -> Result<ChartFamily> {
    let spec = rs.spectrum();
    if spec.len() > 1 && spec.top() >= spec.bottom() / 2.0 {
        return Err(Error::NotHalfPinched {
            top: spec.top(),
            half_bottom: spec.bottom() / 2.0,
        });
    }
    if cfg.degree < c.degree() {
        return Err(Error::Invalid(format!(
            "elimination degree {} is below the jet degree {}",
            cfg.degree,
            c.degree()
        )));
    }
    nonstationary_normal_form(c, rs, cfg)
}
