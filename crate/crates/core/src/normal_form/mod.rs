//! Coordinate changes conjugating contracting cocycles of jets into the
//! resonance group: the stationary Poincaré–Dulac/Sternberg elimination and
//! the orbitwise twisted-coboundary solver, plus the residual and
//! centralizer checks built on them.

mod solver;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet_algebra::{compose, invert, jet_norm, JetMap, MonomialBasis, MonomialPowers};
use crate::prolongation::JetCocycle;
use crate::resonance::{ClassSelector, ResonanceStructure, WeightClass};

pub use solver::{linearize_half_pinched, nonstationary_normal_form};

/// Smallest `|e^{λ_i} - e^{⟨α,λ⟩}|` accepted on an eliminated slot.
pub const MIN_DIVISOR: f64 = 1e-12;
/// Largest off-block linear entry accepted as adapted.
pub const ADAPTED_TOL: f64 = 1e-10;
/// Residuals below this are treated as roundoff when comparing residuals.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Highest degree eliminated.
    pub degree: usize,
    /// Terms per coboundary series.
    pub tail: usize,
    pub eps_res: f64,
    pub tol_residual: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.tail == 0 {
            return Err(Error::Invalid("solver degree and tail must be at least 1".into()));
        }
        if !(self.eps_res > 0.0 && self.tol_residual > 0.0) {
            return Err(Error::Invalid("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Per-degree record of a solver pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreePass {
    pub degree: usize,
    /// Interior non-resonance norm at this degree before the pass.
    pub defect: f64,
    /// Largest geometric tail bound over eliminated slots.
    pub tail_estimate: f64,
    /// Interior residual over all degrees after the pass.
    pub residual: f64,
}

/// A slot whose weight lies just outside the resonance tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearResonanceWarning {
    pub degree: usize,
    pub target: usize,
    pub alpha: Vec<u32>,
    pub sigma: f64,
    /// Largest interior coefficient left in place if the slot were kept.
    pub residual_if_kept: f64,
    /// Tail bound if the slot is eliminated.
    pub residual_if_eliminated: f64,
}

/// Charts `H_0..H_N` along a window of `N` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartFamily {
    pub charts: Vec<JetMap>,
    pub margin: usize,
    pub residual: f64,
    pub history: Vec<DegreePass>,
    pub warnings: Vec<NearResonanceWarning>,
}

#[derive(Serialize, Deserialize)]
struct ChartFamilyWire {
    window: [usize; 2],
    margin: usize,
    residual: f64,
    charts: Vec<JetMap>,
}

impl ChartFamily {
    /// Number of steps `N` covered.
    pub fn window(&self) -> usize {
        self.charts.len() - 1
    }

    /// Steps `k` with full past and future sums.
    pub fn interior(&self) -> std::ops::RangeInclusive<usize> {
        interior(self.window(), self.margin)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ChartFamilyWire {
            window: [0, self.window()],
            margin: self.margin,
            residual: self.residual,
            charts: self.charts.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let w: ChartFamilyWire = serde_json::from_str(s)?;
        if w.charts.len() != w.window[1] + 1 || w.window[0] != 0 {
            return Err(Error::Invalid("chart count does not match window".into()));
        }
        Ok(Self {
            charts: w.charts,
            margin: w.margin,
            residual: w.residual,
            history: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// `degree,defect,tail_estimate,residual`, one row per pass.
    pub fn write_history_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.history {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn interior(n_steps: usize, margin: usize) -> std::ops::RangeInclusive<usize> {
    margin..=(n_steps - 1 - margin)
}

/// `H_{k+h} ∘ G_k ∘ H_k⁻¹`
pub fn conjugated_step(charts: &[JetMap], g: &JetMap, k: usize, shift: usize) -> Result<JetMap> {
    let d = charts[k].degree();
    let g = g.with_degree(d).without_constant();
    compose(&charts[k + shift], &compose(&g, &invert(&charts[k])?)?)
}

/// Max over interior `k` of the non-resonance norm of `H_{k+1} ∘ F_k ∘ H_k⁻¹`.
pub fn residual<C: JetCocycle + Sync>(
    c: &C,
    charts: &[JetMap],
    rs: &ResonanceStructure,
    margin: usize,
) -> Result<f64> {
    shifted_residual(c, charts, rs, margin, 1)
}

fn shifted_residual<C: JetCocycle + Sync>(
    c: &C,
    charts: &[JetMap],
    rs: &ResonanceStructure,
    margin: usize,
    shift: usize,
) -> Result<f64> {
    let n_steps = charts.len() - 1;
    if n_steps < 2 * margin + shift {
        return Err(Error::WindowTooShort {
            steps: n_steps,
            tail: margin,
            needed: 2 * margin + shift,
        });
    }
    let last = (n_steps - margin).saturating_sub(shift).min(c.steps().saturating_sub(1));
    (margin..=last)
        .into_par_iter()
        .map(|k| {
            let conj = conjugated_step(charts, c.jet(k), k, shift)?;
            Ok(jet_norm(&rs.project_class(&conj, ClassSelector::NonResonance)).value())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Largest coefficient of degree >= 2 over interior conjugated steps.
pub fn max_nonlinear<C: JetCocycle + Sync>(c: &C, charts: &[JetMap], margin: usize) -> Result<f64> {
    let n_steps = charts.len() - 1;
    interior(n_steps, margin)
        .into_par_iter()
        .map(|k| {
            let conj = conjugated_step(charts, c.jet(k), k, 1)?;
            let nonlinear = conj.sub(&conj.truncate(1).with_degree(conj.degree()))?;
            Ok(jet_norm(&nonlinear).value())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Degree-`d` slots in solver order: `target * len_d + (monomial - start)`.
pub(crate) struct DegreeSlots {
    pub start: usize,
    pub len_d: usize,
    pub n: usize,
}

impl DegreeSlots {
    pub fn new(basis: &MonomialBasis, n: usize, d: usize) -> Self {
        let range = basis.degree_range(d);
        Self {
            start: range.start,
            len_d: range.len(),
            n,
        }
    }

    pub fn size(&self) -> usize {
        self.n * self.len_d
    }

    /// `(target, monomial index)` of slot `s`.
    pub fn slot(&self, s: usize) -> (usize, usize) {
        (s / self.len_d, self.start + s % self.len_d)
    }

    pub fn gather(&self, j: &JetMap) -> DVector<f64> {
        DVector::from_fn(self.size(), |s, _| {
            let (t, a) = self.slot(s);
            j.slot(t, a)
        })
    }

    /// `Id + P` for a homogeneous `P` given in slot coordinates.
    pub fn identity_plus(&self, p: &DVector<f64>, degree: usize) -> JetMap {
        let mut out = JetMap::identity(self.n, degree);
        for (s, &v) in p.iter().enumerate() {
            let (t, a) = self.slot(s);
            out.set_slot(t, a, v);
        }
        out
    }

    pub fn mask(&self, rs: &ResonanceStructure, keep: impl Fn(WeightClass, f64) -> bool) -> Vec<bool> {
        (0..self.size())
            .map(|s| {
                let (t, a) = self.slot(s);
                keep(rs.class(t, a), rs.weight(t, a))
            })
            .collect()
    }
}

/// Matrices on degree-`d` homogeneous fields of `X -> X∘L⁻¹` (`c`) and of
/// `X -> L X(L⁻¹·)` (`a`), with `L⁻¹` given.
pub(crate) fn transport_matrices(
    l: &DMatrix<f64>,
    l_inv: &DMatrix<f64>,
    slots: &DegreeSlots,
    degree: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = slots.n;
    let powers = MonomialPowers::new(&JetMap::from_linear(l_inv, degree));
    let len_d = slots.len_d;
    let mut pull = DMatrix::zeros(len_d, len_d);
    for a in 0..len_d {
        let poly = powers.monomial(slots.start + a);
        for b in 0..len_d {
            pull[(b, a)] = poly[slots.start + b];
        }
    }
    let size = slots.size();
    let mut c = DMatrix::zeros(size, size);
    let mut a = DMatrix::zeros(size, size);
    for j in 0..n {
        c.view_mut((j * len_d, j * len_d), (len_d, len_d)).copy_from(&pull);
        for i in 0..n {
            let lij = l[(i, j)];
            if lij != 0.0 {
                a.view_mut((i * len_d, j * len_d), (len_d, len_d))
                    .copy_from(&(&pull * lij));
            }
        }
    }
    (c, a)
}

fn inverse_linear(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ratio = crate::jet_algebra::linear_condition_ratio(l);
    if ratio < crate::jet_algebra::SINGULAR_RATIO {
        return Err(Error::NonInvertible { ratio });
    }
    l.clone().try_inverse().ok_or(Error::NonInvertible { ratio })
}

/// Stationary elimination: returns `(H, NF)` with `NF = H ∘ F ∘ H⁻¹`
/// resonance up to roundoff. Each degree solves `(I - Ad_T) P = -f∘T⁻¹` on
/// the non-resonance slots, which for diagonal `T` is the divisor formula
/// `p = f / (e^{λ_i} - e^{⟨α,λ⟩})`.
pub fn sternberg(f: &JetMap, rs: &ResonanceStructure) -> Result<(JetMap, JetMap)> {
    let n = f.dim();
    let r = f.degree();
    if r > rs.degree() || n != rs.dim() {
        return Err(Error::Invalid(format!(
            "jet of dimension {n}, degree {r} exceeds resonance table ({}, {})",
            rs.dim(),
            rs.degree()
        )));
    }
    if !f.is_algebra_element() {
        return Err(Error::Invalid("sternberg needs a fixed point at the origin".into()));
    }
    let t = f.linear_part();
    let off = rs.blocks().off_block_max(&t);
    if off > ADAPTED_TOL {
        return Err(Error::NotAdapted { step: 0, value: off });
    }
    let t_inv = inverse_linear(&t)?;
    let lam = rs.spectrum().exponents();
    let basis = f.basis().clone();
    let mut nf = f.clone();
    let mut h = JetMap::identity(n, r);
    for d in 2..=r {
        let slots = DegreeSlots::new(&basis, n, d);
        let elim = slots.mask(rs, |c, _| c != WeightClass::Resonance);
        for (s, &e) in elim.iter().enumerate() {
            let (tg, a) = slots.slot(s);
            let sigma = rs.weight(tg, a);
            let li = lam[rs.blocks().block_of(tg)];
            let divisor = (li.exp() - (li - sigma).exp()).abs();
            if e && divisor < MIN_DIVISOR {
                return Err(Error::NearResonance {
                    target: tg,
                    alpha: basis.monomial(a).to_string(),
                    sigma,
                    divisor,
                });
            }
        }
        let idx: Vec<usize> = (0..slots.size()).filter(|&s| elim[s]).collect();
        if idx.is_empty() {
            continue;
        }
        let (c, a) = transport_matrices(&t, &t_inv, &slots, r);
        let g = &c * slots.gather(&nf);
        let m = DMatrix::from_fn(idx.len(), idx.len(), |p, q| {
            let id = if p == q { 1.0 } else { 0.0 };
            id - a[(idx[p], idx[q])]
        });
        let rhs = DVector::from_fn(idx.len(), |p, _| -g[idx[p]]);
        let sol = m.lu().solve(&rhs).ok_or(Error::NearResonance {
            target: 0,
            alpha: format!("degree {d}"),
            sigma: 0.0,
            divisor: 0.0,
        })?;
        let mut p = DVector::zeros(slots.size());
        for (q, &s) in idx.iter().enumerate() {
            p[s] = sol[q];
        }
        let step = slots.identity_plus(&p, r);
        nf = compose(&compose(&step, &nf)?, &invert(&step)?)?;
        h = compose(&step, &h)?;
    }
    Ok((h, nf))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralizerReport {
    pub shift: usize,
    pub commutation_defect: f64,
    pub residual_f: f64,
    pub residual_g: f64,
    pub passed: bool,
}

/// Checks that the charts normalizing `F` also normalize a commuting `G`,
/// where `G_k` maps time `k` to time `k + shift` and
/// `G_{k+1} ∘ F_k = F_{k+shift} ∘ G_k`.
pub fn centralizer_check<CF, CG>(
    f: &CF,
    g: &CG,
    shift: usize,
    charts: &ChartFamily,
    rs: &ResonanceStructure,
) -> Result<CentralizerReport>
where
    CF: JetCocycle + Sync,
    CG: JetCocycle + Sync,
{
    let d = charts.charts[0].degree();
    let last = g
        .steps()
        .saturating_sub(1)
        .min(f.steps().saturating_sub(shift));
    let defects: Vec<(usize, f64)> = (0..last)
        .into_par_iter()
        .map(|k| {
            let lhs = compose(&g.jet(k + 1).with_degree(d), &f.jet(k).with_degree(d))?;
            let rhs = compose(&f.jet(k + shift).with_degree(d), &g.jet(k).with_degree(d))?;
            Ok((k, lhs.max_abs_diff(&rhs)))
        })
        .collect::<Result<_>>()?;
    let (step, commutation_defect) = defects
        .into_iter()
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if commutation_defect > 1e-9 {
        return Err(Error::CommutationViolation {
            step,
            defect: commutation_defect,
        });
    }
    let residual_g = shifted_residual(g, &charts.charts, rs, charts.margin, shift)?;
    Ok(CentralizerReport {
        shift,
        commutation_defect,
        residual_f: charts.residual,
        residual_g,
        passed: residual_g <= 10.0 * charts.residual.max(RESIDUAL_FLOOR),
    })
}
