//! Monomial weights `σ(α, i) = λ^(i) - Σ_j α_j λ^(j)` and the resonance
//! classes they induce on the slots of a jet.
//!
//! A slot is a pair (target coordinate, monomial). Weights are tabulated on
//! block multi-indices (one exponent per Lyapunov block) and then expanded
//! to coordinate monomials through a [`BlockAssignment`].

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet_algebra::{JetMap, MonomialBasis, MultiIndex};
use crate::lyapunov::{LyapunovSpectrum, LyapunovSplitting};

/// Resonance tolerance for exactly specified spectra.
pub const DEFAULT_EPS_RES: f64 = 1e-9;
/// Membership tolerance after exact-arithmetic constructions.
pub const DEFAULT_EPS_MEM: f64 = 1e-10;

/// Resonance tolerance for a spectrum estimated with the given error.
pub fn eps_res_for_estimate(estimation_error: f64) -> f64 {
    DEFAULT_EPS_RES.max(3.0 * estimation_error)
}

/// Which Lyapunov block each coordinate belongs to (0-based blocks).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockAssignment {
    block_of: Vec<usize>,
    blocks: usize,
}

impl BlockAssignment {
    pub fn new(block_of: Vec<usize>) -> Result<Self> {
        let blocks = block_of.iter().max().map_or(0, |m| m + 1);
        if block_of.is_empty() || (0..blocks).any(|b| !block_of.contains(&b)) {
            return Err(Error::Invalid(format!(
                "block assignment {block_of:?} is not onto 0..{blocks}"
            )));
        }
        Ok(Self { block_of, blocks })
    }

    /// Consecutive coordinates grouped by the given block sizes.
    pub fn contiguous(dims: &[usize]) -> Result<Self> {
        Self::new(
            dims.iter()
                .enumerate()
                .flat_map(|(b, &d)| std::iter::repeat_n(b, d))
                .collect(),
        )
    }

    /// Reads coordinate blocks off a splitting: each coordinate axis must lie
    /// within `max_angle` (radians) of exactly one block, and each block must
    /// collect as many axes as its dimension.
    pub fn from_aligned_splitting(splitting: &LyapunovSplitting, max_angle: f64) -> Result<Self> {
        let n = splitting.basis.nrows();
        let frames: Vec<DMatrix<f64>> = (0..splitting.block_dims.len())
            .map(|i| splitting.block(i).qr().q())
            .collect();
        let mut block_of = Vec::with_capacity(n);
        for p in 0..n {
            // sine of the angle between e_p and each block
            let (block, sin) = frames
                .iter()
                .map(|q| {
                    let row = q.row(p);
                    (1.0 - row.norm_squared()).max(0.0).sqrt()
                })
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one block");
            if sin > max_angle.sin() {
                return Err(Error::NotAdapted { step: 0, value: sin.asin() });
            }
            block_of.push(block);
        }
        let sizes: Vec<usize> = (0..frames.len())
            .map(|b| block_of.iter().filter(|&&x| x == b).count())
            .collect();
        if sizes != splitting.block_dims {
            return Err(Error::SplittingFailure(format!(
                "coordinate blocks {sizes:?} do not match splitting blocks {:?}",
                splitting.block_dims
            )));
        }
        Self::new(block_of)
    }

    pub fn dim(&self) -> usize {
        self.block_of.len()
    }

    pub fn block_count(&self) -> usize {
        self.blocks
    }

    pub fn block_of(&self, p: usize) -> usize {
        self.block_of[p]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.block_of
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.blocks];
        for &b in &self.block_of {
            sizes[b] += 1;
        }
        sizes
    }

    /// Sums coordinate exponents block by block.
    pub fn block_multi_index(&self, alpha: &MultiIndex) -> Vec<u32> {
        let mut out = vec![0; self.blocks];
        for (p, &a) in alpha.as_slice().iter().enumerate() {
            out[self.block_of[p]] += a;
        }
        out
    }

    /// Largest entry of `m` coupling different blocks.
    pub fn off_block_max(&self, m: &DMatrix<f64>) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if self.block_of[i] != self.block_of[j] {
                    worst = worst.max(m[(i, j)].abs());
                }
            }
        }
        worst
    }
}

/// Finest weight label of a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightClass {
    /// `|σ| <= ε_res`
    Resonance,
    /// `σ <= λ^(s) + ε_res`
    StrictSubresonance,
    /// `λ^(s) + ε_res < σ < -ε_res`
    Subresonance,
    /// `σ > ε_res`
    Expanding,
}

impl fmt::Display for WeightClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightClass::Resonance => "resonance",
            WeightClass::StrictSubresonance => "strict_subresonance",
            WeightClass::Subresonance => "subresonance",
            WeightClass::Expanding => "expanding",
        })
    }
}

/// Slot selections used for projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSelector {
    Resonance,
    /// All `σ <= ε_res`.
    Subresonance,
    StrictSubresonance,
    Expanding,
    /// Everything except resonance.
    NonResonance,
}

impl ClassSelector {
    pub fn contains(self, class: WeightClass) -> bool {
        use WeightClass as W;
        match self {
            ClassSelector::Resonance => class == W::Resonance,
            ClassSelector::Subresonance => class != W::Expanding,
            ClassSelector::StrictSubresonance => class == W::StrictSubresonance,
            ClassSelector::Expanding => class == W::Expanding,
            ClassSelector::NonResonance => class != W::Resonance,
        }
    }
}

/// `λ^(i) - Σ_j α_j λ^(j)` for a block multi-index.
pub fn monomial_weight(block_alpha: &[u32], target_block: usize, spectrum: &LyapunovSpectrum) -> f64 {
    let lam = spectrum.exponents();
    lam[target_block]
        - block_alpha
            .iter()
            .zip(lam)
            .map(|(&a, &l)| a as f64 * l)
            .sum::<f64>()
}

fn classify(sigma: f64, top: f64, eps: f64) -> WeightClass {
    if sigma.abs() <= eps {
        WeightClass::Resonance
    } else if sigma > eps {
        WeightClass::Expanding
    } else if sigma <= top + eps {
        WeightClass::StrictSubresonance
    } else {
        WeightClass::Subresonance
    }
}

/// `⌊λ^(1)/λ^(s)⌋`. The ratio is floored after adding `1e-9` so that
/// exactly integral ratios survive rounding in their inputs.
pub fn max_degree(spectrum: &LyapunovSpectrum) -> Result<usize> {
    max_degree_within(spectrum, 0.0)
}

/// Largest `d` with `λ^(1) - d·λ^(s) <= eps_res`, the degree at which the
/// resonance tolerance stops admitting subresonance slots.
pub fn max_degree_within(spectrum: &LyapunovSpectrum, eps_res: f64) -> Result<usize> {
    if !spectrum.is_contracting() {
        return Err(Error::NonContracting {
            top: spectrum.top(),
        });
    }
    let ratio = spectrum.bottom() / spectrum.top();
    let slack = (eps_res / spectrum.top().abs()).max(1e-9);
    Ok(((ratio + slack).floor() as usize).max(1))
}

/// Block multi-indices of exactly degree `d` over `s` blocks.
fn block_indices(s: usize, d: usize) -> Vec<Vec<u32>> {
    let basis = MonomialBasis::get(s, d);
    basis
        .degree_range(d)
        .map(|i| basis.monomial(i).as_slice().to_vec())
        .collect()
}

/// Number of subresonance block slots at degree `d` (zero above
/// [`max_degree`]).
pub fn subresonance_slot_count(spectrum: &LyapunovSpectrum, d: usize, eps: f64) -> usize {
    let s = spectrum.len();
    let mut count = 0;
    for alpha in block_indices(s, d) {
        for i in 0..s {
            if monomial_weight(&alpha, i, spectrum) <= eps {
                count += 1;
            }
        }
    }
    count
}

fn dedup_sorted(mut v: Vec<f64>, eps: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for x in v {
        if out.last().is_none_or(|&y| x - y > eps) {
            out.push(x);
        }
    }
    out
}

/// `Σ^0, ..., Σ^r` with `Σ^0` the spectrum itself and
/// `Σ^l = {λ^(i) - λ^(p_1) - ... - λ^(p_l)}`.
pub fn sigma_levels(spectrum: &LyapunovSpectrum, r: usize, eps: f64) -> Vec<Vec<f64>> {
    let s = spectrum.len();
    let mut levels = vec![spectrum.exponents().to_vec()];
    for l in 1..=r {
        let mut vals = Vec::new();
        for alpha in block_indices(s, l) {
            for i in 0..s {
                vals.push(monomial_weight(&alpha, i, spectrum));
            }
        }
        levels.push(dedup_sorted(vals, eps));
    }
    levels
}

/// Distinct values of `Σ^0 ∪ ... ∪ Σ^r`.
pub fn sigma_union(spectrum: &LyapunovSpectrum, r: usize, eps: f64) -> Vec<f64> {
    dedup_sorted(sigma_levels(spectrum, r, eps).concat(), eps)
}

/// One row of the block-level weight table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotWeight {
    pub target_block: usize,
    pub alpha: Vec<u32>,
    pub sigma: f64,
    pub class: WeightClass,
}

/// Weight classification of every slot of jets of a given dimension and
/// degree, relative to a contracting spectrum and block assignment.
#[derive(Clone, Debug)]
pub struct ResonanceStructure {
    spectrum: LyapunovSpectrum,
    blocks: BlockAssignment,
    degree: usize,
    max_degree: usize,
    eps_res: f64,
    table: Vec<SlotWeight>,
    /// per coordinate slot, `target * basis_len + monomial`
    slot_sigma: Vec<f64>,
    slot_class: Vec<WeightClass>,
    basis_len: usize,
}

impl ResonanceStructure {
    /// Table up to jet degree `degree` (which may exceed [`max_degree`]).
    pub fn new(
        spectrum: LyapunovSpectrum,
        blocks: BlockAssignment,
        degree: usize,
        eps_res: f64,
    ) -> Result<Self> {
        let r = max_degree_within(&spectrum, eps_res)?;
        if blocks.block_sizes() != spectrum.multiplicities() {
            return Err(Error::Invalid(format!(
                "block sizes {:?} do not match multiplicities {:?}",
                blocks.block_sizes(),
                spectrum.multiplicities()
            )));
        }
        if degree == 0 || eps_res.is_nan() || eps_res < 0.0 {
            return Err(Error::Invalid("degree must be positive and eps_res >= 0".into()));
        }
        let s = spectrum.len();
        let top = spectrum.top();
        let mut table = Vec::new();
        for d in 1..=degree {
            for i in 0..s {
                for alpha in block_indices(s, d) {
                    let sigma = monomial_weight(&alpha, i, &spectrum);
                    table.push(SlotWeight {
                        target_block: i,
                        alpha,
                        sigma,
                        class: classify(sigma, top, eps_res),
                    });
                }
            }
        }
        let n = blocks.dim();
        let basis = MonomialBasis::get(n, degree);
        let mut slot_sigma = vec![f64::NAN; n * basis.len()];
        let mut slot_class = vec![WeightClass::Expanding; n * basis.len()];
        for target in 0..n {
            for a in 1..basis.len() {
                let block_alpha = blocks.block_multi_index(basis.monomial(a));
                let sigma = monomial_weight(&block_alpha, blocks.block_of(target), &spectrum);
                slot_sigma[target * basis.len() + a] = sigma;
                slot_class[target * basis.len() + a] = classify(sigma, top, eps_res);
            }
        }
        Ok(Self {
            spectrum,
            blocks,
            degree,
            max_degree: r,
            eps_res,
            table,
            slot_sigma,
            slot_class,
            basis_len: basis.len(),
        })
    }

    /// Jet degree `max_degree(spectrum)` with coordinates grouped
    /// contiguously by multiplicity.
    pub fn standard(spectrum: LyapunovSpectrum, eps_res: f64) -> Result<Self> {
        let r = max_degree_within(&spectrum, eps_res)?;
        let blocks = BlockAssignment::contiguous(spectrum.multiplicities())?;
        Self::new(spectrum, blocks, r, eps_res)
    }

    pub fn spectrum(&self) -> &LyapunovSpectrum {
        &self.spectrum
    }

    pub fn blocks(&self) -> &BlockAssignment {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.dim()
    }

    /// Jet degree covered by the table.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `⌊λ^(1)/λ^(s)⌋`
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn eps_res(&self) -> f64 {
        self.eps_res
    }

    pub fn weight_table(&self) -> &[SlotWeight] {
        &self.table
    }

    fn check_jet(&self, j: &JetMap) {
        assert_eq!(j.dim(), self.dim(), "jet dimension does not match the structure");
        assert!(
            j.degree() <= self.degree,
            "jet degree {} exceeds tabulated degree {}",
            j.degree(),
            self.degree
        );
    }

    /// Weight of slot `(target, monomial index)`; the monomial index refers to
    /// the basis of any degree up to [`Self::degree`].
    pub fn weight(&self, target: usize, monomial: usize) -> f64 {
        self.slot_sigma[target * self.basis_len + monomial]
    }

    pub fn class(&self, target: usize, monomial: usize) -> WeightClass {
        debug_assert!(monomial > 0, "constant terms have no weight");
        self.slot_class[target * self.basis_len + monomial]
    }

    /// Keeps exactly the nonconstant slots in the selected class.
    pub fn project_class(&self, j: &JetMap, selector: ClassSelector) -> JetMap {
        self.check_jet(j);
        let mut out = JetMap::zero(j.dim(), j.degree());
        for (target, a, v) in j.nonzero_slots() {
            if a > 0 && selector.contains(self.class(target, a)) {
                out.set_slot(target, a, v);
            }
        }
        out
    }

    /// Group membership test; see [`JetGroup`].
    pub fn membership(&self, j: &JetMap, group: JetGroup, eps_mem: f64) -> MembershipReport {
        self.check_jet(j);
        let basis = j.basis().clone();
        let mut worst: Option<OffendingSlot> = None;
        let mut consider = |target: usize, a: usize, value: f64| {
            let v = value.abs();
            if v > worst.as_ref().map_or(0.0, |w| w.value.abs()) {
                worst = Some(OffendingSlot {
                    target,
                    alpha: basis.monomial(a).as_slice().to_vec(),
                    sigma: if a == 0 { f64::NAN } else { self.weight(target, a) },
                    value,
                });
            }
        };
        for target in 0..j.dim() {
            for a in 0..basis.len() {
                let mut value = j.slot(target, a);
                if group == JetGroup::X && a == 1 + target {
                    value -= 1.0;
                }
                if value == 0.0 {
                    continue;
                }
                let allowed = a > 0
                    && match group {
                        JetGroup::H => self.class(target, a) != WeightClass::Expanding,
                        JetGroup::H0 => self.class(target, a) == WeightClass::Resonance,
                        JetGroup::X => self.class(target, a) == WeightClass::StrictSubresonance,
                    };
                if !allowed {
                    consider(target, a, value);
                }
            }
        }
        let max_offending = worst.as_ref().map_or(0.0, |w| w.value.abs());
        MembershipReport {
            member: max_offending <= eps_mem,
            max_offending,
            worst,
        }
    }

    /// Writes the block weight table as CSV
    /// (`target_block,alpha,sigma,class`, alpha semicolon-joined).
    pub fn write_weight_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["target_block", "alpha", "sigma", "class"])?;
        for row in &self.table {
            wtr.write_record([
                row.target_block.to_string(),
                MultiIndex::new(row.alpha.clone()).to_string(),
                row.sigma.to_string(),
                row.class.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// The jet groups defined by the weight classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JetGroup {
    /// Subresonance jets: no expanding slot.
    H,
    /// Resonance jets: only resonance slots.
    H0,
    /// Strict subresonance jets: `J - Id` supported on strict slots.
    X,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffendingSlot {
    pub target: usize,
    pub alpha: Vec<u32>,
    pub sigma: f64,
    pub value: f64,
}

/// Outcome of a membership test: invertibility of the linear part is a
/// precondition and not re-checked here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub member: bool,
    pub max_offending: f64,
    pub worst: Option<OffendingSlot>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(l: &[f64]) -> LyapunovSpectrum {
        LyapunovSpectrum::simple(l.to_vec()).unwrap()
    }

    #[test]
    fn max_degree_examples() {
        assert_eq!(max_degree(&spec(&[-2.0, -1.0])).unwrap(), 2);
        assert_eq!(max_degree(&spec(&[-1.0, -0.6])).unwrap(), 1);
        assert_eq!(max_degree(&spec(&[-1.0])).unwrap(), 1);
        assert_eq!(max_degree(&spec(&[-1.8, -0.6])).unwrap(), 3);
        assert!(max_degree(&spec(&[-1.0, 0.5])).is_err());
    }

    #[test]
    fn no_subresonance_above_max_degree() {
        for l in [[-2.0, -1.0], [-1.0, -0.6], [-3.5, -1.1]] {
            let s = spec(&l);
            let r = max_degree(&s).unwrap();
            assert!(subresonance_slot_count(&s, r, DEFAULT_EPS_RES) > 0 || r == 1);
            assert_eq!(subresonance_slot_count(&s, r + 1, DEFAULT_EPS_RES), 0);
        }
    }

    #[test]
    fn weights_by_enumeration() {
        let s = spec(&[-2.0, -1.0]);
        assert_eq!(monomial_weight(&[0, 2], 0, &s), 0.0);
        assert_eq!(monomial_weight(&[0, 1], 0, &s), -1.0);
        assert_eq!(monomial_weight(&[1, 0], 0, &s), 0.0);
        assert_eq!(monomial_weight(&[0, 1], 1, &s), 0.0);
        assert_eq!(classify(-1.0, -1.0, DEFAULT_EPS_RES), WeightClass::StrictSubresonance);
    }

    #[test]
    fn sigma_levels_by_enumeration() {
        let s = spec(&[-2.0, -1.0]);
        let lv = sigma_levels(&s, 2, DEFAULT_EPS_RES);
        assert_eq!(lv[0], vec![-2.0, -1.0]);
        assert_eq!(lv[1], vec![-1.0, 0.0, 1.0]);
        assert_eq!(lv[2], vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(sigma_union(&s, 2, DEFAULT_EPS_RES), vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        let single = sigma_levels(&spec(&[-1.0]), 4, DEFAULT_EPS_RES);
        for (l, level) in single.iter().enumerate().skip(1) {
            assert_eq!(level, &vec![(l - 1) as f64]);
        }
    }

    #[test]
    fn projection_keeps_only_class() {
        let rs = ResonanceStructure::standard(spec(&[-2.0, -1.0]), DEFAULT_EPS_RES).unwrap();
        let j = JetMap::from_terms(
            2,
            2,
            [(0, vec![0, 1], 0.5), (0, vec![0, 2], 2.0), (1, vec![1, 1], 3.0)],
        )
        .unwrap();
        let res = rs.project_class(&j, ClassSelector::Resonance);
        assert_eq!(res, JetMap::from_terms(2, 2, [(0, vec![0, 2], 2.0)]).unwrap());
        assert_eq!(rs.project_class(&res, ClassSelector::Resonance), res);
        let sub = rs.project_class(&j, ClassSelector::Subresonance);
        assert_eq!(sub.coeff(0, &[0, 2]), 2.0);
        assert_eq!(sub.coeff(0, &[0, 1]), 0.5);
        assert_eq!(sub.coeff(1, &[1, 1]), 0.0);
    }

    #[test]
    fn membership_examples() {
        let rs = ResonanceStructure::new(
            LyapunovSpectrum::new(vec![-2.0, -1.0], vec![1, 2]).unwrap(),
            BlockAssignment::contiguous(&[1, 2]).unwrap(),
            2,
            DEFAULT_EPS_RES,
        )
        .unwrap();
        let id = JetMap::identity(3, 2);
        for g in [JetGroup::H, JetGroup::H0, JetGroup::X] {
            assert!(rs.membership(&id, g, DEFAULT_EPS_MEM).member);
        }
        let block_diag = JetMap::from_linear(
            &DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.0, -0.3, 1.2]),
            2,
        );
        assert!(rs.membership(&block_diag, JetGroup::H0, DEFAULT_EPS_MEM).member);
        assert!(!rs.membership(&block_diag, JetGroup::X, DEFAULT_EPS_MEM).member);

        let mut bad = id.clone();
        bad.set_coeff(1, &[2, 0, 0], 1e-3).unwrap();
        let rep = rs.membership(&bad, JetGroup::H0, DEFAULT_EPS_MEM);
        assert!(!rep.member);
        let w = rep.worst.unwrap();
        assert_eq!((w.target, w.alpha.clone(), w.value), (1, vec![2, 0, 0], 1e-3));
        assert!(w.sigma > 0.0);
        assert!(!rs.membership(&bad, JetGroup::H, DEFAULT_EPS_MEM).member);
    }

    #[test]
    fn weight_csv_header_and_rows() {
        let rs = ResonanceStructure::standard(spec(&[-2.0, -1.0]), DEFAULT_EPS_RES).unwrap();
        let mut buf = Vec::new();
        rs.write_weight_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("target_block,alpha,sigma,class"));
        assert!(text.contains("0,0;2,0,resonance"));
        assert!(text.contains("0,0;1,-1,strict_subresonance"));
        assert_eq!(text.lines().count(), 1 + 4 + 6);
    }
}
