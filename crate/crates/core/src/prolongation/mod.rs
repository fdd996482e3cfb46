//! Prolongations of a cocycle of jets: the action `F^(r)` on frame data
//! `(u, g)` and its linearization `T^(r) = D₀F ⊕ Ad(J₀F)` along the fixed
//! section, together with the checks on their spectra.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet_algebra::{adjoint_matrix, compose, invert, jet_norm, recenter, JetMap};
use crate::lyapunov::{exponents_qr, LinearCocycle, LyapunovSpectrum};
use crate::resonance::{JetGroup, OffendingSlot, ResonanceStructure};

/// A sequence of jets `F_0, F_1, ...` fixing the origin.
pub trait JetCocycle {
    fn dim(&self) -> usize;
    fn degree(&self) -> usize;
    /// Number of available steps.
    fn steps(&self) -> usize;
    fn jet(&self, k: usize) -> &JetMap;
}

impl<C: JetCocycle + ?Sized> JetCocycle for &C {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn degree(&self) -> usize {
        (**self).degree()
    }
    fn steps(&self) -> usize {
        (**self).steps()
    }
    fn jet(&self, k: usize) -> &JetMap {
        (**self).jet(k)
    }
}

/// The same jet at every step.
#[derive(Clone, Debug)]
pub struct ConstantJets {
    pub jet: JetMap,
    pub steps: usize,
}

impl JetCocycle for ConstantJets {
    fn dim(&self) -> usize {
        self.jet.dim()
    }
    fn degree(&self) -> usize {
        self.jet.degree()
    }
    fn steps(&self) -> usize {
        self.steps
    }
    fn jet(&self, _k: usize) -> &JetMap {
        &self.jet
    }
}

/// Stored jets; all must share dimension and degree.
#[derive(Clone, Debug)]
pub struct JetSequence(pub Vec<JetMap>);

impl JetCocycle for JetSequence {
    fn dim(&self) -> usize {
        self.0[0].dim()
    }
    fn degree(&self) -> usize {
        self.0[0].degree()
    }
    fn steps(&self) -> usize {
        self.0.len()
    }
    fn jet(&self, k: usize) -> &JetMap {
        &self.0[k]
    }
}

/// The linear parts `D₀F_k` as a matrix cocycle.
pub struct LinearParts<C>(pub C);

impl<C: JetCocycle> LinearCocycle for LinearParts<C> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn matrix(&self, k: usize) -> DMatrix<f64> {
        self.0.jet(k).linear_part()
    }
}

/// The prolonged linear cocycle `T^(r)` as a matrix cocycle.
pub struct Prolonged<C>(pub C);

impl<C: JetCocycle> LinearCocycle for Prolonged<C> {
    fn dim(&self) -> usize {
        prolonged_dim(self.0.dim(), self.0.degree())
    }
    fn matrix(&self, k: usize) -> DMatrix<f64> {
        prolong_linear(self.0.jet(k))
            .expect("cocycle jets must be invertible")
            .matrix
    }
}

/// `n + n·#{α : 1 <= |α| <= r}`
pub fn prolonged_dim(n: usize, r: usize) -> usize {
    n * crate::jet_algebra::MonomialBasis::get(n, r).len()
}

/// Point `(u, g)` of the trivialized frame bundle `R^n × GL^(r)(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProlongedPoint {
    pub u: Vec<f64>,
    pub g: JetMap,
}

impl ProlongedPoint {
    pub fn new(u: Vec<f64>, g: JetMap) -> Result<Self> {
        if u.len() != g.dim() {
            return Err(Error::DimensionMismatch {
                expected: g.dim(),
                got: u.len(),
            });
        }
        if !g.is_group_element() {
            return Err(Error::NonInvertible {
                ratio: crate::jet_algebra::linear_condition_ratio(&g.linear_part()),
            });
        }
        Ok(Self { u, g })
    }

    /// The section `(0, Id)`.
    pub fn origin(n: usize, r: usize) -> Self {
        Self {
            u: vec![0.0; n],
            g: JetMap::identity(n, r),
        }
    }

    /// Projection `π^r_s`: truncate the frame, keep the base point.
    pub fn truncate(&self, s: usize) -> Self {
        Self {
            u: self.u.clone(),
            g: self.g.truncate(s),
        }
    }
}

/// `(u, g) -> (F(u), recenter(F, u) ∘ g ∘ (J₀F)⁻¹)`.
///
/// `f` is a polynomial map with `F(0) = 0`, of degree at least the frame
/// degree; the recentered jet is taken from the full polynomial and then
/// truncated to the degree of `p.g`.
pub fn prolong_step(f: &JetMap, p: &ProlongedPoint) -> Result<ProlongedPoint> {
    let r = p.g.degree();
    if f.degree() < r {
        return Err(Error::DegreeMismatch {
            expected: r,
            got: f.degree(),
        });
    }
    if !f.is_algebra_element() {
        return Err(Error::Invalid("prolonged maps must fix the origin".into()));
    }
    let moved = recenter(f, &p.u)?.truncate(r);
    let j0_inv = invert(&f.truncate(r))?;
    let g = compose(&compose(&moved, &p.g)?, &j0_inv)?;
    if !g.has_invertible_linear_part() {
        return Err(Error::NonInvertible {
            ratio: crate::jet_algebra::linear_condition_ratio(&g.linear_part()),
        });
    }
    Ok(ProlongedPoint { u: f.evaluate(&p.u), g })
}

/// Matrix of `D₀F ⊕ Ad(J₀^(r)F)` on `R^n ⊕ gl^(r)(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProlongedLinearMap {
    pub dim_base: usize,
    pub degree: usize,
    pub matrix: DMatrix<f64>,
}

impl ProlongedLinearMap {
    pub fn total_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The `R^n` block.
    pub fn base_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (self.dim_base, self.dim_base)).into_owned()
    }

    /// The `gl^(r)(n)` block.
    pub fn adjoint_block(&self) -> DMatrix<f64> {
        let n = self.dim_base;
        let m = self.total_dim() - n;
        self.matrix.view((n, n), (m, m)).into_owned()
    }
}

pub fn prolong_linear(f: &JetMap) -> Result<ProlongedLinearMap> {
    let n = f.dim();
    let j0 = f.without_constant();
    let ad = adjoint_matrix(&j0)?;
    let total = n + ad.nrows();
    let mut matrix = DMatrix::zeros(total, total);
    matrix.view_mut((0, 0), (n, n)).copy_from(&j0.linear_part());
    matrix.view_mut((n, n), (ad.nrows(), ad.nrows())).copy_from(&ad);
    Ok(ProlongedLinearMap {
        dim_base: n,
        degree: f.degree(),
        matrix,
    })
}

/// Multiset `{μ_i} ∪ {μ_i - ⟨α, μ⟩ : 1 <= |α| <= r}` for per-coordinate
/// exponents `μ`, sorted.
pub fn expected_prolonged_exponents(mu: &[f64], r: usize) -> Vec<f64> {
    let basis = crate::jet_algebra::MonomialBasis::get(mu.len(), r);
    let mut out = mu.to_vec();
    for &mi in mu {
        for a in 1..basis.len() {
            let dot: f64 = basis
                .monomial(a)
                .as_slice()
                .iter()
                .zip(mu)
                .map(|(&k, m)| k as f64 * m)
                .sum();
            out.push(mi - dot);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

fn group_sorted(values: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &x in values {
        match groups.last_mut() {
            Some(g) if x - g[0] < tol => g.push(x),
            _ => groups.push(vec![x]),
        }
    }
    groups
        .into_iter()
        .map(|g| (g.iter().sum::<f64>() / g.len() as f64, g.len()))
        .collect()
}

/// One expected/observed pair of a spectrum comparison. Unmatched entries
/// leave the other side empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentMatch {
    pub expected: Option<f64>,
    pub observed: Option<f64>,
    pub multiplicity_expected: usize,
    pub multiplicity_observed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProlongedSpectrumReport {
    pub degree: usize,
    pub window: usize,
    pub tolerance: f64,
    pub pairs: Vec<ExponentMatch>,
    pub max_deviation: f64,
    pub passed: bool,
}

fn match_groups(
    expected: &[(f64, usize)],
    observed: &[(f64, usize)],
    tol: f64,
) -> (Vec<ExponentMatch>, f64, bool) {
    let mut used = vec![false; observed.len()];
    let mut pairs = Vec::new();
    let mut max_dev = 0.0f64;
    let mut ok = true;
    for &(e, me) in expected {
        let hit = observed
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, &(o, _))| (j, (o - e).abs()))
            .filter(|&(_, d)| d < tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match hit {
            Some((j, d)) => {
                used[j] = true;
                max_dev = max_dev.max(d);
                ok &= observed[j].1 == me;
                pairs.push(ExponentMatch {
                    expected: Some(e),
                    observed: Some(observed[j].0),
                    multiplicity_expected: me,
                    multiplicity_observed: observed[j].1,
                });
            }
            None => {
                ok = false;
                pairs.push(ExponentMatch {
                    expected: Some(e),
                    observed: None,
                    multiplicity_expected: me,
                    multiplicity_observed: 0,
                });
            }
        }
    }
    for (j, &(o, mo)) in observed.iter().enumerate() {
        if !used[j] {
            ok = false;
            pairs.push(ExponentMatch {
                expected: None,
                observed: Some(o),
                multiplicity_expected: 0,
                multiplicity_observed: mo,
            });
        }
    }
    (pairs, max_dev, ok)
}

/// Prolonged exponents by QR over `n_steps`, matched against the union of
/// weight levels built from the estimated base spectrum.
pub fn prolonged_spectrum_check<C: JetCocycle>(
    c: &C,
    r: usize,
    n_steps: usize,
    gap_tol: f64,
) -> Result<ProlongedSpectrumReport> {
    if r > c.degree() {
        return Err(Error::DegreeMismatch {
            expected: r,
            got: c.degree(),
        });
    }
    let truncated = JetSequence(
        (0..n_steps.min(c.steps()))
            .map(|k| c.jet(k).truncate(r))
            .collect(),
    );
    if truncated.0.len() < n_steps {
        return Err(Error::Invalid(format!(
            "cocycle has {} steps, {} requested",
            c.steps(),
            n_steps
        )));
    }
    let base = exponents_qr(&LinearParts(&truncated), n_steps, gap_tol)?;
    let prolonged = exponents_qr(&Prolonged(&truncated), n_steps, gap_tol)?;
    let expected = group_sorted(&expected_prolonged_exponents(&base.expanded(), r), gap_tol);
    let observed: Vec<(f64, usize)> = prolonged
        .exponents()
        .iter()
        .copied()
        .zip(prolonged.multiplicities().iter().copied())
        .collect();
    let (pairs, max_deviation, passed) = match_groups(&expected, &observed, gap_tol);
    Ok(ProlongedSpectrumReport {
        degree: r,
        window: n_steps,
        tolerance: gap_tol,
        pairs,
        max_deviation,
        passed,
    })
}

fn log_abs_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    m.complex_eigenvalues().iter().map(|z| z.norm().ln()).collect()
}

/// Exact route for a constant cocycle: `Ad(J₀F)` is block-triangular by
/// degree, so its spectrum is that of the diagonal degree blocks. Fails if
/// a block coupling a higher degree into a lower one is nonzero.
pub fn constant_prolonged_spectrum(f: &JetMap, tol: f64) -> Result<ProlongedSpectrumReport> {
    let n = f.dim();
    let r = f.degree();
    let pl = prolong_linear(f)?;
    let ad = pl.adjoint_block();
    let basis = f.basis().clone();
    let slots = basis.len() - 1;
    let deg_of = |row: usize| basis.monomial(row % slots + 1).degree();
    for i in 0..ad.nrows() {
        for j in 0..ad.ncols() {
            if deg_of(i) < deg_of(j) && ad[(i, j)] != 0.0 {
                return Err(Error::Invalid(format!(
                    "adjoint matrix couples degree {} into degree {}",
                    deg_of(j),
                    deg_of(i)
                )));
            }
        }
    }
    let mu = {
        let mut v = log_abs_eigenvalues(&pl.base_block());
        v.sort_by(f64::total_cmp);
        v
    };
    let mut observed = mu.clone();
    for d in 1..=r {
        let idx: Vec<usize> = (0..ad.nrows()).filter(|&i| deg_of(i) == d).collect();
        let block = DMatrix::from_fn(idx.len(), idx.len(), |a, b| ad[(idx[a], idx[b])]);
        observed.extend(log_abs_eigenvalues(&block));
    }
    observed.sort_by(f64::total_cmp);
    let expected = expected_prolonged_exponents(&mu, r);
    debug_assert_eq!(observed.len(), n + n * slots);
    let max_deviation = expected
        .iter()
        .zip(&observed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let group_tol = 1e-6;
    let (pairs, _, grouped_ok) = match_groups(
        &group_sorted(&expected, group_tol),
        &group_sorted(&observed, group_tol),
        tol.max(group_tol),
    );
    Ok(ProlongedSpectrumReport {
        degree: r,
        window: 1,
        tolerance: tol,
        pairs,
        max_deviation,
        passed: grouped_ok && max_deviation <= tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetResonanceReport {
    pub steps: usize,
    /// Worst offending coefficient over single steps `J₀F_k`.
    pub max_offending_step: f64,
    /// Worst offending coefficient over compositions `J₀(F_k ∘ ... ∘ F_0)`.
    pub max_offending_composed: f64,
    pub worst_step: Option<usize>,
    pub worst_slot: Option<OffendingSlot>,
    pub passed: bool,
}

/// `H^(r),0` membership of every step jet and every composed jet at the
/// origin. The block assignment of `rs` plays the role of the splitting; jets
/// must already be written in adapted coordinates.
pub fn jet_resonance_check<C: JetCocycle>(
    c: &C,
    rs: &ResonanceStructure,
    n_steps: usize,
    eps_mem: f64,
) -> Result<JetResonanceReport> {
    let r = rs.degree().min(c.degree());
    let mut composed = JetMap::identity(c.dim(), r);
    let mut report = JetResonanceReport {
        steps: n_steps.min(c.steps()),
        max_offending_step: 0.0,
        max_offending_composed: 0.0,
        worst_step: None,
        worst_slot: None,
        passed: true,
    };
    let mut worst = 0.0f64;
    for k in 0..report.steps {
        let j = c.jet(k).truncate(r).without_constant();
        let single = rs.membership(&j, JetGroup::H0, eps_mem);
        composed = compose(&j, &composed)?;
        let multi = rs.membership(&composed, JetGroup::H0, eps_mem);
        report.max_offending_step = report.max_offending_step.max(single.max_offending);
        report.max_offending_composed = report.max_offending_composed.max(multi.max_offending);
        for m in [single, multi] {
            if m.max_offending > worst {
                worst = m.max_offending;
                report.worst_step = Some(k);
                report.worst_slot = m.worst;
            }
        }
    }
    report.passed = worst <= eps_mem;
    Ok(report)
}

/// `⦀J₀(F_k ∘ ... ∘ F_1)⦀` for `k = 1..=N`, with the fitted log-slope over
/// the second half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// Natural log of the composed-jet norm per step; `None` after blow-up.
    pub log_norms: Vec<Option<f64>>,
    pub slope: Option<f64>,
}

impl DecayCurve {
    /// Finite throughout with a negative slope.
    pub fn decays(&self) -> bool {
        self.log_norms.iter().all(Option::is_some) && self.slope.is_some_and(|s| s < 0.0)
    }

    /// Decay at a rate no slower than `top + slack`.
    pub fn consistent_with(&self, top: f64, slack: f64) -> bool {
        self.decays() && self.slope.is_some_and(|s| s <= top + slack)
    }

    /// First step from which the norm stays below `e^{log_threshold}`.
    pub fn below_from(&self, log_threshold: f64) -> Option<usize> {
        let mut from = None;
        for (k, v) in self.log_norms.iter().enumerate() {
            match v {
                Some(x) if *x < log_threshold => {
                    from.get_or_insert(k + 1);
                }
                _ => from = None,
            }
        }
        from
    }
}

/// Least-squares slope of `ys` against `xs`.
pub(crate) fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// The composed jet is carried as `e^s K` with `⦀K⦀ = 1`, each step applying
/// `F` rescaled by `e^s`, so long windows neither underflow nor overflow.
pub fn jet_contraction_decay<C: JetCocycle>(c: &C, n_steps: usize) -> Result<DecayCurve> {
    let n = c.dim();
    let r = c.degree();
    let mut k_jet = JetMap::identity(n, r);
    let mut s = 0.0f64;
    let mut log_norms = Vec::with_capacity(n_steps);
    let mut alive = true;
    for k in 0..n_steps.min(c.steps()) {
        if !alive {
            log_norms.push(None);
            continue;
        }
        let f = c.jet(k).without_constant().rescaled(s.exp());
        let next = compose(&f, &k_jet)?;
        let norm = jet_norm(&next).value();
        if !norm.is_finite() || norm == 0.0 || !s.is_finite() || s > 700.0 {
            alive = false;
            log_norms.push(None);
            continue;
        }
        s += norm.ln();
        k_jet = next.scale(1.0 / norm);
        log_norms.push(Some(s));
    }
    let half = log_norms.len() / 2;
    let (xs, ys): (Vec<f64>, Vec<f64>) = log_norms[half..]
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|y| ((half + i + 1) as f64, y)))
        .unzip();
    let slope = if alive { fit_slope(&xs, &ys) } else { None };
    Ok(DecayCurve { log_norms, slope })
}

/// The spectrum `Σ^0 ∪ ... ∪ Σ^r` as a [`LyapunovSpectrum`] (distinct values,
/// multiplicities from slot counts) for a given base spectrum.
pub fn prolonged_spectrum_of(base: &LyapunovSpectrum, r: usize, tol: f64) -> Result<LyapunovSpectrum> {
    let groups = group_sorted(&expected_prolonged_exponents(&base.expanded(), r), tol);
    LyapunovSpectrum::new(
        groups.iter().map(|g| g.0).collect(),
        groups.iter().map(|g| g.1).collect(),
    )
}
