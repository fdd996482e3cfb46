//! Seeded driving systems, random contracting cocycle generators, and the
//! orbit experiments run on their output.

mod analysis;

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet_algebra::{invert, jet_norm, JetMap, MonomialBasis};
use crate::lyapunov::{LyapunovSpectrum, LyapunovSplitting};
use crate::prolongation::JetCocycle;
use crate::resonance::{BlockAssignment, ClassSelector, ResonanceStructure, DEFAULT_EPS_RES};

pub use analysis::{
    invariant_section_stability, perturbed_spectrum, push_forward, stable_class, write_results_csv,
    EndomorphismCocycle, PerturbationReport, SectionDrift, StableClass,
};

/// Driving dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseKind {
    /// Independent draws.
    Iid,
    /// Stationary Markov chain on `0..transition.len()`; the transition
    /// matrix must be row-stochastic and irreducible.
    MarkovShift { transition: Vec<Vec<f64>> },
    /// `θ -> θ + angle (mod 1)`; irrational angles give unique ergodicity.
    CircleRotation { angle: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseSystem {
    #[serde(flatten)]
    pub kind: BaseKind,
    #[serde(default)]
    pub seed: u64,
}

/// One point of a base orbit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseState {
    Draw(u64),
    Symbol(usize),
    Angle(f64),
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl BaseSystem {
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            BaseKind::Iid => Ok(()),
            BaseKind::CircleRotation { angle } => {
                if angle.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("rotation angle must be finite".into()))
                }
            }
            BaseKind::MarkovShift { transition } => {
                let m = transition.len();
                if m == 0 || transition.iter().any(|row| row.len() != m) {
                    return Err(Error::Config("transition matrix must be square and nonempty".into()));
                }
                for row in transition {
                    if row.iter().any(|&p| p.is_nan() || p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(Error::Config("transition rows must be probability vectors".into()));
                    }
                }
                let reachable = |i: usize| {
                    let mut seen = vec![false; m];
                    let mut stack = vec![i];
                    seen[i] = true;
                    while let Some(a) = stack.pop() {
                        for b in 0..m {
                            if transition[a][b] > 0.0 && !seen[b] {
                                seen[b] = true;
                                stack.push(b);
                            }
                        }
                    }
                    seen.iter().all(|&x| x)
                };
                if (0..m).all(reachable) {
                    Ok(())
                } else {
                    Err(Error::Config("transition matrix is not irreducible".into()))
                }
            }
        }
    }

    /// States `x_0..x_{n}`.
    pub fn trajectory(&self, n: usize) -> Vec<BaseState> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match &self.kind {
            BaseKind::Iid => (0..=n).map(|_| BaseState::Draw(rng.next_u64())).collect(),
            BaseKind::CircleRotation { angle } => {
                let theta0: f64 = rng.random();
                (0..=n)
                    .map(|k| BaseState::Angle((theta0 + k as f64 * angle).rem_euclid(1.0)))
                    .collect()
            }
            BaseKind::MarkovShift { transition } => {
                let m = transition.len();
                let mut s = rng.random_range(0..m);
                let mut out = Vec::with_capacity(n + 1);
                out.push(BaseState::Symbol(s));
                for _ in 0..n {
                    let x: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut next = m - 1;
                    for (j, &p) in transition[s].iter().enumerate() {
                        acc += p;
                        if x < acc {
                            next = j;
                            break;
                        }
                    }
                    s = next;
                    out.push(BaseState::Symbol(s));
                }
                out
            }
        }
    }

    /// `q` values in `[-1, 1]` determined by the state.
    pub fn noise(&self, x: BaseState, q: usize) -> Vec<f64> {
        match x {
            BaseState::Draw(d) => {
                let mut rng = ChaCha8Rng::seed_from_u64(d);
                (0..q).map(|_| rng.random_range(-1.0..=1.0)).collect()
            }
            BaseState::Symbol(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, s as u64 + 1));
                (0..q).map(|_| rng.random_range(-1.0..=1.0)).collect()
            }
            BaseState::Angle(theta) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, u64::MAX));
                (0..q)
                    .map(|_| {
                        let phase: f64 = rng.random();
                        (std::f64::consts::TAU * (theta + phase)).sin()
                    })
                    .collect()
            }
        }
    }
}

/// Block-diagonal linear part `e^{λ_b + noise·ξ}` times an in-block rotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearLaw {
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub noise: f64,
    /// Amplitude of the in-block rotation angle (radians).
    #[serde(default)]
    pub rotation: f64,
}

/// A fixed coefficient added to every nonlinear slot draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotValue {
    pub target: usize,
    pub alpha: Vec<u32>,
    pub value: f64,
}

/// Coefficients of degree `2..=degree`: `mean + amplitude·ξ` per slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearLaw {
    pub degree: usize,
    pub amplitude: f64,
    #[serde(default)]
    pub mean: Vec<SlotValue>,
    /// Drop every non-resonance slot relative to the mean spectrum.
    #[serde(default)]
    pub resonance_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleGenerator {
    pub base: BaseSystem,
    pub linear: LinearLaw,
    pub nonlinear: NonlinearLaw,
    /// Slots set after the nonlinear law, for negative controls.
    #[serde(default)]
    pub injected: Vec<SlotValue>,
    /// Emit this jet at every step instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<JetMap>,
}

impl CocycleGenerator {
    /// The same jet at every step over an iid base. The linear law records
    /// `ln|eigenvalues|` of the linear part grouped to `1e-9`.
    pub fn constant(jet: JetMap, seed: u64) -> Result<Self> {
        let mut mu: Vec<f64> = jet
            .linear_part()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm().ln())
            .collect();
        mu.sort_by(f64::total_cmp);
        let spec = crate::lyapunov::cluster_exponents(&mu, 1e-9)?;
        Ok(Self {
            base: BaseSystem { kind: BaseKind::Iid, seed },
            linear: LinearLaw {
                exponents: spec.exponents().to_vec(),
                multiplicities: spec.multiplicities().to_vec(),
                noise: 0.0,
                rotation: 0.0,
            },
            nonlinear: NonlinearLaw {
                degree: jet.degree(),
                amplitude: 0.0,
                mean: Vec::new(),
                resonance_only: false,
            },
            injected: Vec::new(),
            fixed: Some(jet),
        })
    }

    pub fn dim(&self) -> usize {
        match &self.fixed {
            Some(j) => j.dim(),
            None => self.linear.multiplicities.iter().sum(),
        }
    }

    pub fn degree(&self) -> usize {
        match &self.fixed {
            Some(j) => j.degree(),
            None => self.nonlinear.degree.max(1),
        }
    }

    /// Mean exponents as a spectrum.
    pub fn mean_spectrum(&self) -> Result<LyapunovSpectrum> {
        LyapunovSpectrum::new(self.linear.exponents.clone(), self.linear.multiplicities.clone())
    }

    pub fn blocks(&self) -> Result<BlockAssignment> {
        BlockAssignment::contiguous(&self.linear.multiplicities)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if let Some(j) = &self.fixed {
            if !j.is_group_element() {
                return Err(Error::Config("fixed jet must fix the origin and be invertible".into()));
            }
            return Ok(());
        }
        self.mean_spectrum()
            .map_err(|e| Error::Config(format!("linear law: {e}")))?;
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.linear.noise) || !ok(self.linear.rotation) || !ok(self.nonlinear.amplitude) {
            return Err(Error::Config("noise amplitudes must be finite and nonnegative".into()));
        }
        let n = self.dim();
        let d = self.degree();
        for s in self.nonlinear.mean.iter().chain(&self.injected) {
            if s.target >= n || s.alpha.len() != n {
                return Err(Error::Config(format!("slot {s:?} out of range for dimension {n}")));
            }
            let deg: u32 = s.alpha.iter().sum();
            if deg < 1 || deg as usize > d {
                return Err(Error::Config(format!("slot {s:?} has degree outside 1..={d}")));
            }
        }
        if self.nonlinear.resonance_only && !self.mean_spectrum()?.is_contracting() {
            return Err(Error::Config("resonance_only needs a contracting mean spectrum".into()));
        }
        Ok(())
    }

    /// Exponent draws, one rotation draw per block of size > 1, then one
    /// draw per nonlinear slot.
    fn noise_count(&self) -> usize {
        let n = self.dim();
        let basis = MonomialBasis::get(n, self.degree());
        let rotations = self.linear.multiplicities.iter().filter(|&&m| m > 1).count();
        n + rotations + n * (basis.len() - basis.len_up_to(1))
    }

    /// Jet emitted over the base state `x`.
    pub fn jet_at(&self, x: BaseState, rs: Option<&ResonanceStructure>) -> Result<JetMap> {
        if let Some(j) = &self.fixed {
            return Ok(j.clone());
        }
        let n = self.dim();
        let d = self.degree();
        let mut xi = self.base.noise(x, self.noise_count()).into_iter();
        let mut lin = DMatrix::zeros(n, n);
        let mut start = 0;
        for (&lam, &m) in self.linear.exponents.iter().zip(&self.linear.multiplicities) {
            let mut block = DMatrix::<f64>::identity(m, m);
            for p in 0..m {
                let scale = (lam + self.linear.noise * xi.next().unwrap()).exp();
                block.row_mut(p).scale_mut(scale);
            }
            if m > 1 {
                let angle = self.linear.rotation * xi.next().unwrap();
                let mut rot = DMatrix::<f64>::identity(m, m);
                for p in 0..m - 1 {
                    let mut g = DMatrix::<f64>::identity(m, m);
                    let (s, c) = angle.sin_cos();
                    g[(p, p)] = c;
                    g[(p, p + 1)] = -s;
                    g[(p + 1, p)] = s;
                    g[(p + 1, p + 1)] = c;
                    rot = g * rot;
                }
                block = rot * block;
            }
            lin.view_mut((start, start), (m, m)).copy_from(&block);
            start += m;
        }
        let mut j = JetMap::from_linear(&lin, d);
        let basis = j.basis().clone();
        for t in 0..n {
            for a in basis.len_up_to(1)..basis.len() {
                let v = self.nonlinear.amplitude * xi.next().unwrap();
                j.set_slot(t, a, v);
            }
        }
        for s in &self.nonlinear.mean {
            let cur = j.coeff(s.target, &s.alpha);
            j.set_coeff(s.target, &s.alpha, cur + s.value)?;
        }
        if let Some(rs) = rs {
            let linear = j.truncate(1).with_degree(d);
            let nonlinear = j.sub(&linear)?;
            j = linear.add(&rs.project_class(&nonlinear, ClassSelector::Resonance))?;
        }
        for s in &self.injected {
            j.set_coeff(s.target, &s.alpha, s.value)?;
        }
        Ok(j)
    }
}

/// Window averages of `ln⁺⦀F_k⦀` and `ln⁺⦀F_k⁻¹⦀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetStats {
    pub window: usize,
    pub mean_log_norm: f64,
    pub mean_log_inverse_norm: f64,
    /// Largest average over consecutive windows.
    pub max_window_log_norm: f64,
    pub max_window_log_inverse_norm: f64,
}

#[derive(Clone, Debug)]
pub struct CocycleRun {
    pub generator: CocycleGenerator,
    pub orbit: Vec<BaseState>,
    pub jets: Vec<JetMap>,
    pub met: MetStats,
    pub spectrum: Option<LyapunovSpectrum>,
    pub splitting: Option<LyapunovSplitting>,
}

impl JetCocycle for CocycleRun {
    fn dim(&self) -> usize {
        self.generator.dim()
    }
    fn degree(&self) -> usize {
        self.generator.degree()
    }
    fn steps(&self) -> usize {
        self.jets.len()
    }
    fn jet(&self, k: usize) -> &JetMap {
        &self.jets[k]
    }
}

fn met_stats(jets: &[JetMap]) -> Result<MetStats> {
    let logp = |x: f64| x.ln().max(0.0);
    let mut fwd = Vec::with_capacity(jets.len());
    let mut inv = Vec::with_capacity(jets.len());
    for j in jets {
        fwd.push(logp(jet_norm(j).value()));
        inv.push(logp(jet_norm(&invert(j)?).value()));
    }
    let window = jets.len().clamp(1, 100);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let max_window = |v: &[f64]| {
        v.chunks(window)
            .filter(|c| c.len() == window)
            .map(mean)
            .fold(0.0, f64::max)
    };
    Ok(MetStats {
        window,
        mean_log_norm: mean(&fwd),
        mean_log_inverse_norm: mean(&inv),
        max_window_log_norm: max_window(&fwd),
        max_window_log_inverse_norm: max_window(&inv),
    })
}

/// Samples `N` steps; deterministic in the generator's seed.
pub fn generate(gen: &CocycleGenerator, n_steps: usize) -> Result<CocycleRun> {
    if n_steps == 0 {
        return Err(Error::Invalid("a run needs at least one step".into()));
    }
    gen.validate()?;
    let rs = if gen.nonlinear.resonance_only && gen.fixed.is_none() {
        Some(ResonanceStructure::new(
            gen.mean_spectrum()?,
            gen.blocks()?,
            gen.degree(),
            DEFAULT_EPS_RES,
        )?)
    } else {
        None
    };
    let orbit = gen.base.trajectory(n_steps);
    let jets = orbit[..n_steps]
        .iter()
        .map(|&x| gen.jet_at(x, rs.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    for (k, j) in jets.iter().enumerate() {
        if !j.has_invertible_linear_part() {
            return Err(Error::SingularStep { step: k });
        }
    }
    let met = met_stats(&jets)?;
    Ok(CocycleRun {
        generator: gen.clone(),
        orbit,
        jets,
        met,
        spectrum: None,
        splitting: None,
    })
}

/// Run manifest: generator parameters, seed and window length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub generator: CocycleGenerator,
    pub seed: u64,
    pub steps: usize,
    pub met: MetStats,
}

impl CocycleRun {
    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            generator: self.generator.clone(),
            seed: self.generator.base.seed,
            steps: self.jets.len(),
            met: self.met.clone(),
        }
    }

    pub fn write_manifest<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.manifest())?;
        Ok(())
    }
}
