use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{exponents_qr, LinearCocycle, LyapunovSpectrum, MatrixSequence};
use crate::prolongation::{fit_slope, JetCocycle, LinearParts};

/// Orbits farther than `e^ESCAPE_LOG` from the origin count as escaped.
const ESCAPE_LOG: f64 = 50.0;

/// Exponent classification of one sample point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableClass {
    /// Fitted growth rate of `ln‖F^k u‖`; `None` if the orbit escaped.
    pub slope: Option<f64>,
    /// Spectrum value within `gap_tol` of the slope.
    pub exponent: Option<f64>,
    /// 1-based filtration level `V^i` whose exponent matched.
    pub index: Option<usize>,
    pub diverged: bool,
}

/// Orbit `u_k = F_{start+k-1} ∘ ... ∘ F_start (u)` carried as `e^{s_k} v_k`
/// with `‖v_k‖ = 1`; each step applies `F` rescaled by `e^{s_k}`.
struct ScaledOrbit {
    s: f64,
    v: Vec<f64>,
}

impl ScaledOrbit {
    fn new(u: &[f64]) -> Result<Self> {
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateInput(
                "the origin is fixed and has no growth rate".into(),
            ));
        }
        Ok(Self {
            s: norm.ln(),
            v: u.iter().map(|x| x / norm).collect(),
        })
    }

    /// Steps once; returns the derivative of `F` at the current point, or
    /// `None` once the orbit escapes.
    fn step(&mut self, f: &crate::jet_algebra::JetMap, want_jacobian: bool) -> Option<Option<DMatrix<f64>>> {
        let g = f.without_constant().rescaled(self.s.exp());
        let jac = want_jacobian.then(|| g.jacobian(&self.v));
        let w = g.evaluate(&self.v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        self.s += norm.ln();
        if self.s > ESCAPE_LOG {
            return None;
        }
        self.v = w.iter().map(|x| x / norm).collect();
        Some(jac)
    }
}

fn second_half_slope(log_norms: &[f64]) -> Option<f64> {
    let k = log_norms.len();
    let half = k / 2;
    let xs: Vec<f64> = (half..k).map(|i| (i + 1) as f64).collect();
    fit_slope(&xs, &log_norms[half..])
}

/// Fitted rate of `ln‖F^k(u)‖` over `k ∈ [K/2, K]` from step `start`, snapped
/// to the nearest exponent of `spectrum` within `gap_tol`.
pub fn stable_class<C: JetCocycle>(
    c: &C,
    start: usize,
    u: &[f64],
    k_steps: usize,
    spectrum: &LyapunovSpectrum,
    gap_tol: f64,
) -> Result<StableClass> {
    if u.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: u.len(),
        });
    }
    if start + k_steps > c.steps() {
        return Err(Error::Invalid(format!(
            "run has {} steps, {} needed",
            c.steps(),
            start + k_steps
        )));
    }
    let mut orbit = ScaledOrbit::new(u)?;
    let mut log_norms = Vec::with_capacity(k_steps);
    for k in start..start + k_steps {
        if orbit.step(c.jet(k), false).is_none() {
            return Ok(StableClass {
                slope: None,
                exponent: None,
                index: None,
                diverged: true,
            });
        }
        log_norms.push(orbit.s);
    }
    let slope = second_half_slope(&log_norms);
    let hit = slope.and_then(|s| spectrum.nearest_within(s, gap_tol));
    Ok(StableClass {
        slope,
        exponent: hit.map(|i| spectrum.exponents()[i]),
        index: hit.map(|i| i + 1),
        diverged: false,
    })
}

/// `u` after `k` steps from `start`, or `None` if it escaped.
pub fn push_forward<C: JetCocycle>(c: &C, start: usize, k: usize, u: &[f64]) -> Result<Option<Vec<f64>>> {
    let mut orbit = ScaledOrbit::new(u)?;
    for j in start..start + k {
        if orbit.step(c.jet(j), false).is_none() {
            return Ok(None);
        }
    }
    let scale = orbit.s.exp();
    Ok(Some(orbit.v.iter().map(|x| x * scale).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub steps: usize,
    pub linear: LyapunovSpectrum,
    /// Spectrum of `D_{u_k} F_k` along the orbit; `None` if the orbit escaped.
    pub along_orbit: Option<LyapunovSpectrum>,
    pub max_deviation: Option<f64>,
    pub passed: bool,
}

/// Exponents of the derivative cocycle along the orbit of `u` against those
/// of the linear parts, over `K` steps.
pub fn perturbed_spectrum<C: JetCocycle>(
    c: &C,
    u: &[f64],
    k_steps: usize,
    gap_tol: f64,
) -> Result<PerturbationReport> {
    if k_steps > c.steps() {
        return Err(Error::Invalid(format!("run has {} steps, {k_steps} needed", c.steps())));
    }
    let linear = exponents_qr(&LinearParts(c), k_steps, gap_tol)?;
    let derivs = if u.iter().all(|&x| x == 0.0) {
        Some((0..k_steps).map(|k| c.jet(k).linear_part()).collect::<Vec<_>>())
    } else {
        let mut orbit = ScaledOrbit::new(u)?;
        let mut out = Vec::with_capacity(k_steps);
        for k in 0..k_steps {
            match orbit.step(c.jet(k), true) {
                Some(j) => out.push(j.expect("jacobian requested")),
                None => break,
            }
        }
        (out.len() == k_steps).then_some(out)
    };
    let Some(derivs) = derivs else {
        return Ok(PerturbationReport {
            steps: k_steps,
            linear,
            along_orbit: None,
            max_deviation: None,
            passed: false,
        });
    };
    let along = exponents_qr(&MatrixSequence(derivs), k_steps, gap_tol)?;
    let comparable = along.multiplicities() == linear.multiplicities();
    let max_deviation = comparable.then(|| {
        along
            .exponents()
            .iter()
            .zip(linear.exponents())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    let passed = linear.is_contracting() && max_deviation.is_some_and(|d| d < gap_tol);
    Ok(PerturbationReport {
        steps: k_steps,
        linear,
        along_orbit: Some(along),
        max_deviation,
        passed,
    })
}

/// `X -> T X T⁻¹` on `End(R^n)`, acting on column-major `vec(X)`.
pub struct EndomorphismCocycle<C>(pub C);

impl<C: LinearCocycle> LinearCocycle for EndomorphismCocycle<C> {
    fn dim(&self) -> usize {
        self.0.dim() * self.0.dim()
    }
    fn matrix(&self, k: usize) -> DMatrix<f64> {
        let t = self.0.matrix(k);
        let t_inv = t.clone().try_inverse().expect("cocycle step must be invertible");
        t_inv.transpose().kronecker(&t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionDrift {
    pub steps: usize,
    /// Fitted rate of the transported norm over the second half.
    pub slope: f64,
    /// `|slope| < gap_tol`
    pub invariant: bool,
}

/// Transports `section` by the induced cocycle and measures its exponential
/// drift.
pub fn invariant_section_stability<C: LinearCocycle>(
    c: &C,
    section: &DVector<f64>,
    n_steps: usize,
    gap_tol: f64,
) -> Result<SectionDrift> {
    if section.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: section.len(),
        });
    }
    let norm0 = section.norm();
    if norm0 == 0.0 {
        return Err(Error::DegenerateInput("zero section".into()));
    }
    let mut v = section / norm0;
    let mut s = norm0.ln();
    let mut log_norms = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        v = c.matrix(k) * v;
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::SingularStep { step: k });
        }
        s += norm.ln();
        v /= norm;
        log_norms.push(s);
    }
    let slope = second_half_slope(&log_norms)
        .ok_or_else(|| Error::Invalid("need at least four steps to fit a drift".into()))?;
    Ok(SectionDrift {
        steps: n_steps,
        slope,
        invariant: slope.abs() < gap_tol,
    })
}

/// `u,slope,exponent,index`, one row per sample point; `u` is
/// semicolon-joined and missing values are empty.
pub fn write_results_csv<W: Write>(rows: &[(Vec<f64>, StableClass)], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["u", "slope", "exponent", "index"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (u, class) in rows {
        let u = u.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        wtr.write_record([
            u,
            opt(class.slope),
            opt(class.exponent),
            class.index.map(|i| i.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
