//! Experiment configuration and the `resonance-forge` pipelines.
//!
//! Every command reads one JSON config, runs a pipeline, and writes its
//! reports into an output directory. Outputs depend only on the config and
//! the seed.

mod checks;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cocycle_lab::{generate, stable_class, write_results_csv, CocycleGenerator, CocycleRun};
use crate::error::{Error, Result};
use crate::jet_algebra::JetMap;
use crate::lyapunov::{
    adapted_splitting, cluster_exponents, raw_exponents_qr, FnCocycle, LinearCocycle,
    LyapunovSpectrum, SpectrumReport,
};
use crate::normal_form::{
    linearize_half_pinched, nonstationary_normal_form, ChartFamily, SolverConfig,
};
use crate::prolongation::{
    constant_prolonged_spectrum, jet_contraction_decay, jet_resonance_check,
    prolonged_spectrum_check, DecayCurve, JetCocycle, LinearParts, ProlongedSpectrumReport,
};
use crate::resonance::{
    eps_res_for_estimate, max_degree, max_degree_within, BlockAssignment, ResonanceStructure, DEFAULT_EPS_MEM,
    DEFAULT_EPS_RES,
};

pub use checks::{verify, CheckResult, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest angle between a coordinate axis and its Lyapunov block.
pub const ALIGNMENT_ANGLE_DEG: f64 = 5.0;

pub const DEFAULT_OUTPUT_DIR: &str = "resonance-forge-out";

/// Eigenvalue matching tolerance for constant generators.
pub const CONSTANT_SPECTRUM_TOL: f64 = 1e-8;

/// Membership tolerance for jets at the fixed point.
pub const JET_RESONANCE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// The same jet at every step.
    Constant { jet: JetMap },
    Random(CocycleGenerator),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Windows {
    /// Orbit length for spectra, prolongation and normal forms.
    pub n: usize,
    /// Steps for slope fits and perturbation spectra.
    pub k: usize,
    /// Tail length of the coboundary sums.
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub gap_tol: f64,
    /// Floor for the resonance tolerance; estimated spectra may raise it.
    pub eps_res: f64,
    pub eps_mem: f64,
    pub tol_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gap_tol: crate::lyapunov::DEFAULT_GAP_TOL,
            eps_res: DEFAULT_EPS_RES,
            eps_mem: DEFAULT_EPS_MEM,
            tol_residual: 1e-6,
        }
    }
}

fn default_trials() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Overrides the generator's own seed.
    #[serde(default)]
    pub seed: Option<u64>,
    pub generator: GeneratorSpec,
    pub windows: Windows,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Elimination degree; defaults to the larger of the jet degree and
    /// the spectrum's maximal degree.
    #[serde(default)]
    pub degree: Option<usize>,
    /// Points classified by `report` and perturbed by `verify`.
    #[serde(default)]
    pub samples: Vec<Vec<f64>>,
    #[serde(default = "default_trials")]
    pub closure_trials: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// A validated config with its effective seed.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub generator: CocycleGenerator,
    pub seed: u64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, seed: Option<u64>) -> Result<Self> {
        if config.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        let w = &config.windows;
        if w.n == 0 || w.k == 0 || w.m == 0 {
            return Err(Error::Config("windows n, k and m must be positive".into()));
        }
        let t = &config.tolerances;
        for (name, v) in [
            ("gap_tol", t.gap_tol),
            ("eps_res", t.eps_res),
            ("eps_mem", t.eps_mem),
            ("tol_residual", t.tol_residual),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if config.degree == Some(0) {
            return Err(Error::Config("degree must be positive".into()));
        }
        let seed = seed.or(config.seed);
        let mut generator = match &config.generator {
            GeneratorSpec::Constant { jet } => {
                CocycleGenerator::constant(jet.clone(), seed.unwrap_or(0))
                    .map_err(|e| Error::Config(format!("constant jet: {e}")))?
            }
            GeneratorSpec::Random(g) => g.clone(),
        };
        if let Some(s) = seed {
            generator.base.seed = s;
        }
        generator.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        let spectrum = generator
            .mean_spectrum()
            .map_err(|e| Error::Config(format!("generator spectrum: {e}")))?;
        if !spectrum.is_contracting() {
            return Err(Error::Config(format!(
                "generator spectrum {:?} is not contracting",
                spectrum.exponents()
            )));
        }
        let n = generator.dim();
        for u in &config.samples {
            if u.len() != n {
                return Err(Error::Config(format!("sample {u:?} does not have dimension {n}")));
            }
        }
        let seed = generator.base.seed;
        Ok(Self {
            config,
            generator,
            seed,
        })
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?, seed)
    }

    pub fn windows(&self) -> &Windows {
        &self.config.windows
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.config.tolerances
    }

    pub fn run(&self, steps: usize) -> Result<CocycleRun> {
        generate(&self.generator, steps)
    }

    /// Configured samples, or each axis at 0.1 plus the diagonal point.
    pub fn samples(&self) -> Vec<Vec<f64>> {
        if !self.config.samples.is_empty() {
            return self.config.samples.clone();
        }
        let n = self.generator.dim();
        let mut out: Vec<Vec<f64>> = (0..n)
            .map(|p| (0..n).map(|q| if p == q { 0.1 } else { 0.0 }).collect())
            .collect();
        if n > 1 {
            out.push(vec![0.1; n]);
        }
        out
    }
}

/// Spectrum, splitting and resonance data estimated from a run.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub raw: Vec<f64>,
    pub spectrum: LyapunovSpectrum,
    /// Largest change of a raw exponent between the half and full window.
    pub estimation_error: f64,
    pub eps_res: f64,
    pub rs: ResonanceStructure,
    /// Elimination degree.
    pub degree: usize,
}

impl Analysis {
    pub fn linear_normal_form(&self) -> bool {
        self.rs.max_degree() == 1
    }

    pub fn solver_config(&self, exp: &Experiment) -> SolverConfig {
        SolverConfig {
            degree: self.degree,
            tail: exp.windows().m,
            eps_res: self.eps_res,
            tol_residual: exp.tolerances().tol_residual,
        }
    }
}

/// Batches for the standard error of estimated exponents.
pub const ERROR_BATCHES: usize = 10;

/// Per-exponent estimation error: the larger of the half-to-full window
/// drift and the batch-means standard error.
fn estimation_error<C: LinearCocycle>(lin: &C, steps: usize, raw: &[f64]) -> Result<f64> {
    let n = lin.dim();
    let half = raw_exponents_qr(lin, (steps / 2).max(n))?;
    let drift = raw.iter().zip(&half).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let b = ERROR_BATCHES.min(steps / n);
    if b < 2 {
        return Ok(drift);
    }
    let len = steps / b;
    let batches = (0..b)
        .map(|i| raw_exponents_qr(&FnCocycle::new(n, |k| lin.matrix(i * len + k)), len))
        .collect::<Result<Vec<_>>>()?;
    let se = (0..n)
        .map(|p| {
            let mean = batches.iter().map(|x| x[p]).sum::<f64>() / b as f64;
            let var = batches.iter().map(|x| (x[p] - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
            (var / b as f64).sqrt()
        })
        .fold(0.0, f64::max);
    Ok(drift.max(se))
}

pub fn analyse(exp: &Experiment, run: &CocycleRun) -> Result<Analysis> {
    let gap_tol = exp.tolerances().gap_tol;
    let lin = LinearParts(run);
    let steps = run.steps();
    let raw = raw_exponents_qr(&lin, steps)?;
    let estimation_error = estimation_error(&lin, steps, &raw)?;
    let spectrum = cluster_exponents(&raw, gap_tol)?;
    let ratio = max_degree(&spectrum)? + 1;
    // a weight of degree d combines d + 1 exponents
    let terms = 1 + exp.config.degree.unwrap_or(0).max(run.degree()).max(ratio);
    let eps_res = exp
        .tolerances()
        .eps_res
        .max(eps_res_for_estimate(terms as f64 * estimation_error));
    let r = max_degree_within(&spectrum, eps_res)?;
    let blocks = if spectrum.len() == 1 {
        BlockAssignment::contiguous(&[run.dim()])?
    } else {
        let splitting = adapted_splitting(&lin, steps / 2, gap_tol)?;
        BlockAssignment::from_aligned_splitting(&splitting, ALIGNMENT_ANGLE_DEG.to_radians())?
    };
    let degree = exp.config.degree.unwrap_or(r.max(run.degree()));
    let rs = ResonanceStructure::new(spectrum.clone(), blocks, degree.max(r), eps_res)?;
    Ok(Analysis {
        raw,
        spectrum,
        estimation_error,
        eps_res,
        rs,
        degree,
    })
}

/// Exact eigenvalues for constant generators, QR otherwise.
pub fn prolonged_spectrum(exp: &Experiment, run: &CocycleRun, r: usize) -> Result<ProlongedSpectrumReport> {
    match &exp.generator.fixed {
        Some(jet) => constant_prolonged_spectrum(&jet.truncate(r), CONSTANT_SPECTRUM_TOL),
        None => prolonged_spectrum_check(run, r, run.steps(), exp.tolerances().gap_tol),
    }
}

pub fn solve(exp: &Experiment, run: &CocycleRun, an: &Analysis) -> Result<ChartFamily> {
    let cfg = an.solver_config(exp);
    if an.linear_normal_form() {
        linearize_half_pinched(run, &an.rs, &cfg)
    } else {
        nonstationary_normal_form(run, &an.rs, &cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Prolong,
    Normalform,
    Verify,
    Report,
}

/// Result of one command: whether its checks passed, the summary lines to
/// print, and the report files written.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub first_failure: Option<String>,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// Exit status for a command error: 2 for usage and config errors, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

struct OutDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl OutDir {
    fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

fn write_raw_csv(raw: &[f64], w: &mut dyn Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["index", "exponent"])?;
    for (i, x) in raw.iter().enumerate() {
        wtr.write_record([(i + 1).to_string(), x.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

fn write_decay_csv(curve: &DecayCurve, w: &mut dyn Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["step", "log_norm"])?;
    for (k, v) in curve.log_norms.iter().enumerate() {
        wtr.write_record([(k + 1).to_string(), v.map(|x| x.to_string()).unwrap_or_default()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Runs `command` for `exp`, writing reports into `out`.
pub fn execute(command: Command, exp: &Experiment, out: &Path) -> Result<Outcome> {
    let mut dir = OutDir::create(out.to_path_buf())?;
    let w = exp.windows().clone();
    let tol = exp.tolerances().clone();
    let mut lines = Vec::new();
    let mut verdict = None;
    match command {
        Command::Spectrum => {
            let run = exp.run(w.n)?;
            let raw = raw_exponents_qr(&LinearParts(&run), w.n)?;
            let spectrum = cluster_exponents(&raw, tol.gap_tol)?;
            dir.json("spectrum.json", &SpectrumReport::new(&spectrum, w.n, tol.gap_tol))?;
            dir.write("raw_exponents.csv", |f| write_raw_csv(&raw, f))?;
            lines.push(format!(
                "spectrum: exponents={:?} multiplicities={:?} window={}",
                spectrum.exponents(),
                spectrum.multiplicities(),
                w.n
            ));
        }
        Command::Prolong => {
            let run = exp.run(w.n)?;
            let an = analyse(exp, &run)?;
            let r = an.rs.max_degree().min(run.degree());
            let prolonged = prolonged_spectrum(exp, &run, r)?;
            let jets = jet_resonance_check(&run, &an.rs, w.n, JET_RESONANCE_TOL)?;
            let decay = jet_contraction_decay(&run, w.n)?;
            dir.json("prolonged_spectrum.json", &prolonged)?;
            dir.json("jet_resonance.json", &jets)?;
            dir.write("decay.csv", |f| write_decay_csv(&decay, f))?;
            lines.push(format!(
                "prolong: r={r} max_deviation={:e} spectrum_match={} jets_resonant={}",
                prolonged.max_deviation, prolonged.passed, jets.passed
            ));
        }
        Command::Normalform => {
            let run = exp.run(w.n)?;
            let an = analyse(exp, &run)?;
            let charts = solve(exp, &run, &an)?;
            dir.write("charts.json", |f| {
                f.write_all(charts.to_json()?.as_bytes())?;
                writeln!(f)?;
                Ok(())
            })?;
            dir.write("residual_history.csv", |f| charts.write_history_csv(f))?;
            for warn in &charts.warnings {
                lines.push(format!(
                    "warning: near-resonant slot (target {}, alpha {:?}, sigma {:e}): residual {:e} if kept, {:e} if eliminated",
                    warn.target, warn.alpha, warn.sigma, warn.residual_if_kept, warn.residual_if_eliminated
                ));
            }
            lines.push(format!(
                "normalform: r={} degree={} residual={:e} margin={}{}",
                an.rs.max_degree(),
                an.degree,
                charts.residual,
                charts.margin,
                if an.linear_normal_form() { " linear normal form" } else { "" }
            ));
        }
        Command::Verify => {
            let v = verify(exp)?;
            dir.json("verify.json", &v)?;
            for c in &v.checks {
                lines.push(format!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name));
            }
            verdict = Some(v);
        }
        Command::Report => {
            let run = exp.run(w.n.max(w.k))?;
            let an = analyse(exp, &run)?;
            dir.write("weights.csv", |f| an.rs.write_weight_csv(f))?;
            dir.write("manifest.json", |f| {
                run.write_manifest(&mut *f)?;
                writeln!(f)?;
                Ok(())
            })?;
            let samples = exp.samples();
            let rows = samples
                .iter()
                .map(|u| Ok((u.clone(), stable_class(&run, 0, u, w.k, &an.spectrum, tol.gap_tol)?)))
                .collect::<Result<Vec<_>>>()?;
            dir.write("stable_classes.csv", |f| write_results_csv(&rows, f))?;
            let decay = jet_contraction_decay(&run, w.n)?;
            dir.write("decay.csv", |f| write_decay_csv(&decay, f))?;
            lines.push(format!(
                "report: {} samples classified over {} steps, decay slope {}",
                rows.len(),
                w.k,
                decay.slope.map(|s| format!("{s:e}")).unwrap_or_else(|| "none".into())
            ));
        }
    }
    let (passed, first_failure) = match &verdict {
        Some(v) => (v.passed, v.first_failure.clone()),
        None => (true, None),
    };
    Ok(Outcome {
        passed,
        first_failure,
        lines,
        files: dir.files,
    })
}

/// Output directory: the explicit one, else the config's, else the default.
pub fn output_dir(exp: &Experiment, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| exp.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Parses `RESONANCE_FORGE_THREADS`: `None` when unset.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>> {
    match value {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "RESONANCE_FORGE_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}
