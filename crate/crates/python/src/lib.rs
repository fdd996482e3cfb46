//! Python bindings: jets, resonance structures, spectra, normal forms and
//! the experiment pipeline.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use forge::cli_report::{self, Command, Experiment};
use forge::jet_algebra::{self as ja};
use forge::lyapunov::{exponents_qr, LyapunovSpectrum, MatrixSequence};
use forge::normal_form::{self as nf, SolverConfig};
use forge::prolongation::JetSequence;
use forge::resonance::{self as res, BlockAssignment, ClassSelector, JetGroup};

fn err(e: forge::Error) -> PyErr {
    match e {
        forge::Error::Config(_) | forge::Error::Invalid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a non-empty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn selector(name: &str) -> PyResult<ClassSelector> {
    Ok(match name {
        "resonance" => ClassSelector::Resonance,
        "subresonance" => ClassSelector::Subresonance,
        "strict_subresonance" => ClassSelector::StrictSubresonance,
        "expanding" => ClassSelector::Expanding,
        "non_resonance" => ClassSelector::NonResonance,
        _ => return Err(PyValueError::new_err(format!("unknown class {name:?}"))),
    })
}

fn group(name: &str) -> PyResult<JetGroup> {
    Ok(match name {
        "H" => JetGroup::H,
        "H0" => JetGroup::H0,
        "X" => JetGroup::X,
        _ => return Err(PyValueError::new_err(format!("unknown group {name:?}, expected H, H0 or X"))),
    })
}

/// Truncated polynomial map of `dim` variables up to `degree`.
#[pyclass(name = "JetMap", module = "resonance_forge", from_py_object)]
#[derive(Clone)]
pub struct PyJetMap(pub ja::JetMap);

#[pymethods]
impl PyJetMap {
    #[staticmethod]
    fn zero(dim: usize, degree: usize) -> Self {
        Self(ja::JetMap::zero(dim, degree))
    }

    #[staticmethod]
    fn identity(dim: usize, degree: usize) -> Self {
        Self(ja::JetMap::identity(dim, degree))
    }

    #[staticmethod]
    fn from_linear(rows: Vec<Vec<f64>>, degree: usize) -> PyResult<Self> {
        Ok(Self(ja::JetMap::from_linear(&matrix(&rows)?, degree)))
    }

    /// `terms` is a list of `(target, alpha, value)`.
    #[staticmethod]
    fn from_terms(dim: usize, degree: usize, terms: Vec<(usize, Vec<u32>, f64)>) -> PyResult<Self> {
        ja::JetMap::from_terms(dim, degree, terms).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        ja::JetMap::from_json(s).map(Self).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree()
    }

    fn coeff(&self, target: usize, alpha: Vec<u32>) -> f64 {
        self.0.coeff(target, &alpha)
    }

    fn set_coeff(&mut self, target: usize, alpha: Vec<u32>, value: f64) -> PyResult<()> {
        self.0.set_coeff(target, &alpha, value).map_err(err)
    }

    fn linear_part(&self) -> Vec<Vec<f64>> {
        let m = self.0.linear_part();
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn evaluate(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        if u.len() != self.0.dim() {
            return Err(PyValueError::new_err("point has the wrong dimension"));
        }
        Ok(self.0.evaluate(&u))
    }

    fn truncate(&self, s: usize) -> Self {
        Self(self.0.truncate(s))
    }

    /// `self ∘ inner`
    fn compose(&self, inner: &PyJetMap) -> PyResult<Self> {
        ja::compose(&self.0, &inner.0).map(Self).map_err(err)
    }

    fn invert(&self) -> PyResult<Self> {
        ja::invert(&self.0).map(Self).map_err(err)
    }

    fn adjoint(&self, x: &PyJetMap) -> PyResult<Self> {
        ja::adjoint(&self.0, &x.0).map(Self).map_err(err)
    }

    fn recenter(&self, u: Vec<f64>) -> PyResult<Self> {
        ja::recenter(&self.0, &u).map(Self).map_err(err)
    }

    fn bracket(&self, other: &PyJetMap) -> PyResult<Self> {
        ja::lie_bracket(&self.0, &other.0).map(Self).map_err(err)
    }

    fn norm(&self) -> f64 {
        ja::jet_norm(&self.0).value()
    }

    fn max_abs_diff(&self, other: &PyJetMap) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    fn __eq__(&self, other: &PyJetMap) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("JetMap(dim={}, degree={})", self.0.dim(), self.0.degree())
    }
}

/// Weights and classes of every slot for a contracting spectrum.
#[pyclass(name = "ResonanceStructure", module = "resonance_forge", from_py_object)]
#[derive(Clone)]
pub struct PyResonanceStructure(pub res::ResonanceStructure);

#[pymethods]
impl PyResonanceStructure {
    /// Coordinates are grouped into contiguous blocks of the given
    /// multiplicities; `degree` defaults to the maximal resonance degree.
    #[new]
    #[pyo3(signature = (exponents, multiplicities=None, degree=None, eps_res=res::DEFAULT_EPS_RES))]
    fn new(
        exponents: Vec<f64>,
        multiplicities: Option<Vec<usize>>,
        degree: Option<usize>,
        eps_res: f64,
    ) -> PyResult<Self> {
        let mult = multiplicities.unwrap_or_else(|| vec![1; exponents.len()]);
        let spec = LyapunovSpectrum::new(exponents, mult.clone()).map_err(err)?;
        let degree = match degree {
            Some(d) => d,
            None => res::max_degree_within(&spec, eps_res).map_err(err)?,
        };
        let blocks = BlockAssignment::contiguous(&mult).map_err(err)?;
        res::ResonanceStructure::new(spec, blocks, degree, eps_res).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree()
    }

    #[getter]
    fn max_degree(&self) -> usize {
        self.0.max_degree()
    }

    /// `(target, alpha, sigma, class)` for every nonlinear and linear slot.
    fn weights(&self) -> Vec<(usize, Vec<u32>, f64, String)> {
        let basis = ja::MonomialBasis::get(self.0.dim(), self.0.degree());
        (0..self.0.dim())
            .flat_map(|t| {
                let b = basis.clone();
                (1..b.len()).map(move |a| (t, a, b.monomial(a).as_slice().to_vec()))
            })
            .map(|(t, a, alpha)| (t, alpha, self.0.weight(t, a), self.0.class(t, a).to_string()))
            .collect()
    }

    /// Keeps only slots of the named class: `resonance`, `subresonance`,
    /// `strict_subresonance`, `expanding` or `non_resonance`.
    fn project(&self, jet: &PyJetMap, class: &str) -> PyResult<PyJetMap> {
        Ok(PyJetMap(self.0.project_class(&jet.0, selector(class)?)))
    }

    /// Largest offending coefficient for group `H`, `H0` or `X`.
    #[pyo3(signature = (jet, group_name, eps_mem=res::DEFAULT_EPS_MEM))]
    fn offending(&self, jet: &PyJetMap, group_name: &str, eps_mem: f64) -> PyResult<f64> {
        Ok(self.0.membership(&jet.0, group(group_name)?, eps_mem).max_offending)
    }

    #[pyo3(signature = (jet, group_name, eps_mem=res::DEFAULT_EPS_MEM))]
    fn is_member(&self, jet: &PyJetMap, group_name: &str, eps_mem: f64) -> PyResult<bool> {
        Ok(self.0.membership(&jet.0, group(group_name)?, eps_mem).member)
    }
}

/// Clustered Lyapunov exponents and multiplicities of a matrix sequence.
#[pyfunction]
#[pyo3(signature = (matrices, gap_tol=forge::lyapunov::DEFAULT_GAP_TOL))]
fn lyapunov_spectrum(matrices: Vec<Vec<Vec<f64>>>, gap_tol: f64) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let seq = MatrixSequence(matrices.iter().map(|m| matrix(m)).collect::<PyResult<_>>()?);
    let s = exponents_qr(&seq, seq.len(), gap_tol).map_err(err)?;
    Ok((s.exponents().to_vec(), s.multiplicities().to_vec()))
}

/// Stationary normal form: returns `(h, normal_form)` with
/// `normal_form = h ∘ f ∘ h⁻¹` resonant.
#[pyfunction]
fn sternberg(f: &PyJetMap, rs: &PyResonanceStructure) -> PyResult<(PyJetMap, PyJetMap)> {
    let (h, n) = nf::sternberg(&f.0, &rs.0).map_err(err)?;
    Ok((PyJetMap(h), PyJetMap(n)))
}

/// Charts along a finite stretch of jets.
#[pyclass(name = "ChartFamily", module = "resonance_forge", skip_from_py_object)]
pub struct PyChartFamily(pub nf::ChartFamily);

#[pymethods]
impl PyChartFamily {
    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    #[getter]
    fn margin(&self) -> usize {
        self.0.margin
    }

    fn __len__(&self) -> usize {
        self.0.charts.len()
    }

    fn chart(&self, k: usize) -> PyResult<PyJetMap> {
        self.0
            .charts
            .get(k)
            .cloned()
            .map(PyJetMap)
            .ok_or_else(|| PyValueError::new_err(format!("no chart {k}")))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }
}

/// Nonstationary resonance normal form of a jet sequence.
#[pyfunction]
#[pyo3(signature = (jets, rs, tail, degree=None, tol_residual=1e-6))]
fn normal_form(
    jets: Vec<PyJetMap>,
    rs: &PyResonanceStructure,
    tail: usize,
    degree: Option<usize>,
    tol_residual: f64,
) -> PyResult<PyChartFamily> {
    let cfg = SolverConfig {
        degree: degree.unwrap_or(rs.0.degree()),
        tail,
        eps_res: rs.0.eps_res(),
        tol_residual,
    };
    let seq = JetSequence(jets.into_iter().map(|j| j.0).collect());
    nf::nonstationary_normal_form(&seq, &rs.0, &cfg).map(PyChartFamily).map_err(err)
}

/// Largest nonlinear coefficient of the conjugated jets on the interior.
#[pyfunction]
fn max_nonlinear(jets: Vec<PyJetMap>, charts: &PyChartFamily) -> PyResult<f64> {
    let seq = JetSequence(jets.into_iter().map(|j| j.0).collect());
    nf::max_nonlinear(&seq, &charts.0.charts, charts.0.margin).map_err(err)
}

/// A validated experiment config.
#[pyclass(name = "Experiment", module = "resonance_forge", skip_from_py_object)]
pub struct PyExperiment(Experiment);

fn command(name: &str) -> PyResult<Command> {
    Ok(match name {
        "spectrum" => Command::Spectrum,
        "prolong" => Command::Prolong,
        "normalform" => Command::Normalform,
        "verify" => Command::Verify,
        "report" => Command::Report,
        _ => return Err(PyValueError::new_err(format!("unknown command {name:?}"))),
    })
}

#[pymethods]
impl PyExperiment {
    #[staticmethod]
    #[pyo3(signature = (path, seed=None))]
    fn load(path: PathBuf, seed: Option<u64>) -> PyResult<Self> {
        Experiment::load(&path, seed).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (text, seed=None))]
    fn from_json(text: &str, seed: Option<u64>) -> PyResult<Self> {
        let cfg = cli_report::ExperimentConfig::from_json(text).map_err(err)?;
        Experiment::new(cfg, seed).map(Self).map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    /// Runs the check battery and returns the verdict as JSON.
    fn verify(&self) -> PyResult<String> {
        let v = cli_report::verify(&self.0).map_err(err)?;
        serde_json::to_string_pretty(&v).map_err(json_err)
    }

    /// Runs a CLI command writing into `out`; returns `(passed, lines)`.
    fn execute(&self, name: &str, out: PathBuf) -> PyResult<(bool, Vec<String>)> {
        let o = cli_report::execute(command(name)?, &self.0, &out).map_err(err)?;
        Ok((o.passed, o.lines))
    }
}

#[pymodule]
fn resonance_forge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyJetMap>()?;
    m.add_class::<PyResonanceStructure>()?;
    m.add_class::<PyChartFamily>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(lyapunov_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(sternberg, m)?)?;
    m.add_function(wrap_pyfunction!(normal_form, m)?)?;
    m.add_function(wrap_pyfunction!(max_nonlinear, m)?)?;
    Ok(())
}
