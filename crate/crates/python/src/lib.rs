//! Python bindings for the `dynlogit` estimators and Monte-Carlo harness.

use dynlogit::estimators::{
    confidence_interval, fit_basic as core_fit_basic, fit_improved as core_fit_improved,
    fit_two_lag as core_fit_two_lag, wald_test_gamma2, ImprovedMode, SolverConfig, TwoLagMode,
};
use dynlogit::harness::{run_design as core_run_design, EstimatorKind, HarnessOptions};
use dynlogit::hk::{fit_hk as core_fit_hk, KernelKind, KernelSpec, PairRange};
use dynlogit::{dgp, DesignSpec, Error, FitResult, PanelDataset};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(dynlogit_py, IdentificationError, PyException);
create_exception!(dynlogit_py, ConvergenceError, PyException);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::NotIdentified { .. } => IdentificationError::new_err(err.to_string()),
        Error::NonConvergence { .. } => ConvergenceError::new_err(err.to_string()),
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// A balanced binary panel with presample responses.
#[pyclass(name = "Panel", module = "dynlogit_py")]
pub struct Panel {
    inner: PanelDataset,
}

#[pymethods]
impl Panel {
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        PanelDataset::read_csv(path).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_csv_string(text: &str) -> PyResult<Self> {
        PanelDataset::from_csv_reader(text.as_bytes())
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Replication `rep` of a design given as a JSON string.
    #[staticmethod]
    #[pyo3(signature = (design_json, rep=0))]
    fn simulate(design_json: &str, rep: usize) -> PyResult<Self> {
        let spec = DesignSpec::from_json(design_json).map_err(to_py)?;
        dgp::generate(&spec, rep).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_csv_string(&self) -> PyResult<String> {
        self.inner.to_csv_string().map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn informative_fraction(&self) -> f64 {
        self.inner.informative_fraction()
    }

    fn __repr__(&self) -> String {
        format!("Panel(n={}, T={}, k={})", self.inner.n(), self.inner.t(), self.inner.k())
    }
}

/// Estimates, standard errors and fit diagnostics.
#[pyclass(name = "Fit", module = "dynlogit_py")]
pub struct Fit {
    inner: FitResult,
}

#[pymethods]
impl Fit {
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.clone()
    }

    #[getter]
    fn estimates(&self) -> Vec<f64> {
        self.inner.estimates()
    }

    #[getter]
    fn se(&self) -> Vec<f64> {
        self.inner.se.clone()
    }

    #[getter]
    fn loglik(&self) -> f64 {
        self.inner.loglik
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn actual_n(&self) -> usize {
        self.inner.actual_n
    }

    #[getter]
    fn nominal_n(&self) -> usize {
        self.inner.nominal_n
    }

    #[getter]
    fn beta_bar(&self) -> Option<Vec<f64>> {
        self.inner.beta_bar.clone()
    }

    /// (parameter, estimate, lower, upper) for each parameter.
    #[pyo3(signature = (level=0.95))]
    fn confidence_intervals(&self, level: f64) -> PyResult<Vec<(String, f64, f64, f64)>> {
        Ok(confidence_interval(&self.inner, level)
            .map_err(to_py)?
            .into_iter()
            .map(|c| (c.parameter, c.estimate, c.lower, c.upper))
            .collect())
    }

    /// (statistic, p-value) of the Wald test of gamma2 = 0.
    fn wald_gamma2(&self) -> PyResult<(f64, f64)> {
        let w = wald_test_gamma2(&self.inner).map_err(to_py)?;
        Ok((w.statistic, w.p_value))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let parts: Vec<String> = self
            .inner
            .labels
            .iter()
            .zip(self.inner.estimates())
            .map(|(l, e)| format!("{l}={e:.4}"))
            .collect();
        format!("Fit({})", parts.join(", "))
    }
}

fn wrap(r: dynlogit::Result<FitResult>) -> PyResult<Fit> {
    r.map(|inner| Fit { inner }).map_err(to_py)
}

#[pyfunction]
fn fit_basic(py: Python<'_>, panel: &Panel) -> PyResult<Fit> {
    wrap(py.detach(|| core_fit_basic(&panel.inner, &SolverConfig::default())))
}

/// Improved estimator; beta_bar follows beta unless `beta_bar` is given.
#[pyfunction]
#[pyo3(signature = (panel, beta_bar=None))]
fn fit_improved(py: Python<'_>, panel: &Panel, beta_bar: Option<Vec<f64>>) -> PyResult<Fit> {
    let mode = beta_bar.map_or(ImprovedMode::Dynamic, ImprovedMode::Fixed);
    wrap(py.detach(|| core_fit_improved(&panel.inner, &mode, &SolverConfig::default())))
}

#[pyfunction]
#[pyo3(signature = (panel, improved=true))]
fn fit_two_lag(py: Python<'_>, panel: &Panel, improved: bool) -> PyResult<Fit> {
    let mode = if improved {
        TwoLagMode::Improved(ImprovedMode::Dynamic)
    } else {
        TwoLagMode::Basic
    };
    wrap(py.detach(|| core_fit_two_lag(&panel.inner, &mode, &SolverConfig::default())))
}

fn kernel_spec(kernel: &str, bandwidth_scale: f64, pairs: &str) -> PyResult<KernelSpec> {
    let kernel = match kernel {
        "gaussian" => KernelKind::GaussianProduct,
        "uniform" => KernelKind::UniformWindow,
        "exact" => KernelKind::ExactMatch,
        other => return Err(PyValueError::new_err(format!("unknown kernel '{other}'"))),
    };
    let pairs = match pairs {
        "interior" => PairRange::Interior,
        "strict" => PairRange::Strict,
        other => return Err(PyValueError::new_err(format!("unknown pair range '{other}'"))),
    };
    Ok(KernelSpec {
        kernel,
        scale: bandwidth_scale,
        c: None,
        pairs,
    })
}

/// Kernel-weighted pairwise estimator.
#[pyfunction]
#[pyo3(signature = (panel, kernel="gaussian", bandwidth_scale=8.0, pairs="interior"))]
fn fit_hk(py: Python<'_>, panel: &Panel, kernel: &str, bandwidth_scale: f64, pairs: &str) -> PyResult<Fit> {
    let spec = kernel_spec(kernel, bandwidth_scale, pairs)?;
    wrap(py.detach(|| core_fit_hk(&panel.inner, &spec, &SolverConfig::default())))
}

/// Monte-Carlo run of a JSON design; returns one dict per (estimator, parameter).
#[pyfunction]
#[pyo3(signature = (design_json, estimators, threads=None))]
fn run_design<'py>(
    py: Python<'py>,
    design_json: &str,
    estimators: Vec<String>,
    threads: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = DesignSpec::from_json(design_json).map_err(to_py)?;
    let kinds = EstimatorKind::parse_list(&estimators.join(",")).map_err(to_py)?;
    let run = py
        .detach(|| core_run_design(&spec, &kinds, &HarnessOptions::default(), threads))
        .map_err(to_py)?;
    run.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("family", &r.family)?;
            d.set_item("n", r.n)?;
            d.set_item("T", r.t)?;
            d.set_item("gamma", r.gamma)?;
            d.set_item("estimator", r.estimator.as_str())?;
            d.set_item("parameter", &r.parameter)?;
            d.set_item("mean_bias", r.mean_bias)?;
            d.set_item("rmse", r.rmse)?;
            d.set_item("median_bias", r.median_bias)?;
            d.set_item("mae", r.mae)?;
            d.set_item("coverage95", r.coverage95)?;
            d.set_item("coverage80", r.coverage80)?;
            d.set_item("actual_ratio", r.actual_ratio)?;
            d.set_item("replications", r.replications)?;
            d.set_item("failures", r.failures)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn dynlogit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Panel>()?;
    m.add_class::<Fit>()?;
    m.add_function(wrap_pyfunction!(fit_basic, m)?)?;
    m.add_function(wrap_pyfunction!(fit_improved, m)?)?;
    m.add_function(wrap_pyfunction!(fit_two_lag, m)?)?;
    m.add_function(wrap_pyfunction!(fit_hk, m)?)?;
    m.add_function(wrap_pyfunction!(run_design, m)?)?;
    m.add("IdentificationError", m.py().get_type::<IdentificationError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    Ok(())
}
