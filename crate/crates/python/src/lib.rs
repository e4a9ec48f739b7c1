//! Python bindings for the `brsl` estimator.
//!
//! Arrays cross the boundary as nested lists of floats; structured results
//! come back as plain dicts built from the same JSON the CLI writes.

use std::sync::Arc;

use brsl::analyze::{self, contributions, render_equations, render_equations_with_uncertainty};
use brsl::gaussian::{divide_gaussian, divide_information, multiply_information, InformationForm, Moment1D};
use brsl::io::StepRecord;
use brsl::monitor;
use brsl::posterior::{HorseshoeMode, HorseshoeState, NoiseModel};
use brsl::recursion::{RecursionConfig, RecursionState, ViolationPolicy};
use brsl::simulate::{
    gen_sparse_regression, simulate_lorenz, LorenzConfig, NoisePlacement, SparseRegressionConfig,
};
use brsl::{BrslError, DictionarySpec, Sample};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: BrslError) -> PyErr {
    match e {
        BrslError::Io(_) | BrslError::NonFiniteState(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse<T: serde::de::DeserializeOwned>(name: &str, value: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {name} {value:?}")))
}

/// Zips timestamps, states and observations into samples.
fn samples(t: &[f64], x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Vec<Sample>, BrslError> {
    if t.len() != x.len() || t.len() != y.len() {
        return Err(BrslError::DimensionMismatch(format!(
            "got {} timestamps, {} states and {} observations",
            t.len(),
            x.len(),
            y.len()
        )));
    }
    Ok(t.iter()
        .zip(x)
        .zip(y)
        .map(|((t, x), y)| Sample::new(*t, x.clone(), y.clone()))
        .collect())
}

fn square(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, BrslError> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(BrslError::DimensionMismatch("matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn info_form(s: &[Vec<f64>], b: Vec<f64>) -> Result<InformationForm, BrslError> {
    InformationForm::new(square(s)?, DVector::from_vec(b))
}

type InfoParts = (Vec<Vec<f64>>, Vec<f64>);

fn info_parts(f: InformationForm) -> InfoParts {
    let (s, b) = f.into_parts();
    let rows = s.row_iter().map(|r| r.iter().copied().collect()).collect();
    (rows, b.iter().copied().collect())
}

/// Polynomial dictionary over the state.
#[pyclass(name = "Dictionary", module = "pybrsl", frozen)]
struct PyDictionary {
    inner: Arc<DictionarySpec>,
}

#[pymethods]
impl PyDictionary {
    #[new]
    #[pyo3(signature = (state_dim, degree, bias = false))]
    fn new(state_dim: usize, degree: usize, bias: bool) -> PyResult<Self> {
        let inner = DictionarySpec::polynomial(state_dim, degree, bias).map_err(to_py)?;
        Ok(Self { inner: Arc::new(inner) })
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn n_terms(&self) -> usize {
        self.inner.n_terms()
    }

    fn row(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.build_row(&state).map_err(to_py)?.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Dictionary({})", self.inner.labels().join(", "))
    }
}

/// Windowed recursive estimator, initialised from a warmup window.
#[pyclass(name = "Estimator", module = "pybrsl")]
struct PyEstimator {
    state: RecursionState,
}

#[pymethods]
impl PyEstimator {
    #[new]
    #[pyo3(signature = (
        t, x, y, *, degree = 1, bias = false, window = None, batch_in = 10, forget = None, xi = 1.0,
        policy = "warn", theta_mode = "adaptive", noise_variance = 0.1, local_scale = 1.0,
        global_scale = 1.0, refresh_every = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        t: Vec<f64>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        degree: usize,
        bias: bool,
        window: Option<usize>,
        batch_in: usize,
        forget: Option<usize>,
        xi: f64,
        policy: &str,
        theta_mode: &str,
        noise_variance: f64,
        local_scale: f64,
        global_scale: f64,
        refresh_every: Option<usize>,
    ) -> PyResult<Self> {
        let warmup = samples(&t, &x, &y).map_err(to_py)?;
        let first = warmup.first().ok_or_else(|| PyValueError::new_err("warmup is empty"))?;
        let (n_x, n_y) = (first.state.len(), first.observation.len());
        let spec = Arc::new(DictionarySpec::polynomial(n_x, degree, bias).map_err(to_py)?);
        let config = RecursionConfig {
            window: window.unwrap_or(warmup.len()),
            batch_in,
            forget: forget.unwrap_or(batch_in),
            forgetting_factor: xi,
            violation_policy: parse::<ViolationPolicy>("policy", policy)?,
            horseshoe_mode: parse::<HorseshoeMode>("theta_mode", theta_mode)?,
            refresh_every,
            ..Default::default()
        };
        let noise = NoiseModel::isotropic(n_y, noise_variance).map_err(to_py)?;
        let hs = HorseshoeState::uniform(spec.n_terms(), n_y, local_scale, global_scale).map_err(to_py)?;
        let state = RecursionState::init(spec, config, &warmup, noise, hs).map_err(to_py)?;
        Ok(Self { state })
    }

    /// Advances by one batch and returns the step record as a dict.
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        t: Vec<f64>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let batch = samples(&t, &x, &y).map_err(to_py)?;
        let outcome = self.state.step(batch.clone()).map_err(to_py)?;
        let record = StepRecord::new(&outcome, &self.state.snapshot(), &batch).map_err(to_py)?;
        json(py, &record)
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.state.steps()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.state.snapshot().snapshot().labels
    }

    /// Posterior means, one list per output.
    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.state.snapshot().snapshot().means
    }

    #[getter]
    fn std_devs(&self) -> Vec<Vec<f64>> {
        self.state.snapshot().snapshot().std_devs
    }

    /// Predictive mean and variance per output at `state`.
    fn predict(&self, state: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.state.snapshot().predict(&state).map_err(to_py)
    }

    #[pyo3(signature = (threshold = 0.1, uncertainty = false))]
    fn equations(&self, threshold: f64, uncertainty: bool) -> PyResult<Vec<String>> {
        let post = self.state.snapshot();
        if uncertainty {
            render_equations_with_uncertainty(&post, threshold).map_err(to_py)
        } else {
            render_equations(&post, threshold).map_err(to_py)
        }
    }

    /// Per-term contributions at `state`; the centered variant uses the
    /// current window as background.
    fn contributions<'py>(&self, py: Python<'py>, state: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let window = self.state.window_samples();
        let background: Vec<&[f64]> = window.iter().map(|s| s.state.as_slice()).collect();
        let rec = contributions(&self.state.snapshot(), &state, &background).map_err(to_py)?;
        json(py, &rec)
    }
}

#[pyfunction]
#[pyo3(signature = (m = 50, n = 600, nonzero_fraction = 0.3, noise_variance = 0.1, switch_at = None, seed = 0))]
fn simulate_case1<'py>(
    py: Python<'py>,
    m: usize,
    n: usize,
    nonzero_fraction: f64,
    noise_variance: f64,
    switch_at: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SparseRegressionConfig {
        dim_m: m,
        n_samples: n,
        nonzero_fraction,
        noise_variance,
        switch_at,
        seed,
        ..Default::default()
    };
    let data = gen_sparse_regression(&cfg).map_err(to_py)?;
    dataset(py, &data.samples(), &data.truth)
}

#[pyfunction]
#[pyo3(signature = (t_end = 100.0, dt = 0.01, noise_std = 1.0, noise_placement = "targets", seed = 0))]
fn simulate_lorenz_py<'py>(
    py: Python<'py>,
    t_end: f64,
    dt: f64,
    noise_std: f64,
    noise_placement: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = LorenzConfig {
        t_end,
        dt,
        process_noise_std: [noise_std; 3],
        noise_placement: parse::<NoisePlacement>("noise_placement", noise_placement)?,
        seed,
        ..Default::default()
    };
    let data = simulate_lorenz(&cfg).map_err(to_py)?;
    dataset(py, &data.samples, &data.truth)
}

#[derive(Serialize)]
struct Dataset<'a> {
    t: Vec<f64>,
    x: Vec<&'a [f64]>,
    y: Vec<&'a [f64]>,
    truth: &'a brsl::simulate::CoefficientTrajectory,
}

fn dataset<'py>(
    py: Python<'py>,
    samples: &[Sample],
    truth: &brsl::simulate::CoefficientTrajectory,
) -> PyResult<Bound<'py, PyAny>> {
    json(
        py,
        &Dataset {
            t: samples.iter().map(|s| s.timestamp).collect(),
            x: samples.iter().map(|s| s.state.as_slice()).collect(),
            y: samples.iter().map(|s| s.observation.as_slice()).collect(),
            truth,
        },
    )
}

/// Quotient of two scalar Gaussians given as (mean, variance).
#[pyfunction]
fn gaussian_divide(num: (f64, f64), den: (f64, f64)) -> PyResult<(f64, f64)> {
    let q = divide_gaussian(
        &Moment1D::new(num.0, num.1).map_err(to_py)?,
        &Moment1D::new(den.0, den.1).map_err(to_py)?,
    )
    .map_err(to_py)?;
    Ok((q.mean(), q.variance()))
}

#[pyfunction]
fn information_multiply(a: (Vec<Vec<f64>>, Vec<f64>), b: (Vec<Vec<f64>>, Vec<f64>)) -> PyResult<InfoParts> {
    let a = info_form(&a.0, a.1).map_err(to_py)?;
    let b = info_form(&b.0, b.1).map_err(to_py)?;
    Ok(info_parts(multiply_information(&a, &b).map_err(to_py)?))
}

#[pyfunction]
fn information_divide(num: (Vec<Vec<f64>>, Vec<f64>), den: (Vec<Vec<f64>>, Vec<f64>)) -> PyResult<InfoParts> {
    let num = info_form(&num.0, num.1).map_err(to_py)?;
    let den = info_form(&den.0, den.1).map_err(to_py)?;
    Ok(info_parts(divide_information(&num, &den).map_err(to_py)?))
}

/// Classification of swapping `old` rows for `new` rows.
#[pyfunction]
fn utility<'py>(
    py: Python<'py>,
    dictionary: &PyDictionary,
    new: Vec<Vec<f64>>,
    old: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    json(py, &monitor::utility(&dictionary.inner, &new, &old).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (dictionary, states, alpha1 = 0.0))]
fn check_pe<'py>(
    py: Python<'py>,
    dictionary: &PyDictionary,
    states: Vec<Vec<f64>>,
    alpha1: f64,
) -> PyResult<Bound<'py, PyAny>> {
    json(py, &monitor::check_pe(&dictionary.inner, &states, alpha1).map_err(to_py)?)
}

#[pyfunction]
fn tracking_bound(delta: f64, xi: f64, h: f64) -> PyResult<f64> {
    analyze::tracking_bound(delta, xi, h).map_err(to_py)
}

#[pymodule]
fn pybrsl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyEstimator>()?;
    m.add_function(wrap_pyfunction!(simulate_case1, m)?)?;
    m.add("simulate_lorenz", wrap_pyfunction!(simulate_lorenz_py, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_divide, m)?)?;
    m.add_function(wrap_pyfunction!(information_multiply, m)?)?;
    m.add_function(wrap_pyfunction!(information_divide, m)?)?;
    m.add_function(wrap_pyfunction!(utility, m)?)?;
    m.add_function(wrap_pyfunction!(check_pe, m)?)?;
    m.add_function(wrap_pyfunction!(tracking_bound, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_require_matching_lengths() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![vec![0.0], vec![0.0]];
        assert_eq!(samples(&[0.0, 1.0], &x, &y).unwrap().len(), 2);
        assert!(samples(&[0.0], &x, &y).is_err());
    }

    #[test]
    fn information_parts_roundtrip() {
        let s = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
        let f = info_form(&s, vec![1.0, -1.0]).unwrap();
        assert_eq!(info_parts(f), (s, vec![1.0, -1.0]));
        assert!(info_form(&[vec![1.0, 0.0]], vec![0.0]).is_err());
    }
}
