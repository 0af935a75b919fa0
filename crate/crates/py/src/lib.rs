//! Python bindings: activations, data, samplers, ridge fits, kernels,
//! benchmarks and whole experiments. Arrays cross the boundary as nested
//! lists of floats.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nurf::benchmarks::{generate_dataset, make_benchmark, Sampling, BENCHMARKS};
use nurf::experiment::{run_experiment as run_cells, summarize, ExperimentConfig};
use nurf::kernels::mc_kernel as mc_kernel_estimate;
use nurf::regression::{cross_validate as fit_ridge, default_alpha_grid, eval_model, eval_model_gradient};
use nurf::samplers::{sample as sample_spec, sample_residual};

fn err(e: nurf::Error) -> PyErr {
    PyValueError::new_err(format!("{} ({})", e, e.tag()))
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_sampler(raw: &str) -> PyResult<nurf::SamplerSpec> {
    let json = if raw.trim_start().starts_with('{') { raw.to_string() } else { format!(r#"{{"kind":"{raw}"}}"#) };
    serde_json::from_str(&json).map_err(|e| PyValueError::new_err(format!("bad sampler `{raw}`: {e}")))
}

/// Activation of order `s` (1 sigmoid/Heaviside, 2 softplus/ReLU) and width
/// `delta`; `delta = 0` gives the nonsmooth limit.
#[pyclass(name = "Activation", from_py_object)]
#[derive(Clone)]
struct PyActivation {
    inner: nurf::ActivationSpec,
}

#[pymethods]
impl PyActivation {
    #[new]
    #[pyo3(signature = (s = 1, delta = 0.025))]
    fn new(s: u8, delta: f64) -> PyResult<Self> {
        Ok(PyActivation { inner: nurf::ActivationSpec::new(s, delta).map_err(err)? })
    }

    #[getter]
    fn s(&self) -> u8 {
        self.inner.s
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    fn __call__(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    fn __repr__(&self) -> String {
        format!("Activation(s={}, delta={})", self.inner.s, self.inner.delta)
    }
}

/// Points (rows) with targets and optional gradients and Hessians.
#[pyclass(name = "Dataset", from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: nurf::DataSet,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (x, y, radius = 1.0, gradients = None, hessians = None))]
    fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        radius: f64,
        gradients: Option<Vec<Vec<f64>>>,
        hessians: Option<Vec<Vec<Vec<f64>>>>,
    ) -> PyResult<Self> {
        let mut ds = nurf::DataSet::new(matrix(&x)?, DVector::from_vec(y), radius).map_err(err)?;
        if let Some(g) = gradients {
            ds = ds.with_gradients(matrix(&g)?).map_err(err)?;
        }
        if let Some(h) = hessians {
            let h = h.iter().map(|m| matrix(m)).collect::<PyResult<Vec<_>>>()?;
            ds = ds.with_hessians(h).map_err(err)?;
        }
        Ok(PyDataset { inner: ds })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows(self.inner.x())
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().iter().copied().collect()
    }

    #[getter]
    fn gradients(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.gradients().map(rows)
    }
}

/// Hidden weights: unit directions `a` and offsets `b`.
#[pyclass(name = "Weights", from_py_object)]
#[derive(Clone)]
struct PyWeights {
    inner: Vec<nurf::Neuron>,
}

#[pymethods]
impl PyWeights {
    #[new]
    fn new(directions: Vec<Vec<f64>>, offsets: Vec<f64>) -> PyResult<Self> {
        if directions.len() != offsets.len() {
            return Err(PyValueError::new_err("one offset per direction required"));
        }
        let inner = directions
            .into_iter()
            .zip(offsets)
            .map(|(a, b)| nurf::Neuron::new(DVector::from_vec(a), b).map_err(err))
            .collect::<PyResult<_>>()?;
        Ok(PyWeights { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn directions(&self) -> Vec<Vec<f64>> {
        self.inner.iter().map(|n| n.a.iter().copied().collect()).collect()
    }

    #[getter]
    fn offsets(&self) -> Vec<f64> {
        self.inner.iter().map(|n| n.b).collect()
    }
}

/// Fitted network with the regularization chosen on validation data.
#[pyclass(name = "Model")]
struct PyModel {
    inner: nurf::RidgeModel,
    report: nurf::FitReport,
}

#[pymethods]
impl PyModel {
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        Ok(eval_model(&self.inner, &matrix(&x)?).iter().copied().collect())
    }

    fn gradient(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&eval_model_gradient(&self.inner, &matrix(&x)?).map_err(err)?))
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.report.alpha
    }

    #[getter]
    fn outer_weights(&self) -> Vec<f64> {
        self.inner.c.iter().copied().collect()
    }

    #[getter]
    fn polynomial(&self) -> Vec<f64> {
        self.inner.poly.iter().copied().collect()
    }

    #[getter]
    fn train_rmse(&self) -> f64 {
        self.report.chosen_train_rmse()
    }

    #[getter]
    fn weights(&self) -> PyWeights {
        PyWeights { inner: self.inner.neurons.clone() }
    }
}

/// Draws `n` hidden weights. `sampler` is a kind name such as
/// `"nonlocal_gradient"` or a JSON object with hyperparameters. Residual
/// sampling fits against `val` (defaults to the training data).
#[pyfunction]
#[pyo3(signature = (sampler, data, n, activation, seed = 0, val = None))]
fn sample(
    sampler: &str,
    data: &PyDataset,
    n: usize,
    activation: &PyActivation,
    seed: u64,
    val: Option<&PyDataset>,
) -> PyResult<PyWeights> {
    let spec = parse_sampler(sampler)?;
    spec.validate().map_err(err)?;
    let act = activation.inner;
    let mut rng = nurf::RngStream::new(seed, 0);
    let ds = &data.inner;
    let neurons = match &spec {
        nurf::SamplerSpec::Residual { base, kappa, n0 } => {
            let val = val.map_or(ds, |v| &v.inner);
            let grid = default_alpha_grid();
            let fit = |ns: &[nurf::Neuron]| fit_ridge(ds, val, ns, &act, &grid, true);
            sample_residual(ds, base, n, *kappa, *n0, &act, fit, &mut rng).map_err(err)?.neurons
        }
        nurf::SamplerSpec::IntegralDensity { .. } => {
            let psi =
                nurf::PsiTable::for_radius(act.s as usize - 1, ds.dim(), act.delta, 2.0 * ds.radius()).map_err(err)?;
            sample_spec(&spec, ds, n, &act, Some(&psi), &mut rng).map_err(err)?.neurons
        }
        _ => sample_spec(&spec, ds, n, &act, None, &mut rng).map_err(err)?.neurons,
    };
    Ok(PyWeights { inner: neurons })
}

/// Ridge fit of the outer weights over an alpha grid (default: 25 values
/// from 1 to 1e-12).
#[pyfunction]
#[pyo3(signature = (train, val, weights, activation, alpha_grid = None, poly = true))]
fn cross_validate(
    train: &PyDataset,
    val: &PyDataset,
    weights: &PyWeights,
    activation: &PyActivation,
    alpha_grid: Option<Vec<f64>>,
    poly: bool,
) -> PyResult<PyModel> {
    let grid = alpha_grid.unwrap_or_else(default_alpha_grid);
    let (inner, report) =
        fit_ridge(&train.inner, &val.inner, &weights.inner, &activation.inner, &grid, poly).map_err(err)?;
    Ok(PyModel { inner, report })
}

/// Train, validation and test data for a benchmark, in standardized
/// coordinates.
#[pyfunction]
#[pyo3(signature = (name, d, k = 1000, seed = 0, grid = None, noise_sigma = None))]
fn benchmark_data(
    name: &str,
    d: usize,
    k: usize,
    seed: u64,
    grid: Option<bool>,
    noise_sigma: Option<f64>,
) -> PyResult<(PyDataset, PyDataset, PyDataset)> {
    let bench = make_benchmark(name, d).map_err(err)?;
    let sampling = match grid {
        Some(true) => Sampling::Grid,
        Some(false) => Sampling::UniformRandom,
        None => bench.default_sampling(),
    };
    let noise = noise_sigma.unwrap_or(bench.noise_sigma());
    let mut rng = nurf::RngStream::new(seed, 0);
    let s = generate_dataset(&bench, k, sampling, noise, &mut rng).map_err(err)?;
    Ok((PyDataset { inner: s.train }, PyDataset { inner: s.val }, PyDataset { inner: s.test }))
}

/// Names and supported dimensions.
#[pyfunction]
fn list_benchmarks() -> Vec<(String, String)> {
    BENCHMARKS.iter().map(|(n, d)| (n.to_string(), d.to_string())).collect()
}

/// Monte Carlo estimate `(value, stderr)` of the limit kernel of `sampler`.
#[pyfunction]
#[pyo3(signature = (x, xp, data, activation, n_samples = 100_000, sampler = "uniform", seed = 0))]
fn mc_kernel(
    x: Vec<f64>,
    xp: Vec<f64>,
    data: &PyDataset,
    activation: &PyActivation,
    n_samples: usize,
    sampler: &str,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let spec = parse_sampler(sampler)?;
    let mut rng = nurf::RngStream::new(seed, 0);
    let est = mc_kernel_estimate(&x, &xp, &spec, &data.inner, &activation.inner, n_samples, &mut rng).map_err(err)?;
    Ok((est.value, est.stderr))
}

/// Tabulated weight kernel of derivative order `order` in dimension `dim`,
/// wide enough for data of radius `radius`.
#[pyclass(name = "PsiTable")]
struct PyPsiTable {
    inner: nurf::PsiTable,
}

#[pymethods]
impl PyPsiTable {
    #[new]
    #[pyo3(signature = (order, dim, delta, radius = 2.0))]
    fn new(order: usize, dim: usize, delta: f64, radius: f64) -> PyResult<Self> {
        Ok(PyPsiTable { inner: nurf::PsiTable::for_radius(order, dim, delta, radius).map_err(err)? })
    }

    fn __call__(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    fn moment(&self, k: u32) -> f64 {
        self.inner.moment(k)
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.half_width()
    }
}

type DictList<'py> = Vec<Bound<'py, PyDict>>;

/// Runs an experiment config given as a JSON string and returns
/// `(rows, summary)` as lists of dicts.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<(DictList<'py>, DictList<'py>)> {
    let value: serde_json::Value = serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let cfg = ExperimentConfig::from_value(value, &[]).map_err(err)?;
    let out = py.detach(|| run_cells(&cfg)).map_err(err)?;
    let summary = summarize(&out.rows);
    let to_dicts = |items: Vec<serde_json::Value>| -> PyResult<DictList<'py>> {
        items
            .into_iter()
            .map(|v| {
                let d = PyDict::new(py);
                if let serde_json::Value::Object(map) = v {
                    for (k, v) in map {
                        match v {
                            serde_json::Value::Null => d.set_item(k, py.None())?,
                            serde_json::Value::String(s) => d.set_item(k, s)?,
                            serde_json::Value::Number(n) if n.is_u64() => d.set_item(k, n.as_u64())?,
                            serde_json::Value::Number(n) => d.set_item(k, n.as_f64())?,
                            other => d.set_item(k, other.to_string())?,
                        }
                    }
                }
                Ok(d)
            })
            .collect()
    };
    let rows = to_dicts(out.rows.iter().map(|r| serde_json::to_value(r).expect("rows serialize")).collect())?;
    let summary = to_dicts(summary.iter().map(|r| serde_json::to_value(r).expect("rows serialize")).collect())?;
    Ok((rows, summary))
}

#[pymodule]
fn pynurf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyActivation>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyWeights>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPsiTable>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_data, m)?)?;
    m.add_function(wrap_pyfunction!(list_benchmarks, m)?)?;
    m.add_function(wrap_pyfunction!(mc_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
