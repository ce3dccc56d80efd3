//! Python bindings: tensors, designs, fitting, evaluation and bounds.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bayestensor::bounds::{self, ProblemProfile};
use bayestensor::harness::{self, FitConfig};
use bayestensor::sampler::{ChainConfig, Rejection};
use bayestensor::{designs, Error, Hyperparams};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        4 => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn shape(dims: Vec<usize>) -> PyResult<bayestensor::Shape> {
    bayestensor::Shape::new(dims).map_err(to_py)
}

/// Dense tensor, flat values in last-index-fastest order.
#[pyclass(name = "DenseTensor", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDenseTensor(bayestensor::DenseTensor);

#[pymethods]
impl PyDenseTensor {
    #[new]
    fn new(dims: Vec<usize>, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self(bayestensor::DenseTensor::new(shape(dims)?, values).map_err(to_py)?))
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.0.shape().dims().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn get(&self, index: Vec<usize>) -> PyResult<f64> {
        self.0.get(&index).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }

    fn __repr__(&self) -> String {
        format!("DenseTensor(dims={:?})", self.0.shape().dims())
    }
}

/// CP factors. `factors[k]` is the row-major `rank x dims[k]` matrix of mode `k`.
#[pyclass(name = "CpFactors", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCpFactors(bayestensor::CpFactors);

#[pymethods]
impl PyCpFactors {
    #[new]
    fn new(dims: Vec<usize>, rank: usize, factors: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(bayestensor::CpFactors::new(shape(dims)?, rank, factors).map_err(to_py)?))
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.0.shape().dims().to_vec()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[getter]
    fn factors(&self) -> Vec<Vec<f64>> {
        self.0.factors().to_vec()
    }

    fn element(&self, index: Vec<usize>) -> PyResult<f64> {
        self.0.element(&index).map_err(to_py)
    }

    fn compose(&self) -> PyDenseTensor {
        PyDenseTensor(self.0.compose())
    }

    fn max2_upper_bound(&self) -> f64 {
        self.0.max2_upper_bound()
    }

    fn __repr__(&self) -> String {
        format!("CpFactors(dims={:?}, rank={})", self.0.shape().dims(), self.0.rank())
    }
}

/// Observations `y_i = <X_i, A> + noise` with sparse measurements.
#[pyclass(name = "DesignSet", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDesignSet(bayestensor::DesignSet);

#[pymethods]
impl PyDesignSet {
    /// Element-indicator design from index tuples and responses.
    #[staticmethod]
    fn completion(dims: Vec<usize>, indices: Vec<Vec<usize>>, y: Vec<f64>) -> PyResult<Self> {
        if indices.len() != y.len() {
            return Err(PyValueError::new_err("indices and y differ in length"));
        }
        let shape = shape(dims)?;
        let obs = indices
            .into_iter()
            .zip(y)
            .map(|(index, y)| {
                Ok(bayestensor::Observation {
                    x: bayestensor::SparseMeasurement::indicator(shape.clone(), index)?,
                    y,
                })
            })
            .collect::<bayestensor::Result<Vec<_>>>()
            .map_err(to_py)?;
        Ok(Self(bayestensor::DesignSet::new(shape, obs).map_err(to_py)?))
    }

    /// General design: each measurement is a list of `(index, weight)` pairs.
    #[staticmethod]
    fn sparse(dims: Vec<usize>, measurements: Vec<Vec<(Vec<usize>, f64)>>, y: Vec<f64>) -> PyResult<Self> {
        if measurements.len() != y.len() {
            return Err(PyValueError::new_err("measurements and y differ in length"));
        }
        let shape = shape(dims)?;
        let obs = measurements
            .into_iter()
            .zip(y)
            .map(|(entries, y)| {
                Ok(bayestensor::Observation {
                    x: bayestensor::SparseMeasurement::new(shape.clone(), entries)?,
                    y,
                })
            })
            .collect::<bayestensor::Result<Vec<_>>>()
            .map_err(to_py)?;
        Ok(Self(bayestensor::DesignSet::new(shape, obs).map_err(to_py)?))
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.0.shape().dims().to_vec()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.0.responses().collect()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind() {
            designs::DesignKind::ElementIndicator => "element_indicator",
            designs::DesignKind::TaskSlice => "task_slice",
            designs::DesignKind::GenericSparse => "generic_sparse",
        }
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Posterior summary of one or more merged chains.
#[pyclass(name = "Posterior", frozen, skip_from_py_object)]
pub struct PyPosterior(bayestensor::PosteriorSummary);

#[pymethods]
impl PyPosterior {
    #[getter]
    fn mean(&self) -> Option<PyDenseTensor> {
        self.0.mean.clone().map(PyDenseTensor)
    }

    #[getter]
    fn rank_histogram(&self) -> BTreeMap<usize, u64> {
        self.0.rank_histogram.clone()
    }

    #[getter]
    fn rank_mode(&self) -> Option<usize> {
        self.0.rank_mode()
    }

    #[getter]
    fn n_kept(&self) -> u64 {
        self.0.n_kept as u64
    }

    #[getter]
    fn n_accepted(&self) -> u64 {
        self.0.n_accepted as u64
    }

    #[getter]
    fn rejection_rate(&self) -> f64 {
        self.0.rejection_rate
    }
}

/// Uniform `[-1, 1]` truth of rank `d_star` and a completion design with `n` noisy entries.
#[pyfunction]
#[pyo3(signature = (dims, d_star, n, noise_sigma=1.0, seed=0))]
fn generate(dims: Vec<usize>, d_star: usize, n: usize, noise_sigma: f64, seed: u64) -> PyResult<(PyCpFactors, PyDesignSet)> {
    let data = harness::generate_dataset(&dims, d_star, n, noise_sigma, seed).map_err(to_py)?;
    Ok((PyCpFactors(data.truth), PyDesignSet(data.design)))
}

fn rejection(kind: &str, radius: Option<f64>) -> PyResult<Rejection> {
    harness::parse_rejection(kind, radius).map_err(to_py)
}

/// Runs the sampler and returns the merged posterior summary.
#[pyfunction]
#[pyo3(signature = (
    design, *, sigma=1.0, sigma_p=5.0, xi=0.5, d_max=10, radius=None, rejection_kind=None,
    n_samples=500, burn_in=None, thin=1, rank_move_prob=0.2, chains=1, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    design: &PyDesignSet,
    sigma: f64,
    sigma_p: f64,
    xi: f64,
    d_max: usize,
    radius: Option<f64>,
    rejection_kind: Option<&str>,
    n_samples: usize,
    burn_in: Option<usize>,
    thin: usize,
    rank_move_prob: f64,
    chains: usize,
    seed: u64,
) -> PyResult<PyPosterior> {
    let kind = rejection_kind.unwrap_or(if radius.is_some() { "inf" } else { "none" });
    let cfg = FitConfig {
        hp: Hyperparams { sigma, sigma_p, xi, d_max, radius },
        chain: ChainConfig {
            burn_in: burn_in.unwrap_or(n_samples),
            n_samples,
            thin,
            rank_move_prob,
            rejection: rejection(kind, radius)?,
            probes: Vec::new(),
        },
        chains,
        seed,
        gate: Default::default(),
    };
    cfg.hp.validate().map_err(to_py)?;
    cfg.chain.validate().map_err(to_py)?;
    let design = design.0.clone();
    let out = py.detach(move || harness::fit(&design, &cfg)).map_err(to_py)?;
    Ok(PyPosterior(out.summary))
}

/// In-sample, population and scaled squared errors of `mean` against `truth`.
#[pyfunction]
fn evaluate(mean: &PyDenseTensor, truth: &PyDenseTensor, design: &PyDesignSet, d_star: usize) -> PyResult<BTreeMap<&'static str, f64>> {
    let a = harness::evaluate(&mean.0, &truth.0, &design.0, d_star).map_err(to_py)?;
    Ok(BTreeMap::from([
        ("in_sample", a.in_sample),
        ("out_sample", a.out_sample),
        ("scaled_in", a.scaled_in),
        ("scaled_out", a.scaled_out),
    ]))
}

/// Rate-bound constants and values for a problem profile.
#[pyfunction]
#[pyo3(signature = (dims, n, d_star, frob_sq_sum, max2, *, sigma_p=5.0, xi=0.5, d_max=None, radius=None))]
#[allow(clippy::too_many_arguments)]
fn theorem_bounds(
    dims: Vec<usize>,
    n: usize,
    d_star: usize,
    frob_sq_sum: f64,
    max2: f64,
    sigma_p: f64,
    xi: f64,
    d_max: Option<usize>,
    radius: Option<f64>,
) -> PyResult<BTreeMap<&'static str, Option<f64>>> {
    let profile = ProblemProfile {
        dims,
        n,
        d_star,
        frob_sq_sum,
        max2,
        hp: Hyperparams {
            sigma: 1.0,
            sigma_p,
            xi,
            d_max: d_max.unwrap_or(2 * d_star),
            radius,
        },
    };
    profile.validate().map_err(to_py)?;
    let r = harness::profile_report(&profile).map_err(to_py)?;
    Ok(BTreeMap::from([
        ("xi_1", Some(r.xi_at[0].1)),
        ("c_nk", Some(r.c_nk)),
        ("c_eps", Some(r.c_eps)),
        ("t1", Some(r.t1_bound)),
        ("t2", r.t2_bound),
        ("t3", r.t3_bound),
    ]))
}

#[pyfunction]
fn chi2_tail_bounds(k: usize, x: f64) -> PyResult<(f64, f64)> {
    bounds::chi2_tail_bounds(k, x).map_err(to_py)
}

#[pyfunction]
fn tail_integral(a: f64, c: f64, k: usize) -> PyResult<f64> {
    bounds::tail_integral_closed_form(a, c, k).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "bayestensor")]
fn bayestensor_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDenseTensor>()?;
    m.add_class::<PyCpFactors>()?;
    m.add_class::<PyDesignSet>()?;
    m.add_class::<PyPosterior>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_tail_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(tail_integral, m)?)?;
    Ok(())
}
