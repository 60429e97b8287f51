//! Python bindings: kernels, Nadaraya-Watson estimates, bandwidth selection,
//! the simulated cluster and fitted grid models.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use gpa_core::bandwidth::{self, CandidateSet, WeightFn};
use gpa_core::bench::{derive_seed, plan_for, STREAM_PILOT};
use gpa_core::cluster::{BandwidthMethod, Cluster, PartitionStrategy, PhaseCost, Strategy, TrainedModel};
use gpa_core::gpa::{self as grid, design_grid, io, Geometry, Grid, MultiGrid, Support};
use gpa_core::synth::{h_opt, SimSetting};
use gpa_core::{moments, GpaError, KernelSpec, Sample};

fn to_py(e: GpaError) -> PyErr {
    match e {
        GpaError::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for Result<T, GpaError> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Covariates as a float, a flat list (one dimension) or a list of rows.
#[derive(FromPyObject)]
enum Points {
    Scalar(f64),
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl Points {
    fn flatten(self) -> PyResult<(Vec<f64>, usize)> {
        match self {
            Points::Scalar(v) => Ok((vec![v], 1)),
            Points::Flat(v) => Ok((v, 1)),
            Points::Rows(rows) => {
                let dim = rows.first().map_or(1, Vec::len);
                if rows.iter().any(|r| r.len() != dim) {
                    return Err(PyValueError::new_err("rows have different lengths"));
                }
                Ok((rows.concat(), dim))
            }
        }
    }
}

fn sample_from(x: Points, y: Vec<f64>) -> PyResult<Sample> {
    let (x, dim) = x.flatten()?;
    Sample::new(x, y, dim).py()
}

fn kernel_from(name: &str) -> PyResult<KernelSpec> {
    name.parse().py()
}

fn partition_from(name: &str) -> PyResult<PartitionStrategy> {
    match name {
        "random" => Ok(PartitionStrategy::Random),
        "sorted" => Ok(PartitionStrategy::SortedByCovariate),
        other => Err(PyValueError::new_err(format!("unknown partition `{other}` (random or sorted)"))),
    }
}

/// Phase counters by name.
type Ledger = BTreeMap<&'static str, u64>;

fn ledger(cost: &PhaseCost) -> Ledger {
    BTreeMap::from([
        ("values_sent_to_coordinator", cost.values_sent_to_coordinator),
        ("values_broadcast_to_workers", cost.values_broadcast_to_workers),
        ("worker_kernel_evals", cost.worker_kernel_evals),
        ("coordinator_ops", cost.coordinator_ops),
        ("round_trips", cost.round_trips),
    ])
}

/// A compact polynomial kernel.
#[pyclass(name = "Kernel", frozen, module = "gpa")]
struct PyKernel {
    inner: KernelSpec,
}

#[pymethods]
impl PyKernel {
    /// `epanechnikov`, `fourth-order` or `poly:[c0,c1,...]`.
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: kernel_from(name)?,
        })
    }

    fn __call__(&self, u: f64) -> f64 {
        self.inner.eval(u)
    }

    #[getter]
    fn order(&self) -> u32 {
        self.inner.order()
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    /// `int u^r K(u) du`.
    fn moment(&self, r: u32) -> f64 {
        self.inner.moment(r)
    }

    fn __repr__(&self) -> String {
        format!("Kernel('{}')", self.inner.id())
    }
}

/// Cached grid values answering queries by interpolation.
#[pyclass(name = "GpaModel", frozen, module = "gpa")]
struct PyGpaModel {
    inner: grid::GpaModel,
}

#[pymethods]
impl PyGpaModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::load(path).py()?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::from_str(text).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::save(&self.inner, path).py()
    }

    fn to_json(&self) -> PyResult<String> {
        io::to_string(&self.inner).py()
    }

    /// Prediction at one point (a float, or a list for lattice models);
    /// `None` where the estimate is undefined.
    fn predict(&self, x: Points) -> PyResult<Option<f64>> {
        let (x, _) = x.flatten()?;
        Ok(self.inner.predict(&x).py()?.value)
    }

    fn predict_batch(&self, points: Points) -> PyResult<Vec<Option<f64>>> {
        let (x, _) = points.flatten()?;
        Ok(self.inner.predict_batch(&x).py()?.into_iter().map(|p| p.value).collect())
    }

    /// Same grid values with another interpolation order.
    fn with_order(&self, order: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_order(order).py()?,
        })
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn segments(&self) -> usize {
        self.inner.geometry().axis().segments()
    }

    #[getter]
    fn values(&self) -> Vec<Option<f64>> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn grid_points(&self) -> Vec<f64> {
        self.inner.geometry().points()
    }

    fn __repr__(&self) -> String {
        format!(
            "GpaModel(dim={}, points={}, h={}, order={})",
            self.inner.dim(),
            self.inner.values().len(),
            self.inner.bandwidth(),
            self.inner.order()
        )
    }
}

/// A sample split across simulated machines.
#[pyclass(name = "Cluster", frozen, module = "gpa")]
struct PyCluster {
    inner: Cluster,
    sample: Sample,
}

#[pymethods]
impl PyCluster {
    #[new]
    #[pyo3(signature = (x, y, machines, partition = "random", seed = 0))]
    fn new(x: Points, y: Vec<f64>, machines: usize, partition: &str, seed: u64) -> PyResult<Self> {
        let sample = sample_from(x, y)?;
        let plan = plan_for(partition_from(partition)?, &sample, machines, seed).py()?;
        Ok(Self {
            inner: Cluster::new(&sample, &plan).py()?.with_parallel(true),
            sample,
        })
    }

    #[getter]
    fn machines(&self) -> usize {
        self.inner.machines()
    }

    /// Fits grid values; returns the model and the training ledger.
    #[pyo3(signature = (h, kernel = "epanechnikov", order = 1, grid_multiplier = 1.0, segments = None, lo = None, hi = None))]
    #[allow(clippy::too_many_arguments)]
    fn fit_gpa(
        &self,
        py: Python<'_>,
        h: f64,
        kernel: &str,
        order: usize,
        grid_multiplier: f64,
        segments: Option<usize>,
        lo: Option<f64>,
        hi: Option<f64>,
    ) -> PyResult<(PyGpaModel, Ledger)> {
        let kernel = kernel_from(kernel)?;
        let (dlo, dhi) = (0..self.sample.dim())
            .map(|s| self.sample.range(s))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, u)| (a.min(l), b.max(u)));
        let (lo, hi) = (lo.unwrap_or(dlo), hi.unwrap_or(dhi));
        let n = self.sample.len() as u64;
        let (model, cost) = py
            .detach(|| {
                let axis = match segments {
                    Some(j) => Grid::compact(lo, hi, j)?,
                    None => design_grid(n, h, Support::Compact { lo, hi }, grid_multiplier)?,
                };
                let geometry: Geometry = match self.sample.dim() {
                    1 => axis.into(),
                    p => MultiGrid::new(axis, p)?.into(),
                };
                self.inner.run_train(Strategy::Gpa, &kernel, h, Some((geometry, order)))
            })
            .py()?;
        let TrainedModel::Gpa(inner) = model else {
            unreachable!("GPA training returns a grid model");
        };
        Ok((PyGpaModel { inner }, ledger(&cost)))
    }

    /// Predictions of the `global` or `oneshot` strategy at `queries`, with
    /// the prediction ledger.
    #[pyo3(signature = (strategy, h, queries, kernel = "epanechnikov"))]
    fn predict(
        &self,
        py: Python<'_>,
        strategy: &str,
        h: f64,
        queries: Points,
        kernel: &str,
    ) -> PyResult<(Vec<Option<f64>>, Ledger)> {
        let strategy = match strategy {
            "global" => Strategy::GlobalAssembled,
            "oneshot" => Strategy::OneShot,
            other => return Err(PyValueError::new_err(format!("unknown strategy `{other}` (global or oneshot)"))),
        };
        let kernel = kernel_from(kernel)?;
        let (q, _) = queries.flatten()?;
        let (pred, cost) = py
            .detach(|| {
                let (model, _) = self.inner.run_train(strategy, &kernel, h, None)?;
                self.inner.run_predict(&model, &q)
            })
            .py()?;
        Ok((pred, ledger(&cost)))
    }

    /// One-shot or pilot CV bandwidth.
    #[pyo3(signature = (method = "oneshot", kernel = "epanechnikov", pilot_size = 1000, seed = 0, trim = 0.05, candidates = 25, ch = 8.0))]
    #[allow(clippy::too_many_arguments)]
    fn select_bandwidth(
        &self,
        py: Python<'_>,
        method: &str,
        kernel: &str,
        pilot_size: usize,
        seed: u64,
        trim: f64,
        candidates: usize,
        ch: f64,
    ) -> PyResult<f64> {
        let method = match method {
            "oneshot" => BandwidthMethod::OneShotCv,
            "pilot" => BandwidthMethod::PilotCv {
                n0: pilot_size,
                seed: derive_seed(seed, STREAM_PILOT),
            },
            other => return Err(PyValueError::new_err(format!("unknown method `{other}` (oneshot or pilot)"))),
        };
        let kernel = kernel_from(kernel)?;
        let weight = WeightFn::new(trim, None).py()?;
        let set = CandidateSet {
            n_ref: self.sample.len(),
            c_h: ch,
            count: candidates,
            exponent: 1.0 / (self.sample.dim() as f64 + 4.0),
        };
        let (out, _) = py.detach(|| self.inner.run_bandwidth(method, &kernel, &weight, &set)).py()?;
        Ok(out.bandwidth)
    }
}

/// Single-machine Nadaraya-Watson estimate at each query.
#[pyfunction]
#[pyo3(signature = (x, y, queries, h, kernel = "epanechnikov"))]
fn nw_estimate(x: Points, y: Vec<f64>, queries: Points, h: f64, kernel: &str) -> PyResult<Vec<Option<f64>>> {
    let sample = sample_from(x, y)?;
    let kernel = kernel_from(kernel)?;
    let (q, _) = queries.flatten()?;
    let stats = moments::local_moments(&sample, &q, &kernel, h).py()?;
    Ok(moments::nw_from_stats(&stats))
}

/// Leave-one-out CV score at bandwidth `h`.
#[pyfunction]
#[pyo3(signature = (x, y, h, kernel = "epanechnikov", trim = 0.05))]
fn cv_score(x: Points, y: Vec<f64>, h: f64, kernel: &str, trim: f64) -> PyResult<f64> {
    let sample = sample_from(x, y)?;
    let weight = WeightFn::new(trim, None).py()?;
    Ok(bandwidth::cv_score(&sample, h, &kernel_from(kernel)?, &weight).py()?.score)
}

/// Simulated sample `(x, y, mu)` from setting `1`-`4` or `mu3`.
#[pyfunction]
#[pyo3(signature = (setting, n, seed = 0, sigma = None))]
fn simulate(setting: &str, n: usize, seed: u64, sigma: Option<f64>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut s: SimSetting = setting.parse().py()?;
    if let Some(sd) = sigma {
        s = s.with_sigma(sd).py()?;
    }
    let data = s.generate(n, seed).py()?;
    Ok((data.sample.x().to_vec(), data.sample.y().to_vec(), data.truth))
}

/// AMISE-optimal bandwidth of a simulation setting.
#[pyfunction]
#[pyo3(signature = (setting, n, kernel = "epanechnikov", trim = 0.05))]
fn optimal_bandwidth(setting: &str, n: u64, kernel: &str, trim: f64) -> PyResult<f64> {
    let s: SimSetting = setting.parse().py()?;
    let weight = WeightFn::new(trim, Some(s.law.support())).py()?;
    h_opt(&s, &kernel_from(kernel)?, &weight, n).py()
}

/// Segment count of the designed grid on `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (n, h, lo = 0.0, hi = 1.0, multiplier = 1.0))]
fn grid_segments(n: u64, h: f64, lo: f64, hi: f64, multiplier: f64) -> PyResult<usize> {
    Ok(design_grid(n, h, Support::Compact { lo, hi }, multiplier).py()?.segments())
}

#[pymodule]
fn gpa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyGpaModel>()?;
    m.add_class::<PyCluster>()?;
    m.add_function(wrap_pyfunction!(nw_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(cv_score, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(grid_segments, m)?)?;
    Ok(())
}
