//! Python bindings for the `deepmlp` crate.
//!
//! Build with `maturin develop` from this directory; the module is
//! importable as `deepmlp_py`.

use std::path::PathBuf;

use deepmlp::bench::{bench_deformation, KernelBench, Op};
use deepmlp::deform::{deform_image, upscale_28_to_29};
use deepmlp::kernels::{gradient_check as grad_check, train_step, Workspace};
use deepmlp::mnist_io::{fixture, load_dataset, load_mnist};
use deepmlp::network::{self, scaled_tanh as tanh_a};
use deepmlp::rng::Purpose;
use deepmlp::trainer::TrainOptions;
use deepmlp::{
    Architecture, Checkpoint, DeformParams, Engine, Label, RawImage, Split, Streams, TrainConfig,
    Variant,
};
use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// Round-trips a serializable value through Python's `json` module.
fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn arch(sizes: Vec<usize>) -> PyResult<Architecture> {
    Architecture::new(sizes).map_err(value_err)
}

fn split(name: &str) -> PyResult<Split> {
    match name {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(value_err(format!("split must be 'train' or 'test', got {other:?}"))),
    }
}

fn engine(lanes: usize) -> Engine {
    if lanes <= 1 {
        Engine::serial()
    } else {
        Engine::with_lanes(lanes)
    }
}

/// Number of weights (biases included) of a layer-size list.
#[pyfunction]
fn count_weights(sizes: Vec<usize>) -> PyResult<usize> {
    Ok(arch(sizes)?.count_weights())
}

#[pyfunction]
fn scaled_tanh(a: f64) -> f64 {
    tanh_a(a)
}

#[pyclass(name = "DeformParams", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyDeformParams {
    sigma_range: [f64; 2],
    alpha_range: [f64; 2],
    beta_default: f64,
    beta_reduced: f64,
    gamma_range: [f64; 2],
    kernel_size: usize,
}

impl From<DeformParams> for PyDeformParams {
    fn from(p: DeformParams) -> Self {
        Self {
            sigma_range: p.sigma_range,
            alpha_range: p.alpha_range,
            beta_default: p.beta_default,
            beta_reduced: p.beta_reduced,
            gamma_range: p.gamma_range,
            kernel_size: p.kernel_size,
        }
    }
}

impl PyDeformParams {
    fn params(&self) -> PyResult<DeformParams> {
        let p = DeformParams {
            sigma_range: self.sigma_range,
            alpha_range: self.alpha_range,
            beta_default: self.beta_default,
            beta_reduced: self.beta_reduced,
            gamma_range: self.gamma_range,
            kernel_size: self.kernel_size,
        };
        p.validate().map_err(value_err)?;
        Ok(p)
    }
}

#[pymethods]
impl PyDeformParams {
    #[new]
    fn new() -> Self {
        DeformParams::default().into()
    }

    #[staticmethod]
    fn identity() -> Self {
        DeformParams::identity().into()
    }

    fn __repr__(&self) -> String {
        format!(
            "DeformParams(sigma_range={:?}, alpha_range={:?}, beta_default={}, beta_reduced={}, gamma_range={:?}, kernel_size={})",
            self.sigma_range, self.alpha_range, self.beta_default, self.beta_reduced, self.gamma_range, self.kernel_size
        )
    }
}

#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: deepmlp::Dataset,
}

impl PyDataset {
    fn check(&self, i: usize) -> PyResult<()> {
        if i < self.inner.len() {
            Ok(())
        } else {
            Err(PyIndexError::new_err(format!("index {i} out of range for {} images", self.inner.len())))
        }
    }
}

#[pymethods]
impl PyDataset {
    /// Reads an IDX image/label pair (plain or gzipped).
    #[staticmethod]
    #[pyo3(signature = (images, labels, split = "train"))]
    fn load(images: PathBuf, labels: PathBuf, split: &str) -> PyResult<Self> {
        let inner = load_dataset(&images, &labels, self::split(split)?).map_err(io_err)?;
        Ok(Self { inner })
    }

    /// `(train, test)` from a directory holding the canonical file names.
    #[staticmethod]
    fn load_mnist(dir: PathBuf) -> PyResult<(Self, Self)> {
        let (train, test) = load_mnist(&dir).map_err(io_err)?;
        Ok((Self { inner: train }, Self { inner: test }))
    }

    /// Blocky synthetic digits, useful without the real files.
    #[staticmethod]
    #[pyo3(signature = (n, seed = 0, split = "train"))]
    fn synthetic(n: usize, seed: u64, split: &str) -> PyResult<Self> {
        let mut rng = Streams::new(seed).stream(Purpose::Synthetic, 0, 0);
        Ok(Self { inner: fixture::synthetic_dataset(&mut rng, n, self::split(split)?) })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn truncated(&self, n: usize) -> Self {
        Self { inner: self.inner.truncated(n) }
    }

    fn label(&self, i: usize) -> PyResult<u8> {
        self.check(i)?;
        Ok(self.inner.get(i).1.digit())
    }

    /// Raw 28x28 pixels, row-major.
    fn image(&self, i: usize) -> PyResult<Vec<u8>> {
        self.check(i)?;
        Ok(self.inner.get(i).0.pixels().to_vec())
    }

    /// Network input: the image upscaled to 29x29 and mapped to [-1, 1].
    fn upscaled(&self, i: usize) -> PyResult<Vec<f32>> {
        self.check(i)?;
        Ok(upscale_28_to_29(self.inner.get(i).0).as_slice().to_vec())
    }

    fn class_counts(&self) -> [usize; 10] {
        self.inner.class_counts()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({:?}, {} images)", self.inner.split(), self.inner.len())
    }
}

/// One deformed 29x29 rendering of a raw 28x28 image, drawn from substream
/// `(seed, epoch, index)` exactly as the trainer would.
#[pyfunction]
#[pyo3(signature = (pixels, digit, seed = 0, epoch = 0, index = 0, params = None))]
fn deform(
    pixels: Vec<u8>,
    digit: u8,
    seed: u64,
    epoch: u64,
    index: u64,
    params: Option<PyDeformParams>,
) -> PyResult<Vec<f32>> {
    let img = RawImage::from_slice(&pixels).ok_or_else(|| value_err(format!("need 784 pixels, got {}", pixels.len())))?;
    let label = Label::new(digit).ok_or_else(|| value_err(format!("digit must be 0..=9, got {digit}")))?;
    let params = params.map_or_else(|| Ok(DeformParams::default()), |p| p.params())?;
    let mut rng = Streams::new(seed).stream(Purpose::Deform, epoch, index);
    Ok(deform_image(&mut rng, &img, label, &params).as_slice().to_vec())
}

#[pyclass(name = "Mlp", skip_from_py_object)]
#[derive(Clone)]
struct PyMlp {
    inner: deepmlp::Mlp<f32>,
}

#[pymethods]
impl PyMlp {
    /// Fresh network with weights uniform in [-0.05, 0.05].
    #[new]
    #[pyo3(signature = (sizes, seed = 0))]
    fn new(sizes: Vec<usize>, seed: u64) -> PyResult<Self> {
        let arch = arch(sizes)?;
        let mut rng = Streams::new(seed).stream(Purpose::Init, 0, 0);
        Ok(Self { inner: deepmlp::Mlp::init(&mut rng, &arch) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: Checkpoint::load(&path).map_err(io_err)?.mlp })
    }

    #[pyo3(signature = (path, epoch = 0, validation_error = f64::NAN))]
    fn save(&self, path: PathBuf, epoch: u32, validation_error: f64) -> PyResult<()> {
        Checkpoint { epoch, validation_error, mlp: self.inner.clone() }.save(&path).map_err(io_err)
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.architecture().sizes().to_vec()
    }

    fn count_weights(&self) -> usize {
        self.inner.count_weights()
    }

    /// Row-major weights of one layer; the bias is the last entry of each row.
    fn layer_weights(&self, layer: usize) -> PyResult<Vec<f32>> {
        let layers = self.inner.layers();
        layers
            .get(layer)
            .map(|l| l.weights().to_vec())
            .ok_or_else(|| PyIndexError::new_err(format!("layer {layer} of {}", layers.len())))
    }

    fn forward(&self, input: Vec<f32>) -> PyResult<Vec<f32>> {
        self.inner.forward(&input).map_err(value_err)
    }

    /// Digits ordered from most to least likely.
    fn predict(&self, input: Vec<f32>) -> PyResult<Vec<u8>> {
        let scores = self.inner.forward(&input).map_err(value_err)?;
        Ok(network::Ranking::from_scores(&scores).digits())
    }

    /// One on-line back-propagation step towards class `target`.
    fn train_step(&mut self, input: Vec<f32>, target: usize, eta: f32) -> PyResult<()> {
        let mut ws = Workspace::new(&self.inner);
        train_step(&mut self.inner, &input, target, eta, &Engine::serial(), Variant::Tiled, &mut ws).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Mlp({})", self.inner.architecture())
    }
}

/// Back-propagation against central differences on a random 64-bit net.
#[pyfunction]
#[pyo3(signature = (sizes, seed = 0, target = 0))]
fn gradient_check<'py>(py: Python<'py>, sizes: Vec<usize>, seed: u64, target: usize) -> PyResult<Bound<'py, PyAny>> {
    let arch = arch(sizes)?;
    let mut rng = Streams::new(seed).stream(Purpose::Init, 0, 0);
    let mlp: deepmlp::Mlp<f64> = deepmlp::Mlp::init(&mut rng, &arch);
    let mut rng = Streams::new(seed).stream(Purpose::Synthetic, 0, 0);
    let input: Vec<f64> = (0..arch.input_size()).map(|_| rand::Rng::random_range(&mut rng, -1.0..=1.0)).collect();
    let r = grad_check(&mlp, &input, target).map_err(value_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("max_rel_error", r.max_rel_error)?;
    d.set_item("n_weights", r.n_weights)?;
    d.set_item("worst", r.worst)?;
    Ok(d.into_any())
}

/// Test-set report as a dict (error percent, confusion matrix, misclassified).
#[pyfunction]
#[pyo3(signature = (mlp, dataset, lanes = 1))]
fn evaluate<'py>(py: Python<'py>, mlp: &PyMlp, dataset: &PyDataset, lanes: usize) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| deepmlp::evaluate(&mlp.inner, &dataset.inner, &engine(lanes)))
        .map_err(value_err)?;
    to_py(py, &report)
}

/// Runs the full training loop; returns `(best_mlp, best_epoch, history)`.
#[pyfunction]
#[pyo3(signature = (
    dataset, sizes = vec![841, 500, 10], max_epochs = 30, seed = 0, eta0 = 1e-3,
    eta_min = 1e-6, decay = 0.993, deformations = true, deform_params = None, lanes = 1
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    sizes: Vec<usize>,
    max_epochs: u32,
    seed: u64,
    eta0: f64,
    eta_min: f64,
    decay: f64,
    deformations: bool,
    deform_params: Option<PyDeformParams>,
    lanes: usize,
) -> PyResult<(PyMlp, u32, Bound<'py, PyAny>)> {
    let cfg = TrainConfig {
        arch: arch(sizes)?,
        eta0,
        eta_min,
        decay,
        max_epochs,
        seed,
        deform: deform_params.map_or_else(|| Ok(DeformParams::default()), |p| p.params())?,
        deformations,
        shuffle: true,
    };
    let result = py
        .detach(|| deepmlp::train(&cfg, &dataset.inner, TrainOptions { engine: engine(lanes), ..Default::default() }))
        .map_err(value_err)?;
    let history = to_py(py, &result.history)?;
    Ok((PyMlp { inner: result.best.mlp }, result.best.epoch, history))
}

/// Throughput records as JSON lines: naive serial first, then tiled.
/// `op` is one of `train_step`, `forward`, `backward`, `deform`.
#[pyfunction]
#[pyo3(signature = (sizes = vec![841, 1000, 500, 10], repetitions = 10, op = "train_step", lanes = 1, images = 600))]
#[pyo3(name = "bench")]
fn run_bench(py: Python<'_>, sizes: Vec<usize>, repetitions: usize, op: &str, lanes: usize, images: usize) -> PyResult<Vec<String>> {
    let op: Op = op.parse().map_err(value_err)?;
    let arch = arch(sizes)?;
    let reports = py.detach(|| match op {
        Op::Deform => vec![bench_deformation(images, lanes, None)],
        _ => KernelBench::new(arch, repetitions, lanes).run(op),
    });
    Ok(reports.iter().map(|r| r.to_json_line()).collect())
}

#[pymodule]
pub fn deepmlp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TANH_A", network::TANH_A)?;
    m.add("TANH_B", network::TANH_B)?;
    m.add_class::<PyMlp>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyDeformParams>()?;
    m.add_function(wrap_pyfunction!(count_weights, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_tanh, m)?)?;
    m.add_function(wrap_pyfunction!(deform, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
