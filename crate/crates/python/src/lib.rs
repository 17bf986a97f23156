//! Python bindings. Images and sinograms cross the boundary as flat row-major
//! lists; sizes come from the accompanying geometry.

use pyo3::exceptions::{PyFileNotFoundError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sinofill::experiment::{self, DoseFraction, MaskKind, Method};
use sinofill::geometry::min_num_bins;
use sinofill::inpaint::{InitMethod, LossKind, OptimizerConfig};
use sinofill::metrics::{self, Mask};
use sinofill::phantom::{self, NoiseModel};
use sinofill::projector::{self, FilterKind, FilterSpec};
use sinofill::{selftest, Error, Image, Sinogram};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingInput(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::NonFinite { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(raw: &str, what: &str) -> PyResult<T> {
    raw.parse()
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{raw}`")))
}

fn filter_spec(name: &str) -> PyResult<FilterSpec> {
    Ok(FilterSpec::new(parse::<FilterKind>(name, "filter")?))
}

/// Parallel-beam scan over `num_angles` uniform angles in [0, pi).
#[pyclass(name = "ScanGeometry", frozen)]
struct PyScanGeometry {
    inner: sinofill::ScanGeometry,
}

#[pymethods]
impl PyScanGeometry {
    #[new]
    #[pyo3(signature = (num_angles, image_size, num_bins = None))]
    fn new(num_angles: usize, image_size: usize, num_bins: Option<usize>) -> PyResult<Self> {
        let bins = num_bins.unwrap_or_else(|| min_num_bins(image_size));
        let inner = sinofill::make_full_scan(num_angles, image_size, bins).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_angles(&self) -> usize {
        self.inner.num_angles()
    }

    #[getter]
    fn num_bins(&self) -> usize {
        self.inner.num_bins()
    }

    #[getter]
    fn image_size(&self) -> usize {
        self.inner.image_size()
    }

    #[getter]
    fn angles(&self) -> Vec<f64> {
        self.inner.angles().as_slice().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "ScanGeometry(num_angles={}, image_size={}, num_bins={})",
            self.num_angles(),
            self.image_size(),
            self.num_bins()
        )
    }
}

impl PyScanGeometry {
    fn image(&self, data: Vec<f64>) -> PyResult<Image> {
        Image::from_vec(self.inner.image_size(), self.inner.pixel_spacing(), data).map_err(py_err)
    }

    fn sinogram(&self, data: Vec<f64>) -> PyResult<Sinogram> {
        Sinogram::from_vec(&self.inner, data).map_err(py_err)
    }
}

/// Sum of ellipses in normalized [-1, 1] coordinates.
#[pyclass(name = "Phantom", frozen)]
struct PyPhantom {
    inner: phantom::Phantom,
}

#[pymethods]
impl PyPhantom {
    /// Ellipse text format: `ellipse density a b cx cy rotation` per line.
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        let inner = phantom::Phantom::from_text(text).map_err(PyValueError::new_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn shepp_logan() -> Self {
        Self {
            inner: phantom::shepp_logan(),
        }
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __len__(&self) -> usize {
        self.inner.ellipses.len()
    }

    fn rasterize(&self, image_size: usize) -> Vec<f64> {
        phantom::rasterize(&self.inner, image_size, 1.0).into_vec()
    }

    fn analytic_sinogram(&self, geometry: &PyScanGeometry) -> Vec<f64> {
        phantom::analytic_sinogram(&self.inner, &geometry.inner).into_vec()
    }

    /// Analytic sinogram plus seeded Gaussian noise of standard deviation `sigma`.
    #[pyo3(signature = (geometry, sigma = 0.0, seed = 0))]
    fn simulate(&self, geometry: &PyScanGeometry, sigma: f64, seed: u64) -> PyResult<Vec<f64>> {
        let noise = NoiseModel::gaussian(sigma, seed).map_err(py_err)?;
        Ok(phantom::simulate_measurement(&self.inner, &geometry.inner, &noise).into_vec())
    }
}

#[pyfunction]
fn forward(geometry: &PyScanGeometry, image: Vec<f64>) -> PyResult<Vec<f64>> {
    let img = geometry.image(image)?;
    Ok(projector::forward(&img, &geometry.inner)
        .map_err(py_err)?
        .into_vec())
}

#[pyfunction]
fn adjoint(geometry: &PyScanGeometry, sinogram: Vec<f64>) -> PyResult<Vec<f64>> {
    let s = geometry.sinogram(sinogram)?;
    Ok(projector::adjoint(&s, &geometry.inner)
        .map_err(py_err)?
        .into_vec())
}

#[pyfunction]
#[pyo3(signature = (geometry, sinogram, filter = "ram_lak"))]
fn fbp(geometry: &PyScanGeometry, sinogram: Vec<f64>, filter: &str) -> PyResult<Vec<f64>> {
    let s = geometry.sinogram(sinogram)?;
    Ok(projector::fbp(&s, &geometry.inner, filter_spec(filter)?)
        .map_err(py_err)?
        .into_vec())
}

#[pyfunction]
#[pyo3(signature = (geometry, image_grad, filter = "ram_lak"))]
fn grad_wrt_sinogram(
    geometry: &PyScanGeometry,
    image_grad: Vec<f64>,
    filter: &str,
) -> PyResult<Vec<f64>> {
    let g = geometry.image(image_grad)?;
    Ok(
        projector::grad_wrt_sinogram(&g, &geometry.inner, filter_spec(filter)?)
            .map_err(py_err)?
            .into_vec(),
    )
}

/// Result of completing the missing angles of a sparse scan.
#[pyclass(name = "Completion", frozen, get_all)]
struct PyCompletion {
    method: String,
    sinogram: Vec<f64>,
    reconstruction: Vec<f64>,
    loss_history: Vec<f64>,
    measured_idx: Vec<usize>,
}

/// Keeps every `keep_every`-th angle of `sinogram` and fills the rest.
#[pyfunction]
#[pyo3(signature = (
    geometry, sinogram, keep_every, method = "optimize", *, filter = "ram_lak",
    lr = 0.1, iterations = 500, loss = "mae", plateau_patience = 50, plateau_rel_tol = 1e-4,
    clamp_nonnegative = true, init = "linear",
))]
#[allow(clippy::too_many_arguments)]
fn inpaint(
    py: Python<'_>,
    geometry: &PyScanGeometry,
    sinogram: Vec<f64>,
    keep_every: usize,
    method: &str,
    filter: &str,
    lr: f64,
    iterations: usize,
    loss: &str,
    plateau_patience: usize,
    plateau_rel_tol: f64,
    clamp_nonnegative: bool,
    init: &str,
) -> PyResult<PyCompletion> {
    let full = geometry.sinogram(sinogram)?;
    let method: Method = method.parse().map_err(py_err)?;
    let dose = DoseFraction::new(keep_every).map_err(py_err)?;
    let cfg = OptimizerConfig {
        learning_rate: lr,
        max_iterations: iterations,
        loss: parse::<LossKind>(loss, "loss")?,
        plateau_patience,
        plateau_rel_tol,
        clamp_nonnegative,
        init: parse::<InitMethod>(init, "init")?,
    };
    let filter = filter_spec(filter)?;
    let g = &geometry.inner;
    let (done, measured_idx) = py
        .detach(|| {
            let problem = experiment::sparse_problem(g, &full, dose)?;
            let done = experiment::complete(&problem, method, dose, &cfg, filter)?;
            Ok((done, problem.split().measured_idx().to_vec()))
        })
        .map_err(py_err)?;
    Ok(PyCompletion {
        method: method.name().to_string(),
        sinogram: done.sinogram.into_vec(),
        reconstruction: done.reconstruction.into_vec(),
        loss_history: done.loss_history,
        measured_idx,
    })
}

fn mask(size: usize, kind: Option<&str>) -> PyResult<Option<Mask>> {
    kind.map(|k| Ok(k.parse::<MaskKind>().map_err(py_err)?.build(size)))
        .transpose()
}

/// PSNR in dB; `inf` for identical images. `mask` is "circle", "full" or None.
#[pyfunction]
#[pyo3(signature = (reference, test, image_size, data_range, mask = Some("circle")))]
fn psnr(
    reference: Vec<f64>,
    test: Vec<f64>,
    image_size: usize,
    data_range: f64,
    mask: Option<&str>,
) -> PyResult<f64> {
    let a = Image::from_vec(image_size, 1.0, reference).map_err(py_err)?;
    let b = Image::from_vec(image_size, 1.0, test).map_err(py_err)?;
    let m = self::mask(image_size, mask)?;
    metrics::psnr(&a, &b, data_range, m.as_ref()).map_err(py_err)
}

/// Mean SSIM over valid 11x11 windows (centers inside `mask` when given).
#[pyfunction]
#[pyo3(signature = (reference, test, image_size, data_range, mask = None))]
fn ssim(
    reference: Vec<f64>,
    test: Vec<f64>,
    image_size: usize,
    data_range: f64,
    mask: Option<&str>,
) -> PyResult<f64> {
    let a = Image::from_vec(image_size, 1.0, reference).map_err(py_err)?;
    let b = Image::from_vec(image_size, 1.0, test).map_err(py_err)?;
    match self::mask(image_size, mask)? {
        Some(m) => metrics::ssim_masked(&a, &b, data_range, &m),
        None => metrics::ssim(&a, &b, data_range),
    }
    .map_err(py_err)
}

type CheckRow = (String, String, f64, f64, bool);

/// Built-in numerical checks as `(family, name, measured, tolerance, passed)`.
#[pyfunction]
#[pyo3(signature = (mismatched_adjoint = false))]
fn run_selftest(py: Python<'_>, mismatched_adjoint: bool) -> PyResult<Vec<CheckRow>> {
    let checks = py
        .detach(|| selftest::run(selftest::SelftestOptions { mismatched_adjoint }))
        .map_err(py_err)?;
    Ok(checks
        .into_iter()
        .map(|c| {
            let passed = c.passed();
            (
                c.family.to_string(),
                c.name.to_string(),
                c.measured,
                c.tolerance,
                passed,
            )
        })
        .collect())
}

#[pymodule]
#[pyo3(name = "sinofill")]
fn sinofill_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScanGeometry>()?;
    m.add_class::<PyPhantom>()?;
    m.add_class::<PyCompletion>()?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(adjoint, m)?)?;
    m.add_function(wrap_pyfunction!(fbp, m)?)?;
    m.add_function(wrap_pyfunction!(grad_wrt_sinogram, m)?)?;
    m.add_function(wrap_pyfunction!(inpaint, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    Ok(())
}
