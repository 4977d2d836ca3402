//! Python bindings: special functions, the TFPM solvers, datasets and
//! operator-network models.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use tfponet_core::io;
use tfponet_core::operatornets::{Architecture, CompositeModel, ModelFamily};
use tfponet_core::problem::{load_problem, ExampleId, InterfaceProblem, Transform1d};
use tfponet_core::specialfn;
use tfponet_core::tfpm1d::{assemble_and_solve, Mesh1d, TfpmSolution1d};
use tfponet_core::tfpm2d::{assemble_and_solve_2d, TfpmSolution2d};
use tfponet_core::training::{
    self, build_dataset, test_locations, training_locations, TfpmResolution, TrainConfig, TEST_STREAM_OFFSET,
};
use tfponet_core::{Error, Side};

create_exception!(_tfponet, TfponetError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::AmbiguousSide(_) => PyValueError::new_err(e.to_string()),
        _ => TfponetError::new_err(e.to_string()),
    }
}

fn side(s: Option<&str>) -> PyResult<Option<Side>> {
    match s {
        None => Ok(None),
        Some("left") => Ok(Some(Side::Left)),
        Some("right") => Ok(Some(Side::Right)),
        Some(o) => Err(PyValueError::new_err(format!("side must be 'left' or 'right', got '{o}'"))),
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> PyResult<T> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown {what} '{s}'")))
}

fn problem(path: PathBuf) -> PyResult<InterfaceProblem> {
    load_problem(&path).map_err(py_err)
}

/// `(ai, ai_prime, bi, bi_prime)` at `x`.
#[pyfunction]
#[pyo3(signature = (x, scaled = false))]
fn airy(x: f64, scaled: bool) -> PyResult<(f64, f64, f64, f64)> {
    let a = specialfn::airy(x, scaled).map_err(py_err)?;
    Ok((a.ai, a.ai_prime, a.bi, a.bi_prime))
}

/// `I_n(x)`, or `exp(-x) I_n(x)` when scaled.
#[pyfunction]
#[pyo3(signature = (n, x, scaled = false))]
fn bessel_i(n: u32, x: f64, scaled: bool) -> PyResult<f64> {
    Ok(specialfn::bessel_i(n, x, scaled).map_err(py_err)?.value)
}

#[pyclass(frozen)]
struct Solution1d {
    inner: TfpmSolution1d,
}

#[pymethods]
impl Solution1d {
    /// Solution at `x`; `side` ("left"/"right") is required on an interface.
    #[pyo3(signature = (x, side = None))]
    fn evaluate(&self, x: f64, side: Option<&str>) -> PyResult<f64> {
        self.inner.evaluate(x, self::side(side)?).map_err(py_err)
    }

    fn evaluate_many(&self, xs: Vec<f64>) -> PyResult<Vec<f64>> {
        xs.into_iter().map(|x| self.inner.evaluate(x, None).map_err(py_err)).collect()
    }
}

/// Solves the 1D problem in a TOML/JSON file on `nodes` nodes per subdomain.
#[pyfunction]
#[pyo3(signature = (path, nodes = 1025))]
fn solve1d(path: PathBuf, nodes: usize) -> PyResult<Solution1d> {
    let p = problem(path)?;
    let t = Transform1d::from_problem(&p).map_err(py_err)?;
    let mesh = Mesh1d::uniform_x(&t, nodes).map_err(py_err)?;
    Ok(Solution1d { inner: assemble_and_solve(&p, mesh).map_err(py_err)? })
}

#[pyclass(frozen)]
struct Solution2d {
    inner: TfpmSolution2d,
}

#[pymethods]
impl Solution2d {
    #[pyo3(signature = (x1, x2, side = None))]
    fn evaluate(&self, x1: f64, x2: f64, side: Option<&str>) -> PyResult<f64> {
        self.inner.evaluate([x1, x2], self::side(side)?).map_err(py_err)
    }

    /// Largest collocation residuals: `(max, interface_value, interface_flux)`.
    #[getter]
    fn residual(&self) -> (f64, f64, f64) {
        let r = &self.inner.residual;
        (r.max, r.interface_value, r.interface_flux)
    }
}

#[pyfunction]
#[pyo3(signature = (path, nx = 64, ny = 64, order = 3))]
fn solve2d(path: PathBuf, nx: usize, ny: usize, order: usize) -> PyResult<Solution2d> {
    let p = problem(path)?;
    Ok(Solution2d { inner: assemble_and_solve_2d(&p, nx, ny, order).map_err(py_err)? })
}

#[pyclass(frozen)]
struct Dataset {
    inner: training::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: io::load_dataset(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_dataset(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn example(&self) -> String {
        self.inner.meta.example.to_string()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples()
    }

    /// Location coordinates, one list per location.
    #[getter]
    fn locations(&self) -> Vec<Vec<f64>> {
        self.inner.locations.iter().map(|l| l.x.clone()).collect()
    }

    /// `M x S` sensor values as nested lists.
    #[getter]
    fn sensors(&self) -> Vec<Vec<f64>> {
        self.inner.sensors.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    /// `M x J` ground-truth values as nested lists.
    #[getter]
    fn targets(&self) -> Vec<Vec<f64>> {
        self.inner.targets.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

/// Samples `samples` inputs for `example` and labels them at `resolution`
/// training (or, with `test`, held-out test) locations.
#[pyfunction]
#[pyo3(signature = (example, samples, resolution, seed, test = false))]
fn generate_dataset(example: &str, samples: usize, resolution: usize, seed: u64, test: bool) -> PyResult<Dataset> {
    let ex: ExampleId = parse(example, "example")?;
    let (locs, offset) = if test {
        (test_locations(ex, resolution).map_err(py_err)?, TEST_STREAM_OFFSET)
    } else {
        (training_locations(ex, resolution).map_err(py_err)?, 0)
    };
    let ds = build_dataset(ex, samples, &locs, seed, offset, &TfpmResolution::default()).map_err(py_err)?;
    Ok(Dataset { inner: ds })
}

#[pyclass]
struct Model {
    inner: CompositeModel,
}

#[pymethods]
impl Model {
    /// A freshly initialized model; `family` is deeponet, ionet or tfponet.
    #[new]
    fn new(family: &str, example: &str, seed: u64) -> PyResult<Self> {
        let fam: ModelFamily = parse(family, "model family")?;
        let ex: ExampleId = parse(example, "example")?;
        let arch = Architecture::for_dim(ex.dim(), training::sensor_locations(ex).len());
        Ok(Self { inner: CompositeModel::new(fam, ex, arch, seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: io::load_checkpoint(&path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_checkpoint(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    /// Trains with Adam and returns `(step, data_loss, jump_loss)` records.
    #[pyo3(signature = (data, steps, seed, gamma = None, lr = None))]
    fn train(
        &mut self,
        py: Python<'_>,
        data: &Dataset,
        steps: usize,
        seed: u64,
        gamma: Option<f64>,
        lr: Option<f64>,
    ) -> PyResult<Vec<(usize, f64, f64)>> {
        let mut cfg = TrainConfig::desk(self.inner.example.dim());
        cfg.steps = steps;
        if self.inner.family == ModelFamily::DeepOnet {
            cfg.gamma = 0.0;
        }
        if let Some(g) = gamma {
            cfg.gamma = g;
        }
        if let Some(lr) = lr {
            cfg.adam.lr = lr;
        }
        let model = &mut self.inner;
        let ds = &data.inner;
        let h = py.detach(|| training::train(model, ds, &cfg, seed)).map_err(py_err)?;
        Ok(h.into_iter().map(|r| (r.step, r.data, r.jump)).collect())
    }

    /// Predictions at the dataset locations, `M x J`.
    fn predict(&self, data: &Dataset) -> PyResult<Vec<Vec<f64>>> {
        let p = training::predict_dataset(&self.inner, &data.inner).map_err(py_err)?;
        Ok(p.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Prediction for one sensor vector at one location.
    #[pyo3(signature = (sensors, x, side = None))]
    fn predict_point(&self, sensors: Vec<f64>, x: Vec<f64>, side: Option<&str>) -> PyResult<f64> {
        self.inner.predict(&sensors, &x, self::side(side)?).map_err(py_err)
    }

    fn mse(&self, data: &Dataset) -> PyResult<f64> {
        training::evaluate_mse(&self.inner, &data.inner).map_err(py_err)
    }
}

#[pymodule]
fn _tfponet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TfponetError", m.py().get_type::<TfponetError>())?;
    m.add_function(wrap_pyfunction!(airy, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_i, m)?)?;
    m.add_function(wrap_pyfunction!(solve1d, m)?)?;
    m.add_function(wrap_pyfunction!(solve2d, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_class::<Solution1d>()?;
    m.add_class::<Solution2d>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    Ok(())
}
