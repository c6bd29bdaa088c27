use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use quantquad::adversary;
use quantquad::config::{parse_functional, parse_measure};
use quantquad::error::Error;
use quantquad::experiments;
use quantquad::io;
use quantquad::measures::MeasureSpec;
use quantquad::paths::{make_kl_subspace, Functional, Grid, NormKind, Point};
use quantquad::quadrature::{self, QuadratureResult, SmallBallProfile};
use quantquad::quantize::{self, LloydOptions};
use quantquad::rng::SeedSpec;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e @ (Error::Numeric { .. } | Error::Eval { .. }) => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn measure(s: &str) -> PyResult<MeasureSpec> {
    Ok(parse_measure(s).map_err(to_py)?.measure)
}

fn norm(s: Option<&str>) -> PyResult<Option<NormKind>> {
    s.map(|s| s.parse().map_err(to_py)).transpose()
}

/// A functional given by name (`"sup_norm"`, `"coord_at(0.5)"`, ...) or a
/// Python callable taking the raw point values as a list of floats.
fn functional(f: &Bound<'_, PyAny>, lipschitz: f64) -> PyResult<Functional> {
    if let Ok(s) = f.extract::<String>() {
        return parse_functional(&s).map_err(to_py);
    }
    if !f.is_callable() {
        return Err(PyValueError::new_err("functional must be a name or a callable"));
    }
    let callable: Py<PyAny> = f.clone().unbind();
    Ok(Functional::new("python", lipschitz, move |x: &Point| {
        Python::attach(|py| {
            callable
                .call1(py, (x.raw().to_vec(),))
                .and_then(|v| v.extract::<f64>(py))
                .map_err(|e| Error::Config(format!("python functional failed: {e}")))
        })
    }))
}

/// A finite set of points with optional cell weights.
#[pyclass(name = "Codebook", module = "quantquad_py")]
struct PyCodebook {
    inner: quantize::Codebook,
}

#[pymethods]
impl PyCodebook {
    /// Codebook of vectors (one list per point).
    #[new]
    #[pyo3(signature = (points, r = 2.0, tag = "custom".to_string()))]
    fn new(points: Vec<Vec<f64>>, r: f64, tag: String) -> PyResult<Self> {
        let pts = points.into_iter().map(Point::Vector).collect();
        let inner = quantize::Codebook::new(pts, r, NormKind::Euclidean, tag).map_err(to_py)?;
        Ok(PyCodebook { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCodebook {
            inner: io::load_codebook(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_codebook(&self.inner, &path, &[]).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Codebook(n={}, r={}, norm={}, tag={:?})",
            self.inner.len(),
            self.inner.order_r(),
            self.inner.norm(),
            self.inner.measure_tag()
        )
    }

    /// Raw values of every point (paths are flattened grid-major).
    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().iter().map(|p| p.raw().to_vec()).collect()
    }

    #[getter]
    fn weights(&self) -> Option<Vec<f64>> {
        self.inner.weights().map(|w| w.to_vec())
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.order_r()
    }

    #[getter]
    fn tag(&self) -> String {
        self.inner.measure_tag().to_string()
    }

    fn set_weights(&mut self, weights: Vec<f64>) -> PyResult<()> {
        self.inner.set_weights(weights).map_err(to_py)
    }

    /// Exact cell masses where available, otherwise Monte Carlo with `samples` draws.
    #[pyo3(signature = (measure_str, samples = 1_000_000, seed = 0))]
    fn compute_weights(&mut self, py: Python<'_>, measure_str: &str, samples: usize, seed: u64) -> PyResult<()> {
        let mu = measure(measure_str)?;
        let inner = &mut self.inner;
        py.detach(|| match quantize::exact_voronoi_weights(inner, &mu) {
            Ok(w) => inner.set_weights(w),
            Err(_) => quantize::voronoi_weights(inner, &mu, samples, SeedSpec::new(seed)).map(|_| ()),
        })
        .map_err(to_py)
    }

    /// `(value, stderr)` of the order-`r` distortion.
    #[pyo3(signature = (measure_str, r = 2.0, samples = 100_000, seed = 0))]
    fn distortion(&self, py: Python<'_>, measure_str: &str, r: f64, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let mu = measure(measure_str)?;
        let d = py
            .detach(|| quantize::distortion(&self.inner, &mu, r, samples, SeedSpec::new(seed)))
            .map_err(to_py)?;
        Ok((d.value, d.stderr))
    }
}

/// Estimate of an integral with its cost.
#[pyclass(name = "QuadResult", module = "quantquad_py", get_all, frozen)]
struct PyQuadResult {
    estimate: f64,
    stderr: f64,
    n: usize,
    k: usize,
    oracle_cost: u64,
    rng_calls: u64,
}

#[pymethods]
impl PyQuadResult {
    fn __repr__(&self) -> String {
        format!(
            "QuadResult(estimate={}, stderr={}, n={}, k={}, oracle_cost={})",
            self.estimate, self.stderr, self.n, self.k, self.oracle_cost
        )
    }
}

impl From<QuadratureResult> for PyQuadResult {
    fn from(r: QuadratureResult) -> Self {
        let cost = quadrature::cost_of(&r);
        PyQuadResult {
            estimate: r.estimate,
            stderr: r.stderr,
            n: r.n,
            k: r.k,
            oracle_cost: cost.oracle_cost,
            rng_calls: cost.rng_calls,
        }
    }
}

#[pyfunction]
#[pyo3(signature = (measure_str, n, r = 2.0, seed = 0, iters = 200, restarts = 8, pool = None, norm_kind = None))]
#[allow(clippy::too_many_arguments)]
fn lloyd(
    py: Python<'_>,
    measure_str: &str,
    n: usize,
    r: f64,
    seed: u64,
    iters: usize,
    restarts: usize,
    pool: Option<usize>,
    norm_kind: Option<&str>,
) -> PyResult<PyCodebook> {
    let mu = measure(measure_str)?;
    let opts = LloydOptions {
        iters,
        restarts,
        pool,
        norm: norm(norm_kind)?,
        ..LloydOptions::default()
    };
    let inner = py.detach(|| quantize::lloyd(&mu, n, r, &opts, SeedSpec::new(seed))).map_err(to_py)?;
    Ok(PyCodebook { inner })
}

/// Greedy product quantizer of Brownian motion on its first `k_terms` KL coefficients.
#[pyfunction]
#[pyo3(signature = (n, k_terms = 200, grid = 257))]
fn product_quantizer(n: usize, k_terms: usize, grid: usize) -> PyResult<PyCodebook> {
    let g = Grid::uniform(grid).map_err(to_py)?;
    Ok(PyCodebook {
        inner: quantize::product_quantizer_bm(n, k_terms, &g).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (codebook, f, lipschitz = 1.0))]
fn voronoi_quadrature(codebook: &PyCodebook, f: &Bound<'_, PyAny>, lipschitz: f64) -> PyResult<PyQuadResult> {
    let f = functional(f, lipschitz)?;
    Ok(quadrature::voronoi_quadrature(&codebook.inner, &f).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (measure_str, f, n, seed = 0, lipschitz = 1.0))]
fn classical_mc(py: Python<'_>, measure_str: &str, f: &Bound<'_, PyAny>, n: usize, seed: u64, lipschitz: f64) -> PyResult<PyQuadResult> {
    let (mu, f) = (measure(measure_str)?, functional(f, lipschitz)?);
    Ok(py.detach(|| quadrature::classical_mc(&mu, &f, n, SeedSpec::new(seed))).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (codebook, measure_str, f, n, seed = 0, lipschitz = 1.0))]
fn vr_mc(
    py: Python<'_>,
    codebook: &PyCodebook,
    measure_str: &str,
    f: &Bound<'_, PyAny>,
    n: usize,
    seed: u64,
    lipschitz: f64,
) -> PyResult<PyQuadResult> {
    let (mu, f) = (measure(measure_str)?, functional(f, lipschitz)?);
    Ok(py
        .detach(|| quadrature::vr_mc(&codebook.inner, &mu, &f, n, SeedSpec::new(seed)))
        .map_err(to_py)?
        .into())
}

/// Euler Monte Carlo for a diffusion measure (`gbm:a:b:u0[:k[:G]]` or `brownian[:G]`).
#[pyfunction]
#[pyo3(signature = (measure_str, f, k, n, seed = 0, lipschitz = 1.0))]
fn euler_mc(py: Python<'_>, measure_str: &str, f: &Bound<'_, PyAny>, k: usize, n: usize, seed: u64, lipschitz: f64) -> PyResult<PyQuadResult> {
    let arg = parse_measure(measure_str).map_err(to_py)?;
    let spec = arg
        .diffusion
        .ok_or_else(|| PyValueError::new_err("euler_mc needs a diffusion measure"))?;
    let grid = arg.grid.expect("diffusion measures carry a grid");
    let f = functional(f, lipschitz)?;
    Ok(py
        .detach(|| quadrature::euler_mc(&spec, &f, k, n, &grid, SeedSpec::new(seed)))
        .map_err(to_py)?
        .into())
}

/// Brownian motion restricted to its first `k` KL terms.
#[pyfunction]
#[pyo3(signature = (f, k, n, grid = 257, seed = 0, lipschitz = 1.0))]
fn gaussian_subspace_mc(py: Python<'_>, f: &Bound<'_, PyAny>, k: usize, n: usize, grid: usize, seed: u64, lipschitz: f64) -> PyResult<PyQuadResult> {
    let g = Grid::uniform(grid).map_err(to_py)?;
    let sub = make_kl_subspace(&g, k).map_err(to_py)?;
    let f = functional(f, lipschitz)?;
    Ok(py
        .detach(|| quadrature::gaussian_subspace_mc(&sub, &f, n, SeedSpec::new(seed)))
        .map_err(to_py)?
        .into())
}

/// `(n, k)` for the Euler cost budget `big_n`.
#[pyfunction]
fn t8_schedule(big_n: u64) -> PyResult<(usize, usize)> {
    quadrature::t8_schedule(big_n).map_err(to_py)
}

/// `(n, k)` for the Gaussian-subspace cost budget `big_n`.
#[pyfunction]
#[pyo3(signature = (big_n, alpha = 2.0, beta = 0.0))]
fn galg_schedule(big_n: u64, alpha: f64, beta: f64) -> PyResult<(usize, usize)> {
    let profile = SmallBallProfile::new(alpha, beta).map_err(to_py)?;
    quadrature::galg_schedule(big_n, profile).map_err(to_py)
}

#[pyfunction]
fn kl_tail_width(k: usize) -> f64 {
    experiments::kl_tail_width(k)
}

/// `(width, stderr)` of the L2 distance of grid Brownian motion to its first `k` KL terms.
#[pyfunction]
#[pyo3(signature = (k, samples = 10_000, grid = 1025, p = 2.0, seed = 0))]
fn width_estimate(py: Python<'_>, k: usize, samples: usize, grid: usize, p: f64, seed: u64) -> PyResult<(f64, f64)> {
    let g = Grid::uniform(grid).map_err(to_py)?;
    let mu = MeasureSpec::brownian_grid(g.clone()).map_err(to_py)?;
    let sub = make_kl_subspace(&g, k).map_err(to_py)?;
    let pt = py
        .detach(|| experiments::width_estimate(&mu, &sub, NormKind::L2, p, samples, SeedSpec::new(seed)))
        .map_err(to_py)?;
    Ok((pt.error, pt.stderr))
}

/// `(lhs, rhs, combined_stderr, pass)` of the fooling gap identity.
#[pyfunction]
#[pyo3(signature = (codebook, measure_str, samples = 100_000, seed = 0))]
fn gap_identity_check(py: Python<'_>, codebook: &PyCodebook, measure_str: &str, samples: usize, seed: u64) -> PyResult<(f64, f64, f64, bool)> {
    let mu = measure(measure_str)?;
    let r = py
        .detach(|| adversary::gap_identity_check(&codebook.inner, &mu, samples, SeedSpec::new(seed)))
        .map_err(to_py)?;
    Ok((r.lhs.value, r.rhs.value, r.combined_stderr, r.pass))
}

/// `(estimate, stderr, analytic, pass)` for the increment-sign event.
#[pyfunction]
#[pyo3(signature = (ell, eps = 1.0, samples = 100_000, seed = 0))]
fn event_probability(py: Python<'_>, ell: usize, eps: f64, samples: usize, seed: u64) -> PyResult<(f64, f64, f64, bool)> {
    let r = py
        .detach(|| adversary::event_probability(ell, eps, samples, SeedSpec::new(seed)))
        .map_err(to_py)?;
    Ok((r.estimate.value, r.estimate.stderr, r.analytic, r.pass))
}

/// Values of the fooling functionals of `codebook` at the vector `x`.
#[pyfunction]
fn fooling_values(codebook: &PyCodebook, x: Vec<f64>) -> PyResult<Vec<f64>> {
    let fam = adversary::fooling_family(&codebook.inner, codebook.inner.norm()).map_err(to_py)?;
    let x = Point::Vector(x);
    fam.functionals.iter().map(|f| f.eval(&x).map_err(to_py)).collect()
}

#[pymodule]
fn quantquad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCodebook>()?;
    m.add_class::<PyQuadResult>()?;
    m.add_function(wrap_pyfunction!(lloyd, m)?)?;
    m.add_function(wrap_pyfunction!(product_quantizer, m)?)?;
    m.add_function(wrap_pyfunction!(voronoi_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(classical_mc, m)?)?;
    m.add_function(wrap_pyfunction!(vr_mc, m)?)?;
    m.add_function(wrap_pyfunction!(euler_mc, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_subspace_mc, m)?)?;
    m.add_function(wrap_pyfunction!(t8_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(galg_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(kl_tail_width, m)?)?;
    m.add_function(wrap_pyfunction!(width_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(gap_identity_check, m)?)?;
    m.add_function(wrap_pyfunction!(event_probability, m)?)?;
    m.add_function(wrap_pyfunction!(fooling_values, m)?)?;
    Ok(())
}
