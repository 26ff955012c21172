//! Python bindings for `randlsv`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use randlsv_core::random_system::{self, parse_word};
use randlsv_core::transfer::{self, Observable, PartitionGrid};
use randlsv_core::{tower, verify, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotConverged { .. } | Error::CapExceeded { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// The map `T_γ(x) = x(1 + (2x)^γ)` on `[0, 1/2]`, `2x − 1` on `(1/2, 1]`.
#[pyclass(name = "LsvMap", frozen)]
struct PyLsvMap(randlsv_core::LsvMap);

#[pymethods]
impl PyLsvMap {
    #[new]
    fn new(gamma: f64) -> PyResult<Self> {
        randlsv_core::LsvMap::new(gamma).map(PyLsvMap).map_err(to_py)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma()
    }

    fn __call__(&self, x: f64) -> PyResult<f64> {
        self.0.eval(x).map_err(to_py)
    }

    fn inv_left(&self, y: f64) -> PyResult<f64> {
        self.0.invert_left(y).map_err(to_py)
    }

    #[pyo3(signature = (x, order=1))]
    fn deriv(&self, x: f64, order: u8) -> PyResult<f64> {
        self.0.deriv(x, order).map_err(to_py)
    }

    fn schwarzian(&self, x: f64) -> PyResult<f64> {
        self.0.schwarzian(x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("LsvMap(gamma={})", self.0.gamma())
    }
}

/// `{T_α, T_β; p1, 1 − p1}`; `strict` demands `β ≤ 1`.
#[pyclass(name = "SystemParams", frozen)]
struct PySystemParams(random_system::SystemParams);

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (alpha, beta, p1, strict=true))]
    fn new(alpha: f64, beta: f64, p1: f64, strict: bool) -> PyResult<Self> {
        let p = if strict {
            random_system::SystemParams::strict(alpha, beta, p1)
        } else {
            random_system::SystemParams::new(alpha, beta, p1)
        };
        p.map(PySystemParams).map_err(to_py)
    }

    #[staticmethod]
    fn preset() -> Self {
        PySystemParams(random_system::SystemParams::preset())
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha().gamma()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta().gamma()
    }

    #[getter]
    fn p1(&self) -> f64 {
        self.0.p1()
    }

    #[getter]
    fn p2(&self) -> f64 {
        self.0.p2()
    }

    #[getter]
    fn strict_regime(&self) -> bool {
        self.0.strict_regime()
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemParams(alpha={}, beta={}, p1={})",
            self.alpha(),
            self.beta(),
            self.p1()
        )
    }
}

/// Skew orbit as a list of `(x, omega, symbol)`; `steps + 1` rows.
#[pyfunction]
#[pyo3(signature = (params, x0, steps, seed=0, omega0=None))]
fn simulate(
    params: &PySystemParams,
    x0: f64,
    steps: usize,
    seed: u64,
    omega0: Option<f64>,
) -> PyResult<Vec<(f64, f64, char)>> {
    let rows = random_system::symbolic_orbit(x0, omega0, steps, seed, &params.0).map_err(to_py)?;
    Ok(rows.iter().map(|r| (r.x, r.omega, r.symbol.as_char())).collect())
}

/// `(x_1 … x_n, x'_0 … x'_m)` along the word given as a string over `AB`.
#[pyfunction]
fn backward_orbit(word: &str, n: usize, params: &PySystemParams) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let w = parse_word(word).map_err(to_py)?;
    let s = random_system::SymbolString::new(w, &params.0);
    let orbit = tower::random_backward(&s, n, &params.0).map_err(to_py)?;
    Ok((orbit.xs, orbit.xps))
}

#[pyfunction]
fn expectation_exact(n: usize, params: &PySystemParams) -> PyResult<f64> {
    tower::expectation_exact(n, &params.0).map_err(to_py)
}

/// `(E x_1 … E x_n_max, standard errors)`: exact up to the enumeration limit,
/// Monte Carlo beyond.
#[pyfunction]
#[pyo3(signature = (n_max, params, samples=100_000, seed=0))]
fn expectation_profile(
    py: Python<'_>,
    n_max: usize,
    params: &PySystemParams,
    samples: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = params.0;
    let prof = py
        .detach(|| tower::ExpectationProfile::hybrid(n_max, samples, seed, &p))
        .map_err(to_py)?;
    let se = (1..=prof.n_max()).map(|n| prof.se(n)).collect();
    Ok((prof.values().to_vec(), se))
}

/// Rows `(n, tail, k_max, converged, remainder_bound, certified)`.
#[pyfunction]
#[pyo3(signature = (grid, params, samples=100_000, seed=0, max_doublings=2))]
fn tail(
    py: Python<'_>,
    grid: Vec<usize>,
    params: &PySystemParams,
    samples: usize,
    seed: u64,
    max_doublings: u32,
) -> PyResult<Vec<(usize, f64, usize, bool, f64, bool)>> {
    let p = params.0;
    let (table, _) = py
        .detach(|| tower::tail_rhat(&grid, &p, samples, seed, max_doublings))
        .map_err(to_py)?;
    Ok(table
        .rows
        .iter()
        .map(|r| (r.n, r.value, r.k_max, r.converged, r.remainder_bound, r.certified))
        .collect())
}

#[pyfunction]
fn hoeffding<'py>(py: Python<'py>, n: usize, p0: f64, p1: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = verify::hoeffding_report(n, p0, p1).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("exact_tail", r.exact_tail)?;
    d.set_item("bound", r.bound)?;
    d.set_item("ln_exact_tail", r.ln_exact_tail)?;
    d.set_item("ln_bound", r.ln_bound)?;
    d.set_item("holds", r.holds())?;
    Ok(d)
}

/// Least-squares slope of `log values` against `log ns` over `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (ns, values, lo, hi, se=None))]
fn fit_power_law<'py>(
    py: Python<'py>,
    ns: Vec<f64>,
    values: Vec<f64>,
    lo: f64,
    hi: f64,
    se: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let fit = verify::fit_power_law(&ns, &values, se.as_deref(), (lo, hi)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("exponent", fit.exponent)?;
    d.set_item("stderr", fit.stderr)?;
    d.set_item("intercept", fit.intercept)?;
    d.set_item("r_squared", fit.r_squared)?;
    d.set_item("n_points", fit.n_points)?;
    Ok(d)
}

fn make_grid(kind: &str, bins: usize, q: Option<f64>, alpha: f64) -> PyResult<PartitionGrid> {
    match kind {
        "uniform" => PartitionGrid::uniform(bins),
        "geometric" => match q {
            Some(q) => PartitionGrid::geometric(bins, q),
            None => PartitionGrid::geometric_for(bins, alpha),
        },
        other => return Err(PyValueError::new_err(format!("unknown grid {other:?}"))),
    }
    .map_err(to_py)
}

/// `(breakpoints, density values, residual)` of the annealed Ulam operator.
#[pyfunction]
#[pyo3(signature = (params, bins, grid="uniform", q=None, tol=1e-10, max_iter=2_000_000))]
fn stationary_density(
    py: Python<'_>,
    params: &PySystemParams,
    bins: usize,
    grid: &str,
    q: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let g = make_grid(grid, bins, q, params.alpha())?;
    let p = params.0;
    let d = py
        .detach(|| transfer::stationary_density(&transfer::annealed_matrix(&p, &g), tol, max_iter))
        .map_err(to_py)?;
    Ok((d.grid.breakpoints().to_vec(), d.values, d.residual))
}

/// `Cor_0 … Cor_{n_max}` of the Ulam approximation.
#[pyfunction]
#[pyo3(signature = (params, bins, n_max, phi="x", psi="x", grid="uniform", q=None, tol=1e-10))]
#[allow(clippy::too_many_arguments)]
fn correlation(
    py: Python<'_>,
    params: &PySystemParams,
    bins: usize,
    n_max: usize,
    phi: &str,
    psi: &str,
    grid: &str,
    q: Option<f64>,
    tol: f64,
) -> PyResult<Vec<f64>> {
    let g = make_grid(grid, bins, q, params.alpha())?;
    let phi = Observable::by_name(phi).map_err(to_py)?;
    let psi = Observable::by_name(psi).map_err(to_py)?;
    let p = params.0;
    py.detach(|| {
        let m = transfer::annealed_matrix(&p, &g);
        let d = transfer::stationary_density(&m, tol, transfer::DEFAULT_DENSITY_MAX_ITER)?;
        transfer::correlation_operator(&m, &d, &phi, &psi, n_max, false)
    })
    .map_err(to_py)
}

/// Ledger rows `(check, pass, n_cases, worst_margin)` of the exhaustive lemma checks.
#[pyfunction]
#[pyo3(signature = (params, depth=12))]
fn lemma_suite(py: Python<'_>, params: &PySystemParams, depth: usize) -> Vec<(String, bool, u64, f64)> {
    let p = params.0;
    let ledger = py.detach(|| verify::lemma_suite(&p, depth));
    ledger
        .entries
        .into_iter()
        .map(|e| (e.check, e.pass, e.n_cases, e.worst_margin))
        .collect()
}

/// Base cells `(i, word, omega_lo, omega_hi, x_lo, x_hi)` with return time `i ≤ i_max`.
#[pyfunction]
fn base_partition(i_max: usize, params: &PySystemParams) -> PyResult<Vec<(usize, String, f64, f64, f64, f64)>> {
    let cells = tower::base_partition(i_max, &params.0).map_err(to_py)?;
    Ok(cells
        .into_iter()
        .map(|c| (c.cell.i, c.cell.word.to_string(), c.omega.lo, c.omega.hi, c.x_lo, c.x_hi))
        .collect())
}

#[pymodule]
fn randlsv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLsvMap>()?;
    m.add_class::<PySystemParams>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(backward_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(expectation_exact, m)?)?;
    m.add_function(wrap_pyfunction!(expectation_profile, m)?)?;
    m.add_function(wrap_pyfunction!(tail, m)?)?;
    m.add_function(wrap_pyfunction!(hoeffding, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_density, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_suite, m)?)?;
    m.add_function(wrap_pyfunction!(base_partition, m)?)?;
    Ok(())
}
