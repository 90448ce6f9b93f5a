//! Python bindings: the operator constructions, the headline checks, and
//! the suite runner. Complex numbers cross the boundary as Python complex.

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qoplab::harness;
use qoplab::qtransfer as qt;
use qoplab::QopError;

fn qerr(e: QopError) -> PyErr {
    match harness::error_exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "BaxterParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyBaxterParams {
    inner: qt::BaxterParams,
}

#[pymethods]
impl PyBaxterParams {
    #[new]
    #[pyo3(signature = (eta, v, s0, allow_root_of_unity = false))]
    fn new(eta: f64, v: f64, s0: Complex64, allow_root_of_unity: bool) -> Self {
        let p = qt::BaxterParams::new(eta, v, s0);
        PyBaxterParams {
            inner: if allow_root_of_unity {
                p.with_unity_allowed()
            } else {
                p
            },
        }
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn v(&self) -> f64 {
        self.inner.v
    }

    #[getter]
    fn q(&self) -> Complex64 {
        self.inner.q()
    }

    #[getter]
    fn z(&self) -> Complex64 {
        self.inner.z()
    }

    #[getter]
    fn s0(&self) -> Complex64 {
        self.inner.s0()
    }

    /// Parameter point shifted dir steps: v -> v - 2 eta dir with s0 scaled
    /// by q^dir on the logged branch.
    fn shifted(&self, dir: i32) -> Self {
        PyBaxterParams {
            inner: self.inner.shifted(dir),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "BaxterParams(eta={}, v={}, s0={})",
            self.inner.eta,
            self.inner.v,
            self.inner.s0()
        )
    }
}

#[pyclass(name = "SectorOperator", frozen)]
struct PySectorOperator {
    inner: qt::SectorOperator,
}

#[pymethods]
impl PySectorOperator {
    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites
    }

    /// Charge sectors from the highest down, step two.
    fn charges(&self) -> Vec<i64> {
        qt::sector_charges(self.inner.n_sites)
    }

    /// Spin configurations spanning one sector, strings over +/-.
    fn basis(&self, n: i64) -> PyResult<Vec<String>> {
        Ok(self.inner.sector(n).map_err(qerr)?.basis.clone())
    }

    fn is_delta(&self, n: i64) -> PyResult<bool> {
        Ok(matches!(
            self.inner.sector(n).map_err(qerr)?.entries,
            qt::BlockEntries::Delta(_)
        ))
    }

    /// Plain matrix block as nested lists, rows outermost.
    fn scalar_block(&self, n: i64) -> PyResult<Vec<Vec<Complex64>>> {
        let m = self.inner.scalar_sector(n).map_err(qerr)?;
        let dim = m.nrows();
        Ok((0..dim)
            .map(|r| (0..dim).map(|c| m[(r, c)]).collect())
            .collect())
    }

    /// Delta-series block: per entry a list of (power, coefficient) pairs.
    #[allow(clippy::type_complexity)]
    fn delta_block(&self, n: i64) -> PyResult<Vec<Vec<Vec<(i64, Complex64)>>>> {
        let block = self.inner.sector(n).map_err(qerr)?;
        let series = self.inner.delta_sector(n).map_err(qerr)?;
        let dim = block.dim();
        Ok((0..dim)
            .map(|r| {
                (0..dim)
                    .map(|c| series[r * dim + c].iter().collect())
                    .collect()
            })
            .collect())
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    /// Deterministic JSON, identical to the dump subcommand's output.
    fn to_json(&self) -> PyResult<String> {
        harness::render_sector_operator(&self.inner).map_err(qerr)
    }

    fn __repr__(&self) -> String {
        format!("SectorOperator(n_sites={})", self.inner.n_sites)
    }
}

/// Transfer matrix of a homogeneous chain at spectral point z.
#[pyfunction]
fn transfer_matrix(
    n_sites: usize,
    q: Complex64,
    w: Complex64,
    z: Complex64,
) -> PyResult<PySectorOperator> {
    let chain = qt::ChainSpec::homogeneous(n_sites, w, q);
    Ok(PySectorOperator {
        inner: qt::transfer_matrix(&chain, z).map_err(qerr)?,
    })
}

/// Q-operator from the infinite-dimensional module trace on a homogeneous
/// chain; entries are formal delta series.
#[pyfunction]
fn q_generic(
    n_sites: usize,
    q: Complex64,
    w: Complex64,
    z: Complex64,
    s0: Complex64,
    s1: Complex64,
    s2: Complex64,
) -> PyResult<PySectorOperator> {
    let chain = qt::ChainSpec::homogeneous(n_sites, w, q);
    let params = qoplab::repmod::BorelParams::new(z, s0, s1, s2);
    Ok(PySectorOperator {
        inner: qt::q_generic(&chain, z, &params).map_err(qerr)?,
    })
}

/// Closed-form Q-operator in the angle parametrization, with the s0 power.
#[pyfunction]
fn q_explicit(n_sites: usize, params: PyBaxterParams) -> PyResult<PySectorOperator> {
    Ok(PySectorOperator {
        inner: qt::q_explicit(n_sites, &params.inner).map_err(qerr)?,
    })
}

/// Pure phase matrix exp(i(eta S + v d)/2), the sector pattern without the
/// s0 power.
#[pyfunction]
fn baxter_q(n_sites: usize, params: PyBaxterParams) -> PySectorOperator {
    PySectorOperator {
        inner: qt::baxter_q(n_sites, &params.inner),
    }
}

/// Residual of the two-term functional relation in one charge sector,
/// worst of both operator orders. Returns (residual, tol, passed).
#[pyfunction]
fn check_tq_explicit(
    n_sites: usize,
    params: PyBaxterParams,
    sector: i64,
) -> PyResult<(f64, f64, bool)> {
    let rep = qt::check_tq_explicit(n_sites, &params.inner, sector).map_err(qerr)?;
    Ok((rep.residual, rep.tol, rep.pass))
}

/// Relative commutator norm across sectors (all of them by default).
#[pyfunction]
#[pyo3(signature = (a, b, sectors = None))]
fn commutator_residual(
    a: &PySectorOperator,
    b: &PySectorOperator,
    sectors: Option<Vec<i64>>,
) -> PyResult<f64> {
    let rep = qt::commutator_norms_sectors(&a.inner, &b.inner, sectors.as_deref())
        .map_err(qerr)?;
    Ok(rep.residual)
}

#[pyfunction]
fn yang_baxter_residual(z1: Complex64, z2: Complex64, q: Complex64) -> PyResult<f64> {
    Ok(qoplab::intertwine::yang_baxter_residual(z1, z2, q)
        .map_err(qerr)?
        .residual)
}

/// Exact antisymmetric-form maximum and the count of unreachable
/// same-sector pairs for nested transposition products.
#[pyfunction]
fn wedge_identity(n_sites: usize) -> PyResult<(i64, usize)> {
    let out = qt::wedge_identity_check(n_sites).map_err(qerr)?;
    Ok((out.max_wedge, out.unreachable_pairs))
}

/// Two-term fit of the shifted transfer-matrix product. Returns
/// (identity coefficient, fused coefficient, fit residual, order agreement).
#[pyfunction]
fn fusion_fit(
    n_sites: usize,
    q: Complex64,
    w: Complex64,
    z: Complex64,
) -> PyResult<(Complex64, Complex64, f64, f64)> {
    let chain = qt::ChainSpec::homogeneous(n_sites, w, q);
    let out = qt::fusion_fit(&chain, z).map_err(qerr)?;
    Ok((
        out.shift_term,
        out.fused_term,
        out.report.residual,
        out.order_agreement,
    ))
}

/// Runs one named suite from a JSON configuration string and returns the
/// report JSON. Seed precedence: argument, then config, then 0.
#[pyfunction]
#[pyo3(signature = (name, config_json, seed = None))]
fn run_suite(name: &str, config_json: &str, seed: Option<u64>) -> PyResult<String> {
    let config: harness::RunConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let seed = seed.or(config.seed).unwrap_or(0);
    let report = harness::run_suite(name, &config, seed).map_err(qerr)?;
    Ok(harness::render_report(&report))
}

/// Builds one operator (t, q-generic, q-explicit, q-baxter) from a JSON
/// configuration string and returns its deterministic JSON dump.
#[pyfunction]
#[pyo3(signature = (kind, config_json, seed = None))]
fn dump_operator(kind: &str, config_json: &str, seed: Option<u64>) -> PyResult<String> {
    let config: harness::RunConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let seed = seed.or(config.seed).unwrap_or(0);
    harness::dump_operator(kind, &config, seed).map_err(qerr)
}

#[pymodule]
fn qoplab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyBaxterParams>()?;
    m.add_class::<PySectorOperator>()?;
    m.add_function(wrap_pyfunction!(transfer_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(q_generic, m)?)?;
    m.add_function(wrap_pyfunction!(q_explicit, m)?)?;
    m.add_function(wrap_pyfunction!(baxter_q, m)?)?;
    m.add_function(wrap_pyfunction!(check_tq_explicit, m)?)?;
    m.add_function(wrap_pyfunction!(commutator_residual, m)?)?;
    m.add_function(wrap_pyfunction!(yang_baxter_residual, m)?)?;
    m.add_function(wrap_pyfunction!(wedge_identity, m)?)?;
    m.add_function(wrap_pyfunction!(fusion_fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(dump_operator, m)?)?;
    Ok(())
}
