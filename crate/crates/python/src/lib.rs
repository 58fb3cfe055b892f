//! Python bindings: solve rings, run sweeps, evaluate the kernel and predictions.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use swirl_rings::asymptotics;
use swirl_rings::cli::{self, config::RunConfig};
use swirl_rings::diagnostics::{self, DiagnosticsRecord, Value};
use swirl_rings::geometry::{DomainKind, ScalarField};
use swirl_rings::kernel::{self, KernelBackend};
use swirl_rings::variational::{solve_ring, RingRun, RingSetup, SolverParams};

create_exception!(swirl_rings_py, SwirlRingsError, PyException);

fn py_err(e: swirl_rings::Error) -> PyErr {
    SwirlRingsError::new_err(format!("[{}] {e}", e.code()))
}

fn kind(name: &str) -> PyResult<DomainKind> {
    name.parse().map_err(py_err)
}

fn backend(name: &str) -> PyResult<KernelBackend> {
    match name {
        "quadrature" => Ok(KernelBackend::Quadrature),
        "elliptic" => Ok(KernelBackend::Elliptic),
        other => Err(SwirlRingsError::new_err(format!("unknown kernel backend `{other}`"))),
    }
}

/// Rows of `f` indexed `[i_r][j_z]`.
pub fn field_rows(f: &ScalarField) -> Vec<Vec<f64>> {
    f.as_slice().chunks(f.n_z()).map(<[f64]>::to_vec).collect()
}

/// A record as ordered `(key, value)` pairs; `None` marks a non-applicable entry.
pub enum Entry {
    Float(f64),
    Int(i64),
    Text(String),
    Missing,
}

pub fn record_entries(rec: &DiagnosticsRecord) -> Vec<(&'static str, Entry)> {
    rec.entries()
        .into_iter()
        .map(|(k, v)| {
            let e = match v {
                Value::Num(x) => Entry::Float(x),
                Value::Int(i) => Entry::Int(i),
                Value::Text(s) => Entry::Text(s),
                Value::NotApplicable => Entry::Missing,
            };
            (k, e)
        })
        .collect()
}

fn record_dict<'py>(py: Python<'py>, rec: &DiagnosticsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, e) in record_entries(rec) {
        match e {
            Entry::Float(x) => d.set_item(k, x)?,
            Entry::Int(i) => d.set_item(k, i)?,
            Entry::Text(s) => d.set_item(k, s)?,
            Entry::Missing => d.set_item(k, py.None())?,
        }
    }
    Ok(d)
}

/// A converged (or best-effort) ring with its grid, fields and diagnostics.
#[pyclass(name = "Ring", frozen)]
pub struct PyRing {
    run: RingRun,
    record: DiagnosticsRecord,
}

#[pymethods]
impl PyRing {
    #[getter]
    fn mu(&self) -> f64 {
        self.run.solution.mu
    }
    #[getter]
    fn energy(&self) -> f64 {
        self.run.solution.energy
    }
    #[getter]
    fn circulation(&self) -> f64 {
        self.run.solution.circulation
    }
    #[getter]
    fn converged(&self) -> bool {
        self.run.solution.converged
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.run.solution.iterations
    }
    #[getter]
    fn r_star(&self) -> f64 {
        self.run.r_star
    }
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.run.warnings.clone()
    }
    /// Radial node coordinates.
    #[getter]
    fn r(&self) -> Vec<f64> {
        self.run.grid.r().to_vec()
    }
    /// Axial node coordinates.
    #[getter]
    fn z(&self) -> Vec<f64> {
        self.run.grid.z().to_vec()
    }
    /// Vorticity `ζ` as rows `[i_r][j_z]`.
    fn zeta(&self) -> Vec<Vec<f64>> {
        field_rows(&self.run.solution.zeta)
    }
    /// Stream function `ψ` as rows `[i_r][j_z]`.
    fn psi(&self) -> Vec<Vec<f64>> {
        field_rows(&self.run.solution.psi)
    }
    /// Swirl `ξ = ψ₊/β` as rows `[i_r][j_z]`.
    fn xi(&self) -> Vec<Vec<f64>> {
        field_rows(&self.run.solution.xi)
    }
    /// Diagnostics record as a dict; non-applicable entries are `None`.
    fn record<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        record_dict(py, &self.record)
    }
    fn __repr__(&self) -> String {
        let p = &self.run.setup.params;
        format!(
            "Ring(kind={}, beta={:e}, W={}, mu={:.6}, energy={:.6}, converged={})",
            self.run.setup.kind, p.beta, p.w, self.run.solution.mu, self.run.solution.energy, self.run.solution.converged
        )
    }
}

fn finish(run: RingRun, seed: u64) -> PyResult<PyRing> {
    let record = diagnostics::record(&run, seed).map_err(py_err)?;
    Ok(PyRing { run, record })
}

/// Solves for one ring. `kind` is `whole_space`, `cylinder` or `exterior_ball`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (kind, beta, w, d = 0.0, alpha = 0.0, max_iter = 4000, seed = diagnostics::DEFAULT_SEED))]
fn solve(py: Python<'_>, kind: &str, beta: f64, w: f64, d: f64, alpha: f64, max_iter: usize, seed: u64) -> PyResult<PyRing> {
    let mut params = SolverParams::new(beta, w);
    params.alpha = alpha;
    params.max_iter = max_iter;
    let setup = RingSetup::new(self::kind(kind)?, d, params);
    let run = py.detach(|| solve_ring(&setup)).map_err(py_err)?;
    finish(run, seed)
}

/// Solves the configuration given as TOML text (the `solve -c` format).
#[pyfunction]
fn solve_config(py: Python<'_>, text: &str) -> PyResult<PyRing> {
    let cfg: RunConfig = cli::parse_config(text).map_err(py_err)?;
    let run = py.detach(|| solve_ring(&cfg.setup(cfg.beta()))).map_err(py_err)?;
    finish(run, cfg.params.seed)
}

/// Runs a sweep; returns the member records (dicts, `None` for failed members) and
/// the `(μ, E)` slope fits as `(slope, intercept, max_residual)` triples.
#[pyfunction]
#[pyo3(signature = (kind, w, betas, d = 0.0))]
#[allow(clippy::type_complexity)]
fn sweep<'py>(
    py: Python<'py>,
    kind: &str,
    w: f64,
    betas: Vec<f64>,
    d: f64,
) -> PyResult<(Vec<Option<Bound<'py, PyDict>>>, (f64, f64, f64), (f64, f64, f64))> {
    let base = RingSetup::new(self::kind(kind)?, d, SolverParams::new(betas.first().copied().unwrap_or(0.5), w));
    let members = py.detach(|| asymptotics::run_sweep(&base, &betas, diagnostics::DEFAULT_SEED)).map_err(py_err)?;
    let (mu, e) = asymptotics::sweep_fits(&members).map_err(py_err)?;
    let records = members
        .iter()
        .map(|m| m.record.as_ref().map(|r| record_dict(py, r)).transpose())
        .collect::<PyResult<Vec<_>>>()?;
    Ok((records, (mu.slope, mu.intercept, mu.max_residual), (e.slope, e.intercept, e.max_residual)))
}

/// Free-space ring kernel `G(r, z; r′, z′)`.
#[pyfunction]
#[pyo3(signature = (r, z, r_src, z_src, backend = "quadrature"))]
fn ring_green(r: f64, z: f64, r_src: f64, z_src: f64, backend: &str) -> PyResult<f64> {
    kernel::ring_green(r, z, r_src, z_src, self::backend(backend)?).map_err(py_err)
}

/// Dimensionless separation `σ`.
#[pyfunction]
fn sigma(r: f64, z: f64, r_src: f64, z_src: f64) -> PyResult<f64> {
    kernel::sigma(r, z, r_src, z_src).map_err(py_err)
}

/// Leading-order predictions as a dict with `r_star`, `mu_slope`, `e_slope` and
/// `translation_speed_coeff`.
#[pyfunction]
#[pyo3(signature = (kind, w, d = 0.0))]
fn predict<'py>(py: Python<'py>, kind: &str, w: f64, d: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = asymptotics::predict(self::kind(kind)?, d, w).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("r_star", p.r_star)?;
    out.set_item("mu_slope", p.mu_slope)?;
    out.set_item("e_slope", p.e_slope)?;
    out.set_item("translation_speed_coeff", p.translation_speed_coeff)?;
    Ok(out)
}

/// Least-squares fit of `value` against `log(1/β)` over `(β, value)` pairs.
#[pyfunction]
fn fit_log_slope(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = asymptotics::fit_log_slope(&points).map_err(py_err)?;
    Ok((f.slope, f.intercept, f.max_residual))
}

/// The `validate` property suite as `(name, passed, detail)` triples.
#[pyfunction]
fn validate(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(cli::run_validation)
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

/// Module initializer; also usable from an embedded interpreter via `wrap_pymodule!`.
#[pymodule]
pub fn swirl_rings_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SwirlRingsError", m.py().get_type::<SwirlRingsError>())?;
    m.add_class::<PyRing>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_config, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(ring_green, m)?)?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(fit_log_slope, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
