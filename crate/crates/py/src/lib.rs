//! Python bindings: the moment-data types, generators, the exact
//! certificates, the convex search, the analytic catalog and witnesses,
//! and the round sampler. Structured records cross the boundary as JSON
//! strings; the wrapper classes carry the numeric payloads directly.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pibell_core::error::Error as CoreError;
use pibell_core::linalg::SymMat;
use pibell_core::optimizer;
use pibell_core::oracle;
use pibell_core::pairdist;
use pibell_core::sampling;
use pibell_core::scenario;
use pibell_core::{catalog, scans};

fn err(e: CoreError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_gauge(gauge: &str) -> PyResult<optimizer::Gauge> {
    match gauge {
        "paper" => Ok(optimizer::Gauge::Ball),
        "fig5" => Ok(optimizer::Gauge::Sphere),
        other => Err(PyValueError::new_err(format!(
            "unknown gauge '{other}' (expected 'paper' or 'fig5')"
        ))),
    }
}

/// Coarse-grained moment data (M, Ct, M2) for an (N, k, d) scenario.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct QuantumData {
    inner: scenario::QuantumData,
}

#[pymethods]
impl QuantumData {
    /// SU(2)-invariant (singlet-type) data; `var = 0` is a perfect singlet.
    #[staticmethod]
    #[pyo3(signature = (n, two_j, angles, var = 0.0))]
    fn singlet(n: usize, two_j: u32, angles: Vec<f64>, var: f64) -> PyResult<Self> {
        let angles = scenario::AngleSet::new(angles).map_err(err)?;
        Ok(QuantumData {
            inner: scenario::singlet_data(n, two_j, &angles, var).map_err(err)?,
        })
    }

    /// Planar spin-squeezed data with Rabi contrast `mx` and scaled
    /// transverse variance `chi2`.
    #[staticmethod]
    #[pyo3(signature = (n, two_j, mx, chi2, angles, sx2 = None, sy2 = None, varx = None))]
    fn squeezed(
        n: usize,
        two_j: u32,
        mx: f64,
        chi2: f64,
        angles: Vec<f64>,
        sx2: Option<f64>,
        sy2: Option<f64>,
        varx: Option<f64>,
    ) -> PyResult<Self> {
        let params = scenario::SqueezedParams {
            m_x: mx,
            chi2,
            var_x: varx,
            sx2,
            sy2,
            cov_xy: None,
        };
        let angles = scenario::AngleSet::new(angles).map_err(err)?;
        Ok(QuantumData {
            inner: scenario::squeezed_data(n, two_j, &params, &angles).map_err(err)?,
        })
    }

    /// Moments of a local-variable model given as LvModel JSON.
    #[staticmethod]
    fn from_lv_model(model_json: &str) -> PyResult<Self> {
        let model = oracle::LvModel::from_json(model_json).map_err(err)?;
        Ok(QuantumData {
            inner: oracle::lv_moment_data(&model).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(QuantumData {
            inner: scenario::QuantumData::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Mixes the data with the maximally mixed point by fraction `r`.
    fn with_white_noise(&self, r: f64) -> PyResult<Self> {
        Ok(QuantumData {
            inner: scenario::apply_white_noise(&self.inner, r).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.scenario().n_parties()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.scenario().n_settings()
    }

    #[getter]
    fn two_j(&self) -> u32 {
        self.inner.scenario().two_j()
    }

    #[getter]
    fn m(&self) -> Vec<f64> {
        self.inner.m().to_vec()
    }

    #[getter]
    fn ct(&self) -> Vec<Vec<f64>> {
        self.inner.ct().rows()
    }

    #[getter]
    fn m2(&self) -> Vec<f64> {
        self.inner.m2().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "QuantumData(N={}, k={}, two_j={})",
            self.n(),
            self.k(),
            self.two_j()
        )
    }
}

/// Candidate inequality coefficients (A, h, h2) over a d-outcome alphabet.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct BellCandidate {
    inner: oracle::BellCandidate,
}

#[pymethods]
impl BellCandidate {
    #[new]
    fn new(two_j: u32, a: Vec<Vec<f64>>, h: Vec<f64>, h2: Vec<f64>) -> PyResult<Self> {
        let a = SymMat::from_rows(&a, 1e-12).map_err(err)?;
        Ok(BellCandidate {
            inner: oracle::BellCandidate::new(two_j, a, h, h2).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(BellCandidate {
            inner: oracle::BellCandidate::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn two_j(&self) -> u32 {
        self.inner.two_j()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        self.inner.a.rows()
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.inner.h.clone()
    }

    #[getter]
    fn h2(&self) -> Vec<f64> {
        self.inner.h2.clone()
    }

    fn __repr__(&self) -> String {
        format!("BellCandidate(k={}, two_j={})", self.k(), self.two_j())
    }
}

/// Exact violation certificate.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Certificate {
    #[pyo3(get)]
    quantum_value: f64,
    #[pyo3(get)]
    classical_bound: f64,
    #[pyo3(get)]
    margin: f64,
    #[pyo3(get)]
    violated: bool,
}

#[pymethods]
impl Certificate {
    fn __repr__(&self) -> String {
        format!(
            "Certificate(quantum_value={}, classical_bound={}, margin={}, violated={})",
            self.quantum_value, self.classical_bound, self.margin, self.violated
        )
    }
}

impl From<oracle::CertifiedViolation> for Certificate {
    fn from(c: oracle::CertifiedViolation) -> Self {
        Certificate {
            quantum_value: c.quantum_value,
            classical_bound: c.classical_bound,
            margin: c.margin,
            violated: c.violated,
        }
    }
}

/// Result of the convex search.
#[pyclass(frozen)]
struct SolveReport {
    #[pyo3(get)]
    candidate: BellCandidate,
    #[pyo3(get)]
    best_cost: f64,
    #[pyo3(get)]
    certified: Certificate,
    json: String,
}

#[pymethods]
impl SolveReport {
    fn to_json(&self) -> String {
        self.json.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveReport(best_cost={}, violated={})",
            self.best_cost, self.certified.violated
        )
    }
}

/// Exhaustive maximum of the per-particle energy and all maximizers
/// (2s-encoded strategies).
#[pyfunction]
fn e_max(cand: &BellCandidate) -> PyResult<(f64, Vec<Vec<i32>>)> {
    let res = oracle::e_max(&cand.inner).map_err(err)?;
    Ok((res.value, res.maximizers))
}

/// Exact classical bound `-N E_max`.
#[pyfunction]
fn classical_bound(cand: &BellCandidate, n: usize) -> PyResult<f64> {
    oracle::classical_bound(&cand.inner, n).map_err(err)
}

/// Value `Tr(A Ct) + h.M + h2.M2` of the candidate on the data.
#[pyfunction]
fn quantum_value(cand: &BellCandidate, data: &QuantumData) -> PyResult<f64> {
    oracle::quantum_value(&cand.inner, &data.inner).map_err(err)
}

/// Exact certificate of the candidate against the data.
#[pyfunction]
fn certify(cand: &BellCandidate, data: &QuantumData) -> PyResult<Certificate> {
    Ok(oracle::certify(&cand.inner, &data.inner).map_err(err)?.into())
}

/// Runs the multi-restart projected subgradient search and certifies the
/// best candidate exactly.
#[pyfunction]
#[pyo3(signature = (data, gauge = "paper", seed = 0, max_iters = None, restarts = None))]
fn solve(
    data: &QuantumData,
    gauge: &str,
    seed: u64,
    max_iters: Option<usize>,
    restarts: Option<usize>,
) -> PyResult<SolveReport> {
    let mut config = optimizer::SolverConfig {
        gauge: parse_gauge(gauge)?,
        seed,
        ..Default::default()
    };
    if let Some(it) = max_iters {
        config.max_iters = it;
    }
    if let Some(r) = restarts {
        config.restarts = r;
    }
    let report = optimizer::solve(&data.inner, &config).map_err(err)?;
    Ok(SolveReport {
        candidate: BellCandidate {
            inner: report.candidate.clone(),
        },
        best_cost: report.best_cost,
        certified: report.certified.into(),
        json: report.to_json(),
    })
}

/// Known analytic families.
#[pyfunction]
fn catalog_names() -> Vec<String> {
    catalog::names().iter().map(|s| s.to_string()).collect()
}

/// One analytic family instance: returns (entry JSON, candidate).
#[pyfunction]
#[pyo3(signature = (name, params = None))]
fn catalog_entry(
    name: &str,
    params: Option<&Bound<'_, PyDict>>,
) -> PyResult<(String, BellCandidate)> {
    let mut map = std::collections::BTreeMap::new();
    if let Some(d) = params {
        for (key, value) in d.iter() {
            map.insert(key.extract::<String>()?, value.extract::<f64>()?);
        }
    }
    let entry = catalog::build(name, &map).map_err(err)?;
    let cand = BellCandidate {
        inner: entry.candidate.clone(),
    };
    Ok((entry.to_json(), cand))
}

/// Witness threshold of the k-setting singlet family on (Var Jx + Var Jy)/N.
#[pyfunction]
fn singlet_k_threshold(k: usize) -> f64 {
    catalog::singlet_k_threshold(k)
}

#[pyfunction]
fn witness_singlet_k(var_x: f64, var_y: f64, n: usize, k: usize) -> bool {
    catalog::witness_singlet_k(var_x, var_y, n, k)
}

#[pyfunction]
fn witness_singlets_1(var_x: f64, var_y: f64, n: usize) -> bool {
    catalog::witness_singlets_1(var_x, var_y, n)
}

#[pyfunction]
fn witness_singlets_2(var_x: f64, var_y: f64, sum_sx2: f64, n: usize, two_j: u32) -> bool {
    catalog::witness_singlets_2(var_x, var_y, sum_sx2, n, two_j)
}

/// Minimal two-setting quantum value over theta for a spin-1/2 ensemble
/// with mean spin `jx` and transverse variance `var_y`.
#[pyfunction]
fn tura_value_at_optimum(n: usize, jx: f64, var_y: f64) -> f64 {
    catalog::tura_value_at_optimum(n, jx, var_y)
}

/// A reproducible random local-variable mixture, as LvModel JSON.
#[pyfunction]
#[pyo3(signature = (n, two_j, k, max_components = 4, seed = 0))]
fn lv_model_json(n: usize, two_j: u32, k: usize, max_components: usize, seed: u64) -> PyResult<String> {
    let scenario = scenario::Scenario::new(n, k, two_j).map_err(err)?;
    Ok(oracle::seeded_lv_model(scenario, max_components, seed)
        .map_err(err)?
        .to_json())
}

/// Simulates measurement rounds on an LvModel (JSON); returns the round CSV.
#[pyfunction]
fn sample_rounds_csv(model_json: &str, rounds: usize, seed: u64) -> PyResult<String> {
    let model = oracle::LvModel::from_json(model_json).map_err(err)?;
    Ok(sampling::rounds_to_csv(&sampling::sample_rounds(
        &model, rounds, seed,
    )))
}

/// Plug-in moment estimates from a round CSV.
#[pyfunction]
fn estimate_from_csv(csv: &str, n: usize, k: usize, two_j: u32) -> PyResult<QuantumData> {
    let records = sampling::rounds_from_csv(csv).map_err(err)?;
    let scenario = scenario::Scenario::new(n, k, two_j).map_err(err)?;
    Ok(QuantumData {
        inner: sampling::estimate(&records, scenario).map_err(err)?,
    })
}

/// Rounds needed for relative precision eps on the pair correlations.
#[pyfunction]
fn runs_for_precision(k: usize, eps: f64) -> u64 {
    sampling::runs_for_precision(k, eps)
}

/// Averaged pair distribution of d = 2 moment data, as JSON.
#[pyfunction]
fn pair_distribution_json(data: &QuantumData) -> PyResult<String> {
    Ok(pairdist::pbar_from_binary_moments(&data.inner)
        .map_err(err)?
        .to_json())
}

/// Runs the pair-distribution search; returns (cost, violated).
#[pyfunction]
#[pyo3(signature = (pbar_json, seed = 0))]
fn solve_pair(pbar_json: &str, seed: u64) -> PyResult<(f64, bool)> {
    let pbar = pairdist::PairDistribution::from_json(pbar_json).map_err(err)?;
    let config = optimizer::SolverConfig {
        seed,
        ..Default::default()
    };
    let report = pairdist::solve_pbar(&pbar, &config).map_err(err)?;
    Ok((report.cost, report.violated))
}

/// Family fingerprint of a candidate: sorted eigenvalues of the normalized
/// shift-invariant part of the coefficients.
#[pyfunction]
fn fingerprint(cand: &BellCandidate) -> PyResult<Vec<f64>> {
    Ok(scans::fingerprint(&cand.inner).map_err(err)?.0)
}

#[pymodule]
fn pibell(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<QuantumData>()?;
    m.add_class::<BellCandidate>()?;
    m.add_class::<Certificate>()?;
    m.add_class::<SolveReport>()?;
    m.add_function(wrap_pyfunction!(e_max, m)?)?;
    m.add_function(wrap_pyfunction!(classical_bound, m)?)?;
    m.add_function(wrap_pyfunction!(quantum_value, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_entry, m)?)?;
    m.add_function(wrap_pyfunction!(singlet_k_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(witness_singlet_k, m)?)?;
    m.add_function(wrap_pyfunction!(witness_singlets_1, m)?)?;
    m.add_function(wrap_pyfunction!(witness_singlets_2, m)?)?;
    m.add_function(wrap_pyfunction!(tura_value_at_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(lv_model_json, m)?)?;
    m.add_function(wrap_pyfunction!(sample_rounds_csv, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_from_csv, m)?)?;
    m.add_function(wrap_pyfunction!(runs_for_precision, m)?)?;
    m.add_function(wrap_pyfunction!(pair_distribution_json, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pair, m)?)?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add("RNG_ALGORITHM", sampling::RNG_ALGORITHM)?;
    Ok(())
}
