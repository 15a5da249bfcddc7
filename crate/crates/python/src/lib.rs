//! Python bindings (`pyd2dlab`) for the d2dlab core.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use d2dlab::analysis::{self, NetworkConfig as CoreConfig, DEFAULT_KAPPA};
use d2dlab::ingest;
use d2dlab::policy as core_policy;
use d2dlab::popularity::{self, EmpiricalDistribution, FitConfig};
use d2dlab::simulator::{CacheDraw, GridNetwork, PolicySource, Simulation};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "PopularityModel", module = "pyd2dlab")]
struct PyPopularityModel {
    inner: popularity::PopularityModel,
}

#[pymethods]
impl PyPopularityModel {
    #[new]
    fn new(gamma: f64, q: f64, m_total: usize) -> PyResult<Self> {
        Ok(Self {
            inner: popularity::PopularityModel::new(gamma, q, m_total).map_err(value_err)?,
        })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    #[getter]
    fn m_total(&self) -> usize {
        self.inner.m_total()
    }

    /// Probability of the 1-based `rank`.
    fn pmf(&self, rank: usize) -> PyResult<f64> {
        self.inner.pmf(rank).map_err(value_err)
    }

    fn pmf_vec(&self) -> Vec<f64> {
        self.inner.pmf_vec()
    }

    /// `n` ranks drawn with a seeded ChaCha8 generator.
    fn sample(&self, n: usize, seed: u64) -> Vec<usize> {
        use rand::SeedableRng;
        let sampler = self.inner.sampler();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sampler.sample_with(&mut rng)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "PopularityModel(gamma={}, q={}, m_total={})",
            self.inner.gamma(),
            self.inner.q(),
            self.inner.m_total()
        )
    }
}

#[pyclass(name = "FitResult", module = "pyd2dlab", get_all)]
struct PyFitResult {
    gamma: f64,
    q: f64,
    m_total: usize,
    kl_distance: f64,
    sweeps: usize,
    converged: bool,
}

/// Fit an MZipf model to per-rank counts (any order).
#[pyfunction]
fn fit_mzipf(py: Python<'_>, counts: Vec<u64>) -> PyResult<PyFitResult> {
    let emp = EmpiricalDistribution::from_unsorted(counts).map_err(value_err)?;
    let fit = py
        .detach(|| popularity::fit_mzipf(&emp, &FitConfig::default()))
        .map_err(value_err)?;
    Ok(PyFitResult {
        gamma: fit.model.gamma(),
        q: fit.model.q(),
        m_total: fit.model.m_total(),
        kl_distance: fit.kl_distance,
        sweeps: fit.sweeps,
        converged: fit.converged,
    })
}

/// Parse a log file and return `(content_ids, counts, rows, malformed)`,
/// ranked by distinct-user count.
#[pyfunction]
#[pyo3(signature = (path, region=None))]
fn ingest_log(path: &str, region: Option<u32>) -> PyResult<(Vec<String>, Vec<u64>, u64, u64)> {
    let file = std::fs::File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let parsed = ingest::parse_log(file).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let records = match region {
        Some(r) => ingest::filter_region(parsed.records, r),
        None => parsed.records,
    };
    let ranked = ingest::to_empirical(&ingest::dedup_unique(&records))
        .map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok((
        ranked.content_ids,
        ranked.distribution.counts().to_vec(),
        parsed.report.rows,
        parsed.report.malformed,
    ))
}

#[pyclass(name = "CachingPolicy", module = "pyd2dlab", get_all)]
struct PyCachingPolicy {
    p_c: Vec<f64>,
    nu: f64,
    m_star: usize,
}

#[pyfunction]
fn optimal_policy(model: &PyPopularityModel, s_cache: u64, g_c: u64) -> PyResult<PyCachingPolicy> {
    let p = core_policy::optimal_policy(&model.inner, s_cache, g_c).map_err(value_err)?;
    Ok(PyCachingPolicy {
        p_c: p.p_c().to_vec(),
        nu: p.nu(),
        m_star: p.m_star(),
    })
}

/// Water-filling policy for an explicit non-increasing request pmf.
#[pyfunction]
fn optimal_policy_from_pmf(pmf: Vec<f64>, s_cache: u64, g_c: u64) -> PyResult<PyCachingPolicy> {
    let p = core_policy::optimal_policy_from_pmf(&pmf, s_cache, g_c).map_err(value_err)?;
    Ok(PyCachingPolicy {
        p_c: p.p_c().to_vec(),
        nu: p.nu(),
        m_star: p.m_star(),
    })
}

#[pyfunction]
fn kkt_mstar(model: &PyPopularityModel, s_cache: u64, g_c: u64) -> PyResult<usize> {
    core_policy::kkt_mstar(&model.inner, s_cache, g_c).map_err(value_err)
}

#[pyfunction]
fn theoretical_mstar(model: &PyPopularityModel, s_cache: u64, g_c: u64) -> PyResult<f64> {
    core_policy::theoretical_mstar(&model.inner, s_cache, g_c).map_err(value_err)
}

#[pyfunction]
fn solve_c1(c2: f64) -> PyResult<f64> {
    core_policy::solve_c1(c2).map_err(value_err)
}

#[pyclass(name = "NetworkConfig", module = "pyd2dlab")]
struct PyNetworkConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyNetworkConfig {
    #[new]
    #[pyo3(signature = (n_users, s_cache, g_c, rate_c=1.0, reuse_k=4))]
    fn new(n_users: u64, s_cache: u64, g_c: u64, rate_c: f64, reuse_k: u64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreConfig::new(n_users, s_cache, rate_c, reuse_k, g_c).map_err(value_err)?,
        })
    }

    #[getter]
    fn n_users(&self) -> u64 {
        self.inner.n_users
    }

    #[getter]
    fn s_cache(&self) -> u64 {
        self.inner.s_cache
    }

    #[getter]
    fn g_c(&self) -> u64 {
        self.inner.g_c
    }

    #[getter]
    fn rate_c(&self) -> f64 {
        self.inner.rate_c
    }

    #[getter]
    fn reuse_k(&self) -> u64 {
        self.inner.reuse_k
    }
}

#[pyfunction]
fn hit_prob_closed_form(model: &PyPopularityModel, config: &PyNetworkConfig) -> PyResult<f64> {
    Ok(analysis::hit_prob_closed_form(&model.inner, &config.inner)
        .map_err(value_err)?
        .value)
}

#[pyfunction]
fn hit_prob_lower_bound(model: &PyPopularityModel, config: &PyNetworkConfig) -> PyResult<f64> {
    Ok(analysis::hit_prob_lower_bound(&model.inner, &config.inner)
        .map_err(value_err)?
        .value)
}

/// `(throughput, outage, regime, clamped)` for one cluster size.
#[pyfunction]
#[pyo3(signature = (model, config, kappa=DEFAULT_KAPPA))]
fn tradeoff_point(
    model: &PyPopularityModel,
    config: &PyNetworkConfig,
    kappa: f64,
) -> PyResult<(f64, f64, String, bool)> {
    let p = analysis::tradeoff_point(&model.inner, &config.inner, kappa).map_err(value_err)?;
    Ok((p.throughput, p.outage, p.regime.to_string(), p.clamped))
}

#[pyclass(name = "SimOutcome", module = "pyd2dlab", get_all)]
struct PySimOutcome {
    trials: u64,
    users: usize,
    hit_prob: f64,
    hit_prob_stderr: f64,
    d2d_hit_prob: f64,
    self_hit_rate: f64,
    outage: f64,
    outage_stderr: f64,
    per_user_throughput: f64,
    min_avg_throughput: f64,
    good_cluster_fraction: f64,
}

/// Monte Carlo over a grid network; `policy` is "optimal", "uniform" or
/// "proportional".
#[pyfunction]
#[pyo3(signature = (model, config, trials, seed=1, policy="optimal", without_replacement=false))]
fn simulate(
    py: Python<'_>,
    model: &PyPopularityModel,
    config: &PyNetworkConfig,
    trials: u64,
    seed: u64,
    policy: &str,
    without_replacement: bool,
) -> PyResult<PySimOutcome> {
    let source = match policy {
        "optimal" => PolicySource::Optimal,
        "uniform" => PolicySource::Uniform,
        "proportional" => PolicySource::Proportional,
        other => return Err(PyValueError::new_err(format!("unknown policy `{other}`"))),
    };
    let draw = if without_replacement {
        CacheDraw::WithoutReplacement
    } else {
        CacheDraw::WithReplacement
    };
    let cfg = config.inner;
    let pop = &model.inner;
    let o = py
        .detach(|| {
            let network = GridNetwork::build(cfg.n_users, cfg.g_c)?;
            let caching = source.caching_pmf(pop, cfg.s_cache, cfg.g_c)?;
            Simulation::new(&network, &caching, pop, &cfg)?
                .with_cache_draw(draw)
                .run_monte_carlo(trials, seed)
        })
        .map_err(value_err)?;
    Ok(PySimOutcome {
        trials: o.trials,
        users: o.users,
        hit_prob: o.hit_prob.mean,
        hit_prob_stderr: o.hit_prob.stderr,
        d2d_hit_prob: o.d2d_hit_prob.mean,
        self_hit_rate: o.self_hit_rate.mean,
        outage: o.outage.mean,
        outage_stderr: o.outage.stderr,
        per_user_throughput: o.per_user_throughput.mean,
        min_avg_throughput: o.min_avg_throughput,
        good_cluster_fraction: o.good_cluster_fraction.mean,
    })
}

#[pymodule]
fn pyd2dlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPopularityModel>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyCachingPolicy>()?;
    m.add_class::<PyNetworkConfig>()?;
    m.add_class::<PySimOutcome>()?;
    m.add_function(wrap_pyfunction!(fit_mzipf, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_log, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_policy, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_policy_from_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(kkt_mstar, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_mstar, m)?)?;
    m.add_function(wrap_pyfunction!(solve_c1, m)?)?;
    m.add_function(wrap_pyfunction!(hit_prob_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(hit_prob_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(tradeoff_point, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
