//! Python bindings: scenarios, static parameters, experiments and reports.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use geosim::channel::{koffset_slots, ta_common_granules, TA_COMMON_PUBLISHED};
use geosim::config::{parse_scenario, parse_scenario_str, ConfigError, ScenarioConfig, Stack};
use geosim::dvb::{bbframe_info_bits, gse_round_trip as gse_rt};
use geosim::params::static_params;
use geosim::report::{render, to_json_value, Format};
use geosim::selftest::run_suite;
use geosim::sim::RNG_ALGORITHM;
use geosim::transport::transfer as run_transfer;
use geosim::workloads::{self, run_experiment as run_exp, ExperimentKind, KpiReport};

fn config_err(e: ConfigError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn kind(name: &str) -> PyResult<ExperimentKind> {
    ExperimentKind::parse(name).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown experiment `{name}` (expected jitter, video, webpage or download)"
        ))
    })
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (v.to_string(),))?.unbind())
}

/// A validated scenario configuration.
#[pyclass(module = "geosim", frozen)]
struct Scenario {
    cfg: ScenarioConfig,
    name: String,
}

impl Scenario {
    fn canonical_map(&self) -> BTreeMap<String, String> {
        self.cfg
            .canonical()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

#[pymethods]
impl Scenario {
    /// Parses `key = value` configuration text.
    #[new]
    #[pyo3(signature = (text = "", name = None))]
    fn new(text: &str, name: Option<String>) -> PyResult<Self> {
        let cfg = parse_scenario_str(text).map_err(config_err)?;
        let name = name.unwrap_or_else(|| cfg.stack.short_name().to_string());
        Ok(Scenario { cfg, name })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let cfg = parse_scenario(&path).map_err(config_err)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| cfg.stack.short_name().to_string());
        Ok(Scenario { cfg, name })
    }

    /// Stack defaults: `ntn5g` or `dvb-s2-rcs2`.
    #[staticmethod]
    fn defaults(stack: &str) -> PyResult<Self> {
        Self::new(&format!("stack = {stack}\n"), None)
    }

    /// A copy with some keys replaced, e.g. `{"seed": 3, "nr.noise_ms": 0}`.
    fn replace(&self, overrides: &Bound<'_, PyDict>) -> PyResult<Self> {
        let mut kv = self.canonical_map();
        let stack_change = overrides.contains("stack")?;
        for (k, v) in overrides.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<bool>() {
                Ok(b) if v.is_instance_of::<pyo3::types::PyBool>() => b.to_string(),
                _ => v.str()?.to_string(),
            };
            kv.insert(key, value);
        }
        if stack_change {
            // Keys of the old stack block would be rejected.
            let stack = kv["stack"].clone();
            let inactive = if stack.starts_with("dvb") { "nr." } else { "dvb." };
            kv.retain(|k, _| !k.starts_with(inactive) || overrides.contains(k).unwrap_or(false));
            kv.retain(|k, _| !k.starts_with("budget."));
        }
        let text: String = kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let cfg = parse_scenario_str(&text).map_err(config_err)?;
        Ok(Scenario {
            cfg,
            name: self.name.clone(),
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.name
    }

    #[getter]
    fn stack(&self) -> &'static str {
        self.cfg.stack.as_str()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.cfg.mode.as_str()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    #[getter]
    fn rtt_us(&self) -> u64 {
        self.cfg.rtt_us()
    }

    fn canonical(&self) -> String {
        self.cfg.canonical()
    }

    fn fingerprint(&self) -> String {
        self.cfg.fingerprint()
    }

    /// Derived static parameters as a dict of strings.
    fn params(&self) -> BTreeMap<String, String> {
        static_params(&self.cfg).0.into_iter().collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, stack={}, mode={}, fingerprint={})",
            self.name,
            self.cfg.stack,
            self.cfg.mode,
            &self.cfg.fingerprint()[..12]
        )
    }
}

/// Result of one or two scenarios on one experiment.
#[pyclass(module = "geosim", frozen)]
struct Report {
    inner: KpiReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn experiment(&self) -> &'static str {
        self.inner.kind.name()
    }

    /// Per-run ratios in the report's orientation; `None` where undefined.
    #[getter]
    fn ratios(&self) -> Vec<Option<f64>> {
        self.inner.ratios.iter().map(|r| r.ratio).collect()
    }

    #[getter]
    fn mean_ratio(&self) -> Option<f64> {
        self.inner.mean_ratio
    }

    /// Column means per scenario name.
    fn means(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        self.inner
            .scenarios
            .iter()
            .map(|s| (s.scenario.clone(), s.means.iter().cloned().collect()))
            .collect()
    }

    /// Rows of one scenario (by position) as a list of dicts.
    fn rows(&self, index: usize) -> PyResult<Vec<BTreeMap<String, f64>>> {
        let s = self
            .inner
            .scenarios
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("no scenario {index}")))?;
        Ok(s.rows.iter().map(|r| r.metrics.iter().cloned().collect()).collect())
    }

    fn to_text(&self) -> String {
        render(std::slice::from_ref(&self.inner), Format::Text)
    }

    fn to_csv(&self) -> String {
        render(std::slice::from_ref(&self.inner), Format::Csv)
    }

    fn to_json(&self) -> String {
        render(std::slice::from_ref(&self.inner), Format::Json)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_to_py(py, &to_json_value(&self.inner))
    }

    fn __str__(&self) -> String {
        self.to_text()
    }
}

/// Runs one experiment (`jitter`, `video`, `webpage`, `download`).
#[pyfunction]
fn run_experiment(py: Python<'_>, scenario: &Scenario, experiment: &str) -> PyResult<Report> {
    let k = kind(experiment)?;
    let cfg = scenario.cfg.clone();
    let name = scenario.name.clone();
    let r = py
        .detach(move || run_exp(&name, &cfg, k))
        .map_err(sim_err)?;
    Ok(Report {
        inner: workloads::single(&r),
    })
}

/// Runs one experiment on both scenarios and pairs them with ratios.
#[pyfunction]
fn compare(py: Python<'_>, a: &Scenario, b: &Scenario, experiment: &str) -> PyResult<Report> {
    let k = kind(experiment)?;
    let (ca, cb) = (a.cfg.clone(), b.cfg.clone());
    let (na, mut nb) = (a.name.clone(), b.name.clone());
    if na == nb {
        nb.push_str("-b");
    }
    let (ra, rb) = py.detach(move || {
        std::thread::scope(|s| {
            let ha = s.spawn(|| run_exp(&na, &ca, k));
            let hb = s.spawn(|| run_exp(&nb, &cb, k));
            (ha.join().expect("worker panicked"), hb.join().expect("worker panicked"))
        })
    });
    let inner = workloads::compare(&ra.map_err(sim_err)?, &rb.map_err(sim_err)?).map_err(sim_err)?;
    Ok(Report { inner })
}

/// Connects and downloads `size` bytes; returns the timeline in seconds.
#[pyfunction]
#[pyo3(signature = (scenario, size, seed = None, t_request_us = 0))]
fn transfer(
    py: Python<'_>,
    scenario: &Scenario,
    size: u64,
    seed: Option<u64>,
    t_request_us: u64,
) -> PyResult<BTreeMap<String, f64>> {
    let cfg = scenario.cfg.clone();
    let seed = seed.unwrap_or(cfg.seed);
    let tl = py
        .detach(move || run_transfer(&cfg, seed, t_request_us, size))
        .map_err(sim_err)?;
    let mut m = BTreeMap::new();
    m.insert("connect_s".into(), tl.connect_s());
    m.insert("first_byte_s".into(), tl.first_byte_s());
    m.insert("complete_s".into(), tl.complete_s());
    m.insert("bytes_total".into(), tl.bytes_total as f64);
    if let Ok(kbps) = geosim::transport::throughput(&tl) {
        m.insert("throughput_kBps".into(), kbps);
    }
    Ok(m)
}

/// Mean absolute difference of consecutive RTTs (µs in, ms out).
#[pyfunction]
fn jitter(rtts_us: Vec<u64>) -> PyResult<f64> {
    workloads::jitter(&rtts_us).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn ta_common(one_way_delay_us: f64) -> PyResult<u64> {
    if !(one_way_delay_us.is_finite() && one_way_delay_us >= 0.0) {
        return Err(PyValueError::new_err("delay must be finite and >= 0"));
    }
    Ok(ta_common_granules(one_way_delay_us))
}

#[pyfunction]
fn koffset(rtt_us: u64, slot_duration_us: u64) -> PyResult<u64> {
    if slot_duration_us == 0 {
        return Err(PyValueError::new_err("slot duration must be positive"));
    }
    Ok(koffset_slots(rtt_us, slot_duration_us))
}

#[pyfunction]
fn bbframe_info(fecframe_bits: u32, code_rate: f64) -> PyResult<u64> {
    bbframe_info_bits(fecframe_bits, code_rate).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// GSE-encapsulates, serialises, parses and reassembles `datagrams`.
#[pyfunction]
#[pyo3(signature = (datagrams, capacity_bits = 12_880))]
fn gse_round_trip<'py>(
    py: Python<'py>,
    datagrams: Vec<Vec<u8>>,
    capacity_bits: u64,
) -> PyResult<Vec<Bound<'py, PyBytes>>> {
    let out = gse_rt(&datagrams, capacity_bits).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(out.iter().map(|d| PyBytes::new(py, d)).collect())
}

/// Runs one property suite (`a`-`g`); returns `(passed, detail)`.
#[pyfunction]
fn selftest(py: Python<'_>, suite: char) -> PyResult<(bool, String)> {
    let r = py
        .detach(move || run_suite(suite))
        .ok_or_else(|| PyValueError::new_err(format!("unknown suite `{suite}`")))?;
    Ok((r.passed, r.detail))
}

#[pymodule(name = "geosim")]
fn geosim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(transfer, m)?)?;
    m.add_function(wrap_pyfunction!(jitter, m)?)?;
    m.add_function(wrap_pyfunction!(ta_common, m)?)?;
    m.add_function(wrap_pyfunction!(koffset, m)?)?;
    m.add_function(wrap_pyfunction!(bbframe_info, m)?)?;
    m.add_function(wrap_pyfunction!(gse_round_trip, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add("RNG_ALGORITHM", RNG_ALGORITHM)?;
    m.add("TA_COMMON_PUBLISHED", TA_COMMON_PUBLISHED)?;
    m.add("STACKS", [Stack::Ntn5g.as_str(), Stack::DvbS2Rcs2.as_str()])?;
    m.add(
        "EXPERIMENTS",
        ExperimentKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
