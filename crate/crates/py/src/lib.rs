//! Python bindings (`hedgelab_py`) for the delta-hedging laboratory.
//!
//! The surface mirrors the library's main operations: Black-Scholes
//! analytics, Heston pricing, panel simulation to CSV, full experiment runs
//! from a TOML config, artifact re-scoring, and the gain-ratio metric.
//! Structured results cross the boundary as JSON-compatible dicts.

use hedgelab::bs;
use hedgelab::experiment::{self, ExperimentConfig};
use hedgelab::market::{heston_call_price as heston_call, HestonParams};
use hedgelab::{EuroOptionTerms, OptionKind};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn parse_kind(kind: &str) -> PyResult<OptionKind> {
    kind.parse().map_err(|_| PyValueError::new_err(format!("unknown option kind `{kind}`")))
}

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// JSON -> Python objects, so serde-serializable results become dicts/lists.
fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().unbind().into(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.unbind().into()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.unbind().into()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.unbind().into(),
        serde_json::Value::Array(items) => {
            let list = pyo3::types::PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.unbind().into()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.unbind().into()
        }
    })
}

fn to_py_json<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value).map_err(value_err)?;
    json_to_py(py, &json)
}

/// Black-Scholes price of a European option.
#[pyfunction]
#[pyo3(signature = (spot, strike, ttm, rate, vol, kind))]
fn bs_price(spot: f64, strike: f64, ttm: f64, rate: f64, vol: f64, kind: &str) -> PyResult<f64> {
    let terms = EuroOptionTerms { spot, strike, ttm, rate, vol, kind: parse_kind(kind)? };
    bs::bs_price(&terms).map_err(value_err)
}

/// Black-Scholes price and Greeks as a dict:
/// keys `price`, `delta`, `gamma`, `vega`, `theta`.
#[pyfunction]
#[pyo3(signature = (spot, strike, ttm, rate, vol, kind))]
fn bs_greeks(
    py: Python<'_>,
    spot: f64,
    strike: f64,
    ttm: f64,
    rate: f64,
    vol: f64,
    kind: &str,
) -> PyResult<Py<PyAny>> {
    let terms = EuroOptionTerms { spot, strike, ttm, rate, vol, kind: parse_kind(kind)? };
    let g = bs::bs_price_greeks(&terms).map_err(value_err)?;
    let dict = PyDict::new(py);
    dict.set_item("price", g.price)?;
    dict.set_item("delta", g.delta)?;
    dict.set_item("gamma", g.gamma)?;
    dict.set_item("vega", g.vega)?;
    dict.set_item("theta", g.theta)?;
    Ok(dict.unbind().into())
}

/// Implied Black-Scholes volatility for a target price.
#[pyfunction]
#[pyo3(signature = (price, spot, strike, ttm, rate, kind))]
fn implied_vol(price: f64, spot: f64, strike: f64, ttm: f64, rate: f64, kind: &str) -> PyResult<f64> {
    bs::implied_vol(price, spot, strike, ttm, rate, parse_kind(kind)?).map_err(value_err)
}

/// Heston European call price at state (spot, var).
#[pyfunction]
#[pyo3(signature = (spot, var, strike, ttm, kappa, theta_bar, xi, rho, rate))]
#[allow(clippy::too_many_arguments)]
fn heston_call_price(
    spot: f64,
    var: f64,
    strike: f64,
    ttm: f64,
    kappa: f64,
    theta_bar: f64,
    xi: f64,
    rho: f64,
    rate: f64,
) -> PyResult<f64> {
    let params = HestonParams { s0: spot, v0: var, kappa, theta_bar, xi, rho, rate };
    heston_call(&params, spot, var, strike, ttm).map_err(value_err)
}

/// Gain ratio `1 - sse_model / sse_benchmark`.
#[pyfunction]
fn gain_ratio(sse_model: f64, sse_benchmark: f64, n: usize) -> PyResult<f64> {
    hedgelab::evaluation::gain_ratio(sse_model, sse_benchmark, n).map_err(value_err)
}

/// Simulates the panel described by a TOML config file and writes the quote
/// CSV; returns {"days": ..., "quotes": ...}.
#[pyfunction]
fn simulate_panel(py: Python<'_>, config_path: PathBuf, out_csv: PathBuf) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::load(&config_path).map_err(value_err)?;
    let meta = experiment::cmd_simulate(&cfg, &out_csv).map_err(value_err)?;
    let dict = PyDict::new(py);
    dict.set_item("days", meta.days)?;
    dict.set_item("quotes", meta.quotes)?;
    Ok(dict.unbind().into())
}

/// Runs the full experiment described by a TOML config file. Returns a list
/// of per-pair outcome dicts (feature model, objective, gain report, ...).
#[pyfunction]
fn run_experiment(py: Python<'_>, config_path: PathBuf) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::load(&config_path).map_err(value_err)?;
    let outcome = experiment::cmd_run(&cfg).map_err(value_err)?;
    to_py_json(py, &outcome.outcomes)
}

/// Re-scores the artifacts of a previous run directory. Returns a dict
/// mapping pair names to gain reports.
#[pyfunction]
fn rescore_run(py: Python<'_>, run_dir: PathBuf) -> PyResult<Py<PyAny>> {
    let reports = experiment::cmd_report(&run_dir).map_err(value_err)?;
    let dict = PyDict::new(py);
    for (name, report) in reports {
        dict.set_item(name, to_py_json(py, &report)?)?;
    }
    Ok(dict.unbind().into())
}

/// Validates a TOML config file; returns the resolved config as TOML text.
#[pyfunction]
fn validate_config(config_path: PathBuf) -> PyResult<String> {
    let cfg = ExperimentConfig::load(&config_path).map_err(value_err)?;
    Ok(cfg.to_toml_string())
}

#[pymodule]
fn hedgelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(bs_price, m)?)?;
    m.add_function(wrap_pyfunction!(bs_greeks, m)?)?;
    m.add_function(wrap_pyfunction!(implied_vol, m)?)?;
    m.add_function(wrap_pyfunction!(heston_call_price, m)?)?;
    m.add_function(wrap_pyfunction!(gain_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(rescore_run, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    Ok(())
}
