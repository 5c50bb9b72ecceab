//! Python module `setrap`.
//!
//! Lengths cross the boundary in um, frequencies in MHz, voltages in V.
//! Configurations are JSON strings or dicts in the CLI schema; scenario
//! results come back as plain dicts mirroring their JSON form (SI units).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use setrap_core::config::RunConfig;
use setrap_core::field::{self, Order};
use setrap_core::geometry::{ShapeKind, TrapLayout};
use setrap_core::io;
use setrap_core::scenarios;
use setrap_core::solver::ShimDirection;
use setrap_core::units::MICRON;
use setrap_core::{Error, EvalPoint, FieldSample};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn dict_of<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Accepts None, a JSON string or a dict.
fn run_config(config: Option<&Bound<'_, PyAny>>) -> PyResult<RunConfig> {
    let Some(config) = config else {
        return Ok(RunConfig::default());
    };
    let text: String = if let Ok(s) = config.extract::<String>() {
        s
    } else {
        let json = config.py().import("json")?;
        json.call_method1("dumps", (config,))?.extract()?
    };
    let c = RunConfig::from_json(&text).map_err(py_err)?;
    c.validate().map_err(py_err)?;
    Ok(c)
}

fn parse_shape(name: &str) -> PyResult<ShapeKind> {
    name.parse().map_err(py_err)
}

fn sample_dict<'py>(py: Python<'py>, s: &FieldSample) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", s.value)?;
    d.set_item("gradient", [s.gradient[0], s.gradient[1], s.gradient[2]])?;
    let h: Vec<[f64; 3]> = (0..3).map(|i| [s.hessian[(i, 0)], s.hessian[(i, 1)], s.hessian[(i, 2)]]).collect();
    d.set_item("hessian", h)?;
    Ok(d)
}

fn to_point(p: (f64, f64, f64)) -> EvalPoint {
    EvalPoint::new(p.0 * MICRON, p.1 * MICRON, p.2 * MICRON)
}

/// A five-wire trap with one catalog shape tiled along the DC strip.
#[pyclass(name = "Layout", frozen)]
struct PyLayout {
    inner: TrapLayout,
}

#[pymethods]
impl PyLayout {
    #[new]
    #[pyo3(signature = (shape, config = None))]
    fn new(shape: &str, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let c = run_config(config)?;
        Ok(Self {
            inner: c.layout(parse_shape(shape)?).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::layout_from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        io::layout_to_json(&self.inner)
    }

    #[getter]
    fn shape(&self) -> Option<&'static str> {
        self.inner.shape_kind().map(ShapeKind::name)
    }

    #[getter]
    fn axial_width_um(&self) -> Option<f64> {
        self.inner.shape.map(|s| s.axial_width / MICRON)
    }

    #[getter]
    fn electrode_ids(&self) -> Vec<String> {
        self.inner.dc_ids().map(str::to_string).collect()
    }

    /// Electrode area in um^2.
    fn area_um2(&self, electrode_id: &str) -> PyResult<f64> {
        let i = self.index(electrode_id)?;
        Ok(self.inner.dc_electrodes[i].area() / (MICRON * MICRON))
    }

    /// Point on the RF null at axial position `x_um`, in um.
    fn rf_null(&self, x_um: f64) -> PyResult<(f64, f64, f64)> {
        let r = field::find_rf_null(&self.inner, x_um * MICRON).map_err(py_err)?;
        Ok((r.x / MICRON, r.y / MICRON, r.z / MICRON))
    }

    /// Unit-voltage potential, gradient and Hessian of one DC electrode (SI).
    fn unit_field<'py>(&self, py: Python<'py>, electrode_id: &str, point_um: (f64, f64, f64)) -> PyResult<Bound<'py, PyDict>> {
        let i = self.index(electrode_id)?;
        let s = field::unit_field(&self.inner.dc_electrodes[i], &to_point(point_um), Order::Hessian).map_err(py_err)?;
        sample_dict(py, &s)
    }

    /// Static potential of all DC electrodes at `voltages` (layout order).
    fn static_potential<'py>(&self, py: Python<'py>, voltages: Vec<f64>, point_um: (f64, f64, f64)) -> PyResult<Bound<'py, PyDict>> {
        let s = field::static_potential(&self.inner, &voltages, &to_point(point_um), Order::Hessian).map_err(py_err)?;
        sample_dict(py, &s)
    }

    fn __repr__(&self) -> String {
        format!(
            "Layout(shape={}, electrodes={})",
            self.shape().unwrap_or("custom"),
            self.inner.dc_electrodes.len()
        )
    }
}

impl PyLayout {
    fn index(&self, id: &str) -> PyResult<usize> {
        self.inner
            .dc_index(id)
            .ok_or_else(|| PyValueError::new_err(format!("no DC electrode `{id}`")))
    }
}

/// Default configuration as a JSON string.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_json()
}

/// Warnings for a configuration; raises ValueError when it is invalid.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn validate(config: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<String>> {
    let c = match config {
        Some(c) => {
            let text: String = match c.extract::<String>() {
                Ok(s) => s,
                Err(_) => c.py().import("json")?.call_method1("dumps", (c,))?.extract()?,
            };
            RunConfig::from_json(&text).map_err(py_err)?
        }
        None => RunConfig::default(),
    };
    c.validate().map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (shape, config = None))]
fn characterize<'py>(py: Python<'py>, shape: &str, config: Option<&Bound<'_, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let c = run_config(config)?;
    let sc = c.scenario_config().map_err(py_err)?;
    let layout = c.layout(parse_shape(shape)?).map_err(py_err)?;
    let r = py.detach(|| scenarios::characterize_on(&layout, &sc)).map_err(py_err)?;
    dict_of(py, &r)
}

/// Transport waveform and diagnostics; raises ValueError naming the step if
/// a step is infeasible.
#[pyfunction]
#[pyo3(signature = (shape, config = None))]
fn run_transport<'py>(py: Python<'py>, shape: &str, config: Option<&Bound<'_, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let c = run_config(config)?;
    let sc = c.scenario_config().map_err(py_err)?;
    let layout = c.layout(parse_shape(shape)?).map_err(py_err)?;
    let r = py.detach(|| scenarios::run_transport_on(&layout, &sc)).map_err(py_err)?;
    dict_of(py, &r)
}

#[pyfunction]
#[pyo3(signature = (shape, direction, config = None))]
fn run_shims<'py>(
    py: Python<'py>,
    shape: &str,
    direction: &str,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let c = run_config(config)?;
    let sc = c.scenario_config().map_err(py_err)?;
    let layout = c.layout(parse_shape(shape)?).map_err(py_err)?;
    let dir: ShimDirection = direction.parse().map_err(py_err)?;
    let r = py.detach(|| scenarios::run_shims_on(&layout, dir, &sc)).map_err(py_err)?;
    dict_of(py, &r)
}

/// Summary table over the configured shapes. Returns `(text, rows)`.
#[pyfunction]
#[pyo3(signature = (config = None, shims = true))]
fn report<'py>(py: Python<'py>, config: Option<&Bound<'_, PyAny>>, shims: bool) -> PyResult<(String, Bound<'py, PyAny>)> {
    let c = run_config(config)?;
    let sc = c.scenario_config().map_err(py_err)?;
    let r = py
        .detach(|| -> setrap_core::Result<scenarios::Report> {
            let mut transports = Vec::new();
            let mut shim_results = Vec::new();
            for &k in &c.shapes {
                let layout = c.layout(k)?;
                transports.push(scenarios::run_transport_on(&layout, &sc)?);
                if shims {
                    for &d in &c.shims.directions {
                        shim_results.push(scenarios::run_shims_on(&layout, d, &sc)?);
                    }
                }
            }
            Ok(scenarios::run_report(&transports, &shim_results))
        })
        .map_err(py_err)?;
    Ok((r.to_text(), dict_of(py, &r)?))
}

#[pymodule]
fn setrap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLayout>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(characterize, m)?)?;
    m.add_function(wrap_pyfunction!(run_transport, m)?)?;
    m.add_function(wrap_pyfunction!(run_shims, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add("SHAPES", ShapeKind::ALL.map(ShapeKind::name).to_vec())?;
    Ok(())
}
