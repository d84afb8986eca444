//! Python bindings. Reports cross the boundary as plain dicts and lists.

use std::path::PathBuf;

use drmdp::io::{InstanceFile, LoadError, LoadedInstance};
use drmdp::oracle::OracleConfig;
use drmdp::report::{self, Part, Report};
use drmdp::{fixtures, risk, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

create_exception!(drmdp, ValidationError, PyValueError, "Malformed file or invalid model.");
create_exception!(drmdp, NumericalError, PyArithmeticError, "A linear program failed or two solution forms disagree.");
create_exception!(drmdp, CapExceeded, PyRuntimeError, "An enumeration would exceed its cap.");

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    if e.is_cap() {
        CapExceeded::new_err(msg)
    } else if e.is_numerical() {
        NumericalError::new_err(msg)
    } else {
        ValidationError::new_err(msg)
    }
}

fn load_err(e: LoadError) -> PyErr {
    match e {
        LoadError::Invalid(e) => err(e),
        other => ValidationError::new_err(other.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn emit<'py>(py: Python<'py>, r: Report, table: bool) -> PyResult<Bound<'py, PyAny>> {
    if table {
        Ok(r.lines.join("\n").into_pyobject(py)?.into_any())
    } else {
        to_py(py, &r.json)
    }
}

/// A loaded instance together with its optional ambiguity, risk and noise sections.
#[pyclass(module = "drmdp", frozen)]
struct Instance {
    file: InstanceFile,
    loaded: LoadedInstance,
}

impl Instance {
    fn from_file(file: InstanceFile) -> PyResult<Self> {
        let loaded = file.load().map_err(err)?;
        Ok(Instance { file, loaded })
    }
}

#[pymethods]
impl Instance {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Self::from_file(InstanceFile::read(&path).map_err(load_err)?)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Self::from_file(InstanceFile::parse(text).map_err(load_err)?)
    }

    /// A bundled example by name.
    #[staticmethod]
    fn example(name: &str) -> PyResult<Self> {
        let text = fixtures::source(name)
            .ok_or_else(|| ValidationError::new_err(format!("no bundled example named '{name}'")))?;
        Self::parse(text)
    }

    fn to_json(&self) -> String {
        self.file.to_json()
    }

    #[getter]
    fn description(&self) -> Option<String> {
        self.loaded.description.clone()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.loaded.instance.horizon()
    }

    /// State names per stage, terminal stage included.
    #[getter]
    fn states(&self) -> Vec<Vec<String>> {
        let inst = &self.loaded.instance;
        (0..=inst.horizon()).map(|t| inst.states(t).to_vec()).collect()
    }

    #[getter]
    fn initial_state(&self) -> String {
        let inst = &self.loaded.instance;
        inst.state_name(0, inst.initial_state()).to_string()
    }

    /// Action names at stage `t` (0-based) and the named state.
    fn actions(&self, t: usize, state: &str) -> PyResult<Vec<String>> {
        let inst = &self.loaded.instance;
        if t >= inst.horizon() {
            return Err(ValidationError::new_err(format!("no decisions at stage index {t}")));
        }
        let s = inst
            .states(t)
            .iter()
            .position(|x| x == state)
            .ok_or_else(|| ValidationError::new_err(format!("unknown state '{state}' at stage index {t}")))?;
        Ok(inst.actions(t, s).to_vec())
    }

    /// Which sections the file carries.
    #[getter]
    fn sections(&self) -> Vec<&'static str> {
        let l = &self.loaded;
        [
            (l.ambiguity.is_some(), "kernel"),
            (l.cost.is_some(), "cost"),
            (l.avar.is_some(), "risk"),
            (l.soc.is_some(), "noise"),
        ]
        .into_iter()
        .filter_map(|(on, k)| on.then_some(k))
        .collect()
    }

    /// `part` is "primal", "dual" or "both"; `table=True` returns the text rendering.
    #[pyo3(signature = (part = "both", table = false))]
    fn solve<'py>(&self, py: Python<'py>, part: &str, table: bool) -> PyResult<Bound<'py, PyAny>> {
        let part = match part {
            "primal" => Part::Primal,
            "dual" => Part::Dual,
            "both" => Part::Both,
            other => return Err(ValidationError::new_err(format!("part must be primal, dual or both, not '{other}'"))),
        };
        let r = py.detach(|| report::solve(&self.loaded, part)).map_err(err)?;
        emit(py, r, table)
    }

    #[pyo3(signature = (table = false))]
    fn check<'py>(&self, py: Python<'py>, table: bool) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| report::check(&self.loaded)).map_err(err)?;
        emit(py, r, table)
    }

    /// Unset resolutions fall back to the file's oracle section.
    #[pyo3(signature = (policy_grid = None, kernel_grid = None, max_enum = None, tol = None, table = false))]
    fn oracle<'py>(
        &self,
        py: Python<'py>,
        policy_grid: Option<usize>,
        kernel_grid: Option<usize>,
        max_enum: Option<u64>,
        tol: Option<f64>,
        table: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let file = &self.loaded.oracle;
        let cfg = OracleConfig {
            policy_grid: policy_grid.unwrap_or(file.policy_grid),
            kernel_grid: kernel_grid.unwrap_or(file.kernel_grid),
            max_enumeration: max_enum.unwrap_or(file.max_enumeration),
        };
        cfg.validate().map_err(err)?;
        if tol.is_some_and(|t| !(t >= 0.0)) {
            return Err(ValidationError::new_err("tol must be a nonnegative number"));
        }
        let r = py.detach(|| report::oracle(&self.loaded, &cfg, tol)).map_err(err)?;
        emit(py, r, table)
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(horizon={}, initial_state='{}', sections={:?})",
            self.horizon(),
            self.initial_state(),
            self.sections()
        )
    }
}

#[pyfunction]
fn examples() -> Vec<&'static str> {
    fixtures::names().to_vec()
}

/// Runs a bundled example and its golden checks.
#[pyfunction]
fn run_example<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    let run = py.detach(|| fixtures::run(name)).map_err(load_err)?;
    let v = serde_json::to_value(&run).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = to_py(py, &v)?;
    out.set_item("passed", run.passed())?;
    Ok(out)
}

/// Average value-at-risk of `values` under `probs` at level `alpha`.
#[pyfunction]
fn avar(values: Vec<f64>, probs: Vec<f64>, alpha: f64) -> PyResult<f64> {
    risk::avar(&values, &probs, alpha).map_err(err)
}

/// Sorting form: `(value, threshold)`.
#[pyfunction]
fn avar_sorted(values: Vec<f64>, probs: Vec<f64>, alpha: f64) -> PyResult<(f64, f64)> {
    risk::avar_sorted(&values, &probs, alpha).map_err(err)
}

/// Linear-program form: `(value, worst-case reweighting)`.
#[pyfunction]
fn avar_lp(values: Vec<f64>, probs: Vec<f64>, alpha: f64) -> PyResult<(f64, Vec<f64>)> {
    risk::avar_lp(&values, &probs, alpha).map_err(err)
}

/// Zero-sum matrix game, rows minimizing: `(value, row strategy, column strategy)`.
#[pyfunction]
fn solve_matrix_game(matrix: Vec<Vec<f64>>) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let g = drmdp::lp::solve_matrix_game(&matrix).map_err(|e| err(e.into()))?;
    Ok((g.value, g.minimizer, g.maximizer))
}

#[pymodule]
#[pyo3(name = "drmdp")]
fn drmdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(examples, m)?)?;
    m.add_function(wrap_pyfunction!(run_example, m)?)?;
    m.add_function(wrap_pyfunction!(avar, m)?)?;
    m.add_function(wrap_pyfunction!(avar_sorted, m)?)?;
    m.add_function(wrap_pyfunction!(avar_lp, m)?)?;
    m.add_function(wrap_pyfunction!(solve_matrix_game, m)?)?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("CapExceeded", py.get_type::<CapExceeded>())?;
    Ok(())
}
