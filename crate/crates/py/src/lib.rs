//! Python bindings: configurations, tension sweeps, study rows and the frame-model comparison.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use tps_core::equilibrium::{tension_sweep_with, SweepOptions, SweepTrace, Terminal};
use tps_core::fem::{self, MeshOptions, NewtonOptions};
use tps_core::model::{build_configuration, joint_index, ParameterMap, TpsConfiguration, JOINT_NAMES};
use tps_core::study::{self, RowFilter, StudySettings};
use tps_core::TpsError;

fn to_py(err: TpsError) -> PyErr {
    match err {
        TpsError::SolverNonConvergence { .. }
        | TpsError::ActivationNonConvergence { .. }
        | TpsError::LockingBracket { .. }
        | TpsError::Fem(_) => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn overrides_from(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<ParameterMap> {
    let mut map = ParameterMap::new();
    if let Some(kwargs) = kwargs {
        for (k, v) in kwargs.iter() {
            map.insert(k.extract::<String>()?, v.str()?.to_string());
        }
    }
    Ok(map)
}

/// A tendon-pulley configuration on the default finger.
///
/// `Configuration("C~D-C~D=C", h_a=2.0, gamma=0.5)`; keyword values are
/// parsed like command-line `--set` overrides.
#[pyclass(module = "tps_kinetostatics", frozen)]
struct Configuration {
    inner: TpsConfiguration,
}

#[pymethods]
impl Configuration {
    #[new]
    #[pyo3(signature = (name, **overrides))]
    fn new(name: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let map = overrides_from(overrides)?;
        let inner = build_configuration(name, &map).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    /// Labels of every pulley and attachment point, ground first.
    #[getter]
    fn pulleys(&self) -> Vec<String> {
        self.inner.pulleys.iter().map(|p| p.label.clone()).collect()
    }

    /// Runs a tension sweep. `t_max` is the total tension; joints in
    /// `exclude_joints` (e.g. `["MCP"]`) are left out of bowstringing.
    #[pyo3(signature = (t_max=None, steps=None, exclude_joints=None))]
    fn sweep(
        &self,
        py: Python<'_>,
        t_max: Option<f64>,
        steps: Option<usize>,
        exclude_joints: Option<Vec<String>>,
    ) -> PyResult<Sweep> {
        let mut options = SweepOptions::from_config(&self.inner);
        if let Some(t) = t_max {
            if !(t > 0.0) {
                return Err(PyValueError::new_err("t_max must be positive"));
            }
            options.t_max = t;
        }
        if let Some(n) = steps {
            if n == 0 {
                return Err(PyValueError::new_err("steps must be positive"));
            }
            options.steps = n;
        }
        for name in exclude_joints.unwrap_or_default() {
            let j = joint_index(&name).ok_or_else(|| PyValueError::new_err(format!("unknown joint `{name}`")))?;
            options.exclude_joints[j] = true;
        }
        let config = &self.inner;
        let trace = py.detach(|| tension_sweep_with(config, &options));
        Ok(Sweep { trace })
    }

    fn __repr__(&self) -> String {
        format!("Configuration('{}')", self.inner.name)
    }
}

/// Result of a tension sweep.
#[pyclass(module = "tps_kinetostatics", frozen)]
struct Sweep {
    trace: SweepTrace,
}

#[pymethods]
impl Sweep {
    /// Total tension per step, N.
    #[getter]
    fn tension(&self) -> Vec<f64> {
        self.trace.steps.iter().map(|s| s.t_s).collect()
    }

    /// Joint angles per step, degrees.
    #[getter]
    fn theta_deg(&self) -> Vec<[f64; 3]> {
        self.trace
            .steps
            .iter()
            .map(|s| s.state.theta.map(f64::to_degrees))
            .collect()
    }

    /// Range of flexion per step, degrees.
    #[getter]
    fn rof_deg(&self) -> Vec<f64> {
        self.trace.steps.iter().map(|s| s.sum_theta().to_degrees()).collect()
    }

    /// Critical bowstringing per step, mm (NaN when undefined).
    #[getter]
    fn bowstring_mm(&self) -> Vec<f64> {
        self.trace
            .steps
            .iter()
            .map(|s| s.metrics.bowstring.critical.as_ref().map_or(f64::NAN, |e| e.value))
            .collect()
    }

    /// Critical pulley stress per step, MPa (NaN when undefined).
    #[getter]
    fn stress_mpa(&self) -> Vec<f64> {
        self.trace
            .steps
            .iter()
            .map(|s| match s.metrics.critical_stress() {
                Ok(Some(b)) => b.sigma_net,
                _ => f64::NAN,
            })
            .collect()
    }

    #[getter]
    fn terminal(&self) -> &'static str {
        match self.trace.terminal {
            Terminal::MaxTension => "max_tension",
            Terminal::AllLocked => "all_locked",
            Terminal::SolverFailure => "solver_failure",
        }
    }

    #[getter]
    fn error(&self) -> Option<String> {
        self.trace.error.as_ref().map(ToString::to_string)
    }

    /// `(joint, total tension)` for every joint that reached its limit.
    #[getter]
    fn lock_events(&self) -> Vec<(String, f64)> {
        self.trace
            .events
            .iter()
            .map(|e| (JOINT_NAMES[e.joint].to_string(), e.t_s))
            .collect()
    }

    /// Total tension at which the flexion sum first reaches `deg`.
    fn tension_for_rof(&self, deg: f64) -> Option<f64> {
        self.trace.tension_for_sum(deg.to_radians())
    }

    fn csv(&self) -> String {
        study::sweep_csv(&self.trace)
    }

    fn __len__(&self) -> usize {
        self.trace.steps.len()
    }
}

fn filter_from(name: &str) -> PyResult<RowFilter> {
    Ok(match name {
        "all" => RowFilter::All,
        "fdp" => RowFilter::Fdp,
        "fds" => RowFilter::Fds,
        "combined" => RowFilter::Combined,
        _ => return Err(PyValueError::new_err(format!("unknown filter `{name}`"))),
    })
}

/// Reference result rows as a list of dicts.
#[pyfunction]
#[pyo3(signature = (filter="all", steps=None))]
fn table2<'py>(py: Python<'py>, filter: &str, steps: Option<usize>) -> PyResult<Bound<'py, PyList>> {
    let filter = filter_from(filter)?;
    let mut settings = StudySettings::default();
    if let Some(n) = steps {
        settings.steps = n;
    }
    let rows = py.detach(|| study::table2_rows(filter, &settings)).map_err(to_py)?;
    let out = PyList::empty(py);
    for r in rows {
        let d = PyDict::new(py);
        d.set_item("name", &r.name)?;
        d.set_item("rof_low_deg", r.rof_low_deg)?;
        d.set_item("rof_high_deg", r.rof_high_deg)?;
        d.set_item("bw_mm", r.bw_mm)?;
        d.set_item("bw_joint", &r.bw_joint)?;
        d.set_item("ps_mpa", r.ps_mpa)?;
        d.set_item("ps_pulley", &r.ps_pulley)?;
        d.set_item("e_mode", &r.e_mode)?;
        d.set_item("h_a", r.h_a)?;
        d.set_item("h_c", r.h_c)?;
        d.set_item("w_a", r.w_a)?;
        d.set_item("w_c", r.w_c)?;
        d.set_item("ok", r.status == study::RowStatus::Ok)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Sum of joint angles in degrees for angles given in degrees.
#[pyfunction]
fn range_of_flexion(theta_deg: [f64; 3]) -> f64 {
    tps_core::range_of_flexion(&theta_deg.map(f64::to_radians))
}

/// Frame-model vs rigid-link comparison.
///
/// Returns `(sum_deg, T_prbm, T_fem, rel_gap)` tuples over a uniform
/// schedule up to `t_max`.
#[pyfunction]
#[pyo3(signature = (name="C-C-C", t_max=4.0, steps=40, elements=20, validation=false, thickness=None))]
fn compare_fem(
    py: Python<'_>,
    name: &str,
    t_max: f64,
    steps: usize,
    elements: usize,
    validation: bool,
    thickness: Option<f64>,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    if !(t_max > 0.0) || steps == 0 || elements == 0 {
        return Err(PyValueError::new_err("t_max, steps and elements must be positive"));
    }
    let (config, mut mesh) = if validation {
        let t = thickness.unwrap_or(fem::VALIDATION_FLEXURE_THICKNESS);
        (fem::validation_configuration(name, t).map_err(to_py)?, fem::validation_mesh_options())
    } else {
        (
            build_configuration(name, &ParameterMap::new()).map_err(to_py)?,
            MeshOptions::default(),
        )
    };
    mesh.flexure_elements = elements;
    let schedule: Vec<f64> = (1..=steps).map(|k| t_max * k as f64 / steps as f64).collect();
    let cmp = py
        .detach(|| fem::compare_with_prbm(&config, &schedule, &mesh, &NewtonOptions::default()))
        .map_err(to_py)?;
    Ok(cmp
        .rows
        .iter()
        .map(|r| (r.sum_deg, r.t_prbm, r.t_fem, r.rel_gap))
        .collect())
}

/// Ids of the figure presets.
#[pyfunction]
fn figure_presets() -> Vec<&'static str> {
    study::FIGURE_PRESETS.to_vec()
}

#[pymodule]
fn tps_kinetostatics(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Configuration>()?;
    m.add_class::<Sweep>()?;
    m.add_function(wrap_pyfunction!(table2, m)?)?;
    m.add_function(wrap_pyfunction!(range_of_flexion, m)?)?;
    m.add_function(wrap_pyfunction!(compare_fem, m)?)?;
    m.add_function(wrap_pyfunction!(figure_presets, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
