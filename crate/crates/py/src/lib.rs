//! Python bindings: materials, cohesive laws, meshes, simulation and the two
//! calibration stages.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use meningefem::calibrate::{self, CalibrationError, InterfaceFit, Noise, TissueFit};
use meningefem::cohesive::{self, LawRecord, Modes};
use meningefem::material::{self, DeformationState, MaterialRecord, BRAIN_POISSON_RATIO, DEFAULT_DENSITY};
use meningefem::mesh::{self, CohesivePlane, Layer};
use meningefem::solver::{self, SimulationConfig};
use meningefem::{presets, ForceDisplacementCurve, Mat3, Model, Vec3};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn calibration_error(e: CalibrationError) -> PyErr {
    match e {
        CalibrationError::Invalid(_) => value_error(e),
        _ => runtime_error(e),
    }
}

fn matrix(rows: [[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|r, c| rows[r][c])
}

fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)]))
}

/// Parses an optional JSON object into `T`, using the default when absent.
fn from_json<T: serde::de::DeserializeOwned + Default>(text: Option<&str>, what: &str) -> PyResult<T> {
    match text {
        None => Ok(T::default()),
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(format!("invalid {what}: {e}"))),
    }
}

/// Two-term Ogden tissue parameters.
#[pyclass(name = "OgdenParams", module = "meningefem_py", skip_from_py_object)]
#[derive(Clone)]
struct PyOgdenParams {
    inner: material::OgdenParams,
}

#[pymethods]
impl PyOgdenParams {
    /// `D` is derived from `nu` unless given explicitly.
    #[new]
    #[pyo3(signature = (mu, alpha, nu = BRAIN_POISSON_RATIO, d = None))]
    fn new(mu: [f64; 2], alpha: [f64; 2], nu: f64, d: Option<[f64; 2]>) -> PyResult<Self> {
        let inner = match d {
            Some(d) => material::OgdenParams::new(mu, alpha, d),
            None => material::OgdenParams::with_poisson(mu, alpha, nu),
        }
        .map_err(value_error)?;
        Ok(Self { inner })
    }

    /// Reference tissue set `B1`, `B2` or `B3`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        presets::tissue(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown tissue set {name:?}")))
    }

    #[getter]
    fn mu(&self) -> [f64; 2] {
        self.inner.mu
    }

    #[getter]
    fn alpha(&self) -> [f64; 2] {
        self.inner.alpha
    }

    #[getter]
    fn d(&self) -> [f64; 2] {
        self.inner.d
    }

    #[getter]
    fn mu0(&self) -> f64 {
        self.inner.initial_moduli().mu0
    }

    #[getter]
    fn k0(&self) -> f64 {
        self.inner.initial_moduli().k0
    }

    /// Strain energy per reference volume at deformation gradient `f`, Pa.
    fn strain_energy(&self, f: [[f64; 3]; 3]) -> PyResult<f64> {
        let state = DeformationState::new(matrix(f)).map_err(value_error)?;
        material::strain_energy(&state, &self.inner).map_err(value_error)
    }

    /// Cauchy stress at deformation gradient `f`, Pa.
    fn cauchy_stress(&self, f: [[f64; 3]; 3]) -> PyResult<[[f64; 3]; 3]> {
        let state = DeformationState::new(matrix(f)).map_err(value_error)?;
        material::cauchy_stress(&state, &self.inner).map(|s| rows(&s)).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("OgdenParams(mu={:?}, alpha={:?}, d={:?})", self.inner.mu, self.inner.alpha, self.inner.d)
    }
}

/// Bilinear traction–separation law of the brain–skull interface.
#[pyclass(name = "CohesiveLaw", module = "meningefem_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCohesiveLaw {
    inner: cohesive::CohesiveLaw,
}

#[pymethods]
impl PyCohesiveLaw {
    /// Interface law with the fixed moduli and `tt0 = ts0`.
    #[new]
    #[pyo3(signature = (tn0, ts0, g))]
    fn new(tn0: f64, ts0: f64, g: f64) -> PyResult<Self> {
        let inner = cohesive::CohesiveLaw::interface(tn0, ts0, g);
        inner.validate().map_err(value_error)?;
        Ok(Self { inner })
    }

    /// Reference interface set `S1`, `S2` or `S3`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        presets::interface(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown interface set {name:?}")))
    }

    #[getter]
    fn tn0(&self) -> f64 {
        self.inner.tn0
    }

    #[getter]
    fn ts0(&self) -> f64 {
        self.inner.ts0
    }

    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }

    #[getter]
    fn enn(&self) -> f64 {
        self.inner.enn
    }

    #[getter]
    fn ess(&self) -> f64 {
        self.inner.ess
    }

    /// Damage initiation index of a (normal, shear, shear) traction.
    fn initiation_index(&self, traction: [f64; 3]) -> f64 {
        cohesive::initiation_index(Modes::new(traction[0], traction[1], traction[2]), &self.inner)
    }

    /// Energy per unit area dissipated when the separation is driven
    /// through `path` (a list of (normal, shear, shear) separations, m).
    fn dissipated_along(&self, path: Vec<[f64; 3]>) -> PyResult<f64> {
        let mut state = cohesive::CohesiveState::default();
        for s in path {
            state = cohesive::update(&state, Modes::new(s[0], s[1], s[2]), &self.inner)
                .map_err(value_error)?
                .1;
        }
        Ok(cohesive::dissipated_energy(&state))
    }

    fn __repr__(&self) -> String {
        format!("CohesiveLaw(tn0={}, ts0={}, g={})", self.inner.tn0, self.inner.ts0, self.inner.g)
    }
}

/// Reaction force against applied displacement, SI units.
#[pyclass(name = "Curve", module = "meningefem_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCurve {
    inner: ForceDisplacementCurve,
}

#[pymethods]
impl PyCurve {
    #[new]
    fn new(displacements: Vec<f64>, forces: Vec<f64>) -> PyResult<Self> {
        if displacements.len() != forces.len() {
            return Err(PyValueError::new_err("displacements and forces differ in length"));
        }
        Ok(Self {
            inner: ForceDisplacementCurve::from_pairs(displacements.into_iter().zip(forces)),
        })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        ForceDisplacementCurve::from_csv(text)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[getter]
    fn displacements(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.displacement).collect()
    }

    #[getter]
    fn forces(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.force).collect()
    }

    /// `(displacement, force)` of the largest force.
    fn peak(&self) -> Option<(f64, f64)> {
        self.inner.peak().map(|s| (s.displacement, s.force))
    }

    /// `(displacement, force)` of the failure force, ignoring ringing after
    /// the first drop below half the running maximum.
    fn failure_peak(&self) -> Option<(f64, f64)> {
        self.inner
            .loading_peak(calibrate::FAILURE_DROP_FRACTION)
            .map(|s| (s.displacement, s.force))
    }

    fn force_at(&self, displacement: f64) -> Option<f64> {
        self.inner.force_at(displacement)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Structured hexahedral sample mesh with optional cohesive layer.
#[pyclass(name = "Mesh", module = "meningefem_py", skip_from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: mesh::Mesh,
}

#[pymethods]
impl PyMesh {
    /// Box of `dims` (m) in cubes of `size`, layered along z from the bottom.
    /// `layers` holds `(material, thickness)` or `(material, thickness, rigid)`.
    #[staticmethod]
    #[pyo3(signature = (dims, size, layers, cohesive_at = None, law = "interface"))]
    fn generate(
        dims: [f64; 3],
        size: f64,
        layers: Vec<Bound<'_, PyAny>>,
        cohesive_at: Option<f64>,
        law: &str,
    ) -> PyResult<Self> {
        let mut parsed = Vec::with_capacity(layers.len());
        for layer in layers {
            let layer = if let Ok((name, thickness, rigid)) = layer.extract::<(String, f64, bool)>() {
                if rigid {
                    Layer::rigid(name, thickness)
                } else {
                    Layer::new(name, thickness)
                }
            } else {
                let (name, thickness) = layer.extract::<(String, f64)>()?;
                Layer::new(name, thickness)
            };
            parsed.push(layer);
        }
        let plane = cohesive_at.map(|z| CohesivePlane::new(z, law));
        mesh::generate_sample_mesh(dims, size, &parsed, plane.as_ref())
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        mesh::load_mesh(text).map(|inner| Self { inner }).map_err(value_error)
    }

    fn to_json(&self) -> String {
        mesh::save_mesh(&self.inner)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.nodes.len()
    }

    #[getter]
    fn hex_count(&self) -> usize {
        self.inner.hexes.len()
    }

    #[getter]
    fn cohesive_count(&self) -> usize {
        self.inner.cohesives.len()
    }

    fn node_set(&self, name: &str) -> Option<Vec<usize>> {
        self.inner.node_set(name).map(<[usize]>::to_vec)
    }

    /// Assigns Ogden parameters to material `name`.
    #[pyo3(signature = (name, params, density = DEFAULT_DENSITY))]
    fn set_tissue(&mut self, name: &str, params: PyRef<'_, PyOgdenParams>, density: f64) {
        let p = params.inner;
        let record = MaterialRecord {
            d: Some(p.d),
            ..MaterialRecord::ogden(name, p.mu, p.alpha, BRAIN_POISSON_RATIO, density)
        };
        self.inner.materials.insert(name.to_string(), record);
    }

    /// Assigns a cohesive law to law name `name`.
    fn set_law(&mut self, name: &str, law: PyRef<'_, PyCohesiveLaw>) {
        self.inner.laws.insert(
            name.to_string(),
            LawRecord {
                name: name.to_string(),
                law: law.inner,
            },
        );
    }

    /// Scaled-Jacobian summary as `{"min", "mean", "elements", "flagged"}`.
    fn quality(&self) -> PyResult<BTreeMap<String, f64>> {
        let report = self.inner.quality_report().map_err(value_error)?;
        Ok(BTreeMap::from([
            ("min".to_string(), report.min),
            ("mean".to_string(), report.mean),
            ("elements".to_string(), report.elements as f64),
            ("flagged".to_string(), report.flagged.len() as f64),
        ]))
    }
}

/// Scaled Jacobian of one hexahedron given its 8 corners.
#[pyfunction]
fn scaled_jacobian(corners: [[f64; 3]; 8]) -> PyResult<f64> {
    mesh::scaled_jacobian(&corners.map(Vec3::from)).ok_or_else(|| PyValueError::new_err("coincident corner nodes"))
}

fn model(mesh: &PyMesh) -> PyResult<Model> {
    let model = Model::from_mesh(mesh.inner.clone()).map_err(value_error)?;
    model.validate().map_err(value_error)?;
    Ok(model)
}

/// Outcome of a simulation run.
#[pyclass(name = "RunResult", module = "meningefem_py", skip_from_py_object)]
struct PyRunResult {
    #[pyo3(get)]
    curve: Py<PyCurve>,
    #[pyo3(get)]
    dt: f64,
    #[pyo3(get)]
    steps: usize,
    #[pyo3(get)]
    max_kinetic_ratio: f64,
    #[pyo3(get)]
    max_imbalance_fraction: f64,
    #[pyo3(get)]
    quasi_static: bool,
    energy_csv: String,
}

#[pymethods]
impl PyRunResult {
    fn energy_csv(&self) -> String {
        self.energy_csv.clone()
    }
}

/// Runs the explicit simulation. `config` is a JSON object of
/// simulation settings; omitted keys take their defaults.
#[pyfunction]
#[pyo3(signature = (mesh, config = None))]
fn simulate(py: Python<'_>, mesh: PyRef<'_, PyMesh>, config: Option<&str>) -> PyResult<PyRunResult> {
    let config: SimulationConfig = from_json(config, "simulation config")?;
    let model = model(&mesh)?;
    let out = py.detach(|| solver::run(&model, &config)).map_err(runtime_error)?;
    let report = solver::energy_report(&out.history);
    Ok(PyRunResult {
        curve: Py::new(py, PyCurve { inner: out.curve })?,
        dt: out.dt,
        steps: out.steps,
        max_kinetic_ratio: report.max_kinetic_ratio,
        max_imbalance_fraction: report.max_imbalance_fraction,
        quasi_static: report.quasi_static(),
        energy_csv: report.to_csv(),
    })
}

/// Synthetic target: the simulated curve resampled at 100 Hz with optional
/// seeded multiplicative noise of `noise_percent`.
#[pyfunction]
#[pyo3(signature = (mesh, config = None, noise_percent = 0.0, seed = 0))]
fn synthesize_target(
    py: Python<'_>,
    mesh: PyRef<'_, PyMesh>,
    config: Option<&str>,
    noise_percent: f64,
    seed: u64,
) -> PyResult<PyCurve> {
    let config: SimulationConfig = from_json(config, "simulation config")?;
    let model = model(&mesh)?;
    let noise = if noise_percent > 0.0 {
        Noise::Uniform { percent: noise_percent }
    } else {
        Noise::None
    };
    py.detach(|| calibrate::synthesize_target(&model, &config, noise, seed))
        .map(|inner| PyCurve { inner })
        .map_err(runtime_error)
}

/// Outcome of a calibration stage.
#[pyclass(name = "CalibrationResult", module = "meningefem_py", skip_from_py_object)]
struct PyCalibrationResult {
    inner: calibrate::CalibrationResult,
}

#[pymethods]
impl PyCalibrationResult {
    #[getter]
    fn parameters(&self) -> BTreeMap<String, f64> {
        self.inner.parameters.clone()
    }

    #[getter]
    fn objective_value(&self) -> f64 {
        self.inner.objective_value
    }

    #[getter]
    fn peak_force_error_pct(&self) -> Option<f64> {
        self.inner.peak_force_error_pct
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.inner.evaluations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn fit_window(&self) -> (f64, f64) {
        self.inner.fit_window
    }

    #[getter]
    fn fitted_curve(&self) -> PyCurve {
        PyCurve {
            inner: self.inner.fitted_curve.clone(),
        }
    }

    fn trace_csv(&self) -> String {
        self.inner.trace_csv()
    }
}

/// Fits Ogden parameters to a tissue-sample curve. `fit` is a JSON object of
/// tissue-stage settings.
#[pyfunction]
#[pyo3(signature = (target, mesh, config = None, fit = None))]
fn calibrate_tissue(
    py: Python<'_>,
    target: PyRef<'_, PyCurve>,
    mesh: PyRef<'_, PyMesh>,
    config: Option<&str>,
    fit: Option<&str>,
) -> PyResult<(PyOgdenParams, PyCalibrationResult)> {
    let config: SimulationConfig = from_json(config, "simulation config")?;
    let fit: TissueFit = from_json(fit, "tissue fit")?;
    let (target, mesh) = (target.inner.clone(), mesh.inner.clone());
    let (params, result) = py
        .detach(|| calibrate::calibrate_tissue(&target, &mesh, &config, &fit))
        .map_err(calibration_error)?;
    Ok((PyOgdenParams { inner: params }, PyCalibrationResult { inner: result }))
}

/// Fits the interface law to a stack curve with the tissue held at
/// `tissue`. `fit` is a JSON object of interface-stage settings.
#[pyfunction]
#[pyo3(signature = (target, mesh, tissue, config = None, fit = None))]
fn calibrate_interface(
    py: Python<'_>,
    target: PyRef<'_, PyCurve>,
    mesh: PyRef<'_, PyMesh>,
    tissue: PyRef<'_, PyOgdenParams>,
    config: Option<&str>,
    fit: Option<&str>,
) -> PyResult<(PyCohesiveLaw, PyCalibrationResult)> {
    let config: SimulationConfig = from_json(config, "simulation config")?;
    let fit: InterfaceFit = from_json(fit, "interface fit")?;
    let (target, mesh, tissue) = (target.inner.clone(), mesh.inner.clone(), tissue.inner);
    let (law, result) = py
        .detach(|| calibrate::calibrate_interface(&target, &mesh, &config, &tissue, &fit))
        .map_err(calibration_error)?;
    Ok((PyCohesiveLaw { inner: law }, PyCalibrationResult { inner: result }))
}

#[pymodule]
fn meningefem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOgdenParams>()?;
    m.add_class::<PyCohesiveLaw>()?;
    m.add_class::<PyCurve>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyCalibrationResult>()?;
    m.add_function(wrap_pyfunction!(scaled_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_target, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_tissue, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_interface, m)?)?;
    Ok(())
}
