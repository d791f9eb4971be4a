//! Parameter identification against a target force–displacement curve.
//!
//! The objective is the sum of absolute force differences over a fit window,
//! with the simulated curve interpolated onto the target's displacement grid.
//! Tissue is fitted first on a tissue-only sample; the interface is then
//! fitted on the brain–skull stack with the tissue held fixed.

pub mod forward;
pub mod optimizer;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohesive::CohesiveLaw;
use crate::curve::{loading_peak_index, ForceDisplacementCurve};
use crate::material::{OgdenParams, BRAIN_POISSON_RATIO, DEFAULT_DENSITY};
use crate::mesh::Mesh;
use crate::model::Model;
use crate::presets::TISSUE_ALPHA;
use crate::solver::SimulationConfig;

pub use forward::{synthesize_target, ForwardModel, Injection, ModelForward, Noise};
pub use optimizer::{OptimizerOptions, TraceEntry};

/// Penalty returned for a failed forward run, in units of the target's force
/// scale.
pub const PENALTY_FACTOR: f64 = 1e6;

/// Tissue fit window as shear strain.
pub const TISSUE_STRAIN_WINDOW: f64 = 0.3;

/// Interface fit window end as a multiple of the displacement at the failure
/// force. The window never extends past the first force drop.
pub const INTERFACE_WINDOW_FACTOR: f64 = 1.25;

/// The failure force is the largest force before the force first falls
/// below this fraction of its running maximum.
pub const FAILURE_DROP_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("invalid calibration problem: {0}")]
    Invalid(String),
    #[error("every forward evaluation failed; last failure: {0}")]
    Infeasible(String),
    #[error("forward model: {0}")]
    Forward(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParameter {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

impl FreeParameter {
    pub fn new(name: &str, lower: f64, upper: f64, initial: f64) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            initial,
        }
    }
}

#[derive(Clone)]
pub struct CalibrationProblem {
    pub free: Vec<FreeParameter>,
    pub fixed: BTreeMap<String, f64>,
    pub target: ForceDisplacementCurve,
    pub forward: Arc<dyn ForwardModel>,
    /// Displacement range `(start, end)` of the objective, m.
    pub fit_window: (f64, f64),
    pub options: OptimizerOptions,
}

impl std::fmt::Debug for CalibrationProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CalibrationProblem")
            .field("free", &self.free)
            .field("fixed", &self.fixed)
            .field("fit_window", &self.fit_window)
            .field("target_samples", &self.target.len())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub parameters: BTreeMap<String, f64>,
    /// Σ|ΔF| over the window, N.
    pub objective_value: f64,
    /// `|F_max,sim − F_max,target| / F_max,target` in %, maxima taken over
    /// the fit window. `None` when the target peak is not positive.
    pub peak_force_error_pct: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Free-parameter names, in the order used by the trace.
    pub free_parameters: Vec<String>,
    pub trace: Vec<TraceEntry>,
    pub fit_window: (f64, f64),
    /// Simulated curve at the recovered parameters.
    pub fitted_curve: ForceDisplacementCurve,
}

impl CalibrationResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,method,evaluations,objective,best_objective");
        for name in &self.free_parameters {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for t in &self.trace {
            let _ = write!(
                out,
                "{},{},{},{:e},{:e}",
                t.iteration, t.method, t.evaluations, t.objective, t.best_objective
            );
            for p in &t.parameters {
                let _ = write!(out, ",{p:e}");
            }
            out.push('\n');
        }
        out
    }
}

impl CalibrationProblem {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::Invalid(m));
        if self.free.is_empty() {
            return bad("no free parameters".into());
        }
        for (i, p) in self.free.iter().enumerate() {
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower < p.upper) {
                return bad(format!("{}: bounds [{}, {}] must be finite with lower < upper", p.name, p.lower, p.upper));
            }
            if !(p.initial >= p.lower && p.initial <= p.upper) {
                return bad(format!("{}: initial value {} lies outside its bounds", p.name, p.initial));
            }
            if self.free[..i].iter().any(|q| q.name == p.name) || self.fixed.contains_key(&p.name) {
                return bad(format!("{}: parameter listed twice", p.name));
            }
        }
        if self.target.is_empty() || !self.target.is_monotone_in_displacement() {
            return bad("target curve must be non-empty with non-decreasing displacement".into());
        }
        let first = self.target.samples[0].displacement;
        let last = self.target.max_displacement();
        let (a, b) = self.fit_window;
        if !(a <= b && a >= first && b <= last) {
            return bad(format!("fit window [{a}, {b}] must lie within the target range [{first}, {last}]"));
        }
        if self.window_samples().count() == 0 {
            return bad("fit window holds no target samples".into());
        }
        Ok(())
    }

    fn window_samples(&self) -> impl Iterator<Item = &crate::CurveSample> + '_ {
        let (a, b) = self.fit_window;
        self.target
            .samples
            .iter()
            .filter(move |s| s.displacement >= a && s.displacement <= b)
    }

    /// Largest absolute target force in the window, or 1 N for a zero target.
    pub fn force_scale(&self) -> f64 {
        let m = self.window_samples().map(|s| s.force.abs()).fold(0.0, f64::max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    pub fn penalty(&self) -> f64 {
        PENALTY_FACTOR * self.force_scale()
    }

    fn named(&self, values: &[f64]) -> BTreeMap<String, f64> {
        let mut all = self.fixed.clone();
        for (p, &v) in self.free.iter().zip(values) {
            all.insert(p.name.clone(), v);
        }
        all
    }

    /// L1 misfit of a simulated curve over the window.
    pub fn misfit(&self, simulated: &ForceDisplacementCurve) -> f64 {
        self.window_samples()
            .map(|s| (simulated.force_at(s.displacement).unwrap_or(0.0) - s.force).abs())
            .sum()
    }

    /// Runs the forward model at the free-parameter `values` and returns the
    /// misfit, or the forward failure.
    pub fn evaluate(&self, values: &[f64]) -> Result<(f64, ForceDisplacementCurve), String> {
        let curve = self.forward.simulate(&self.named(values))?;
        if curve.is_empty() {
            return Err("forward model returned an empty curve".into());
        }
        let value = self.misfit(&curve);
        if !value.is_finite() {
            return Err("non-finite misfit".into());
        }
        Ok((value, curve))
    }

    /// Peak-force error of `simulated` against the target, both taken as the
    /// loading peak over the fit window so that post-failure ringing is not
    /// mistaken for the failure force.
    pub fn peak_force_error_pct(&self, simulated: &ForceDisplacementCurve) -> Option<f64> {
        let target: Vec<f64> = self.window_samples().map(|s| s.force).collect();
        let sim: Vec<f64> = self
            .window_samples()
            .map(|s| simulated.force_at(s.displacement).unwrap_or(0.0))
            .collect();
        let target_peak = target[loading_peak_index(&target, FAILURE_DROP_FRACTION)?];
        let sim_peak = sim[loading_peak_index(&sim, FAILURE_DROP_FRACTION)?];
        (target_peak > 0.0).then(|| 100.0 * (sim_peak - target_peak).abs() / target_peak)
    }
}

/// Objective at the free-parameter `values`; a failed forward run returns the
/// problem's penalty.
pub fn objective(values: &[f64], problem: &CalibrationProblem) -> f64 {
    match problem.evaluate(values) {
        Ok((v, _)) => v,
        Err(e) => {
            log::warn!("forward model failed at {:?}: {e}", problem.named(values));
            problem.penalty()
        }
    }
}

/// Bound-constrained minimisation of the objective from the initial values.
pub fn optimize(problem: &CalibrationProblem) -> Result<CalibrationResult, CalibrationError> {
    problem.validate()?;
    let successes = AtomicUsize::new(0);
    let last_failure = std::sync::Mutex::new(String::new());
    let f = |x: &[f64]| match problem.evaluate(x) {
        Ok((v, _)) => {
            successes.fetch_add(1, Ordering::Relaxed);
            v
        }
        Err(e) => {
            log::warn!("forward model failed at {:?}: {e}", problem.named(x));
            *last_failure.lock().unwrap() = e;
            problem.penalty()
        }
    };
    let x0: Vec<f64> = problem.free.iter().map(|p| p.initial).collect();
    let lower: Vec<f64> = problem.free.iter().map(|p| p.lower).collect();
    let upper: Vec<f64> = problem.free.iter().map(|p| p.upper).collect();
    let outcome = optimizer::minimize(&f, &x0, &lower, &upper, &problem.options);
    if successes.load(Ordering::Relaxed) == 0 {
        return Err(CalibrationError::Infeasible(last_failure.into_inner().unwrap()));
    }
    let (value, fitted_curve) = problem.evaluate(&outcome.x).map_err(CalibrationError::Forward)?;
    Ok(CalibrationResult {
        parameters: problem.named(&outcome.x),
        objective_value: value,
        peak_force_error_pct: problem.peak_force_error_pct(&fitted_curve),
        iterations: outcome.iterations,
        evaluations: outcome.evaluations + 1,
        converged: outcome.converged,
        free_parameters: problem.free.iter().map(|p| p.name.clone()).collect(),
        trace: outcome.trace,
        fit_window: problem.fit_window,
        fitted_curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueMode {
    #[default]
    FitMuOnly,
    FitMuAndAlpha,
}

/// Settings of the tissue stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueFit {
    pub mode: TissueMode,
    /// Overrides the default free parameters of `mode` when given.
    pub free: Option<Vec<FreeParameter>>,
    /// Values of stage parameters held fixed, overriding the defaults.
    pub fixed: BTreeMap<String, f64>,
    /// Exponents used when they are neither free nor fixed.
    pub alpha: [f64; 2],
    pub nu: f64,
    pub density: f64,
    pub strain_window: f64,
    pub optimizer: OptimizerOptions,
}

impl Default for TissueFit {
    fn default() -> Self {
        Self {
            mode: TissueMode::FitMuOnly,
            free: None,
            fixed: BTreeMap::new(),
            alpha: TISSUE_ALPHA,
            nu: BRAIN_POISSON_RATIO,
            density: DEFAULT_DENSITY,
            strain_window: TISSUE_STRAIN_WINDOW,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl TissueFit {
    pub fn free_parameters(&self) -> Vec<FreeParameter> {
        if let Some(free) = &self.free {
            return free.clone();
        }
        let mut free = vec![
            FreeParameter::new("mu1", 50.0, 5000.0, 400.0),
            FreeParameter::new("mu2", 50.0, 5000.0, 200.0),
        ];
        if self.mode == TissueMode::FitMuAndAlpha {
            free.push(FreeParameter::new("alpha1", -20.0, -1.0, -6.0));
            free.push(FreeParameter::new("alpha2", 1.0, 30.0, 12.0));
        }
        free
    }
}

/// Settings of the interface stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterfaceFit {
    /// Overrides the default free parameters `tn0`, `ts0`, `G` when given.
    pub free: Option<Vec<FreeParameter>>,
    /// Values of stage parameters held fixed, overriding `base_law`.
    pub fixed: BTreeMap<String, f64>,
    /// Supplies the fixed moduli and thickness and the values of any of
    /// `tn0`, `ts0`, `G` that are not free.
    pub base_law: CohesiveLaw,
    pub density: f64,
    pub window_factor: f64,
    pub optimizer: OptimizerOptions,
}

impl Default for InterfaceFit {
    fn default() -> Self {
        Self {
            free: None,
            fixed: BTreeMap::new(),
            base_law: CohesiveLaw::interface(3.0e3, 2.0e3, 0.5),
            density: DEFAULT_DENSITY,
            window_factor: INTERFACE_WINDOW_FACTOR,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl InterfaceFit {
    pub fn free_parameters(&self) -> Vec<FreeParameter> {
        self.free.clone().unwrap_or_else(|| {
            vec![
                FreeParameter::new("tn0", 500.0, 10e3, 2.0e3),
                FreeParameter::new("ts0", 500.0, 10e3, 1.5e3),
                FreeParameter::new("G", 0.05, 3.0, 0.3),
            ]
        })
    }
}

/// Names of the deformable (non-rigid) materials of `mesh`.
fn tissue_materials(mesh: &Mesh) -> Vec<String> {
    let mut names: Vec<String> = mesh
        .hexes
        .iter()
        .filter(|h| !mesh.is_rigid(h))
        .map(|h| h.material.clone())
        .collect();
    names.sort();
    names.dedup();
    names
}

/// Height of the deformable part of `mesh` along z.
fn tissue_height(mesh: &Mesh) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for hex in mesh.hexes.iter().filter(|h| !mesh.is_rigid(h)) {
        for &n in &hex.nodes {
            lo = lo.min(mesh.nodes[n].z);
            hi = hi.max(mesh.nodes[n].z);
        }
    }
    hi - lo
}

fn reject_unknown(
    free: &[FreeParameter],
    fixed: &BTreeMap<String, f64>,
    injection: &Injection,
) -> Result<(), CalibrationError> {
    let names = free.iter().map(|p| &p.name).chain(fixed.keys());
    for name in names {
        if !injection.parameter_names().contains(&name.as_str()) {
            return Err(CalibrationError::Invalid(format!(
                "{name:?} is not a parameter of this stage (expected one of {:?})",
                injection.parameter_names()
            )));
        }
    }
    Ok(())
}

/// Fits Ogden parameters to a tissue-sample shear curve over shear strain
/// `[0, strain_window]`.
pub fn calibrate_tissue(
    target: &ForceDisplacementCurve,
    mesh: &Mesh,
    config: &SimulationConfig,
    fit: &TissueFit,
) -> Result<(OgdenParams, CalibrationResult), CalibrationError> {
    if !mesh.cohesives.is_empty() {
        return Err(CalibrationError::Invalid(
            "the tissue stage expects a tissue-only sample mesh".into(),
        ));
    }
    let materials = tissue_materials(mesh);
    if materials.is_empty() {
        return Err(CalibrationError::Invalid("mesh has no deformable material".into()));
    }
    let height = tissue_height(mesh);
    let base = OgdenParams::with_poisson([400.0, 200.0], fit.alpha, fit.nu)
        .map_err(|e| CalibrationError::Invalid(e.to_string()))?;
    let injection = Injection::Tissue {
        materials,
        base,
        nu: fit.nu,
        density: fit.density,
    };
    let free = fit.free_parameters();
    reject_unknown(&free, &fit.fixed, &injection)?;
    let model = Model::from_mesh(mesh.clone()).map_err(|e| CalibrationError::Invalid(e.to_string()))?;
    let end = (fit.strain_window * height).min(target.max_displacement());
    let start = target.samples.first().map_or(0.0, |s| s.displacement.max(0.0));
    let problem = CalibrationProblem {
        free,
        fixed: fit.fixed.clone(),
        target: target.clone(),
        forward: Arc::new(ModelForward {
            model,
            config: config.clone(),
            injection: injection.clone(),
        }),
        fit_window: (start, end),
        options: fit.optimizer.clone(),
    };
    let result = optimize(&problem)?;
    let p = |name: &str, fallback: f64| result.parameters.get(name).copied().unwrap_or(fallback);
    let params = OgdenParams::with_poisson(
        [p("mu1", base.mu[0]), p("mu2", base.mu[1])],
        [p("alpha1", fit.alpha[0]), p("alpha2", fit.alpha[1])],
        fit.nu,
    )
    .map_err(|e| CalibrationError::Forward(e.to_string()))?;
    Ok((params, result))
}

/// Fits `tn0`, `ts0 = tt0` and `G` to a brain–skull stack shear curve with
/// the tissue held at `tissue`. The window runs from zero to the smaller of
/// `window_factor` times the failure displacement and the displacement where
/// the force first falls below half its peak.
pub fn calibrate_interface(
    target: &ForceDisplacementCurve,
    mesh: &Mesh,
    config: &SimulationConfig,
    tissue: &OgdenParams,
    fit: &InterfaceFit,
) -> Result<(CohesiveLaw, CalibrationResult), CalibrationError> {
    if mesh.cohesives.is_empty() {
        return Err(CalibrationError::Invalid("the interface stage expects a mesh with a cohesive layer".into()));
    }
    let mut laws: Vec<String> = mesh.cohesives.iter().map(|c| c.law.clone()).collect();
    laws.sort();
    laws.dedup();
    let mut model = Model::from_mesh(mesh.clone()).map_err(|e| CalibrationError::Invalid(e.to_string()))?;
    for name in tissue_materials(mesh) {
        model = model.with_material(
            &name,
            crate::material::Material::Ogden {
                params: *tissue,
                density: fit.density,
            },
        );
    }
    let injection = Injection::Interface {
        laws,
        base: fit.base_law,
    };
    let free = fit.free_parameters();
    reject_unknown(&free, &fit.fixed, &injection)?;
    let peak = target
        .loading_peak(FAILURE_DROP_FRACTION)
        .ok_or_else(|| CalibrationError::Invalid("target curve is empty".into()))?;
    // undamped ringing after failure carries no information on the law and
    // would dominate the misfit, so the window also stops at the force drop
    let mut end = (fit.window_factor * peak.displacement).min(target.max_displacement());
    if let Some(drop) = target.first_drop(FAILURE_DROP_FRACTION) {
        end = end.min(drop.displacement);
    }
    let start = target.samples[0].displacement.max(0.0).min(end);
    let problem = CalibrationProblem {
        free,
        fixed: fit.fixed.clone(),
        target: target.clone(),
        forward: Arc::new(ModelForward {
            model,
            config: config.clone(),
            injection,
        }),
        fit_window: (start, end),
        options: fit.optimizer.clone(),
    };
    let result = optimize(&problem)?;
    let mut law = fit.base_law;
    let p = |name: &str, fallback: f64| result.parameters.get(name).copied().unwrap_or(fallback);
    law.tn0 = p("tn0", law.tn0);
    law.ts0 = p("ts0", law.ts0);
    law.tt0 = law.ts0;
    law.g = p("G", law.g);
    Ok((law, result))
}
