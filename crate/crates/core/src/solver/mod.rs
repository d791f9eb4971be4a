//! Explicit central-difference solver.
//!
//! Driven nodes follow `smooth_step · total_pull · loading_direction`, fixed
//! nodes stay put, and every other degree of freedom is integrated with the
//! lumped mass. Element forces are computed in parallel and assembled in
//! element order, so results do not depend on the thread count.

pub mod energy;
pub mod hex;
pub mod interface;
pub mod mass;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohesive::{CohesiveError, CohesiveLaw};
use crate::curve::{CurveMetadata, CurveSample, ForceDisplacementCurve};
use crate::material::{Material, MaterialError, OgdenParams};
use crate::mesh::Mesh;
use crate::model::{Model, ModelError};
use crate::Vec3;

pub use energy::{energy_report, EnergyReport, EnergyRow, EnergySample};
pub use hex::{hex_internal_force, HexKernel, HexResponse};
pub use interface::{cohesive_internal_force, CohesiveKernel, CohesiveResponse, PointState};
pub use mass::{lump_mass, stable_dt};

use interface::CohesiveFailure;

/// Quintic ramp from 0 at `t0` to 1 at `t1` with vanishing first and second
/// derivatives at both ends.
pub fn smooth_step(t: f64, t0: f64, t1: f64) -> f64 {
    let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Peak of `d smooth_step / ds`.
pub const SMOOTH_STEP_PEAK_RATE: f64 = 1.875;

/// Balance-check floor as a fraction of `Σ μ₀ V` over the deformable hexes,
/// the energy scale of a unit strain.
pub const ENERGY_FLOOR: f64 = 1e-9;

/// Whether the driven nodes are also held in the directions normal to the
/// loading direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransverseMode {
    #[default]
    Fixed,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Final displacement of the driven set along the loading direction.
    pub total_pull_m: f64,
    pub loading_rate_m_per_s: f64,
    /// The ramp runs this many times faster than the physical test.
    pub time_compression: f64,
    pub hourglass_coefficient: f64,
    pub dt_safety: f64,
    /// Output spacing; defaults to the 100 Hz sampling of the physical test
    /// mapped through the time compression and the peak ramp rate.
    pub output_interval_s: Option<f64>,
    pub loading_direction: [f64; 3],
    pub driven_set: String,
    pub fixed_set: String,
    pub driven_transverse: TransverseMode,
    /// Mass-proportional damping coefficient, 1/s.
    pub mass_damping_per_s: f64,
    /// Abort when the energy imbalance exceeds this fraction.
    pub energy_abort_fraction: f64,
    /// Worker threads for element loops; `None` uses the ambient pool.
    pub threads: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            total_pull_m: 4.5e-3,
            loading_rate_m_per_s: 3.0e-4,
            time_compression: 100.0,
            hourglass_coefficient: 0.05,
            dt_safety: 0.5,
            output_interval_s: None,
            loading_direction: [1.0, 0.0, 0.0],
            driven_set: "top".into(),
            fixed_set: "bottom".into(),
            driven_transverse: TransverseMode::Fixed,
            mass_damping_per_s: 0.0,
            energy_abort_fraction: 0.05,
            threads: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::Config(m));
        if !(self.total_pull_m >= 0.0 && self.total_pull_m.is_finite()) {
            return bad(format!("total_pull_m must be finite and non-negative, got {}", self.total_pull_m));
        }
        if !(self.loading_rate_m_per_s > 0.0 && self.loading_rate_m_per_s.is_finite()) {
            return bad(format!("loading_rate_m_per_s must be positive, got {}", self.loading_rate_m_per_s));
        }
        if !(self.time_compression >= 1.0 && self.time_compression.is_finite()) {
            return bad(format!("time_compression must be at least 1, got {}", self.time_compression));
        }
        if !(self.hourglass_coefficient >= 0.0 && self.hourglass_coefficient.is_finite()) {
            return bad(format!("hourglass_coefficient must be non-negative, got {}", self.hourglass_coefficient));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return bad(format!("dt_safety must lie in (0, 1], got {}", self.dt_safety));
        }
        if let Some(dt) = self.output_interval_s {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("output_interval_s must be positive, got {dt}"));
            }
        }
        let norm = Vec3::from(self.loading_direction).norm();
        if !((norm - 1.0).abs() < 1e-9) {
            return bad(format!("loading_direction must be a unit vector, |d| = {norm}"));
        }
        if !(self.mass_damping_per_s >= 0.0 && self.mass_damping_per_s.is_finite()) {
            return bad(format!("mass_damping_per_s must be non-negative, got {}", self.mass_damping_per_s));
        }
        if !(self.energy_abort_fraction > 0.0) {
            return bad(format!("energy_abort_fraction must be positive, got {}", self.energy_abort_fraction));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    /// Duration of the displacement ramp, s.
    pub fn ramp_duration(&self) -> f64 {
        self.total_pull_m / (self.loading_rate_m_per_s * self.time_compression)
    }

    pub fn output_interval(&self) -> f64 {
        self.output_interval_s
            .unwrap_or(0.01 / (self.time_compression * SMOOTH_STEP_PEAK_RATE))
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("hex {element} has non-positive reference volume")]
    InvertedReference { element: usize },
    #[error("hex {element} inverted at t = {time:e} s (J = {jacobian:e})")]
    ElementInversion { element: usize, jacobian: f64, time: f64 },
    #[error("hex {element}: {source}")]
    Material { element: usize, source: MaterialError },
    #[error("cohesive element {element} has a degenerate midplane")]
    DegenerateMidplane { element: usize },
    #[error("cohesive element {element}: {source}")]
    Cohesive { element: usize, source: CohesiveError },
    #[error("non-finite state at step {step} (t = {time:e} s)")]
    NonFinite { step: usize, time: f64 },
    #[error(
        "energy imbalance {:.2}% at t = {time:e} s exceeds the {:.0}% limit; the run is not quasi-static",
        100.0 * fraction,
        100.0 * limit
    )]
    EnergyImbalance { time: f64, fraction: f64, limit: f64 },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl SolverError {
    fn from_cohesive(element: usize, failure: CohesiveFailure) -> Self {
        match failure {
            CohesiveFailure::DegenerateMidplane => SolverError::DegenerateMidplane { element },
            CohesiveFailure::Law(source) => SolverError::Cohesive { element, source },
        }
    }

    fn from_material(element: usize, time: f64, source: MaterialError) -> Self {
        match source {
            MaterialError::NonPositiveJacobian(jacobian) => SolverError::ElementInversion { element, jacobian, time },
            source => SolverError::Material { element, source },
        }
    }
}

/// Result of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub curve: ForceDisplacementCurve,
    pub history: Vec<EnergySample>,
    /// Increment used, s.
    pub dt: f64,
    pub steps: usize,
}

/// A failed run with whatever output had been produced before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunError {
    #[source]
    pub error: SolverError,
    pub partial: Option<Box<RunOutput>>,
}

impl From<SolverError> for RunError {
    fn from(error: SolverError) -> Self {
        Self { error, partial: None }
    }
}

/// How one degree of freedom is treated.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Dof {
    Free,
    /// `u = factor · smooth_step · total_pull`; fixed nodes have factor 0.
    Prescribed(f64),
}

/// Internal energies of one force evaluation.
#[derive(Debug, Clone, Copy, Default)]
struct Energies {
    elastic: f64,
    hourglass: f64,
    cohesive_recoverable: f64,
    cohesive_dissipated: f64,
    max_damage: f64,
}

/// Time-stepping state of one model under one configuration.
pub struct Simulation {
    config: SimulationConfig,
    direction: Vec3,
    mesh: Arc<Mesh>,
    hexes: Vec<(usize, HexKernel, OgdenParams)>,
    cohesives: Vec<(usize, CohesiveKernel, CohesiveLaw)>,
    states: Vec<[PointState; 4]>,
    mass: Vec<f64>,
    dofs: Vec<[Dof; 3]>,
    driven: Vec<usize>,
    u: Vec<Vec3>,
    /// Velocity at the previous half step, `v_{n-1/2}`.
    v: Vec<Vec3>,
    force: Vec<Vec3>,
    /// Reaction at prescribed degrees of freedom from the previous step.
    reaction: Vec<Vec3>,
    external_work: f64,
    damping_work: f64,
    dt: f64,
    step: usize,
    energy_floor: f64,
}

impl Simulation {
    pub fn new(model: &Model, config: &SimulationConfig) -> Result<Self, SolverError> {
        config.validate()?;
        model.validate()?;
        let mesh = Arc::clone(&model.mesh);
        let mut hexes = Vec::new();
        for (element, hex) in mesh.hexes.iter().enumerate() {
            if let Some(Material::Ogden { params, .. }) = model.materials.get(&hex.material) {
                let kernel = HexKernel::new(
                    hex.nodes,
                    &mesh.hex_corners(hex),
                    params.initial_moduli().mu0,
                    config.hourglass_coefficient,
                )
                .ok_or(SolverError::InvertedReference { element })?;
                hexes.push((element, kernel, *params));
            }
        }
        let mut cohesives = Vec::new();
        for (element, coh) in mesh.cohesives.iter().enumerate() {
            let kernel = CohesiveKernel::new(coh.nodes, &coh.nodes.map(|n| mesh.nodes[n]))
                .ok_or(SolverError::DegenerateMidplane { element })?;
            cohesives.push((element, kernel, model.laws[&coh.law]));
        }
        let mass = lump_mass(&mesh, &model.materials)?;
        let energy_floor = ENERGY_FLOOR
            * hexes
                .iter()
                .map(|(_, k, p): &(usize, HexKernel, OgdenParams)| p.initial_moduli().mu0 * k.volume)
                .sum::<f64>();

        let direction = Vec3::from(config.loading_direction);
        let set = |name: &str| -> Result<Vec<usize>, SolverError> {
            if name.is_empty() {
                return Ok(Vec::new());
            }
            mesh.node_set(name)
                .map(<[usize]>::to_vec)
                .ok_or_else(|| SolverError::Config(format!("node set {name:?} does not exist")))
        };
        let fixed = set(&config.fixed_set)?;
        let driven = set(&config.driven_set)?;
        if config.total_pull_m > 0.0 && driven.is_empty() {
            return Err(SolverError::Config("a non-zero pull needs a non-empty driven set".into()));
        }
        let mut dofs = vec![[Dof::Free; 3]; mesh.nodes.len()];
        for &n in &driven {
            dofs[n] = std::array::from_fn(|i| match config.driven_transverse {
                TransverseMode::Free if direction[i] == 0.0 => Dof::Free,
                _ => Dof::Prescribed(direction[i]),
            });
        }
        for &n in &fixed {
            if driven.binary_search(&n).is_ok() {
                return Err(SolverError::Config(format!("node {n} is both fixed and driven")));
            }
            dofs[n] = [Dof::Prescribed(0.0); 3];
        }
        for (n, d) in dofs.iter().enumerate() {
            if d.contains(&Dof::Free) && !(mass[n] > 0.0) {
                return Err(SolverError::Config(format!("unconstrained node {n} has no mass")));
            }
        }

        let stable = mass::stable_dt_with_mass(model, &mass, config.dt_safety)?;
        let ramp = config.ramp_duration();
        let dt = if ramp > 0.0 { ramp / (ramp / stable).ceil() } else { stable };
        let nodes = mesh.nodes.len();
        Ok(Self {
            config: config.clone(),
            direction,
            states: vec![[PointState::default(); 4]; cohesives.len()],
            hexes,
            cohesives,
            mesh,
            mass,
            dofs,
            driven,
            u: vec![Vec3::zeros(); nodes],
            v: vec![Vec3::zeros(); nodes],
            force: vec![Vec3::zeros(); nodes],
            reaction: vec![Vec3::zeros(); nodes],
            external_work: 0.0,
            damping_work: 0.0,
            dt,
            step: 0,
            energy_floor,
        })
    }

    /// Energies below this level (J) are treated as roundoff by the
    /// balance check.
    pub fn energy_floor(&self) -> f64 {
        self.energy_floor
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    /// Number of increments to the end of the ramp.
    pub fn step_count(&self) -> usize {
        (self.config.ramp_duration() / self.dt).round() as usize
    }

    pub fn displacements(&self) -> &[Vec3] {
        &self.u
    }

    /// Velocities at the last half step.
    pub fn velocities(&self) -> &[Vec3] {
        &self.v
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn cohesive_states(&self) -> &[[PointState; 4]] {
        &self.states
    }

    /// Sets the initial velocity field (before the first step).
    pub fn set_velocities(&mut self, v: Vec<Vec3>) {
        assert_eq!(v.len(), self.v.len());
        self.v = v;
    }

    fn prescribed(&self, factor: f64, time: f64) -> f64 {
        let ramp = self.config.ramp_duration();
        if ramp > 0.0 {
            factor * smooth_step(time, 0.0, ramp) * self.config.total_pull_m
        } else {
            0.0
        }
    }

    /// Applied displacement along the loading direction at `time`.
    pub fn applied_displacement(&self, time: f64) -> f64 {
        self.prescribed(1.0, time)
    }

    fn internal_forces(&mut self, with_energy: bool) -> Result<Energies, SolverError> {
        let time = self.time();
        let u = &self.u;
        let hex_out: Vec<_> = self
            .hexes
            .par_iter()
            .map(|(element, kernel, params)| {
                let ue = kernel.nodes.map(|n| u[n]);
                kernel
                    .response(&ue, params, with_energy)
                    .map_err(|e| SolverError::from_material(*element, time, e))
            })
            .collect();
        let positions = &self.mesh.nodes;
        let coh_out: Vec<_> = self
            .cohesives
            .par_iter()
            .zip(self.states.par_iter())
            .map(|((element, kernel, law), states)| {
                let xe = kernel.nodes.map(|n| positions[n]);
                let ue = kernel.nodes.map(|n| u[n]);
                kernel
                    .response(&xe, &ue, states, law)
                    .map_err(|f| SolverError::from_cohesive(*element, f))
            })
            .collect();

        let mut energies = Energies::default();
        self.force.iter_mut().for_each(|f| *f = Vec3::zeros());
        for ((_, kernel, _), out) in self.hexes.iter().zip(hex_out) {
            let r = out?;
            for (a, &n) in kernel.nodes.iter().enumerate() {
                self.force[n] += r.forces[a];
            }
            energies.elastic += r.elastic_energy;
            energies.hourglass += r.hourglass_energy;
        }
        for (((_, kernel, _), state), out) in self.cohesives.iter().zip(self.states.iter_mut()).zip(coh_out) {
            let r = out?;
            for (a, &n) in kernel.nodes.iter().enumerate() {
                self.force[n] += r.forces[a];
            }
            *state = r.states;
            energies.cohesive_recoverable += r.recoverable_energy;
            energies.cohesive_dissipated += r.dissipated_energy;
            for s in &r.states {
                energies.max_damage = energies.max_damage.max(s.law.damage);
            }
        }
        Ok(energies)
    }

    /// Advances one increment. Returns the ledger at the start of the
    /// increment when `record` is set.
    pub fn step(&mut self, record: bool) -> Result<Option<EnergySample>, SolverError> {
        let time = self.time();
        let energies = self.internal_forces(record)?;
        let dt = self.dt;
        let next_time = (self.step + 1) as f64 * dt;
        let damping = self.config.mass_damping_per_s;
        let mut kinetic = 0.0;
        let mut work = 0.0;
        let mut damping_work = 0.0;
        for n in 0..self.u.len() {
            let m = self.mass[n];
            let v_old = self.v[n];
            let f = self.force[n];
            for i in 0..3 {
                match self.dofs[n][i] {
                    Dof::Free => {
                        let v_new = v_old[i] - dt * (f[i] / m + damping * v_old[i]);
                        damping_work += damping * m * v_old[i] * 0.5 * (v_old[i] + v_new) * dt;
                        self.v[n][i] = v_new;
                    }
                    Dof::Prescribed(factor) => {
                        let target = self.prescribed(factor, next_time);
                        let v_new = (target - self.u[n][i]) / dt;
                        let r = f[i] + m * (v_new - v_old[i]) / dt;
                        work += 0.5 * (self.reaction[n][i] + r) * dt * v_old[i];
                        self.reaction[n][i] = r;
                        self.v[n][i] = v_new;
                    }
                }
            }
            kinetic += 0.5 * m * v_old.dot(&self.v[n]);
        }
        self.external_work += work;

        let sample = record.then(|| EnergySample {
            time,
            displacement: self.applied_displacement(time),
            force: self.driven.iter().map(|&n| self.force[n].dot(&self.direction)).sum(),
            kinetic,
            internal_elastic: energies.elastic + energies.cohesive_recoverable,
            hourglass: energies.hourglass,
            cohesive_dissipated: energies.cohesive_dissipated,
            external_work: self.external_work,
            damping_work: self.damping_work,
            max_damage: energies.max_damage,
        });
        self.damping_work += damping_work;

        for n in 0..self.u.len() {
            for i in 0..3 {
                self.u[n][i] = match self.dofs[n][i] {
                    Dof::Free => self.u[n][i] + dt * self.v[n][i],
                    Dof::Prescribed(factor) => self.prescribed(factor, next_time),
                };
            }
            if !(self.u[n].iter().all(|x| x.is_finite()) && self.v[n].iter().all(|x| x.is_finite())) {
                return Err(SolverError::NonFinite { step: self.step, time });
            }
        }
        self.step += 1;
        Ok(sample)
    }
}

fn zero_output(config: &SimulationConfig) -> RunOutput {
    RunOutput {
        curve: ForceDisplacementCurve {
            samples: vec![CurveSample {
                displacement: 0.0,
                force: 0.0,
            }],
            metadata: metadata(config),
        },
        history: vec![EnergySample::default()],
        dt: 0.0,
        steps: 0,
    }
}

fn metadata(config: &SimulationConfig) -> CurveMetadata {
    CurveMetadata {
        sample_rate_hz: Some(1.0 / config.output_interval()),
        loading_direction: config.loading_direction,
    }
}

/// Runs the full displacement ramp.
pub fn run(model: &Model, config: &SimulationConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    match config.threads {
        None => run_inner(model, config),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SolverError::ThreadPool(e.to_string()))?
            .install(|| run_inner(model, config)),
    }
}

fn run_inner(model: &Model, config: &SimulationConfig) -> Result<RunOutput, RunError> {
    let mut sim = Simulation::new(model, config)?;
    if config.total_pull_m == 0.0 {
        return Ok(zero_output(config));
    }
    let steps = sim.step_count();
    let stride = ((config.output_interval() / sim.dt) * (1.0 + 1e-12)).floor().max(1.0) as usize;
    let mut samples = Vec::with_capacity(steps / stride + 2);
    let mut history = Vec::with_capacity(steps / stride + 2);
    let partial = |samples: &Vec<CurveSample>, history: &Vec<EnergySample>, sim: &Simulation| RunOutput {
        curve: ForceDisplacementCurve {
            samples: samples.clone(),
            metadata: metadata(config),
        },
        history: history.clone(),
        dt: sim.dt,
        steps: sim.step,
    };
    for n in 0..=steps {
        let record = n % stride == 0 || n == steps;
        match sim.step(record) {
            Ok(Some(sample)) => {
                let fraction = if sample.balance_scale() > sim.energy_floor {
                    sample.imbalance_fraction()
                } else {
                    0.0
                };
                samples.push(CurveSample {
                    displacement: sample.displacement,
                    force: sample.force,
                });
                history.push(sample);
                if fraction > config.energy_abort_fraction {
                    return Err(RunError {
                        error: SolverError::EnergyImbalance {
                            time: sample.time,
                            fraction,
                            limit: config.energy_abort_fraction,
                        },
                        partial: Some(Box::new(partial(&samples, &history, &sim))),
                    });
                }
            }
            Ok(None) => {}
            Err(error) => {
                return Err(RunError {
                    error,
                    partial: Some(Box::new(partial(&samples, &history, &sim))),
                })
            }
        }
    }
    Ok(RunOutput {
        curve: ForceDisplacementCurve {
            samples,
            metadata: metadata(config),
        },
        history,
        dt: sim.dt,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_step_endpoints_and_midpoint() {
        assert_eq!(smooth_step(0.0, 0.0, 1.0), 0.0);
        assert_eq!(smooth_step(1.0, 0.0, 1.0), 1.0);
        assert_eq!(smooth_step(0.5, 0.0, 1.0), 0.5);
        assert_eq!(smooth_step(-3.0, 0.0, 1.0), 0.0);
        assert_eq!(smooth_step(7.0, 2.0, 4.0), 1.0);
    }

    #[test]
    fn smooth_step_derivative_vanishes_at_ends() {
        let h = 1e-7;
        let d0 = (smooth_step(h, 0.0, 1.0) - smooth_step(-h, 0.0, 1.0)) / (2.0 * h);
        assert!(d0.abs() < 1e-12, "{d0}");
        // Near s = 1 the values round to 1 in f64, so the central difference
        // there is formed exactly on the same polynomial with dyadic steps.
        let xi = |num: i128| 10 * num.pow(3) * (1 << 44) - 15 * num.pow(4) * (1 << 22) + 6 * num.pow(5);
        let one = 1i128 << 22;
        let diff = xi(one + 1) - xi(one - 1);
        let d1 = diff as f64 / 2f64.powi(110) / (2.0 * 2f64.powi(-22));
        assert!(d1.abs() < 1e-12, "{d1}");
        for s in [0.1f64, 0.37, 0.5, 0.81] {
            let exact = 10.0 * s * s * s - 15.0 * s.powi(4) + 6.0 * s.powi(5);
            assert!((smooth_step(s, 0.0, 1.0) - exact).abs() < 1e-15);
        }
        let mid = (smooth_step(0.5 + 1e-6, 0.0, 1.0) - smooth_step(0.5 - 1e-6, 0.0, 1.0)) / 2e-6;
        assert!((mid - SMOOTH_STEP_PEAK_RATE).abs() < 1e-8);
    }

    #[test]
    fn config_round_trips_and_rejects_bad_values() {
        let c = SimulationConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SimulationConfig>(&text).unwrap(), c);
        let partial: SimulationConfig = serde_json::from_str(r#"{"total_pull_m": 0.001}"#).unwrap();
        assert_eq!(partial.dt_safety, 0.5);
        for bad in [
            SimulationConfig { dt_safety: 1.5, ..c.clone() },
            SimulationConfig { time_compression: 0.5, ..c.clone() },
            SimulationConfig { loading_direction: [1.0, 1.0, 0.0], ..c.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(SolverError::Config(_))));
        }
    }
}
