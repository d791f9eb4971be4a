//! Forward models: parameter injection into a bound FE model and synthetic
//! target generation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohesive::CohesiveLaw;
use crate::curve::ForceDisplacementCurve;
use crate::material::{Material, OgdenParams};
use crate::model::Model;
use crate::solver::{run, SimulationConfig, SolverError};

/// Maps named parameter values to a simulated force–displacement curve.
pub trait ForwardModel: Send + Sync {
    fn simulate(&self, parameters: &BTreeMap<String, f64>) -> Result<ForceDisplacementCurve, String>;
}

/// How named parameters reach the model.
#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    /// `mu1`, `mu2`, `alpha1`, `alpha2` override the base Ogden set on every
    /// listed material; `D₁` follows from `nu` at each trial point.
    Tissue {
        materials: Vec<String>,
        base: OgdenParams,
        nu: f64,
        density: f64,
    },
    /// `tn0`, `ts0` (shared by both tangential directions) and `G` override
    /// the base law on every listed law name.
    Interface { laws: Vec<String>, base: CohesiveLaw },
}

/// A model plus run configuration evaluated at injected parameters.
#[derive(Debug, Clone)]
pub struct ModelForward {
    pub model: Model,
    pub config: SimulationConfig,
    pub injection: Injection,
}

fn lookup(parameters: &BTreeMap<String, f64>, name: &str, default: f64) -> f64 {
    parameters.get(name).copied().unwrap_or(default)
}

impl Injection {
    /// Parameter names this injection understands.
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            Injection::Tissue { .. } => &["mu1", "mu2", "alpha1", "alpha2"],
            Injection::Interface { .. } => &["tn0", "ts0", "G"],
        }
    }

    pub fn apply(&self, model: &Model, parameters: &BTreeMap<String, f64>) -> Result<Model, String> {
        if let Some(unknown) = parameters.keys().find(|k| !self.parameter_names().contains(&k.as_str())) {
            return Err(format!("unknown parameter {unknown:?}"));
        }
        let mut model = model.clone();
        match self {
            Injection::Tissue {
                materials,
                base,
                nu,
                density,
            } => {
                let mu = [lookup(parameters, "mu1", base.mu[0]), lookup(parameters, "mu2", base.mu[1])];
                let alpha = [
                    lookup(parameters, "alpha1", base.alpha[0]),
                    lookup(parameters, "alpha2", base.alpha[1]),
                ];
                let params = OgdenParams::with_poisson(mu, alpha, *nu).map_err(|e| e.to_string())?;
                for name in materials {
                    model.materials.insert(
                        name.clone(),
                        Material::Ogden {
                            params,
                            density: *density,
                        },
                    );
                }
            }
            Injection::Interface { laws, base } => {
                let mut law = *base;
                law.tn0 = lookup(parameters, "tn0", base.tn0);
                law.ts0 = lookup(parameters, "ts0", base.ts0);
                law.tt0 = law.ts0;
                law.g = lookup(parameters, "G", base.g);
                law.validate().map_err(|e| e.to_string())?;
                for name in laws {
                    model.laws.insert(name.clone(), law);
                }
            }
        }
        Ok(model)
    }
}

impl ForwardModel for ModelForward {
    fn simulate(&self, parameters: &BTreeMap<String, f64>) -> Result<ForceDisplacementCurve, String> {
        let model = self.injection.apply(&self.model, parameters)?;
        run(&model, &self.config).map(|out| out.curve).map_err(|e| e.error.to_string())
    }
}

/// Measurement noise added to synthetic targets.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    #[default]
    None,
    /// Multiplicative noise `1 + U(−p, p) / 100`.
    Uniform { percent: f64 },
}

/// Runs `model`, resamples the curve at the displacement step of 100 Hz
/// sampling at the configured loading rate and applies seeded noise.
pub fn synthesize_target(
    model: &Model,
    config: &SimulationConfig,
    noise: Noise,
    seed: u64,
) -> Result<ForceDisplacementCurve, SolverError> {
    let output = run(model, config).map_err(|e| e.error)?;
    let step = config.loading_rate_m_per_s / 100.0;
    let mut curve = output
        .curve
        .resample_uniform(step)
        .map_err(|e| SolverError::Config(e.to_string()))?;
    curve.metadata.sample_rate_hz = Some(100.0);
    if let Noise::Uniform { percent } = noise {
        if !(0.0..100.0).contains(&percent) {
            return Err(SolverError::Config(format!("noise percent must lie in [0, 100), got {percent}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &mut curve.samples {
            s.force *= 1.0 + percent / 100.0 * rng.random_range(-1.0..=1.0);
        }
    }
    Ok(curve)
}
