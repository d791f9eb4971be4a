//! Lumped mass and the stable time increment.

use std::collections::BTreeMap;

use crate::material::Material;
use crate::mesh::{scaled_jacobian, Mesh};
use crate::model::Model;

use super::hex::{mean_gradients, min_edge_length};
use super::interface::CohesiveKernel;
use super::SolverError;

/// Equal-split lumping: each hex gives `ρ V / 8` to each of its nodes.
/// Rigid hexes carry mass like any other.
pub fn lump_mass(mesh: &Mesh, materials: &BTreeMap<String, Material>) -> Result<Vec<f64>, SolverError> {
    let mut mass = vec![0.0; mesh.nodes.len()];
    for (element, hex) in mesh.hexes.iter().enumerate() {
        let density = materials
            .get(&hex.material)
            .ok_or_else(|| SolverError::Config(format!("hex {element}: material {:?} is not defined", hex.material)))?
            .density();
        if !(density > 0.0) {
            return Err(SolverError::Config(format!("material {:?}: density must be positive", hex.material)));
        }
        let corners = mesh.hex_corners(hex);
        let volume = match (scaled_jacobian(&corners), mean_gradients(&corners)) {
            (Some(q), Some((v, _))) if q > 0.0 => v,
            _ => return Err(SolverError::InvertedReference { element }),
        };
        for &n in &hex.nodes {
            mass[n] += density * volume / 8.0;
        }
    }
    Ok(mass)
}

/// Stable explicit increment for `model`, including the cohesive cap.
pub fn stable_dt(model: &Model, dt_safety: f64) -> Result<f64, SolverError> {
    let mass = lump_mass(&model.mesh, &model.materials)?;
    stable_dt_with_mass(model, &mass, dt_safety)
}

pub(crate) fn stable_dt_with_mass(model: &Model, mass: &[f64], dt_safety: f64) -> Result<f64, SolverError> {
    if !(dt_safety > 0.0 && dt_safety <= 1.0) {
        return Err(SolverError::Config(format!("dt_safety must lie in (0, 1], got {dt_safety}")));
    }
    let mesh = &model.mesh;
    let mut limit = f64::INFINITY;
    for (element, hex) in mesh.hexes.iter().enumerate() {
        let material = model
            .materials
            .get(&hex.material)
            .ok_or_else(|| SolverError::Config(format!("hex {element}: material {:?} is not defined", hex.material)))?;
        if let Material::Ogden { params, density } = material {
            let c = params.dilatational_wave_speed(*density);
            limit = limit.min(min_edge_length(&mesh.hex_corners(hex)) / c);
        }
    }
    for (element, coh) in mesh.cohesives.iter().enumerate() {
        let law = model
            .laws
            .get(&coh.law)
            .ok_or_else(|| SolverError::Config(format!("cohesive {element}: law {:?} is not defined", coh.law)))?;
        let kernel = CohesiveKernel::new(coh.nodes, &coh.nodes.map(|n| mesh.nodes[n]))
            .ok_or(SolverError::DegenerateMidplane { element })?;
        let m_min = coh.nodes.iter().map(|&n| mass[n]).fold(f64::INFINITY, f64::min);
        let a_max = kernel.areas.iter().copied().fold(0.0, f64::max);
        let k = law.max_modulus() * a_max / law.t0;
        limit = limit.min((m_min / k).sqrt());
    }
    let dt = dt_safety * limit;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::Config(format!("stable time step is not positive and finite ({dt})")));
    }
    Ok(dt)
}
