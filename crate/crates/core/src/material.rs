//! Second-order Ogden hyperelasticity in deviatoric principal stretches.
//!
//! The strain energy per unit reference volume is
//!
//! ```text
//! W = Σᵢ 2μᵢ/αᵢ² (λ̄₁^αᵢ + λ̄₂^αᵢ + λ̄₃^αᵢ − 3) + Σᵢ 1/Dᵢ (J − 1)^(2i),   i = 1, 2
//! ```
//!
//! with `λ̄ₐ = J^(−1/3) λₐ`. A zero `D₂` drops the second volumetric term.
//! The initial moduli are `μ₀ = μ₁ + μ₂` and `K₀ = 2 / D₁`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Mat3;

/// Poisson's ratio used for nearly incompressible brain tissue.
pub const BRAIN_POISSON_RATIO: f64 = 0.49;
/// Default density for tissue and bone when none is given, kg/m³.
pub const DEFAULT_DENSITY: f64 = 1000.0;

/// Principal stretches closer than this (relative) are treated as repeated.
/// Kept near round-off: a coarser value zeroes the shear stress of small shears.
const REPEATED_STRETCH_TOL: f64 = 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("Poisson's ratio {0} is at or beyond the incompressible limit 0.5")]
    IncompressibleLimit(f64),
    #[error("invalid material parameter: {0}")]
    InvalidParameter(String),
    #[error("deformation gradient has non-positive determinant J = {0}")]
    NonPositiveJacobian(f64),
    #[error("strain energy or stress is not finite (stretches {0:?})")]
    NumericRange([f64; 3]),
}

/// Constants of the two-term Ogden model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgdenParams {
    /// Shear-modulus constants μᵢ, Pa.
    pub mu: [f64; 2],
    /// Dimensionless exponents αᵢ.
    pub alpha: [f64; 2],
    /// Compressibility constants Dᵢ, 1/Pa. `d[1] == 0` drops the quartic term.
    pub d: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialModuli {
    pub mu0: f64,
    pub k0: f64,
}

/// `D₁` such that the initial bulk modulus matches isotropic linear
/// elasticity with shear modulus `mu0` and Poisson's ratio `nu`.
pub fn d1_from_poisson(mu0: f64, nu: f64) -> Result<f64, MaterialError> {
    if !(nu < 0.5) {
        return Err(MaterialError::IncompressibleLimit(nu));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(MaterialError::InvalidParameter(format!("Poisson's ratio {nu} outside [0, 0.5)")));
    }
    if !(mu0 > 0.0 && mu0.is_finite()) {
        return Err(MaterialError::InvalidParameter(format!("initial shear modulus {mu0} must be positive")));
    }
    let k0 = 2.0 * mu0 * (1.0 + nu) / (3.0 * (1.0 - 2.0 * nu));
    Ok(2.0 / k0)
}

impl OgdenParams {
    pub fn new(mu: [f64; 2], alpha: [f64; 2], d: [f64; 2]) -> Result<Self, MaterialError> {
        let p = Self { mu, alpha, d };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `D₁` from Poisson's ratio and `D₂ = 0`.
    pub fn with_poisson(mu: [f64; 2], alpha: [f64; 2], nu: f64) -> Result<Self, MaterialError> {
        let d1 = d1_from_poisson(mu[0] + mu[1], nu)?;
        Self::new(mu, alpha, [d1, 0.0])
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        let all = self.mu.iter().chain(&self.alpha).chain(&self.d);
        if !all.into_iter().all(|v| v.is_finite()) {
            return Err(MaterialError::InvalidParameter("non-finite constant".into()));
        }
        if self.mu[0] + self.mu[1] <= 0.0 {
            return Err(MaterialError::InvalidParameter(format!(
                "mu1 + mu2 = {} must be positive",
                self.mu[0] + self.mu[1]
            )));
        }
        if self.alpha.contains(&0.0) {
            return Err(MaterialError::InvalidParameter("alpha_i must be non-zero".into()));
        }
        if self.d[0] <= 0.0 || self.d[1] < 0.0 {
            return Err(MaterialError::InvalidParameter(format!(
                "D1 must be positive and D2 non-negative, got {:?}",
                self.d
            )));
        }
        Ok(())
    }

    pub fn initial_moduli(&self) -> InitialModuli {
        InitialModuli {
            mu0: self.mu[0] + self.mu[1],
            k0: 2.0 / self.d[0],
        }
    }

    /// Dilatational wave speed `sqrt((K₀ + 4μ₀/3) / ρ)`.
    pub fn dilatational_wave_speed(&self, density: f64) -> f64 {
        let m = self.initial_moduli();
        ((m.k0 + 4.0 * m.mu0 / 3.0) / density).sqrt()
    }

    fn volumetric_terms(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.d
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0.0)
            .map(|(i, &d)| (i as i32 + 1, d))
    }
}

/// Kinematics of one material point.
#[derive(Debug, Clone)]
pub struct DeformationState {
    pub f: Mat3,
    pub j: f64,
    /// Deviatoric principal stretches λ̄ₐ.
    pub stretches: [f64; 3],
    /// Principal directions of the left Cauchy–Green tensor (columns).
    pub directions: Mat3,
}

impl DeformationState {
    pub fn new(f: Mat3) -> Result<Self, MaterialError> {
        let j = f.determinant();
        if !(j > 0.0) {
            return Err(MaterialError::NonPositiveJacobian(j));
        }
        let b = f * f.transpose();
        let eig = b.symmetric_eigen();
        let scale = j.powf(-1.0 / 3.0);
        let stretches = [0, 1, 2].map(|a| scale * eig.eigenvalues[a].max(0.0).sqrt());
        Ok(Self {
            f,
            j,
            stretches,
            directions: eig.eigenvectors,
        })
    }
}

fn finite_or(value: f64, state: &DeformationState) -> Result<f64, MaterialError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MaterialError::NumericRange(state.stretches))
    }
}

/// Strain energy per unit reference volume, Pa.
pub fn strain_energy(state: &DeformationState, p: &OgdenParams) -> Result<f64, MaterialError> {
    let mut w = 0.0;
    for i in 0..2 {
        let (mu, alpha) = (p.mu[i], p.alpha[i]);
        let sum: f64 = state.stretches.iter().map(|l| l.powf(alpha)).sum();
        w += 2.0 * mu / (alpha * alpha) * (sum - 3.0);
    }
    for (i, d) in p.volumetric_terms() {
        w += (state.j - 1.0).powi(2 * i) / d;
    }
    finite_or(w, state)
}

/// Principal Cauchy stresses, ordered like [`DeformationState::directions`].
pub fn principal_cauchy_stress(state: &DeformationState, p: &OgdenParams) -> Result<[f64; 3], MaterialError> {
    let mut sigma = [0.0; 3];
    for i in 0..2 {
        let (mu, alpha) = (p.mu[i], p.alpha[i]);
        let powers = state.stretches.map(|l| l.powf(alpha));
        let mean = (powers[0] + powers[1] + powers[2]) / 3.0;
        for a in 0..3 {
            sigma[a] += 2.0 * mu / alpha * (powers[a] - mean) / state.j;
        }
    }
    let pressure: f64 = p
        .volumetric_terms()
        .map(|(i, d)| 2.0 * i as f64 / d * (state.j - 1.0).powi(2 * i - 1))
        .sum();
    for s in &mut sigma {
        *s += pressure;
    }

    // Average repeated stretches so the eigenprojector sum is exactly isotropic
    // on the degenerate subspace.
    let l = state.stretches;
    let close = |a: usize, b: usize| (l[a] - l[b]).abs() <= REPEATED_STRETCH_TOL * l[a].max(l[b]);
    match (close(0, 1), close(1, 2), close(0, 2)) {
        (true, true, _) | (true, _, true) | (_, true, true) => {
            let m = (sigma[0] + sigma[1] + sigma[2]) / 3.0;
            sigma = [m; 3];
        }
        (true, false, false) => {
            let m = 0.5 * (sigma[0] + sigma[1]);
            sigma[0] = m;
            sigma[1] = m;
        }
        (false, true, false) => {
            let m = 0.5 * (sigma[1] + sigma[2]);
            sigma[1] = m;
            sigma[2] = m;
        }
        (false, false, true) => {
            let m = 0.5 * (sigma[0] + sigma[2]);
            sigma[0] = m;
            sigma[2] = m;
        }
        (false, false, false) => {}
    }
    for s in sigma {
        finite_or(s, state)?;
    }
    Ok(sigma)
}

/// Cauchy stress tensor, Pa.
pub fn cauchy_stress(state: &DeformationState, p: &OgdenParams) -> Result<Mat3, MaterialError> {
    let sigma = principal_cauchy_stress(state, p)?;
    let mut out = Mat3::zeros();
    for (s, n) in sigma.iter().zip(state.directions.column_iter()) {
        out += *s * n * n.transpose();
    }
    // symmetrize away round-off from the outer products
    Ok(0.5 * (out + out.transpose()))
}

/// First Piola–Kirchhoff stress `P = J σ F⁻ᵀ`, Pa.
pub fn first_piola(state: &DeformationState, p: &OgdenParams) -> Result<Mat3, MaterialError> {
    let sigma = cauchy_stress(state, p)?;
    let f_inv = state.f.try_inverse().ok_or(MaterialError::NonPositiveJacobian(state.j))?;
    Ok(state.j * sigma * f_inv.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaterialModel {
    #[serde(rename = "ogden2")]
    Ogden2,
    #[serde(rename = "rigid")]
    Rigid,
}

/// Material entry as it appears in mesh and configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialRecord {
    pub name: String,
    pub model: MaterialModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<[f64; 2]>,
    #[serde(default = "default_density")]
    pub density: f64,
}

fn default_density() -> f64 {
    DEFAULT_DENSITY
}

/// A resolved material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Material {
    Ogden { params: OgdenParams, density: f64 },
    /// Contributes mass but no internal force.
    Rigid { density: f64 },
}

impl Material {
    pub fn density(&self) -> f64 {
        match *self {
            Material::Ogden { density, .. } | Material::Rigid { density } => density,
        }
    }

    pub fn ogden(&self) -> Option<&OgdenParams> {
        match self {
            Material::Ogden { params, .. } => Some(params),
            Material::Rigid { .. } => None,
        }
    }
}

impl MaterialRecord {
    pub fn rigid(name: &str, density: f64) -> Self {
        Self {
            name: name.to_string(),
            model: MaterialModel::Rigid,
            mu: None,
            alpha: None,
            nu: None,
            d: None,
            density,
        }
    }

    pub fn ogden(name: &str, mu: [f64; 2], alpha: [f64; 2], nu: f64, density: f64) -> Self {
        Self {
            name: name.to_string(),
            model: MaterialModel::Ogden2,
            mu: Some(mu),
            alpha: Some(alpha),
            nu: Some(nu),
            d: None,
            density,
        }
    }

    pub fn resolve(&self) -> Result<Material, MaterialError> {
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(MaterialError::InvalidParameter(format!(
                "{}: density {} must be positive",
                self.name, self.density
            )));
        }
        match self.model {
            MaterialModel::Rigid => Ok(Material::Rigid { density: self.density }),
            MaterialModel::Ogden2 => {
                let missing = |what: &str| MaterialError::InvalidParameter(format!("{}: missing {what}", self.name));
                let mu = self.mu.ok_or_else(|| missing("mu"))?;
                let alpha = self.alpha.ok_or_else(|| missing("alpha"))?;
                let params = match (self.d, self.nu) {
                    (Some(d), _) => OgdenParams::new(mu, alpha, d)?,
                    (None, Some(nu)) => OgdenParams::with_poisson(mu, alpha, nu)?,
                    (None, None) => return Err(missing("nu or D")),
                };
                Ok(Material::Ogden {
                    params,
                    density: self.density,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;

    fn b1() -> OgdenParams {
        OgdenParams::with_poisson([800.0, 386.7], [-8.0, 16.0], BRAIN_POISSON_RATIO).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn d1_for_b1() {
        let d1 = d1_from_poisson(1186.7, 0.49).unwrap();
        let k0 = 2.0 / d1;
        // 2·1186.7·1.49 / (3·0.02), evaluated by hand
        assert!(rel(k0, 58_939.433_333_333) < 1e-10, "K0 = {k0}");
        assert!(rel(k0, 58_939.77) < 1e-5);
        assert!(rel(d1, 3.3933e-5) < 1e-4, "D1 = {d1}");
    }

    #[test]
    fn d1_at_zero_poisson() {
        let d1 = d1_from_poisson(900.0, 0.0).unwrap();
        assert!(rel(d1, 3.0 / 900.0) < 1e-15);
    }

    #[test]
    fn d1_rejects_incompressible() {
        assert_eq!(d1_from_poisson(1.0, 0.5), Err(MaterialError::IncompressibleLimit(0.5)));
        assert!(d1_from_poisson(1.0, 0.7).is_err());
        assert!(d1_from_poisson(-1.0, 0.3).is_err());
    }

    #[test]
    fn identity_has_zero_energy_and_stress() {
        let s = DeformationState::new(Mat3::identity()).unwrap();
        assert_eq!(strain_energy(&s, &b1()).unwrap(), 0.0);
        assert!(cauchy_stress(&s, &b1()).unwrap().norm() < 1e-12);
    }

    #[test]
    fn dilation_energy_is_volumetric_only() {
        let p = b1();
        let s = DeformationState::new(Mat3::identity() * 1.1).unwrap();
        let expected = (1.331_f64 - 1.0).powi(2) / p.d[0];
        assert!(rel(strain_energy(&s, &p).unwrap(), expected) < 1e-12);
    }

    #[test]
    fn initial_moduli_table_values() {
        assert_eq!(b1().initial_moduli().mu0, 1186.7);
        let b2 = OgdenParams::with_poisson([1210.8, 466.4], [-8.0, 16.0], 0.49).unwrap();
        assert!((b2.initial_moduli().mu0 - 1677.2).abs() < 1e-9);
        let p = OgdenParams::new([1.0, 1.0], [2.0, 4.0], [2.0, 0.0]).unwrap();
        assert_eq!(p.initial_moduli().k0, 1.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(OgdenParams::new([1.0, -1.0], [2.0, 4.0], [1.0, 0.0]).is_err());
        assert!(OgdenParams::new([1.0, 1.0], [0.0, 4.0], [1.0, 0.0]).is_err());
        assert!(OgdenParams::new([1.0, 1.0], [2.0, 4.0], [0.0, 0.0]).is_err());
        assert!(DeformationState::new(-Mat3::identity()).is_err());
    }

    #[test]
    fn extreme_stretch_is_a_range_error() {
        let p = OgdenParams::new([1.0, 1.0], [-8.0, 400.0], [1.0, 0.0]).unwrap();
        let f = Mat3::from_diagonal(&Vec3::new(30.0, 1.0 / 30.0, 1.0));
        let s = DeformationState::new(f).unwrap();
        assert!(matches!(strain_energy(&s, &p), Err(MaterialError::NumericRange(_))));
    }

    #[test]
    fn record_resolves_from_poisson() {
        let rec = MaterialRecord::ogden("brain", [800.0, 386.7], [-8.0, 16.0], 0.49, 1000.0);
        let m = rec.resolve().unwrap();
        assert_eq!(m.ogden().unwrap(), &b1());
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(serde_json::from_str::<MaterialRecord>(&json).unwrap(), rec);
        assert!(matches!(
            MaterialRecord::rigid("skull", 1000.0).resolve(),
            Ok(Material::Rigid { .. })
        ));
    }
}
