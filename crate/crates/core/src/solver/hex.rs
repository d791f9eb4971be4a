//! One-point hexahedron with stiffness-based hourglass control.
//!
//! The element is total Lagrangian: the deformation gradient at the centroid
//! is `F = I + Σₐ uₐ ⊗ bₐ` with `bₐ` the reference mean gradients, so the
//! centroid forces `V₀ P bₐ` are the exact gradient of `V₀ W(F)`. Hourglass
//! resistance acts on the four mode vectors `γ`, which are orthogonal to all
//! linear displacement fields, with energy `k/2 Σ |qₘ|²`.

use crate::material::{first_piola, strain_energy, DeformationState, MaterialError, OgdenParams};
use crate::{Mat3, Vec3};

pub(crate) const XI: [f64; 8] = [-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
pub(crate) const ETA: [f64; 8] = [-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0];
pub(crate) const ZETA: [f64; 8] = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Reference-configuration data of one deformable hex.
#[derive(Debug, Clone)]
pub struct HexKernel {
    pub nodes: [usize; 8],
    /// Mean shape-function gradients over the reference volume.
    pub gradients: [Vec3; 8],
    pub volume: f64,
    pub min_edge: f64,
    /// Normalised hourglass vectors, one row per mode.
    pub hourglass: [[f64; 8]; 4],
    pub hourglass_stiffness: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct HexResponse {
    /// Internal (resisting) nodal forces, N.
    pub forces: [Vec3; 8],
    pub elastic_energy: f64,
    pub hourglass_energy: f64,
    pub jacobian: f64,
}

/// Reference volume and mean gradients by 2×2×2 Gauss quadrature, which is
/// exact for trilinear geometry.
pub fn mean_gradients(corners: &[Vec3; 8]) -> Option<(f64, [Vec3; 8])> {
    let g = 1.0 / 3f64.sqrt();
    let mut volume = 0.0;
    let mut grads = [Vec3::zeros(); 8];
    for &(xi, eta, zeta) in &[
        (-g, -g, -g),
        (g, -g, -g),
        (g, g, -g),
        (-g, g, -g),
        (-g, -g, g),
        (g, -g, g),
        (g, g, g),
        (-g, g, g),
    ] {
        let dn: [Vec3; 8] = std::array::from_fn(|a| {
            0.125
                * Vec3::new(
                    XI[a] * (1.0 + ETA[a] * eta) * (1.0 + ZETA[a] * zeta),
                    (1.0 + XI[a] * xi) * ETA[a] * (1.0 + ZETA[a] * zeta),
                    (1.0 + XI[a] * xi) * (1.0 + ETA[a] * eta) * ZETA[a],
                )
        });
        let mut jac = Mat3::zeros();
        for a in 0..8 {
            jac += corners[a] * dn[a].transpose();
        }
        let det = jac.determinant();
        let inv_t = jac.try_inverse()?.transpose();
        volume += det;
        for a in 0..8 {
            grads[a] += det * (inv_t * dn[a]);
        }
    }
    if !(volume > 0.0) {
        return None;
    }
    for b in &mut grads {
        *b /= volume;
    }
    Some((volume, grads))
}

pub fn min_edge_length(corners: &[Vec3; 8]) -> f64 {
    EDGES
        .iter()
        .map(|&(a, b)| (corners[a] - corners[b]).norm())
        .fold(f64::INFINITY, f64::min)
}

impl HexKernel {
    /// Returns `None` for an element with non-positive reference volume.
    pub fn new(nodes: [usize; 8], corners: &[Vec3; 8], mu0: f64, hourglass_coefficient: f64) -> Option<Self> {
        let (volume, gradients) = mean_gradients(corners)?;
        let base = [
            std::array::from_fn::<f64, 8, _>(|a| ETA[a] * ZETA[a]),
            std::array::from_fn(|a| ZETA[a] * XI[a]),
            std::array::from_fn(|a| XI[a] * ETA[a]),
            std::array::from_fn(|a| XI[a] * ETA[a] * ZETA[a]),
        ];
        let norm = 1.0 / 8f64.sqrt();
        let hourglass = base.map(|h| {
            let hx: Vec3 = (0..8).map(|b| h[b] * corners[b]).sum();
            std::array::from_fn(|a| norm * (h[a] - hx.dot(&gradients[a])))
        });
        let min_edge = min_edge_length(corners);
        Some(Self {
            nodes,
            gradients,
            volume,
            min_edge,
            hourglass,
            hourglass_stiffness: hourglass_coefficient * mu0 * volume / (min_edge * min_edge),
        })
    }

    pub fn deformation_gradient(&self, u: &[Vec3; 8]) -> Mat3 {
        let mut f = Mat3::identity();
        for (ua, ga) in u.iter().zip(&self.gradients) {
            f += ua * ga.transpose();
        }
        f
    }

    fn hourglass_modes(&self, u: &[Vec3; 8]) -> [Vec3; 4] {
        self.hourglass.map(|g| (0..8).map(|a| g[a] * u[a]).sum())
    }

    /// Internal forces; energies are only evaluated when `with_energy`.
    pub fn response(
        &self,
        u: &[Vec3; 8],
        params: &OgdenParams,
        with_energy: bool,
    ) -> Result<HexResponse, MaterialError> {
        let state = DeformationState::new(self.deformation_gradient(u))?;
        let piola = first_piola(&state, params)?;
        let q = self.hourglass_modes(u);
        let k = self.hourglass_stiffness;
        let forces = std::array::from_fn(|a| {
            let hg: Vec3 = (0..4).map(|m| self.hourglass[m][a] * q[m]).sum();
            self.volume * (piola * self.gradients[a]) + k * hg
        });
        let (elastic_energy, hourglass_energy) = if with_energy {
            (
                self.volume * strain_energy(&state, params)?,
                0.5 * k * q.iter().map(|v| v.norm_squared()).sum::<f64>(),
            )
        } else {
            (0.0, 0.0)
        };
        Ok(HexResponse {
            forces,
            elastic_energy,
            hourglass_energy,
            jacobian: state.j,
        })
    }

    /// Total stored energy `V₀ W(F) + k/2 Σ|q|²`.
    pub fn energy(&self, u: &[Vec3; 8], params: &OgdenParams) -> Result<f64, MaterialError> {
        let state = DeformationState::new(self.deformation_gradient(u))?;
        let q = self.hourglass_modes(u);
        Ok(self.volume * strain_energy(&state, params)?
            + 0.5 * self.hourglass_stiffness * q.iter().map(|v| v.norm_squared()).sum::<f64>())
    }
}

/// Internal nodal forces of a single hex given reference corner positions and
/// nodal displacements.
pub fn hex_internal_force(
    corners: &[Vec3; 8],
    displacements: &[Vec3; 8],
    params: &OgdenParams,
    hourglass_coefficient: f64,
) -> Result<HexResponse, super::SolverError> {
    let kernel = HexKernel::new([0, 1, 2, 3, 4, 5, 6, 7], corners, params.initial_moduli().mu0, hourglass_coefficient)
        .ok_or(super::SolverError::InvertedReference { element: 0 })?;
    let centroid_j = kernel.deformation_gradient(displacements).determinant();
    if !(centroid_j > 0.0) {
        return Err(super::SolverError::ElementInversion {
            element: 0,
            jacobian: centroid_j,
            time: 0.0,
        });
    }
    kernel
        .response(displacements, params, true)
        .map_err(|source| super::SolverError::Material { element: 0, source })
}
