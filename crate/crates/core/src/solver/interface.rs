//! Eight-node zero-thickness cohesive element.
//!
//! Bottom face nodes 0–3, top face nodes 4–7 with node `a + 4` paired to
//! node `a`. Separations are evaluated at 2×2 Gauss points on the midplane
//! in a local frame (normal, first tangent, second tangent) that follows the
//! current midplane. Once an integration point has failed completely the
//! frame is frozen: the face pair may then slide by many element lengths, and
//! a frame that keeps rotating with the sheared midplane would turn the
//! compressive contact penalty into a non-conservative follower load.

use crate::cohesive::{self, CohesiveError, CohesiveLaw, CohesiveState, Modes};
use crate::Vec3;

const QUAD_R: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const QUAD_S: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

#[derive(Debug, Clone, Copy)]
struct Point {
    shape: [f64; 4],
    dr: [f64; 4],
    ds: [f64; 4],
}

fn gauss_points() -> [Point; 4] {
    let g = 1.0 / 3f64.sqrt();
    [(-g, -g), (g, -g), (g, g), (-g, g)].map(|(r, s)| Point {
        shape: std::array::from_fn(|a| 0.25 * (1.0 + QUAD_R[a] * r) * (1.0 + QUAD_S[a] * s)),
        dr: std::array::from_fn(|a| 0.25 * QUAD_R[a] * (1.0 + QUAD_S[a] * s)),
        ds: std::array::from_fn(|a| 0.25 * (1.0 + QUAD_R[a] * r) * QUAD_S[a]),
    })
}

/// Orthonormal local frame `[n, e1, e2]`.
pub type Frame = [Vec3; 3];

/// Integration-point history: damage state plus the frame frozen at
/// complete failure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointState {
    pub law: CohesiveState,
    pub frozen_frame: Option<Frame>,
}

/// Orthonormal frame `(n, e1, e2)` of a surface with tangents `g1`, `g2`.
fn frame(g1: Vec3, g2: Vec3) -> Option<(Vec3, Vec3, Vec3)> {
    let n = g1.cross(&g2);
    let area = n.norm();
    let len = g1.norm();
    if !(area > 0.0) || !(len > 0.0) || !(area > 1e-12 * len * g2.norm()) {
        return None;
    }
    let n = n / area;
    let e1 = g1 / len;
    Some((n, e1, n.cross(&e1)))
}

/// Reference data of one cohesive element.
#[derive(Debug, Clone)]
pub struct CohesiveKernel {
    pub nodes: [usize; 8],
    /// Reference midplane area attached to each integration point, m².
    pub areas: [f64; 4],
    points: [Point; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct CohesiveResponse {
    pub forces: [Vec3; 8],
    pub states: [PointState; 4],
    /// Recoverable energy summed over the element, J.
    pub recoverable_energy: f64,
    /// Dissipated energy summed over the element, J.
    pub dissipated_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CohesiveFailure {
    DegenerateMidplane,
    Law(CohesiveError),
}

impl CohesiveKernel {
    /// Returns `None` when the reference midplane has zero area somewhere.
    pub fn new(nodes: [usize; 8], corners: &[Vec3; 8]) -> Option<Self> {
        let points = gauss_points();
        let mid: [Vec3; 4] = std::array::from_fn(|a| 0.5 * (corners[a] + corners[a + 4]));
        let mut areas = [0.0; 4];
        for (g, p) in points.iter().enumerate() {
            let g1: Vec3 = (0..4).map(|a| p.dr[a] * mid[a]).sum();
            let g2: Vec3 = (0..4).map(|a| p.ds[a] * mid[a]).sum();
            frame(g1, g2)?;
            areas[g] = g1.cross(&g2).norm();
        }
        Some(Self { nodes, areas, points })
    }

    pub fn area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Nodal forces and advanced integration-point states.
    ///
    /// `positions` are reference coordinates and `u` displacements of the
    /// eight element nodes. The forces are internal (resisting) forces: the
    /// top face receives `+∫ N T dA`, the bottom face its negative.
    pub fn response(
        &self,
        positions: &[Vec3; 8],
        u: &[Vec3; 8],
        states: &[PointState; 4],
        law: &CohesiveLaw,
    ) -> Result<CohesiveResponse, CohesiveFailure> {
        let mid: [Vec3; 4] = std::array::from_fn(|a| 0.5 * (positions[a] + u[a] + positions[a + 4] + u[a + 4]));
        let jump: [Vec3; 4] = std::array::from_fn(|a| u[a + 4] - u[a]);
        let mut forces = [Vec3::zeros(); 8];
        let mut next = *states;
        let mut recoverable = 0.0;
        let mut dissipated = 0.0;
        for (g, p) in self.points.iter().enumerate() {
            let g1: Vec3 = (0..4).map(|a| p.dr[a] * mid[a]).sum();
            let g2: Vec3 = (0..4).map(|a| p.ds[a] * mid[a]).sum();
            let [n, e1, e2] = match states[g].frozen_frame {
                Some(f) => f,
                None => {
                    let (n, e1, e2) = frame(g1, g2).ok_or(CohesiveFailure::DegenerateMidplane)?;
                    [n, e1, e2]
                }
            };
            let delta: Vec3 = (0..4).map(|a| p.shape[a] * jump[a]).sum();
            let sep = Modes::new(delta.dot(&n), delta.dot(&e1), delta.dot(&e2));
            let (t, state) = cohesive::update(&states[g].law, sep, law).map_err(CohesiveFailure::Law)?;
            next[g] = PointState {
                law: state,
                frozen_frame: states[g]
                    .frozen_frame
                    .or_else(|| (state.damage >= 1.0).then_some([n, e1, e2])),
            };
            let traction = (t.n * n + t.s * e1 + t.t * e2) * self.areas[g];
            for a in 0..4 {
                forces[a + 4] += p.shape[a] * traction;
                forces[a] -= p.shape[a] * traction;
            }
            recoverable += self.areas[g] * cohesive::recoverable_energy(&state, sep, law);
            dissipated += self.areas[g] * cohesive::dissipated_energy(&state);
        }
        Ok(CohesiveResponse {
            forces,
            states: next,
            recoverable_energy: recoverable,
            dissipated_energy: dissipated,
        })
    }
}

/// Internal nodal forces of a single cohesive element and its updated
/// integration-point states.
pub fn cohesive_internal_force(
    positions: &[Vec3; 8],
    displacements: &[Vec3; 8],
    law: &CohesiveLaw,
    states: &[PointState; 4],
) -> Result<CohesiveResponse, super::SolverError> {
    let kernel = CohesiveKernel::new([0, 1, 2, 3, 4, 5, 6, 7], positions)
        .ok_or(super::SolverError::DegenerateMidplane { element: 0 })?;
    kernel
        .response(positions, displacements, states, law)
        .map_err(|f| super::SolverError::from_cohesive(0, f))
}
