//! Hexahedral meshes with an optional zero-thickness cohesive layer.
//!
//! Node ids are dense indices into [`Mesh::nodes`]. Hexahedra use the usual
//! trilinear ordering: nodes 0–3 form the bottom face counter-clockwise about
//! the local +z axis and nodes 4–7 sit directly above 0–3. Cohesive elements
//! use the same layout with 0–3 on the bottom face and 4–7 on the paired top
//! face.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohesive::LawRecord;
use crate::material::{MaterialModel, MaterialRecord};
use crate::Vec3;

/// Congruence tolerance for the two faces of a cohesive element, in meters.
pub const COHESIVE_CONGRUENCE_TOL: f64 = 1e-9;
/// Tolerance used when checking that lengths are integer multiples of the
/// element size, in meters.
pub const COMMENSURATE_TOL: f64 = 1e-9;
/// Mean scaled Jacobian below which a quality report warns.
pub const MEAN_QUALITY_WARN: f64 = 0.95;
/// Elements with a scaled Jacobian below this value are flagged.
pub const MIN_QUALITY_WARN: f64 = 0.28;

/// Name of the node set holding every node of a rigid element.
pub const SKULL_SET: &str = "skull";

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("element size must be positive and finite, got {0}")]
    InvalidElementSize(f64),
    #[error("{axis} length {length} m is not an integer multiple of element size {size} m")]
    DimensionMismatch {
        axis: String,
        length: f64,
        size: f64,
    },
    #[error("cohesive plane z = {0} m does not coincide with an interior layer boundary")]
    CohesivePlaneOffBoundary(f64),
    #[error("at least one layer is required")]
    NoLayers,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported units {0:?}, expected \"m\"")]
    Units(String),
    #[error("{kind} {element} references node {node}, but the mesh has {count} nodes")]
    NodeOutOfRange {
        kind: &'static str,
        element: usize,
        node: usize,
        count: usize,
    },
    #[error("{kind} {element} repeats node {node}")]
    RepeatedNode {
        kind: &'static str,
        element: usize,
        node: usize,
    },
    #[error("node set {set:?} references node {node}, but the mesh has {count} nodes")]
    SetNodeOutOfRange {
        set: String,
        node: usize,
        count: usize,
    },
    #[error("hex {0} is inverted or degenerate in the reference configuration (scaled Jacobian {1})")]
    InvertedElement(usize, f64),
    #[error("hex {0} has coincident corner nodes")]
    DegenerateElement(usize),
    #[error("hex {0} duplicates the node list of hex {1}")]
    DuplicateElement(usize, usize),
    #[error("cohesive element {0}: bottom and top faces are not congruent")]
    IncongruentCohesive(usize),
    #[error("cohesive element {0}: degenerate midplane")]
    DegenerateMidplane(usize),
    #[error("node {0} has a non-finite coordinate")]
    NonFiniteNode(usize),
    #[error("mesh has no non-rigid hexahedra")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexElement {
    #[serde(rename = "conn")]
    pub nodes: [usize; 8],
    pub material: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohesiveElement {
    #[serde(rename = "conn")]
    pub nodes: [usize; 8],
    pub law: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub nodes: Vec<Vec3>,
    pub hexes: Vec<HexElement>,
    pub cohesives: Vec<CohesiveElement>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
    /// Material records carried by the mesh file, keyed by name.
    pub materials: BTreeMap<String, MaterialRecord>,
    /// Cohesive law records carried by the mesh file, keyed by name.
    pub laws: BTreeMap<String, LawRecord>,
}

/// One slab of the generated sample, stacked along +z from z = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub material: String,
    pub thickness: f64,
    pub rigid: bool,
}

impl Layer {
    pub fn new(material: impl Into<String>, thickness: f64) -> Self {
        Self {
            material: material.into(),
            thickness,
            rigid: false,
        }
    }

    pub fn rigid(material: impl Into<String>, thickness: f64) -> Self {
        Self {
            rigid: true,
            ..Self::new(material, thickness)
        }
    }
}

/// Location and law of the zero-thickness cohesive layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CohesivePlane {
    pub z: f64,
    pub law: String,
}

impl CohesivePlane {
    pub fn new(z: f64, law: impl Into<String>) -> Self {
        Self { z, law: law.into() }
    }
}

fn cell_count(axis: &str, length: f64, size: f64) -> Result<usize, MeshError> {
    let n = (length / size).round();
    if !length.is_finite() || n < 1.0 || (n * size - length).abs() > COMMENSURATE_TOL {
        return Err(MeshError::DimensionMismatch {
            axis: axis.to_string(),
            length,
            size,
        });
    }
    Ok(n as usize)
}

/// Builds a structured cuboid mesh of `layers` stacked along z.
///
/// When `cohesive` is given, the nodes on that plane are duplicated: elements
/// below use the lower copy, elements above the upper copy, and one
/// zero-thickness cohesive element joins each pair of faces. Node sets
/// `bottom`, `top` and `skull` (all nodes of rigid layers) are created.
pub fn generate_sample_mesh(
    dimensions: [f64; 3],
    element_size: f64,
    layers: &[Layer],
    cohesive: Option<&CohesivePlane>,
) -> Result<Mesh, MeshError> {
    if !(element_size > 0.0 && element_size.is_finite()) {
        return Err(MeshError::InvalidElementSize(element_size));
    }
    if layers.is_empty() {
        return Err(MeshError::NoLayers);
    }
    let nx = cell_count("x", dimensions[0], element_size)?;
    let ny = cell_count("y", dimensions[1], element_size)?;
    let nz = cell_count("z", dimensions[2], element_size)?;

    // z-cell range of every layer
    let mut layer_of_cell = Vec::with_capacity(nz);
    let mut boundaries = vec![0usize];
    for (i, layer) in layers.iter().enumerate() {
        let n = cell_count(&format!("layer {} ({})", i, layer.material), layer.thickness, element_size)?;
        layer_of_cell.extend(std::iter::repeat_n(i, n));
        boundaries.push(layer_of_cell.len());
    }
    if layer_of_cell.len() != nz {
        return Err(MeshError::DimensionMismatch {
            axis: "z (sum of layer thicknesses)".to_string(),
            length: dimensions[2],
            size: element_size,
        });
    }

    let split_level = match cohesive {
        None => None,
        Some(plane) => {
            let k = (plane.z / element_size).round();
            let interior = &boundaries[1..boundaries.len() - 1];
            if (k * element_size - plane.z).abs() > COMMENSURATE_TOL
                || k < 0.0
                || !interior.contains(&(k as usize))
            {
                return Err(MeshError::CohesivePlaneOffBoundary(plane.z));
            }
            Some(k as usize)
        }
    };

    let per_level = (nx + 1) * (ny + 1);
    // level index -> first node id of the (lower) plane at that level
    let mut level_start = Vec::with_capacity(nz + 1);
    let mut nodes = Vec::new();
    for k in 0..=nz {
        let copies = if Some(k) == split_level { 2 } else { 1 };
        level_start.push(nodes.len());
        for _ in 0..copies {
            for j in 0..=ny {
                for i in 0..=nx {
                    nodes.push(Vec3::new(
                        i as f64 * element_size,
                        j as f64 * element_size,
                        k as f64 * element_size,
                    ));
                }
            }
        }
    }
    let lower = |i: usize, j: usize, k: usize| level_start[k] + j * (nx + 1) + i;
    let upper = |i: usize, j: usize, k: usize| {
        let extra = if Some(k) == split_level { per_level } else { 0 };
        level_start[k] + extra + j * (nx + 1) + i
    };

    let mut hexes = Vec::with_capacity(nx * ny * nz);
    let mut skull = BTreeSet::new();
    for (k, &layer_idx) in layer_of_cell.iter().enumerate() {
        let layer = &layers[layer_idx];
        for j in 0..ny {
            for i in 0..nx {
                // bottom face of a cell at level k uses the upper copy of a split plane
                let b = |ii, jj| upper(ii, jj, k);
                let t = |ii, jj| lower(ii, jj, k + 1);
                let conn = [
                    b(i, j),
                    b(i + 1, j),
                    b(i + 1, j + 1),
                    b(i, j + 1),
                    t(i, j),
                    t(i + 1, j),
                    t(i + 1, j + 1),
                    t(i, j + 1),
                ];
                if layer.rigid {
                    skull.extend(conn);
                }
                hexes.push(HexElement {
                    nodes: conn,
                    material: layer.material.clone(),
                });
            }
        }
    }

    let mut cohesives = Vec::new();
    if let (Some(k), Some(plane)) = (split_level, cohesive) {
        for j in 0..ny {
            for i in 0..nx {
                cohesives.push(CohesiveElement {
                    nodes: [
                        lower(i, j, k),
                        lower(i + 1, j, k),
                        lower(i + 1, j + 1, k),
                        lower(i, j + 1, k),
                        upper(i, j, k),
                        upper(i + 1, j, k),
                        upper(i + 1, j + 1, k),
                        upper(i, j + 1, k),
                    ],
                    law: plane.law.clone(),
                });
            }
        }
    }

    let mut node_sets = BTreeMap::new();
    node_sets.insert(
        "bottom".to_string(),
        (0..=ny)
            .flat_map(|j| (0..=nx).map(move |i| (i, j)))
            .map(|(i, j)| lower(i, j, 0))
            .collect(),
    );
    node_sets.insert(
        "top".to_string(),
        (0..=ny)
            .flat_map(|j| (0..=nx).map(move |i| (i, j)))
            .map(|(i, j)| upper(i, j, nz))
            .collect(),
    );
    node_sets.insert(SKULL_SET.to_string(), skull.into_iter().collect());

    let mut materials = BTreeMap::new();
    for layer in layers.iter().filter(|l| l.rigid) {
        materials.insert(layer.material.clone(), MaterialRecord::rigid(&layer.material, 1000.0));
    }

    Ok(Mesh {
        nodes,
        hexes,
        cohesives,
        node_sets,
        materials,
        laws: BTreeMap::new(),
    })
}

/// Corner neighbours in right-handed order for each of the 8 hex corners.
const CORNER_EDGES: [[usize; 3]; 8] = [
    [1, 3, 4],
    [2, 0, 5],
    [3, 1, 6],
    [0, 2, 7],
    [7, 5, 0],
    [4, 6, 1],
    [5, 7, 2],
    [6, 4, 3],
];

/// Corner-node scaled Jacobian of a hexahedron: the minimum over the 8 corners
/// of `det[e1 e2 e3] / (|e1| |e2| |e3|)`, where `e` are the three edges leaving
/// the corner. Returns `None` if two corner nodes coincide.
pub fn scaled_jacobian(corners: &[Vec3; 8]) -> Option<f64> {
    let mut min = f64::INFINITY;
    for (a, edges) in CORNER_EDGES.iter().enumerate() {
        let e = edges.map(|b| corners[b] - corners[a]);
        let lengths = e[0].norm() * e[1].norm() * e[2].norm();
        if lengths == 0.0 {
            return None;
        }
        min = min.min(e[0].cross(&e[1]).dot(&e[2]) / lengths);
    }
    Some(min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub elements: usize,
    pub min: f64,
    pub mean: f64,
    /// Ten equal bins over [-1, 1].
    pub histogram: Vec<HistogramBin>,
    /// Elements below [`MIN_QUALITY_WARN`].
    pub flagged: Vec<usize>,
    pub mean_below_warn: bool,
}

impl Mesh {
    pub fn hex_corners(&self, hex: &HexElement) -> [Vec3; 8] {
        hex.nodes.map(|n| self.nodes[n])
    }

    /// Whether a hex belongs to a rigid material. The material table wins;
    /// without a record, a hex whose nodes all lie in the skull set is rigid.
    pub fn is_rigid(&self, hex: &HexElement) -> bool {
        match self.materials.get(&hex.material) {
            Some(rec) => rec.model == MaterialModel::Rigid,
            None => self
                .node_sets
                .get(SKULL_SET)
                .is_some_and(|set| hex.nodes.iter().all(|n| set.binary_search(n).is_ok())),
        }
    }

    pub fn node_set(&self, name: &str) -> Option<&[usize]> {
        self.node_sets.get(name).map(Vec::as_slice)
    }

    /// Axis-aligned bounding box `(min, max)` of all nodes.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Checks every structural invariant of the mesh.
    pub fn validate(&self) -> Result<(), MeshError> {
        let count = self.nodes.len();
        for (i, p) in self.nodes.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFiniteNode(i));
            }
        }
        let check_conn = |kind: &'static str, element: usize, conn: &[usize; 8]| {
            for (a, &n) in conn.iter().enumerate() {
                if n >= count {
                    return Err(MeshError::NodeOutOfRange {
                        kind,
                        element,
                        node: n,
                        count,
                    });
                }
                if conn[..a].contains(&n) {
                    return Err(MeshError::RepeatedNode {
                        kind,
                        element,
                        node: n,
                    });
                }
            }
            Ok(())
        };
        let mut seen: BTreeMap<[usize; 8], usize> = BTreeMap::new();
        for (e, hex) in self.hexes.iter().enumerate() {
            check_conn("hex", e, &hex.nodes)?;
            let sj = scaled_jacobian(&self.hex_corners(hex)).ok_or(MeshError::DegenerateElement(e))?;
            if sj <= 0.0 {
                return Err(MeshError::InvertedElement(e, sj));
            }
            let mut key = hex.nodes;
            key.sort_unstable();
            if let Some(&other) = seen.get(&key) {
                return Err(MeshError::DuplicateElement(e, other));
            }
            seen.insert(key, e);
        }
        for (e, coh) in self.cohesives.iter().enumerate() {
            check_conn("cohesive element", e, &coh.nodes)?;
            self.check_cohesive_congruence(e)?;
        }
        for (name, set) in &self.node_sets {
            if let Some(&n) = set.iter().find(|&&n| n >= count) {
                return Err(MeshError::SetNodeOutOfRange {
                    set: name.clone(),
                    node: n,
                    count,
                });
            }
        }
        Ok(())
    }

    fn check_cohesive_congruence(&self, e: usize) -> Result<(), MeshError> {
        let conn = &self.cohesives[e].nodes;
        let p = |a: usize| self.nodes[conn[a]];
        let mid = |a: usize| 0.5 * (p(a) + p(a + 4));
        let normal = (mid(2) - mid(0)).cross(&(mid(3) - mid(1)));
        let norm = normal.norm();
        if norm == 0.0 {
            return Err(MeshError::DegenerateMidplane(e));
        }
        let n = normal / norm;
        let offset0 = (p(4) - p(0)).dot(&n);
        for a in 0..4 {
            let d = p(a + 4) - p(a);
            let along = d.dot(&n);
            let tangential = (d - along * n).norm();
            if tangential > COHESIVE_CONGRUENCE_TOL || (along - offset0).abs() > COHESIVE_CONGRUENCE_TOL {
                return Err(MeshError::IncongruentCohesive(e));
            }
        }
        Ok(())
    }

    /// Scaled-Jacobian statistics over all non-rigid hexes.
    pub fn quality_report(&self) -> Result<QualityReport, MeshError> {
        let mut values = Vec::new();
        let mut flagged = Vec::new();
        for (e, hex) in self.hexes.iter().enumerate().filter(|(_, h)| !self.is_rigid(h)) {
            let sj = scaled_jacobian(&self.hex_corners(hex)).ok_or(MeshError::DegenerateElement(e))?;
            if sj < MIN_QUALITY_WARN {
                flagged.push(e);
            }
            values.push(sj);
        }
        if values.is_empty() {
            return Err(MeshError::Empty);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut histogram: Vec<HistogramBin> = (0..10)
            .map(|b| HistogramBin {
                lower: -1.0 + 0.2 * b as f64,
                upper: -1.0 + 0.2 * (b + 1) as f64,
                count: 0,
            })
            .collect();
        for v in &values {
            let b = (((v + 1.0) / 0.2).floor() as isize).clamp(0, 9) as usize;
            histogram[b].count += 1;
        }
        Ok(QualityReport {
            elements: values.len(),
            min,
            mean,
            histogram,
            flagged,
            mean_below_warn: mean < MEAN_QUALITY_WARN,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshDocument {
    #[serde(default = "default_units")]
    units: String,
    nodes: Vec<[f64; 3]>,
    #[serde(default)]
    hexes: Vec<HexElement>,
    #[serde(default)]
    cohesives: Vec<CohesiveElement>,
    #[serde(default)]
    node_sets: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    materials: Vec<MaterialRecord>,
    #[serde(default)]
    laws: Vec<LawRecord>,
}

fn default_units() -> String {
    "m".to_string()
}

/// Parses and validates a mesh document.
pub fn load_mesh(source: &str) -> Result<Mesh, MeshError> {
    let doc: MeshDocument = serde_json::from_str(source).map_err(|e| MeshError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.units != "m" {
        return Err(MeshError::Units(doc.units));
    }
    let mut node_sets = doc.node_sets;
    for set in node_sets.values_mut() {
        set.sort_unstable();
        set.dedup();
    }
    let mesh = Mesh {
        nodes: doc.nodes.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
        hexes: doc.hexes,
        cohesives: doc.cohesives,
        node_sets,
        materials: doc.materials.into_iter().map(|m| (m.name.clone(), m)).collect(),
        laws: doc.laws.into_iter().map(|l| (l.name.clone(), l)).collect(),
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Serializes a mesh. Coordinates are written with 17 significant digits so
/// that a save/load round trip is bit-exact.
pub fn save_mesh(mesh: &Mesh) -> String {
    let mut out = String::from("{\n  \"units\": \"m\",\n  \"nodes\": [");
    for (i, p) in mesh.nodes.iter().enumerate() {
        let sep = if i == 0 { "\n" } else { ",\n" };
        let _ = write!(out, "{sep}    [{:.16e}, {:.16e}, {:.16e}]", p.x, p.y, p.z);
    }
    out.push_str("\n  ],\n  \"hexes\": [");
    for (i, h) in mesh.hexes.iter().enumerate() {
        let sep = if i == 0 { "\n" } else { ",\n" };
        let _ = write!(out, "{sep}    {}", json(h));
    }
    out.push_str("\n  ],\n  \"cohesives\": [");
    for (i, c) in mesh.cohesives.iter().enumerate() {
        let sep = if i == 0 { "\n" } else { ",\n" };
        let _ = write!(out, "{sep}    {}", json(c));
    }
    out.push_str("\n  ],\n  \"node_sets\": ");
    out.push_str(&json(&mesh.node_sets));
    out.push_str(",\n  \"materials\": ");
    out.push_str(&json(&mesh.materials.values().collect::<Vec<_>>()));
    out.push_str(",\n  \"laws\": ");
    out.push_str(&json(&mesh.laws.values().collect::<Vec<_>>()));
    out.push_str("\n}\n");
    out
}

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("mesh records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> Mesh {
        generate_sample_mesh([1.0, 1.0, 1.0], 1.0, &[Layer::new("brain", 1.0)], None).unwrap()
    }

    #[test]
    fn unit_cube_counts() {
        let m = unit_cube();
        assert_eq!(m.nodes.len(), 8);
        assert_eq!(m.hexes.len(), 1);
        assert!(m.cohesives.is_empty());
        assert_eq!(m.node_set("bottom").unwrap(), &[0, 1, 2, 3]);
        assert_eq!(m.node_set("top").unwrap(), &[4, 5, 6, 7]);
        assert!(m.node_set(SKULL_SET).unwrap().is_empty());
    }

    #[test]
    fn two_hexes_share_a_face() {
        let m = generate_sample_mesh([2.0, 1.0, 1.0], 1.0, &[Layer::new("brain", 1.0)], None).unwrap();
        assert_eq!(m.hexes.len(), 2);
        assert_eq!(m.nodes.len(), 12);
        let a: BTreeSet<_> = m.hexes[0].nodes.iter().collect();
        let b: BTreeSet<_> = m.hexes[1].nodes.iter().collect();
        assert_eq!(a.intersection(&b).count(), 4);
    }

    #[test]
    fn paper_sample_counts() {
        let layers = [Layer::new("brain", 15e-3), Layer::rigid("skull", 5e-3)];
        let m = generate_sample_mesh(
            [22e-3, 30e-3, 20e-3],
            0.5e-3,
            &layers,
            Some(&CohesivePlane::new(15e-3, "interface")),
        )
        .unwrap();
        assert_eq!(m.hexes.len(), 44 * 60 * 40);
        assert_eq!(m.cohesives.len(), 44 * 60);
        assert_eq!(m.nodes.len(), 45 * 61 * 42);
        // skull set: every node of the 10 skull levels plus its duplicated base plane
        assert_eq!(m.node_set(SKULL_SET).unwrap().len(), 45 * 61 * 11);
        m.validate().unwrap();
    }

    #[test]
    fn cohesive_faces_sit_on_the_plane() {
        let layers = [Layer::new("brain", 2.0), Layer::rigid("skull", 1.0)];
        let m = generate_sample_mesh([1.0, 1.0, 3.0], 1.0, &layers, Some(&CohesivePlane::new(2.0, "i"))).unwrap();
        assert_eq!(m.cohesives.len(), 1);
        let c = &m.cohesives[0];
        for a in 0..4 {
            assert_ne!(c.nodes[a], c.nodes[a + 4]);
            assert_eq!(m.nodes[c.nodes[a]], m.nodes[c.nodes[a + 4]]);
            assert_eq!(m.nodes[c.nodes[a]].z, 2.0);
        }
        // brain hex below uses the lower copy, skull hex above the upper copy
        let brain_top = &m.hexes[1].nodes[4..];
        let skull_bottom = &m.hexes[2].nodes[..4];
        assert_eq!(brain_top, &c.nodes[..4]);
        assert_eq!(skull_bottom, &c.nodes[4..]);
        assert!(m.is_rigid(&m.hexes[2]));
        assert!(!m.is_rigid(&m.hexes[0]));
    }

    #[test]
    fn rejects_non_commensurate_dimension() {
        let err = generate_sample_mesh([1.0, 1.25, 1.0], 0.5, &[Layer::new("b", 1.0)], None).unwrap_err();
        assert!(matches!(err, MeshError::DimensionMismatch { ref axis, .. } if axis == "y"));
        let err = generate_sample_mesh([1.0, 1.0, 1.0], 0.5, &[Layer::new("b", 0.75), Layer::new("c", 0.25)], None)
            .unwrap_err();
        assert!(matches!(err, MeshError::DimensionMismatch { .. }));
    }

    #[test]
    fn rejects_cohesive_plane_off_boundary() {
        let layers = [Layer::new("brain", 2.0), Layer::rigid("skull", 1.0)];
        for z in [1.0, 0.0, 3.0, 2.5] {
            let err = generate_sample_mesh([1.0, 1.0, 3.0], 1.0, &layers, Some(&CohesivePlane::new(z, "i")));
            assert_eq!(err.unwrap_err(), MeshError::CohesivePlaneOffBoundary(z));
        }
    }

    #[test]
    fn scaled_jacobian_unit_cube_and_inverted() {
        let m = unit_cube();
        let corners = m.hex_corners(&m.hexes[0]);
        assert_eq!(scaled_jacobian(&corners), Some(1.0));
        let mut flipped = corners;
        flipped.swap(0, 4);
        flipped.swap(1, 5);
        flipped.swap(2, 6);
        flipped.swap(3, 7);
        assert!(scaled_jacobian(&flipped).unwrap() < 0.0);
        let mut degenerate = corners;
        degenerate[1] = degenerate[0];
        assert_eq!(scaled_jacobian(&degenerate), None);
    }

    #[test]
    fn load_reports_bad_node_reference() {
        let doc = r#"{"units":"m","nodes":[[0,0,0],[1,0,0],[1,1,0],[0,1,0],[0,0,1],[1,0,1],[1,1,1],[0,1,1],[2,2,2]],
            "hexes":[{"conn":[0,1,2,3,4,5,6,99],"material":"brain"}]}"#;
        let err = load_mesh(doc).unwrap_err();
        assert_eq!(
            err,
            MeshError::NodeOutOfRange {
                kind: "hex",
                element: 0,
                node: 99,
                count: 9
            }
        );
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn load_reports_parse_location() {
        let err = load_mesh("{\n \"nodes\": [[0,0,]]\n}").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn unit_cube_round_trip() {
        let m = unit_cube();
        let loaded = load_mesh(&save_mesh(&m)).unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn quality_of_cuboid_is_perfect() {
        let layers = [Layer::new("brain", 2.0), Layer::rigid("skull", 1.0)];
        let m = generate_sample_mesh([2.0, 3.0, 3.0], 1.0, &layers, Some(&CohesivePlane::new(2.0, "i"))).unwrap();
        let r = m.quality_report().unwrap();
        assert_eq!(r.elements, 12);
        assert_eq!(r.min, 1.0);
        assert_eq!(r.mean, 1.0);
        assert!(r.flagged.is_empty());
        assert!(!r.mean_below_warn);
        assert_eq!(r.histogram[9].count, 12);
    }

    #[test]
    fn quality_of_all_rigid_mesh_is_an_error() {
        let m = generate_sample_mesh([1.0, 1.0, 1.0], 1.0, &[Layer::rigid("skull", 1.0)], None).unwrap();
        assert_eq!(m.quality_report().unwrap_err(), MeshError::Empty);
    }
}
