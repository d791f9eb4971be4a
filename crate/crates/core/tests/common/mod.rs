#![allow(dead_code)]

use meningefem::cohesive::LawRecord;
use meningefem::mesh::{generate_sample_mesh, CohesivePlane, Layer, Mesh};
use meningefem::solver::SimulationConfig;
use meningefem::{presets, Model};

/// Tissue sample footprint and height, m.
pub const SAMPLE: [f64; 3] = [22.5e-3, 30e-3, 15e-3];
pub const TISSUE_HEIGHT: f64 = 15e-3;

/// Tissue-only shear sample with B1 tissue named `brain`.
pub fn tissue_mesh(size: f64) -> Mesh {
    let mut mesh = generate_sample_mesh(SAMPLE, size, &[Layer::new("brain", TISSUE_HEIGHT)], None).unwrap();
    mesh.materials.insert("brain".into(), presets::tissue_record("B1", "brain").unwrap());
    mesh
}

/// Brain–interface–skull stack: B1 tissue, one rigid skull layer of one
/// element and the cohesive plane at the tissue top, with law `interface`
/// set to the named interface preset.
pub fn stack_mesh(size: f64, interface: &str) -> Mesh {
    let layers = [Layer::new("brain", TISSUE_HEIGHT), Layer::rigid("skull", size)];
    let dims = [SAMPLE[0], SAMPLE[1], TISSUE_HEIGHT + size];
    let mut mesh = generate_sample_mesh(dims, size, &layers, Some(&CohesivePlane::new(TISSUE_HEIGHT, "interface"))).unwrap();
    mesh.materials.insert("brain".into(), presets::tissue_record("B1", "brain").unwrap());
    mesh.materials.insert(
        "skull".into(),
        meningefem::material::MaterialRecord::rigid("skull", meningefem::material::DEFAULT_DENSITY),
    );
    mesh.laws.insert(
        "interface".into(),
        LawRecord {
            name: "interface".into(),
            law: presets::interface(interface).unwrap(),
        },
    );
    mesh
}

/// Tissue sample sheared to strain 0.3 by its top face.
pub fn tissue_config() -> SimulationConfig {
    SimulationConfig {
        total_pull_m: 0.3 * TISSUE_HEIGHT,
        time_compression: 10.0,
        ..SimulationConfig::default()
    }
}

/// Stack driven at the tissue's bottom face with the skull held, pulled to
/// shear strain 0.6.
pub fn stack_config() -> SimulationConfig {
    SimulationConfig {
        total_pull_m: 0.6 * TISSUE_HEIGHT,
        time_compression: 10.0,
        driven_set: "bottom".into(),
        fixed_set: "skull".into(),
        ..SimulationConfig::default()
    }
}

/// One 10 mm B1 hex between glued platens.
pub fn single_element() -> (Model, SimulationConfig) {
    let h = 0.01;
    let mut mesh = generate_sample_mesh([h, h, h], h, &[Layer::new("brain", h)], None).unwrap();
    mesh.materials.insert("brain".into(), presets::tissue_record("B1", "brain").unwrap());
    let config = SimulationConfig {
        total_pull_m: 0.3 * h,
        time_compression: 1.0,
        ..SimulationConfig::default()
    };
    (Model::from_mesh(mesh).unwrap(), config)
}

pub fn model(mesh: Mesh) -> Model {
    Model::from_mesh(mesh).unwrap()
}
