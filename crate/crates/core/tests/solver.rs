mod common;

use meningefem::mesh::{generate_sample_mesh, Layer};
use meningefem::solver::{energy_report, hex_internal_force, run, HexKernel, Simulation, SimulationConfig, TransverseMode};
use meningefem::{presets, ForceDisplacementCurve, Model, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COARSE: f64 = 7.5e-3;

fn coarse_tissue() -> Model {
    common::model(common::tissue_mesh(COARSE))
}

fn work(curve: &ForceDisplacementCurve) -> f64 {
    curve
        .samples
        .windows(2)
        .map(|w| 0.5 * (w[0].force + w[1].force) * (w[1].displacement - w[0].displacement))
        .sum()
}

#[test]
fn free_floating_body_conserves_momentum() {
    let model = coarse_tissue();
    let config = SimulationConfig {
        total_pull_m: 0.0,
        driven_set: String::new(),
        fixed_set: String::new(),
        ..SimulationConfig::default()
    };
    let mut sim = Simulation::new(&model, &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<Vec3> = (0..model.mesh.nodes.len())
        .map(|_| Vec3::new(0.01, -0.02, 0.005) + Vec3::from_fn(|_, _| rng.random_range(-1e-3..1e-3)))
        .collect();
    sim.set_velocities(v);
    let momentum = |sim: &Simulation| -> Vec3 { sim.masses().iter().zip(sim.velocities()).map(|(m, v)| *m * v).sum() };
    let p0 = momentum(&sim);
    for _ in 0..300 {
        let before = momentum(&sim);
        sim.step(false).unwrap();
        assert!((momentum(&sim) - before).norm() <= 1e-10 * before.norm());
    }
    assert!((momentum(&sim) - p0).norm() <= 1e-10 * p0.norm() * 300.0);
    assert!(sim.displacements().iter().all(|u| u.norm() > 0.0));
}

#[test]
fn affine_field_on_distorted_patch_leaves_interior_nodes_in_equilibrium() {
    let h = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let mut mesh = generate_sample_mesh([3.0 * h; 3], h, &[Layer::new("brain", 3.0 * h)], None).unwrap();
        let interior = |x: &Vec3| (0..3).all(|i| x[i] > 1e-9 && x[i] < 3.0 * h - 1e-9);
        for x in mesh.nodes.iter_mut().filter(|x| interior(x)) {
            *x += Vec3::from_fn(|_, _| rng.random_range(-0.25..0.25) * h);
        }
        let a = meningefem::Mat3::from_fn(|_, _| rng.random_range(-0.08..0.08));
        let mut forces = vec![Vec3::zeros(); mesh.nodes.len()];
        for hex in &mesh.hexes {
            let corners = mesh.hex_corners(hex);
            let r = hex_internal_force(&corners, &corners.map(|x| a * x), &presets::tissue("B2").unwrap(), 0.05).unwrap();
            assert!(r.hourglass_energy.abs() <= 1e-20);
            for (k, &n) in hex.nodes.iter().enumerate() {
                forces[n] += r.forces[k];
            }
        }
        let peak = forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
        for (x, f) in mesh.nodes.iter().zip(&forces) {
            if interior(x) {
                assert!(f.norm() < 1e-8 * peak, "{} vs {peak}", f.norm());
            }
        }
    }
}

#[test]
fn hex_forces_are_the_energy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let unit = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    let params = presets::b1();
    for _ in 0..10 {
        let corners = unit.map(|x| 0.01 * (Vec3::from(x) + Vec3::from_fn(|_, _| rng.random_range(-0.2..0.2))));
        let kernel = HexKernel::new([0, 1, 2, 3, 4, 5, 6, 7], &corners, params.initial_moduli().mu0, 0.05).unwrap();
        let u: [Vec3; 8] = std::array::from_fn(|_| Vec3::from_fn(|_, _| rng.random_range(-1e-3..1e-3)));
        let forces = kernel.response(&u, &params, false).unwrap().forces;
        let scale = forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
        let step = 1e-8;
        for a in 0..8 {
            for i in 0..3 {
                let (mut up, mut down) = (u, u);
                up[a][i] += step;
                down[a][i] -= step;
                let fd = (kernel.energy(&up, &params).unwrap() - kernel.energy(&down, &params).unwrap()) / (2.0 * step);
                assert!((fd - forces[a][i]).abs() < 1e-6 * scale, "node {a} dof {i}: {fd} vs {}", forces[a][i]);
            }
        }
    }
}

#[test]
fn halving_the_time_step_changes_the_final_force_by_less_than_a_thousandth() {
    let model = coarse_tissue();
    let config = common::tissue_config();
    let coarse = run(&model, &config).unwrap();
    let fine = run(&model, &SimulationConfig { dt_safety: 0.5 * config.dt_safety, ..config }).unwrap();
    assert!(fine.dt < 0.51 * coarse.dt);
    let (a, b) = (coarse.curve.samples.last().unwrap().force, fine.curve.samples.last().unwrap().force);
    assert!((a - b).abs() < 1e-3 * b.abs(), "{a} vs {b}");
}

#[test]
fn curves_are_bit_identical_across_thread_counts() {
    let model = common::model(common::stack_mesh(COARSE, "S1"));
    let config = SimulationConfig {
        total_pull_m: 0.2 * common::TISSUE_HEIGHT,
        ..common::stack_config()
    };
    let reference = run(&model, &SimulationConfig { threads: Some(1), ..config.clone() }).unwrap();
    for threads in [2, 3, 8] {
        let other = run(&model, &SimulationConfig { threads: Some(threads), ..config.clone() }).unwrap();
        assert_eq!(reference.curve.to_csv(), other.curve.to_csv());
        assert_eq!(reference.history, other.history);
    }
}

#[test]
fn mirrored_sample_gives_the_same_force_curve() {
    let mesh = common::tissue_mesh(COARSE);
    let mut mirrored = mesh.clone();
    for x in &mut mirrored.nodes {
        x.x = -x.x;
    }
    // reflection flips orientation; swapping x-neighbours restores it
    for hex in &mut mirrored.hexes {
        let n = hex.nodes;
        hex.nodes = [n[1], n[0], n[3], n[2], n[5], n[4], n[7], n[6]];
    }
    let config = common::tissue_config();
    let base = run(&common::model(mesh), &config).unwrap();
    let flipped = run(
        &common::model(mirrored),
        &SimulationConfig {
            loading_direction: [-1.0, 0.0, 0.0],
            ..config
        },
    )
    .unwrap();
    let peak = base.curve.samples.iter().map(|s| s.force.abs()).fold(0.0, f64::max);
    assert_eq!(base.curve.len(), flipped.curve.len());
    for (a, b) in base.curve.samples.iter().zip(&flipped.curve.samples) {
        assert_eq!(a.displacement, b.displacement);
        assert!((a.force - b.force).abs() <= 1e-9 * peak, "{} vs {}", a.force, b.force);
    }
}

#[test]
fn zero_pull_gives_a_zero_curve() {
    let out = run(
        &coarse_tissue(),
        &SimulationConfig {
            total_pull_m: 0.0,
            ..common::tissue_config()
        },
    )
    .unwrap();
    assert!(out.curve.samples.iter().all(|s| s.force == 0.0 && s.displacement == 0.0));
    assert!(energy_report(&out.history).quasi_static());
}

#[test]
fn fast_run_is_flagged() {
    let config = SimulationConfig {
        time_compression: 1000.0,
        energy_abort_fraction: 1.0,
        ..common::tissue_config()
    };
    let history = match run(&coarse_tissue(), &config) {
        Ok(out) => out.history,
        Err(e) => e.partial.expect("partial output").history,
    };
    let report = energy_report(&history);
    assert!(!report.quasi_static());
    assert!(report.max_kinetic_ratio > 0.05);
}

#[test]
fn compliant_run_passes_the_audit() {
    let out = run(&coarse_tissue(), &common::tissue_config()).unwrap();
    let report = energy_report(&out.history);
    assert!(report.quasi_static());
    assert!(report.max_imbalance_fraction < 0.02);
    assert!(report.max_hourglass_ratio < 0.02);
    assert!(out.history.iter().all(|h| h.hourglass >= 0.0));
}

#[test]
fn free_transverse_platen_stores_less_work_than_a_glued_one() {
    let (model, glued) = common::single_element();
    let free = SimulationConfig {
        driven_transverse: TransverseMode::Free,
        ..glued.clone()
    };
    let glued_out = run(&model, &glued).unwrap();
    let mut sim = Simulation::new(&model, &free).unwrap();
    for _ in 0..sim.step_count() {
        sim.step(false).unwrap();
    }
    let top = model.mesh.node_set("top").unwrap();
    assert!(top.iter().any(|&n| sim.displacements()[n].z.abs() > 0.0));
    let free_out = run(&model, &free).unwrap();
    assert!(work(&free_out.curve) < work(&glued_out.curve));
}
