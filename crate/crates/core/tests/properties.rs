use std::collections::BTreeMap;
use std::sync::Arc;

use meningefem::calibrate::{objective, optimize, CalibrationProblem, FreeParameter, ForwardModel, OptimizerOptions};
use meningefem::cohesive::{dissipated_energy, update, CohesiveState, Modes};
use meningefem::material::{cauchy_stress, strain_energy, DeformationState, OgdenParams};
use meningefem::mesh::{generate_sample_mesh, load_mesh, save_mesh, scaled_jacobian, Layer};
use meningefem::{presets, ForceDisplacementCurve, Mat3, Vec3};
use nalgebra::Rotation3;
use proptest::prelude::*;

fn deformation() -> impl Strategy<Value = Mat3> {
    (prop::array::uniform9(-0.3f64..0.3), 0.9f64..1.1).prop_filter_map("inverted", |(e, j)| {
        let f = Mat3::identity() + Mat3::from_row_slice(&e);
        let det = f.determinant();
        (det > 0.2).then(|| f * (j / det).cbrt())
    })
}

fn rotation() -> impl Strategy<Value = Rotation3<f64>> {
    (prop::array::uniform3(-1.0f64..1.0), 0.05f64..3.1)
        .prop_filter("axis", |(a, _)| Vec3::from(*a).norm() > 1e-3)
        .prop_map(|(a, angle)| Rotation3::new(Vec3::from(a).normalize() * angle))
}

fn tissue() -> impl Strategy<Value = OgdenParams> {
    (0usize..3).prop_map(|i| presets::tissue(presets::TISSUE_SETS[i].0).unwrap())
}

fn distorted_hex() -> impl Strategy<Value = [Vec3; 8]> {
    prop::array::uniform8(prop::array::uniform3(-0.2f64..0.2)).prop_map(|jitter| {
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
        std::array::from_fn(|a| Vec3::from(unit[a]) + Vec3::from(jitter[a]))
    })
}

/// `F = a d + b d²` on a fixed displacement grid.
struct Quadratic;

impl ForwardModel for Quadratic {
    fn simulate(&self, p: &BTreeMap<String, f64>) -> Result<ForceDisplacementCurve, String> {
        let (a, b) = (p["a"], p["b"]);
        Ok(ForceDisplacementCurve::from_pairs((0..=50).map(|k| {
            let d = k as f64 * 1e-4;
            (d, a * d + b * d * d)
        })))
    }
}

fn quadratic_problem(a: f64, b: f64, start: (f64, f64)) -> CalibrationProblem {
    let target = Quadratic.simulate(&BTreeMap::from([("a".into(), a), ("b".into(), b)])).unwrap();
    CalibrationProblem {
        free: vec![FreeParameter::new("a", 1.0, 100.0, start.0), FreeParameter::new("b", -1e4, 1e4, start.1)],
        fixed: BTreeMap::new(),
        target,
        forward: Arc::new(Quadratic),
        fit_window: (0.0, 5e-3),
        options: OptimizerOptions::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stress_is_frame_indifferent(f in deformation(), q in rotation(), p in tissue()) {
        let q = *q.matrix();
        let sigma = cauchy_stress(&DeformationState::new(f).unwrap(), &p).unwrap();
        let rotated = cauchy_stress(&DeformationState::new(q * f).unwrap(), &p).unwrap();
        let expected = q * sigma * q.transpose();
        prop_assert!((rotated - expected).norm() <= 1e-9 * sigma.norm().max(1.0));
        let w = strain_energy(&DeformationState::new(f).unwrap(), &p).unwrap();
        let wq = strain_energy(&DeformationState::new(q * f).unwrap(), &p).unwrap();
        prop_assert!((w - wq).abs() <= 1e-10 * w.abs().max(1e-6));
    }

    #[test]
    fn stress_is_the_energy_gradient(f in deformation(), p in tissue()) {
        let w = |f: Mat3| strain_energy(&DeformationState::new(f).unwrap(), &p).unwrap();
        let h = 1e-6;
        let piola = Mat3::from_fn(|r, c| {
            let (mut up, mut down) = (f, f);
            up[(r, c)] += h;
            down[(r, c)] -= h;
            (w(up) - w(down)) / (2.0 * h)
        });
        let oracle = piola * f.transpose() / f.determinant();
        let sigma = cauchy_stress(&DeformationState::new(f).unwrap(), &p).unwrap();
        prop_assert!((sigma - oracle).norm() <= 1e-5 * oracle.norm());
        prop_assert!(w(f) >= 0.0);
    }

    #[test]
    fn damage_never_decreases(
        steps in prop::collection::vec(prop::array::uniform3(-4e-5f64..6e-5), 1..80),
        set in 0usize..3,
    ) {
        let law = presets::interface(presets::INTERFACE_SETS[set].0).unwrap();
        let mut state = CohesiveState::default();
        let mut s = [0.0; 3];
        for step in steps {
            for i in 0..3 {
                s[i] += step[i];
            }
            let next = match update(&state, Modes::new(s[0], s[1], s[2]), &law) {
                Ok((_, next)) => next,
                // a coarse step can overshoot initiation by more than G allows
                Err(_) => break,
            };
            prop_assert!(next.damage >= state.damage);
            prop_assert!((0.0..=1.0).contains(&next.damage));
            prop_assert!(dissipated_energy(&next) >= dissipated_energy(&state));
            prop_assert!(dissipated_energy(&next) <= law.g * (1.0 + 1e-9), "{} vs {}", dissipated_energy(&next), law.g);
            if next.damage == 1.0 {
                prop_assert!((dissipated_energy(&next) - law.g).abs() <= 1e-12 * law.g);
            }
            state = next;
        }
    }

    #[test]
    fn compression_alone_never_initiates(depth in 0.0f64..1e-2, set in 0usize..3) {
        let law = presets::interface(presets::INTERFACE_SETS[set].0).unwrap();
        let (t, state) = update(&CohesiveState::default(), Modes::new(-depth, 0.0, 0.0), &law).unwrap();
        prop_assert!(!state.initiated);
        prop_assert_eq!(state.damage, 0.0);
        prop_assert!(t.n <= 0.0);
    }

    #[test]
    fn scaled_jacobian_is_invariant_under_similarity(
        hex in distorted_hex(),
        q in rotation(),
        scale in 1e-3f64..1e3,
        shift in prop::array::uniform3(-10.0f64..10.0),
    ) {
        let sj = scaled_jacobian(&hex).unwrap();
        let moved = hex.map(|x| q * x * scale + Vec3::from(shift));
        prop_assert!((scaled_jacobian(&moved).unwrap() - sj).abs() <= 1e-12);
        prop_assert!(sj <= 1.0 + 1e-15);
    }

    #[test]
    fn generated_meshes_round_trip_and_are_perfect(
        nx in 1usize..4, ny in 1usize..4, nz in 2usize..5, size in 1e-3f64..1e-2,
    ) {
        let dims = [nx as f64 * size, ny as f64 * size, nz as f64 * size];
        let layers = [Layer::new("brain", (nz - 1) as f64 * size), Layer::rigid("skull", size)];
        let mesh = generate_sample_mesh(dims, size, &layers, None).unwrap();
        prop_assert_eq!(mesh.hexes.len(), nx * ny * nz);
        let report = mesh.quality_report().unwrap();
        prop_assert!((report.min - 1.0).abs() <= 1e-12);
        let back = load_mesh(&save_mesh(&mesh)).unwrap();
        prop_assert_eq!(&back.nodes, &mesh.nodes);
        prop_assert_eq!(back, mesh);
    }

    #[test]
    fn curve_csv_round_trip_is_exact(points in prop::collection::vec((0.0f64..1.0, -10.0f64..10.0), 1..40)) {
        let mut points = points;
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let curve = ForceDisplacementCurve::from_pairs(points);
        prop_assert_eq!(ForceDisplacementCurve::from_csv(&curve.to_csv()).unwrap().samples, curve.samples);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn objective_is_non_negative_and_zero_on_the_generator(a in 1.0f64..100.0, b in -1e4f64..1e4, da in 1.0f64..100.0, db in -1e4f64..1e4) {
        let problem = quadratic_problem(a, b, (50.0, 0.0));
        prop_assert_eq!(objective(&[a, b], &problem), 0.0);
        prop_assert!(objective(&[da, db], &problem) >= 0.0);
    }

    #[test]
    fn optimizer_trace_is_feasible_and_monotone(a in 1.0f64..100.0, b in -1e4f64..1e4, sa in 1.0f64..100.0, sb in -1e4f64..1e4) {
        let problem = quadratic_problem(a, b, (sa, sb));
        let result = optimize(&problem).unwrap();
        for (name, lo, hi) in [("a", 1.0, 100.0), ("b", -1e4, 1e4)] {
            prop_assert!((lo..=hi).contains(&result.parameters[name]));
        }
        for w in result.trace.windows(2) {
            prop_assert!(w[1].best_objective <= w[0].best_objective);
        }
        for entry in &result.trace {
            prop_assert!((1.0..=100.0).contains(&entry.parameters[0]));
            prop_assert!((-1e4..=1e4).contains(&entry.parameters[1]));
        }
        prop_assert!(result.objective_value <= objective(&[sa, sb], &problem));
    }
}
