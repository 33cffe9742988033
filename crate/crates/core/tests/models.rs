use forceskill_core::attractor::{attractor_point, ImpedanceGains};
use forceskill_core::demo::StateSample;
use forceskill_core::execution::{
    generate_synthetic_demo, plant_step, Environment, PlantConfig, PlantState, Stage, SyntheticScript,
};
use forceskill_core::manifold::{Frame, Geometry, ManifoldGaussian, Matrix, Pose, Vector};
use forceskill_core::sequencing::{
    most_likely_sequence, transition_duration, DecodeEvidence, DecodeModel, TransitionConfig,
};
use forceskill_core::stiffness::component_residual;
use forceskill_core::tphsmm::{
    em_fit, init_model, time_slice_labels, DurationModel, EmConfig, InitStrategy, LocalDemo, Topology,
};
use nalgebra::Vector3;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn diag6(d: [f64; 6]) -> Matrix {
    Matrix::from_diagonal(&v(&d))
}

fn scalar_demo(xs: &[f64]) -> LocalDemo {
    let pts: Vec<Vector> = xs.iter().map(|x| v(&[*x])).collect();
    LocalDemo::new(&Geometry::Euclidean(1), &pts, &[Frame::identity()])
}

#[test]
fn duration_density_values() {
    let d = DurationModel::new(5.0, 1.0);
    assert!((d.log_prob(5) + LN_SQRT_2PI).abs() < 1e-15);
    assert!((d.log_prob(7) + 2.0 + LN_SQRT_2PI).abs() < 1e-15);
    assert_eq!(d.max_duration(), 8);
    assert_eq!(DurationModel::new(3.0, 0.1).std, 0.5);
}

#[test]
fn time_slice_initialization() {
    assert_eq!(time_slice_labels(10, 2), [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    let xs: Vec<f64> = (0..10).map(f64::from).collect();
    let demos = [scalar_demo(&xs), scalar_demo(&xs)];
    let m = init_model(Geometry::Euclidean(1), vec!["global".into()], &demos, 2, InitStrategy::TimeSlice, Topology::LeftToRight, 1e-6)
        .unwrap();
    assert_eq!(m.durations[0].mean, 5.0);
    assert_eq!(m.durations[1].mean, 5.0);
    assert!((m.components[0][0].mean[0] - 2.0).abs() < 1e-12);
    assert!((m.components[1][0].mean[0] - 7.0).abs() < 1e-12);
    assert_eq!(m.priors, [1.0, 0.0]);
}

#[test]
fn separated_clusters_are_recovered() {
    let jitter = [0.0, 1e-3, -1e-3, 2e-3, -2e-3];
    let demos: Vec<LocalDemo> = (0..3)
        .map(|m| {
            let xs: Vec<f64> = jitter.iter().map(|j| j + 1e-4 * m as f64).chain(jitter.iter().map(|j| 10.0 - j)).collect();
            scalar_demo(&xs)
        })
        .collect();
    let init = init_model(Geometry::Euclidean(1), vec!["global".into()], &demos, 2, InitStrategy::KMeans, Topology::LeftToRight, 1e-6)
        .unwrap();
    let (m, _, report) = em_fit(&init, &demos, &EmConfig::default()).unwrap();
    let mut means: Vec<f64> = m.components.iter().map(|c| c[0].mean[0]).collect();
    means.sort_by(f64::total_cmp);
    assert!((means[0] - 1e-4).abs() < 1e-3, "{means:?}");
    assert!((means[1] - 10.0).abs() < 1e-3, "{means:?}");
    for d in &m.durations {
        assert!((d.mean - 5.0).abs() <= 1.0, "{d:?}");
    }
    for w in report.loglik.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
    }
}

#[test]
fn one_dimensional_residual_vanishes() {
    let g = Geometry::Euclidean(1);
    let s = StateSample { x: v(&[0.0]), xd: v(&[0.0]), xdd: v(&[0.0]), f: v(&[-20.0]) };
    let eps = component_residual(&g, &[s], &[1.0], &v(&[0.05]), &Matrix::zeros(1, 1), &Matrix::from_element(1, 1, 1.0 / 400.0))
        .unwrap();
    assert!(eps[0].abs() < 1e-15, "{eps}");
}

#[test]
fn pressing_force_puts_attractor_below_surface() {
    let g = Geometry::Pose;
    let f_z = 2.0;
    let s = StateSample {
        x: Pose::identity().to_point(),
        xd: Vector::zeros(6),
        xdd: Vector::zeros(6),
        f: v(&[0.0, 0.0, f_z, 0.0, 0.0, 0.0]),
    };
    let gains = ImpedanceGains::new(diag6([400.0, 400.0, 400.0, 40.0, 40.0, 40.0]), Matrix::identity(6, 6) * 40.0);
    let y = attractor_point(&g, &s, &gains).unwrap();
    assert!((y[2] + f_z / 400.0).abs() < 1e-15);
    assert!(y[0].abs() < 1e-15 && y[1].abs() < 1e-15);
}

#[test]
fn free_mass_follows_ballistic_path() {
    let g = Geometry::Euclidean(3);
    let plant = PlantConfig { mass: 2.0, rotational_inertia: 0.01 };
    let force = v(&[1.0, 2.0, -1.0]);
    let dt = 1e-3;
    let mut state = PlantState::at_rest(&g, Vector::zeros(3));
    for _ in 0..1000 {
        state = plant_step(&g, &state, &force, &Environment::free_space(), &Vector::zeros(3), &plant, dt);
    }
    let t = 1.0;
    for i in 0..3 {
        let exact = 0.5 * force[i] / plant.mass * t * t;
        assert!((state.pose[i] - exact).abs() <= force[i].abs() / plant.mass * t * dt, "{i}: {} vs {exact}", state.pose[i]);
    }
}

#[test]
fn static_press_matches_force_balance() {
    let k_z = 400.0;
    let env = Environment::with_plane(Vector3::zeros(), Vector3::z()).unwrap();
    let target = Pose::from_position(Vector3::new(0.0, 0.0, -0.005));
    let script = SyntheticScript {
        id: "press".into(),
        start: Pose::identity(),
        object: Pose::identity(),
        stages: vec![Stage { target, ramp: 0.5, hold: 3.0, stiffness: diag6([k_z, k_z, k_z, 40.0, 40.0, 40.0]) }],
        damping: Matrix::identity(6, 6) * 40.0,
    };
    let demo = generate_synthetic_demo(&script, &env, &PlantConfig::default(), 0.01, None).unwrap();
    // K (y - x) = k_env (-x) at rest
    let x_eq = k_z * -0.005 / (k_z + env.stiffness);
    let expected = -env.stiffness * x_eq;
    let last = demo.demo.points.last().unwrap();
    assert!((last.wrench[2] - expected).abs() < 0.02 * expected, "{} vs {expected}", last.wrench[2]);
    assert!((last.pose.position.z - x_eq).abs() < 1e-5);
}

fn two_stage_model<'a>(globals: &'a [ManifoldGaussian], durations: &'a [DurationModel], a: &'a Matrix) -> DecodeModel<'a> {
    DecodeModel {
        geometry: &Geometry::Euclidean(1),
        globals,
        priors: &[1.0, 0.0],
        transitions: a,
        durations,
        max_durations: &[7, 7],
    }
}

#[test]
fn elapsed_dwell_shortens_the_running_component() {
    let globals = vec![ManifoldGaussian::new(v(&[0.0]), Matrix::identity(1, 1)); 2];
    let durations = [DurationModel::new(5.0, 0.5); 2];
    let mut a = Matrix::zeros(2, 2);
    a[(0, 1)] = 1.0;
    let model = two_stage_model(&globals, &durations, &a);
    let decode = |elapsed| {
        let ev = DecodeEvidence { elapsed, ..Default::default() };
        most_likely_sequence(&model, 6, &ev).unwrap().sequence.segments()
    };
    // four steps already spent in component 0: one more completes its dwell
    assert_eq!(decode(Some((0, 4))), [(0, 1), (1, 5)]);
    // a dwell past the support still continues for at least one step
    assert_eq!(decode(Some((0, 9)))[0].0, 0);
}

#[test]
fn unknown_elapsed_component_is_rejected() {
    let globals = vec![ManifoldGaussian::new(v(&[0.0]), Matrix::identity(1, 1)); 2];
    let durations = [DurationModel::new(5.0, 0.5); 2];
    let a = Matrix::zeros(2, 2);
    let model = two_stage_model(&globals, &durations, &a);
    let ev = DecodeEvidence { elapsed: Some((2, 1)), ..Default::default() };
    assert!(most_likely_sequence(&model, 6, &ev).is_err());
}

#[test]
fn transition_durations() {
    let cfg = TransitionConfig::default();
    // 0.05 at 0.1 per second and 100 Hz
    assert_eq!(transition_duration(0.05, 0.01, &cfg, 400), 50);
    assert_eq!(transition_duration(0.05, 0.01, &cfg, 100), 25);
    assert_eq!(transition_duration(0.0, 0.01, &cfg, 400), 2);
    let capped = TransitionConfig { d_max: Some(10), ..cfg };
    assert_eq!(transition_duration(1.0, 0.01, &capped, 400), 10);
}
