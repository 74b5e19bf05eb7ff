use dumbbell_core::attitude;
use dumbbell_core::model::{DumbbellConfig, Radii};
use dumbbell_core::mpc::{
    reference_quaternion_trajectory, solve, GyroscopicTerm, MpcProblem, MpcState, RealizableSet,
    SolverSettings, SolverStatus, Weights,
};
use nalgebra::Vector3;

const DT_PRED: f64 = 0.01;
const HORIZON: usize = 50;
/// Prediction steps per solve period.
const SHIFT: usize = 10;

fn table1(x0: MpcState, warm_start: Option<Vec<Vector3<f64>>>) -> MpcProblem {
    let cfg = DumbbellConfig::reference();
    let (lo, hi) = cfg.inertia_bounds();
    let omega_ref = Vector3::new(0.0, 1.0, 0.0);
    MpcProblem {
        q_ref: reference_quaternion_trajectory(&x0.q, &omega_ref, HORIZON, DT_PRED),
        x0,
        omega_ref: vec![omega_ref; HORIZON + 1],
        weights: Weights::regulation(),
        horizon: HORIZON,
        dt_pred: DT_PRED,
        di_max: cfg.morph_step_limit(&Radii::new(1.0, 0.5, 0.5), DT_PRED),
        inertia_min: lo.to_vector(),
        inertia_max: hi.to_vector(),
        realizable: Some(RealizableSet::for_dumbbell(&cfg)),
        gyroscopic: GyroscopicTerm::Minus,
        settings: SolverSettings {
            max_iters: 5000,
            ..SolverSettings::default()
        },
        warm_start,
    }
}

fn start() -> MpcState {
    MpcState {
        omega: Vector3::new(-0.3, -0.9, 0.9),
        q: attitude::identity(),
        inertia: DumbbellConfig::reference().principal_inertia().to_vector(),
    }
}

#[test]
fn warm_start_needs_fewer_iterations() {
    let first = solve(&table1(start(), None)).unwrap();
    let next = first.predicted[SHIFT];
    let mut shifted: Vec<_> = first.di[SHIFT..].to_vec();
    shifted.resize(HORIZON, Vector3::zeros());

    let cold = solve(&table1(next, None)).unwrap();
    let warm = solve(&table1(next, Some(shifted))).unwrap();
    // Iterations each run needs to reach the cold-start solution quality.
    let reach = |trace: &[f64]| trace.iter().position(|c| *c <= cold.cost);
    let cold_iters = reach(&cold.cost_trace).unwrap();
    let warm_iters = reach(&warm.cost_trace).expect("warm start reaches the cold cost");
    assert!(
        warm_iters < cold_iters,
        "warm {warm_iters} vs cold {cold_iters}"
    );
    assert!(
        warm.cost <= cold.cost,
        "warm {} cold {}",
        warm.cost,
        cold.cost
    );
}

#[test]
fn solution_respects_bounds_and_improves_on_zero_control() {
    let p = table1(start(), None);
    let sol = solve(&p).unwrap();
    assert_ne!(sol.status, SolverStatus::Infeasible);
    assert!(sol.cost <= sol.cost_trace[0]);
    let set = p.realizable.unwrap();
    for (di, x) in sol.di.iter().zip(&sol.predicted[1..]) {
        for i in 0..3 {
            assert!(di[i].abs() <= p.di_max[i] * (1.0 + 1e-12));
            assert!(
                x.inertia[i] >= p.inertia_min[i] - 1e-9 && x.inertia[i] <= p.inertia_max[i] + 1e-9
            );
        }
        assert!(set.contains(&x.inertia, 1e-9));
    }
}

#[test]
fn at_reference_the_plan_is_idle() {
    let cfg = DumbbellConfig::reference();
    let x0 = MpcState {
        omega: Vector3::new(0.0, 1.0, 0.0),
        ..start()
    };
    let mut p = table1(x0, None);
    p.gyroscopic = GyroscopicTerm::Plus;
    let sol = solve(&p).unwrap();
    assert!(sol.cost < 1e-12, "cost {}", sol.cost);
    assert!(sol.di.iter().all(|d| d.norm() < 1e-9));
    assert_eq!(
        sol.predicted[HORIZON].inertia,
        cfg.principal_inertia().to_vector()
    );
}
