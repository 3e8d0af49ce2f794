mod common;

use common::{random_masses, rng, spread_points};
use gje_core::flow::{self, FlowState, StepMode};
use gje_core::geom::BoxDomain;
use gje_core::measure::TargetDensity;
use gje_core::solver::SemiDiscreteProblem;
use gje_core::GeneratorSpec;

fn two_points() -> SemiDiscreteProblem {
    let t = TargetDensity::uniform(BoxDomain::cube(1, 0.0, 1.0), 1.0).unwrap();
    SemiDiscreteProblem::new(GeneratorSpec::classical(1), vec![vec![0.0], vec![1.0]], vec![0.5, 0.5], t, 0.0).unwrap()
}

#[test]
fn the_solution_is_a_fixed_point() {
    let p = two_points();
    let traj = flow::run_flow(&p, vec![0.0, 0.5], 1.0, Some(0.1), StepMode::Fixed, 1e-9).unwrap();
    for h in &traj.heights {
        assert!(h[0].abs() < 1e-12 && (h[1] - 0.5).abs() < 1e-12, "{h:?}");
    }
}

#[test]
fn lone_pin_is_stationary() {
    let t = TargetDensity::uniform(BoxDomain::cube(2, 0.0, 1.0), 1.0).unwrap();
    let p = SemiDiscreteProblem::new(GeneratorSpec::perturbed_scalar(2, 0.05), vec![vec![0.5, 0.5]], vec![1.0], t, 0.0).unwrap();
    let mut st = FlowState::new(&p, vec![0.2], None).unwrap();
    for _ in 0..5 {
        flow::flow_step(&p, &mut st, StepMode::Adaptive).unwrap();
    }
    assert_eq!(st.heights, vec![0.2]);
}

/// With `b = u_1 − u_0` the cells are `[0, b]` and `[b, 1]`, so
/// `b' = log((1 − b)/b)` and Euler can be replayed by hand.
#[test]
fn two_point_euler_by_hand() {
    let p = two_points();
    let dt = 0.05;
    let traj = flow::run_flow(&p, vec![0.0, 0.2], 0.5, Some(dt), StepMode::Fixed, 1e-9).unwrap();
    let mut u = [0.0, 0.2];
    for h in &traj.heights[1..] {
        let b: f64 = u[1] - u[0];
        let v = [(b / 0.5).ln(), ((1.0 - b) / 0.5).ln()];
        u = [u[0] + dt * v[0], u[1] + dt * v[1]];
        assert!((h[0] - u[0]).abs() < 1e-12 && (h[1] - u[1]).abs() < 1e-12, "{h:?} vs {u:?}");
    }
    assert!(traj.residuals.windows(2).take(5).all(|w| w[1] < w[0]), "{:?}", traj.residuals);
    assert!(traj.intersection.holds && traj.intersection.worst_weighted_sum <= 1e-12);
}

#[test]
fn adding_a_constant_shifts_the_trajectory() {
    let mut r = rng(70);
    let pts = spread_points(&mut r, 4, 2, 0.15);
    let masses = random_masses(&mut r, 4, 1.0);
    let t = TargetDensity::uniform(BoxDomain::cube(2, 0.0, 1.0), 1.0).unwrap();
    let p = SemiDiscreteProblem::new(GeneratorSpec::classical(2), pts, masses, t, 0.0).unwrap();
    let init = vec![0.0, 0.3, 0.25, 0.45];
    let a = flow::run_flow(&p, init.clone(), 0.3, Some(0.03), StepMode::Fixed, 1e-9).unwrap();
    let b = flow::run_flow(&p, init.iter().map(|u| u + 0.7).collect(), 0.3, Some(0.03), StepMode::Fixed, 1e-9).unwrap();
    for (ha, hb) in a.heights.iter().zip(&b.heights) {
        for (x, y) in ha.iter().zip(hb) {
            assert!((y - x - 0.7).abs() < 1e-9);
        }
    }
}

#[test]
fn flow_reaches_rest() {
    let p = two_points();
    let st = flow::flow_to_rest(&p, vec![0.0, 0.2], 1e-10, 10_000).unwrap();
    assert!((st.heights[1] - st.heights[0] - 0.5).abs() < 1e-9);
    assert!(flow::flow_to_rest(&p, vec![0.0, 0.2], 1e-10, 1).is_err());
    assert!(FlowState::new(&p, vec![0.0], None).is_err());
}

#[test]
fn euler_is_first_order() {
    let p = two_points();
    let r = flow::consistency_ratio(&p, &[0.0, 0.2], 0.4, 0.05).unwrap();
    assert!((r.ratio - 2.0).abs() < 0.3, "{r:?}");
}
