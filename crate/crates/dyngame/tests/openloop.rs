mod common;

use common::*;
use dyngame::verify::{self, openloop_nash_kkt, openloop_stackelberg_kkt};
use dyngame::{openloop_nash, openloop_stackelberg, Vector};

#[test]
fn unit_instances_collapse_to_closed_forms() {
    let x0 = scalar(1.0);
    let nash = openloop_nash::solve(&unit_game(2, 1), &x0).unwrap();
    for i in 0..2 {
        assert!((nash.controls()[i][0][0] + 1.0 / 3.0).abs() < 1e-12);
    }
    let stack = openloop_stackelberg::solve(&unit_game(2, 1), &x0).unwrap();
    assert!((stack.controls()[0][0][0] + 0.2).abs() < 1e-12);
    assert!((stack.controls()[1][0][0] + 0.4).abs() < 1e-12);
}

#[test]
fn openloop_nash_matches_dense_oracle() {
    let mut rng = rng(11);
    for _ in 0..INSTANCES {
        let spec = random_game(&mut rng, Shape::default());
        let x0 = random_x0(&mut rng, &spec);
        let sol = openloop_nash::solve(&spec, &x0).unwrap();
        let oracle = dense_openloop_nash(&spec, &x0);
        assert!(sequence_deviation(sol.controls(), &oracle) < 1e-9);
        let alt = openloop_nash::solve_alt(&spec, &x0).unwrap();
        assert!(openloop_nash::control_deviation(sol.controls(), alt.controls()) < 1e-10);
        assert!(openloop_nash_kkt(&spec, &sol) < 1e-9);
    }
}

#[test]
fn openloop_stackelberg_matches_dense_oracle() {
    let mut rng = rng(12);
    let shape = Shape {
        players: (2, 3),
        ..Shape::default()
    };
    for _ in 0..INSTANCES {
        let spec = random_game(&mut rng, shape);
        let x0 = random_x0(&mut rng, &spec);
        let sol = openloop_stackelberg::solve(&spec, &x0).unwrap();
        let oracle = dense_openloop_stackelberg(&spec, &x0);
        let gap = sequence_deviation(sol.controls(), &oracle);
        assert!(gap < 1e-9, "deviation {gap:e}");
        let residuals = openloop_stackelberg_kkt(&spec, &sol);
        assert!(residuals.iter().all(|r| *r < 1e-8), "{residuals:?}");
    }
}

#[test]
fn two_player_lq_specialization_agrees() {
    let mut rng = rng(13);
    let shape = Shape {
        players: (2, 2),
        linear_quadratic: true,
        unit_own_weights: true,
        ..Shape::default()
    };
    for _ in 0..INSTANCES {
        let spec = random_game(&mut rng, shape);
        let x0 = random_x0(&mut rng, &spec);
        assert!(openloop_stackelberg::crosscheck_cor6(&spec, &x0).unwrap() < 1e-10);
    }
}

#[test]
fn inherited_multipliers_reproduce_the_tail() {
    let mut rng = rng(14);
    let shape = Shape {
        players: (2, 3),
        ..Shape::default()
    };
    let mut largest_reset: f64 = 0.0;
    for _ in 0..20 {
        let spec = random_game(&mut rng, shape);
        let x0 = random_x0(&mut rng, &spec);
        let sol = openloop_stackelberg::solve(&spec, &x0).unwrap();
        let candidate = verify::Candidate::OpenLoopStackelberg(&sol);
        let report = verify::time_consistency(&spec, &candidate, verify::Pattern::OpenLoop).unwrap();
        assert!(report.max_tail_deviation <= 1e-9);
        largest_reset = largest_reset.max(report.reset_deviation.unwrap());
    }
    assert!(largest_reset > 1e-3);
}

#[test]
fn multiplier_free_start_is_the_equilibrium() {
    let spec = unit_game(2, 3);
    let x0 = scalar(1.0);
    let a = openloop_stackelberg::solve(&spec, &x0).unwrap();
    let b = openloop_stackelberg::solve_from(&spec, &x0, &[Vector::zeros(1)]).unwrap();
    assert_eq!(a.controls(), b.controls());
}

#[test]
fn bad_initial_state_is_rejected() {
    let spec = unit_game(2, 2);
    assert!(openloop_nash::solve(&spec, &Vector::zeros(2)).is_err());
    assert!(openloop_stackelberg::solve(&spec, &Vector::zeros(3)).is_err());
}
