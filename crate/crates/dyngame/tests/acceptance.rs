//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use dyngame::game_model::rollout;
use dyngame::lq_control::{self, law_deviation};
use dyngame::numerics::{classify_definiteness, pushthrough_residuals, DefinitenessClass};
use dyngame::verify::{self, Candidate, Consistency, Pattern};
use dyngame::{
    feedback_nash, feedback_stackelberg, openloop_nash, openloop_stackelberg, ControlLaw, GameSpec, Policy,
};
use rand::Rng;

const SAMPLES: usize = 100;
const LEADER_SAMPLES: usize = 50;
const FD_STEP: f64 = 1e-5;

/// Outcome of one criterion: the worst value seen for each named quantity and any
/// violated bounds.
#[derive(Default)]
struct Tally {
    worst: Vec<(String, f64)>,
    failures: Vec<String>,
}

impl Tally {
    fn record(&mut self, name: &str, value: f64) {
        match self.worst.iter_mut().find(|(n, _)| n == name) {
            Some((_, w)) => *w = w.max(value),
            None => self.worst.push((name.to_string(), value)),
        }
    }

    /// Records `value` under `name` and fails unless `value <= bound`.
    fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        self.record(name, value);
        if value.is_nan() || value > bound {
            self.failures.push(format!("{name} = {value:.3e} exceeds {bound:.0e}"));
        }
    }

    /// Records `value` under `name`, keeping the minimum, and fails unless `value >= bound`.
    fn at_least(&mut self, name: &str, value: f64, bound: f64) {
        match self.worst.iter_mut().find(|(n, _)| n == name) {
            Some((_, w)) => *w = w.min(value),
            None => self.worst.push((name.to_string(), value)),
        }
        if value.is_nan() || value < bound {
            self.failures.push(format!("{name} = {value:.3e} below {bound:.0e}"));
        }
    }

    fn fail(&mut self, message: String) {
        self.failures.push(message);
    }

    fn report(&self, number: usize, title: &str) -> bool {
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let summary: Vec<String> = self.worst.iter().map(|(n, v)| format!("{n} {v:.2e}")).collect();
        println!("{status} criterion {number} {title}: {}", summary.join(", "));
        for failure in self.failures.iter().take(5) {
            println!("    {failure}");
        }
        self.failures.is_empty()
    }
}

/// Smallest eigenvalue over every monitored value or costate Hessian, by family.
#[derive(Default)]
struct Monitor {
    families: Vec<Family>,
}

struct Family {
    label: String,
    min_eigenvalue: f64,
    matrices: usize,
    worst_entry: String,
}

impl Monitor {
    fn observe(&mut self, candidate: &Candidate<'_>) {
        let solver = match candidate {
            Candidate::FeedbackNash { .. } => "feedback Nash",
            Candidate::FeedbackStackelberg { .. } => "feedback Stackelberg",
            Candidate::OpenLoopNash(_) => "open-loop Nash",
            Candidate::OpenLoopStackelberg(_) => "open-loop Stackelberg",
        };
        for entry in verify::definiteness_monitor(candidate) {
            let label = format!("{solver} {}", entry.matrix);
            let index = match self.families.iter().position(|f| f.label == label) {
                Some(i) => i,
                None => {
                    self.families.push(Family {
                        label,
                        min_eigenvalue: f64::INFINITY,
                        matrices: 0,
                        worst_entry: String::new(),
                    });
                    self.families.len() - 1
                }
            };
            let family = &mut self.families[index];
            family.matrices += 1;
            if entry.min_eigenvalue < family.min_eigenvalue {
                family.min_eigenvalue = entry.min_eigenvalue;
                family.worst_entry = format!("player {} at index {}", entry.player + 1, entry.stage);
            }
        }
    }
}

fn on_error<T>(tally: &mut Tally, what: &str, result: dyngame::Result<T>) -> Option<T> {
    match result {
        Ok(v) => Some(v),
        Err(e) => {
            tally.fail(format!("{what}: {e}"));
            None
        }
    }
}

fn leader_only(spec: &GameSpec) -> GameSpec {
    let mut single = spec.clone();
    single.players.truncate(1);
    for stage in &mut single.stages {
        stage.b.truncate(1);
        stage.q.truncate(1);
        stage.x_target.truncate(1);
        stage.r.truncate(1);
        stage.r[0].truncate(1);
        stage.u_target.truncate(1);
        stage.u_target[0].truncate(1);
    }
    single
}

fn max_offset(laws: &[Vec<ControlLaw>]) -> f64 {
    laws.iter().flatten().map(|l| l.offset.amax()).fold(0.0, f64::max)
}

fn stack_shape() -> Shape {
    Shape {
        players: (2, 3),
        ..Shape::default()
    }
}

fn closed_forms(monitor: &mut Monitor) -> Tally {
    let mut tally = Tally::default();
    let x0 = scalar(1.0);
    let unit = unit_game(2, 1);
    let tol = 1e-10;

    if let Some(fb) = on_error(&mut tally, "feedback Nash", feedback_nash::solve(&unit)) {
        for i in 0..2 {
            tally.at_most("FB Nash gain error", (fb.laws[0][i].gain[(0, 0)] + 1.0 / 3.0).abs(), tol);
            tally.at_most("FB Nash value error", (fb.value(&x0, i) - 1.0 / 9.0).abs(), tol);
        }
        monitor.observe(&Candidate::FeedbackNash { solution: &fb, x0: &x0 });
        if let Some(ol) = on_error(&mut tally, "open-loop Nash", openloop_nash::solve(&unit, &x0)) {
            for i in 0..2 {
                tally.at_most("OL Nash control error", (ol.controls()[i][0][0] + 1.0 / 3.0).abs(), tol);
                let collapse = (&ol.controls()[i][0] - fb.laws[0][i].apply(&x0)).amax();
                tally.at_most("single-stage collapse", collapse, tol);
            }
            monitor.observe(&Candidate::OpenLoopNash(&ol));
        }
    }
    if let Some(fs) = on_error(&mut tally, "feedback Stackelberg", feedback_stackelberg::solve(&unit)) {
        let expected = [-0.2, -0.4];
        for (i, target) in expected.iter().enumerate() {
            tally.at_most("FB Stackelberg gain error", (fs.laws()[0][i].gain[(0, 0)] - target).abs(), tol);
        }
        monitor.observe(&Candidate::FeedbackStackelberg { solution: &fs, x0: &x0 });
        if let Some(os) = on_error(&mut tally, "open-loop Stackelberg", openloop_stackelberg::solve(&unit, &x0)) {
            for (i, target) in expected.iter().enumerate() {
                tally.at_most("OL Stackelberg control error", (os.controls()[i][0][0] - target).abs(), tol);
                let collapse = (&os.controls()[i][0] - fs.laws()[0][i].apply(&x0)).amax();
                tally.at_most("single-stage collapse", collapse, tol);
            }
            monitor.observe(&Candidate::OpenLoopStackelberg(&os));
        }
    }
    if let Some(lqr) = on_error(&mut tally, "regulator", lq_control::solve_control(&unit_game(1, 1))) {
        tally.at_most("LQR gain error", (lqr.laws[0][0].gain[(0, 0)] + 0.5).abs(), tol);
        tally.at_most("LQR value error", (lqr.value(&x0, 0) - 0.25).abs(), tol);
        monitor.observe(&Candidate::FeedbackNash { solution: &lqr, x0: &x0 });
    }
    tally
}

fn reductions(monitor: &mut Monitor) -> Tally {
    let mut tally = Tally::default();
    let mut rng = rng(1002);
    let lq = Shape {
        linear_quadratic: true,
        ..Shape::default()
    };
    for _ in 0..INSTANCES {
        // n = 1 feedback Nash is the regulator.
        let spec = random_game(&mut rng, Shape { players: (1, 1), ..lq });
        let x0 = random_x0(&mut rng, &spec);
        if let (Some(game), Some(control)) = (
            on_error(&mut tally, "feedback Nash", feedback_nash::solve(&spec)),
            on_error(&mut tally, "regulator", lq_control::solve_control(&spec)),
        ) {
            tally.at_most("n=1 FB Nash vs LQR", law_deviation(&game.laws, &control.laws), 1e-10);
            monitor.observe(&Candidate::FeedbackNash { solution: &game, x0: &x0 });
            monitor.observe(&Candidate::FeedbackNash { solution: &control, x0: &x0 });
        }

        // Followers without influence leave the leader a regulator problem.
        let mut spec = random_game(&mut rng, Shape { players: (2, 3), ..lq });
        for stage in &mut spec.stages {
            stage.b.iter_mut().skip(1).for_each(|b| b.fill(0.0));
        }
        let x0 = random_x0(&mut rng, &spec);
        let Some(regulator) = on_error(&mut tally, "regulator", lq_control::solve_control(&leader_only(&spec))) else {
            continue;
        };
        if let Some(fs) = on_error(&mut tally, "feedback Stackelberg", feedback_stackelberg::solve(&spec)) {
            let leader: Vec<Vec<ControlLaw>> = fs.laws().iter().map(|l| vec![l[0].clone()]).collect();
            tally.at_most("B^f=0 FB Stackelberg vs LQR", law_deviation(&leader, &regulator.laws), 1e-10);
            monitor.observe(&Candidate::FeedbackStackelberg { solution: &fs, x0: &x0 });
        }
        if let Some(os) = on_error(&mut tally, "open-loop Stackelberg", openloop_stackelberg::solve(&spec, &x0)) {
            let single = leader_only(&spec);
            if let Some(path) = on_error(&mut tally, "rollout", rollout(&single, Policy::Laws(&regulator.laws), &x0)) {
                let gap = os.controls()[0]
                    .iter()
                    .zip(&path.controls[0])
                    .map(|(a, b)| (a - b).amax())
                    .fold(0.0, f64::max);
                tally.at_most("B^f=0 OL Stackelberg vs LQR", gap, 1e-10);
            }
            monitor.observe(&Candidate::OpenLoopStackelberg(&os));
        }

        // Zero drift and targets give zero offsets.
        let spec = random_game(&mut rng, lq);
        let x0 = random_x0(&mut rng, &spec);
        if let Some(fb) = on_error(&mut tally, "feedback Nash", feedback_nash::solve(&spec)) {
            tally.at_most("LQ offsets", max_offset(&fb.laws), 1e-12);
            monitor.observe(&Candidate::FeedbackNash { solution: &fb, x0: &x0 });
        }
        if let Some(ol) = on_error(&mut tally, "open-loop Nash", openloop_nash::solve(&spec, &x0)) {
            tally.at_most("LQ offsets", max_offset(&ol.path_laws), 1e-12);
            monitor.observe(&Candidate::OpenLoopNash(&ol));
        }
        let spec = random_game(&mut rng, Shape { players: (2, 3), ..lq });
        let x0 = random_x0(&mut rng, &spec);
        if let Some(fs) = on_error(&mut tally, "feedback Stackelberg", feedback_stackelberg::solve(&spec)) {
            tally.at_most("LQ offsets", max_offset(fs.laws()), 1e-12);
            monitor.observe(&Candidate::FeedbackStackelberg { solution: &fs, x0: &x0 });
        }
        let spec = random_game(&mut rng, Shape { players: (1, 1), ..lq });
        if let Some(lqr) = on_error(&mut tally, "regulator", lq_control::solve_control(&spec)) {
            tally.at_most("LQ offsets", max_offset(&lqr.laws), 1e-12);
        }
    }
    tally
}

fn cross_notation(monitor: &mut Monitor) -> Tally {
    let mut tally = Tally::default();
    let mut rng = rng(1003);
    let two_player_lq = Shape {
        players: (2, 2),
        linear_quadratic: true,
        unit_own_weights: true,
        ..Shape::default()
    };
    let tol = 1e-10;
    for _ in 0..INSTANCES {
        let spec = random_game(&mut rng, Shape::default());
        let x0 = random_x0(&mut rng, &spec);
        if let (Some(main), Some(alt)) = (
            on_error(&mut tally, "feedback Nash", feedback_nash::solve(&spec)),
            on_error(&mut tally, "feedback Nash alt", feedback_nash::solve_alt(&spec)),
        ) {
            tally.at_most("FB Nash stacked vs closed-loop", law_deviation(&main.laws, &alt.laws), tol);
            monitor.observe(&Candidate::FeedbackNash { solution: &main, x0: &x0 });
        }
        if let (Some(main), Some(alt)) = (
            on_error(&mut tally, "open-loop Nash", openloop_nash::solve(&spec, &x0)),
            on_error(&mut tally, "open-loop Nash alt", openloop_nash::solve_alt(&spec, &x0)),
        ) {
            let d = openloop_nash::control_deviation(main.controls(), alt.controls());
            tally.at_most("OL Nash two derivations", d, tol);
            monitor.observe(&Candidate::OpenLoopNash(&main));
        }

        let spec = random_game(&mut rng, Shape { players: (1, 1), linear_quadratic: true, ..Shape::default() });
        if let Some(d) = on_error(&mut tally, "regulator", lq_control::crosscheck_prop2(&spec)) {
            tally.at_most("LQR gain form vs Riccati", d, tol);
        }

        let spec = random_game(&mut rng, two_player_lq);
        let x0 = random_x0(&mut rng, &spec);
        if let Some(d) = on_error(&mut tally, "FB Stackelberg closed form", feedback_stackelberg::crosscheck_two_player_lq(&spec)) {
            tally.at_most("FB Stackelberg vs push-through form", d, tol);
        }
        if let Some(d) = on_error(&mut tally, "OL Stackelberg two-player form", openloop_stackelberg::crosscheck_cor6(&spec, &x0)) {
            tally.at_most("OL Stackelberg vs two-player form", d, tol);
        }
    }
    tally
}

fn check_candidate(spec: &GameSpec, candidate: &Candidate<'_>, seed: u64, tally: &mut Tally, label: &str) {
    let pattern = candidate.pattern();
    if let Some(residuals) = on_error(tally, label, verify::stationarity(spec, candidate, pattern, FD_STEP)) {
        for r in residuals {
            tally.at_most("FD stationarity", r, verify::STATIONARITY_TOLERANCE);
        }
    }
    for i in 0..spec.player_count() {
        let seed = seed.wrapping_mul(31).wrapping_add(i as u64);
        if candidate.is_stackelberg() && i == 0 {
            if let Some(g) = on_error(tally, label, verify::leader_gap(spec, candidate, pattern, LEADER_SAMPLES, verify::DEFAULT_MAGNITUDE, seed)) {
                tally.at_least("leader gap", g, verify::GAP_TOLERANCE);
            }
        } else if let Some(g) = on_error(
            tally,
            label,
            verify::deviation_gap(spec, candidate, pattern, i, SAMPLES, verify::DEFAULT_MAGNITUDE, seed),
        ) {
            tally.at_least("deviation gap", g, verify::GAP_TOLERANCE);
        }
    }
}

fn optimality(monitor: &mut Monitor) -> Tally {
    let mut tally = Tally::default();
    let mut rng = rng(1004);
    for seed in 0..INSTANCES as u64 {
        let spec = random_game(&mut rng, Shape::default());
        let x0 = random_x0(&mut rng, &spec);
        if let Some(fb) = on_error(&mut tally, "feedback Nash", feedback_nash::solve(&spec)) {
            let candidate = Candidate::FeedbackNash { solution: &fb, x0: &x0 };
            check_candidate(&spec, &candidate, seed, &mut tally, "feedback Nash");
            monitor.observe(&candidate);
        }
        if let Some(ol) = on_error(&mut tally, "open-loop Nash", openloop_nash::solve(&spec, &x0)) {
            tally.at_most("OL Nash KKT", verify::openloop_nash_kkt(&spec, &ol), verify::OPENLOOP_NASH_KKT_TOLERANCE);
            let candidate = Candidate::OpenLoopNash(&ol);
            check_candidate(&spec, &candidate, seed, &mut tally, "open-loop Nash");
            monitor.observe(&candidate);
        }

        let spec = random_game(&mut rng, stack_shape());
        let x0 = random_x0(&mut rng, &spec);
        if let Some(fs) = on_error(&mut tally, "feedback Stackelberg", feedback_stackelberg::solve(&spec)) {
            let candidate = Candidate::FeedbackStackelberg { solution: &fs, x0: &x0 };
            check_candidate(&spec, &candidate, seed, &mut tally, "feedback Stackelberg");
            monitor.observe(&candidate);
        }
        if let Some(os) = on_error(&mut tally, "open-loop Stackelberg", openloop_stackelberg::solve(&spec, &x0)) {
            let kkt = verify::openloop_stackelberg_kkt(&spec, &os).iter().copied().fold(0.0, f64::max);
            tally.at_most("OL Stackelberg KKT", kkt, verify::OPENLOOP_STACKELBERG_KKT_TOLERANCE);
            let candidate = Candidate::OpenLoopStackelberg(&os);
            check_candidate(&spec, &candidate, seed, &mut tally, "open-loop Stackelberg");
            monitor.observe(&candidate);
        }

        let spec = random_game(&mut rng, Shape { players: (1, 1), linear_quadratic: true, ..Shape::default() });
        let x0 = random_x0(&mut rng, &spec);
        if let Some(lqr) = on_error(&mut tally, "regulator", lq_control::solve_control(&spec)) {
            let candidate = Candidate::FeedbackNash { solution: &lqr, x0: &x0 };
            check_candidate(&spec, &candidate, seed, &mut tally, "regulator");
            monitor.observe(&candidate);
        }
    }
    tally
}

fn time_consistency(monitor: &mut Monitor) -> Tally {
    let mut tally = Tally::default();
    let mut rng = rng(1005);
    let mut largest_reset: f64 = 0.0;
    for _ in 0..INSTANCES {
        let spec = random_game(&mut rng, Shape::default());
        let x0 = random_x0(&mut rng, &spec);
        if let Some(fb) = on_error(&mut tally, "feedback Nash", feedback_nash::solve(&spec)) {
            let candidate = Candidate::FeedbackNash { solution: &fb, x0: &x0 };
            if let Some(r) = on_error(&mut tally, "feedback Nash", verify::time_consistency(&spec, &candidate, Pattern::Feedback)) {
                tally.at_most("feedback tail deviation", r.max_tail_deviation, verify::STRONG_CONSISTENCY_TOLERANCE);
                if r.verdict != Consistency::Strong {
                    tally.fail("feedback Nash not strongly time consistent".into());
                }
            }
            monitor.observe(&candidate);
        }
        if let Some(ol) = on_error(&mut tally, "open-loop Nash", openloop_nash::solve(&spec, &x0)) {
            let candidate = Candidate::OpenLoopNash(&ol);
            if let Some(r) = on_error(&mut tally, "open-loop Nash", verify::time_consistency(&spec, &candidate, Pattern::OpenLoop)) {
                tally.at_most("OL Nash tail deviation", r.max_tail_deviation, verify::WEAK_CONSISTENCY_TOLERANCE);
            }
            monitor.observe(&candidate);
        }

        let spec = random_game(&mut rng, stack_shape());
        let x0 = random_x0(&mut rng, &spec);
        if let Some(fs) = on_error(&mut tally, "feedback Stackelberg", feedback_stackelberg::solve(&spec)) {
            let candidate = Candidate::FeedbackStackelberg { solution: &fs, x0: &x0 };
            if let Some(r) = on_error(&mut tally, "feedback Stackelberg", verify::time_consistency(&spec, &candidate, Pattern::Feedback)) {
                tally.at_most("feedback tail deviation", r.max_tail_deviation, verify::STRONG_CONSISTENCY_TOLERANCE);
            }
            monitor.observe(&candidate);
        }
        if let Some(os) = on_error(&mut tally, "open-loop Stackelberg", openloop_stackelberg::solve(&spec, &x0)) {
            let candidate = Candidate::OpenLoopStackelberg(&os);
            if let Some(r) = on_error(&mut tally, "open-loop Stackelberg", verify::time_consistency(&spec, &candidate, Pattern::OpenLoop)) {
                tally.at_most("OL Stackelberg inherited-multiplier tail", r.max_tail_deviation, verify::WEAK_CONSISTENCY_TOLERANCE);
                largest_reset = largest_reset.max(r.reset_deviation.unwrap_or(0.0));
            }
            monitor.observe(&candidate);
        }
    }
    tally.at_least("OL Stackelberg reset deviation (largest)", largest_reset, 1e-3);
    tally
}

fn numerics_self_tests() -> Tally {
    let mut tally = Tally::default();
    let mut rng = rng(1006);
    for _ in 0..100 {
        let p = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=4);
        let a = random_pd(&mut rng, p);
        let b = random_matrix(&mut rng, p, m);
        if let Some((first, second)) = on_error(&mut tally, "push-through", pushthrough_residuals(&a, &b)) {
            tally.at_most("push-through residual", first.max(second), 1e-10);
        }
    }
    let mut not_pd = 0;
    for _ in 0..100 {
        let p = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=4);
        let a = random_pd(&mut rng, p);
        let b = random_psd(&mut rng, k);
        let c = random_matrix(&mut rng, k, p);
        let sum = &a + c.transpose() * &b * &c;
        match classify_definiteness(&sum, 1e-9) {
            Ok(d) if d.class == DefinitenessClass::PositiveDefinite => {}
            _ => not_pd += 1,
        }
    }
    tally.at_most("PD + congruent PSD failures", not_pd as f64, 0.0);

    let point = [0.3, -0.7, 1.1];
    let exact: Vec<f64> = point.iter().map(|v: &f64| v.exp() + v.cos()).collect();
    let mut f = |x: &[f64]| x.iter().map(|v| v.exp() + v.sin()).sum::<f64>();
    let error = |grad: Vec<f64>| grad.iter().zip(&exact).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
    let h = 1e-2;
    let ratio = error(verify::central_difference(&mut f, &point, h))
        / error(verify::central_difference(&mut f, &point, h / 2.0));
    tally.record("FD step-halving ratio", ratio);
    if !(3.5..=4.5).contains(&ratio) {
        tally.fail(format!("step-halving ratio {ratio:.3} outside [3.5, 4.5]"));
    }
    tally
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut monitor = Monitor::default();
    let results = [
        closed_forms(&mut monitor).report(1, "scalar closed forms"),
        reductions(&mut monitor).report(2, "reduction identities"),
        cross_notation(&mut monitor).report(3, "cross-notation equivalences"),
        optimality(&mut monitor).report(4, "optimality-condition residuals"),
        time_consistency(&mut monitor).report(5, "time consistency"),
        numerics_self_tests().report(6, "numerics self-tests"),
    ];
    let mut psd = Tally::default();
    for family in &monitor.families {
        psd.at_least(&format!("{} min eigenvalue", family.label), family.min_eigenvalue, verify::PSD_TOLERANCE);
        if family.min_eigenvalue < verify::PSD_TOLERANCE {
            psd.fail(format!(
                "{}: worst at {} over {} matrices",
                family.label, family.worst_entry, family.matrices
            ));
        }
    }
    let monitors_ok = psd.report(7, "definiteness monitors");
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    if results.iter().all(|ok| *ok) && monitors_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
