//! Solver-independent verification oracles.
//!
//! Every check here judges a solution only through its output objects (laws, control
//! sequences, multipliers) together with the game's state equation and costs. The
//! only solvers called are the open-loop Nash solver, used to compute the followers'
//! best response to a perturbed leader sequence, and re-solves of truncated games for
//! the time-consistency checks.
//!
//! Random perturbations come from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`),
//! drawing independent uniform entries on `[-1, 1)` that are then rescaled to the
//! requested Euclidean norm. Results depend only on the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback_stackelberg::FeedbackStackelbergSolution;
use crate::game_model::{rollout, stage_cost, step, ControlLaw, FeedbackSolution, GameSpec, Policy, Player};
use crate::numerics::{max_abs_vec, min_symmetric_eigenvalue, Matrix, Vector};
use crate::openloop_nash::{self, OpenLoopNashSolution};
use crate::openloop_stackelberg::{self, OLStackelbergSolution};
use crate::{feedback_nash, feedback_stackelberg};

/// Default number of random deviations per player.
pub const DEFAULT_SAMPLES: usize = 100;
/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Default norm of random deviations.
pub const DEFAULT_MAGNITUDE: f64 = 1e-3;
/// Largest acceptable finite-difference gradient norm.
pub const STATIONARITY_TOLERANCE: f64 = 1e-6;
/// Most negative acceptable deviation gap.
pub const GAP_TOLERANCE: f64 = -1e-8;
/// Largest acceptable tail deviation for strong time consistency.
pub const STRONG_CONSISTENCY_TOLERANCE: f64 = 1e-10;
/// Largest acceptable tail deviation for weak time consistency.
pub const WEAK_CONSISTENCY_TOLERANCE: f64 = 1e-9;
/// Largest acceptable open-loop Nash optimality-condition residual.
pub const OPENLOOP_NASH_KKT_TOLERANCE: f64 = 1e-9;
/// Largest acceptable open-loop Stackelberg optimality-condition residual.
pub const OPENLOOP_STACKELBERG_KKT_TOLERANCE: f64 = 1e-8;
/// Most negative acceptable eigenvalue of a value or costate Hessian.
pub const PSD_TOLERANCE: f64 = -1e-9;

/// Information pattern of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    OpenLoop,
    Feedback,
}

/// A solution to verify. Feedback solutions are evaluated along the play from `x0`.
#[derive(Debug, Clone, Copy)]
pub enum Candidate<'a> {
    FeedbackNash {
        solution: &'a FeedbackSolution,
        x0: &'a Vector,
    },
    FeedbackStackelberg {
        solution: &'a FeedbackStackelbergSolution,
        x0: &'a Vector,
    },
    OpenLoopNash(&'a OpenLoopNashSolution),
    OpenLoopStackelberg(&'a OLStackelbergSolution),
}

impl Candidate<'_> {
    pub fn pattern(&self) -> Pattern {
        match self {
            Candidate::FeedbackNash { .. } | Candidate::FeedbackStackelberg { .. } => Pattern::Feedback,
            _ => Pattern::OpenLoop,
        }
    }

    pub fn is_stackelberg(&self) -> bool {
        matches!(
            self,
            Candidate::FeedbackStackelberg { .. } | Candidate::OpenLoopStackelberg(_)
        )
    }

    pub fn x0(&self) -> &Vector {
        match self {
            Candidate::FeedbackNash { x0, .. } | Candidate::FeedbackStackelberg { x0, .. } => x0,
            Candidate::OpenLoopNash(sol) => &sol.x0,
            Candidate::OpenLoopStackelberg(sol) => &sol.x0,
        }
    }

    fn laws(&self) -> Option<&[Vec<ControlLaw>]> {
        match self {
            Candidate::FeedbackNash { solution, .. } => Some(&solution.laws),
            Candidate::FeedbackStackelberg { solution, .. } => Some(solution.laws()),
            _ => None,
        }
    }

    fn controls(&self) -> Option<&[Vec<Vector>]> {
        match self {
            Candidate::OpenLoopNash(sol) => Some(sol.controls()),
            Candidate::OpenLoopStackelberg(sol) => Some(sol.controls()),
            _ => None,
        }
    }
}

fn check_pattern(candidate: &Candidate<'_>, pattern: Pattern) -> Result<()> {
    if candidate.pattern() != pattern {
        return Err(Error::InvalidArgument(format!(
            "solution has {:?} pattern, {:?} requested",
            candidate.pattern(),
            pattern
        )));
    }
    Ok(())
}

fn check_player(spec: &GameSpec, player: usize) -> Result<()> {
    if player >= spec.player_count() {
        return Err(Error::InvalidArgument(format!("player index {player} out of range")));
    }
    Ok(())
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn flatten(seq: &[Vector]) -> Vec<f64> {
    seq.iter().flat_map(|v| v.iter().copied()).collect()
}

fn unflatten(data: &[f64], like: &[Vector]) -> Vec<Vector> {
    let mut offset = 0;
    like.iter()
        .map(|v| {
            let out = Vector::from_column_slice(&data[offset..offset + v.len()]);
            offset += v.len();
            out
        })
        .collect()
}

fn sequence_cost(spec: &GameSpec, controls: &[Vec<Vector>], x0: &Vector, player: usize) -> Result<f64> {
    Ok(rollout(spec, Policy::Controls(controls), x0)?.total_costs[player])
}

/// The followers' game once the leader's control sequence is fixed: player 0 is
/// removed and `B^1 u_t^1` is folded into the drift.
pub fn follower_game(spec: &GameSpec, leader_controls: &[Vector]) -> GameSpec {
    let players: Vec<Player> = spec.players[1..].to_vec();
    let stages = spec
        .stages
        .iter()
        .zip(leader_controls)
        .map(|(stage, u1)| {
            let mut reduced = stage.clone();
            reduced.s = &stage.s + &stage.b[0] * u1;
            reduced.b.remove(0);
            reduced.q.remove(0);
            reduced.x_target.remove(0);
            reduced.r.remove(0);
            reduced.u_target.remove(0);
            for row in &mut reduced.r {
                row.remove(0);
            }
            for row in &mut reduced.u_target {
                row.remove(0);
            }
            reduced
        })
        .collect();
    GameSpec::new(spec.state_dim, players, stages)
}

/// All players' control sequences when the leader commits to `leader_controls` and
/// the followers answer with their open-loop Nash response.
pub fn followers_respond(spec: &GameSpec, leader_controls: &[Vector], x0: &Vector) -> Result<Vec<Vec<Vector>>> {
    let reduced = follower_game(spec, leader_controls);
    let response = openloop_nash::solve(&reduced, x0)?;
    let mut controls = vec![leader_controls.to_vec()];
    controls.extend(response.trajectory.controls);
    Ok(controls)
}

/// Leader cost when it commits to `leader_controls` and the followers best-respond.
fn leader_cost_open_loop(spec: &GameSpec, leader_controls: &[Vector], x0: &Vector) -> Result<f64> {
    let controls = followers_respond(spec, leader_controls, x0)?;
    sequence_cost(spec, &controls, x0, 0)
}

/// How the non-deviating players act at each stage of a feedback play.
enum Responders<'a> {
    Laws(&'a [Vec<ControlLaw>]),
    /// Leader deviates; followers react to the leader's actual control.
    Reacting(&'a FeedbackStackelbergSolution),
}

/// Plays stages `t0..T` from `x`, with `player`'s stage control produced by `decide`
/// and everybody else per `responders`; returns every player's accumulated cost.
fn play_feedback(
    spec: &GameSpec,
    t0: usize,
    x: &Vector,
    player: usize,
    responders: &Responders<'_>,
    decide: &mut dyn FnMut(usize, &Vector) -> Vector,
) -> Result<Vec<f64>> {
    let n = spec.player_count();
    let mut costs = vec![0.0; n];
    let mut state = x.clone();
    for t in t0..spec.horizon {
        let own = decide(t, &state);
        let controls: Vec<Vector> = match responders {
            Responders::Laws(laws) => (0..n)
                .map(|j| if j == player { own.clone() } else { laws[t][j].apply(&state) })
                .collect(),
            Responders::Reacting(sol) => {
                let mut all = vec![own.clone()];
                all.extend(feedback_stackelberg::stage_reaction(sol, t, &state, &own));
                all
            }
        };
        let next = step(spec, t, &state, &controls);
        for (i, c) in costs.iter_mut().enumerate() {
            *c += stage_cost(spec, i, t, &next, &controls)?;
        }
        state = next;
    }
    Ok(costs)
}

fn feedback_states(spec: &GameSpec, laws: &[Vec<ControlLaw>], x0: &Vector) -> Result<Vec<Vector>> {
    Ok(rollout(spec, Policy::Laws(laws), x0)?.states)
}

/// Per-player finite-difference stationarity residuals.
///
/// Open loop: the central-difference gradient of player `i`'s total cost over its
/// whole control sequence, others fixed; for a Stackelberg leader the followers
/// re-solve their open-loop Nash response at every probe. Feedback: at every stage of
/// the play from `x0`, the gradient of player `i`'s cost-to-go in its stage control,
/// with the others at their laws (followers reacting when `i` is the Stackelberg
/// leader) and equilibrium play afterwards. The residual is the max-norm of all
/// gradient entries.
pub fn stationarity(spec: &GameSpec, candidate: &Candidate<'_>, pattern: Pattern, h: f64) -> Result<Vec<f64>> {
    check_pattern(candidate, pattern)?;
    (0..spec.player_count())
        .map(|i| player_stationarity(spec, candidate, i, h))
        .collect()
}

fn player_stationarity(spec: &GameSpec, candidate: &Candidate<'_>, player: usize, h: f64) -> Result<f64> {
    let x0 = candidate.x0();
    if let Some(controls) = candidate.controls() {
        let base = flatten(&controls[player]);
        let leader_reacted = candidate.is_stackelberg() && player == 0;
        let mut failure = None;
        let mut cost = |u: &[f64]| {
            let own = unflatten(u, &controls[player]);
            let result = if leader_reacted {
                leader_cost_open_loop(spec, &own, x0)
            } else {
                let mut all = controls.to_vec();
                all[player] = own;
                sequence_cost(spec, &all, x0, player)
            };
            result.unwrap_or_else(|e| {
                failure = Some(e);
                f64::NAN
            })
        };
        let grad = central_difference(&mut cost, &base, h);
        if let Some(e) = failure {
            return Err(e);
        }
        return Ok(grad.iter().fold(0.0, |a, g| a.max(g.abs())));
    }
    let laws = candidate.laws().expect("feedback candidates carry laws");
    let states = feedback_states(spec, laws, x0)?;
    let responders = match candidate {
        Candidate::FeedbackStackelberg { solution, .. } if player == 0 => Responders::Reacting(solution),
        _ => Responders::Laws(laws),
    };
    let mut worst: f64 = 0.0;
    for t in 0..spec.horizon {
        let base: Vec<f64> = laws[t][player].apply(&states[t]).iter().copied().collect();
        let mut failure = None;
        let mut cost = |u: &[f64]| {
            let stage_control = Vector::from_column_slice(u);
            let mut decide = |s: usize, x: &Vector| {
                if s == t {
                    stage_control.clone()
                } else {
                    laws[s][player].apply(x)
                }
            };
            match play_feedback(spec, t, &states[t], player, &responders, &mut decide) {
                Ok(costs) => costs[player],
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        };
        let grad = central_difference(&mut cost, &base, h);
        if let Some(e) = failure {
            return Err(e);
        }
        worst = grad.iter().fold(worst, |a, g| a.max(g.abs()));
    }
    Ok(worst)
}

fn random_direction(rng: &mut ChaCha8Rng, len: usize, magnitude: f64) -> Vec<f64> {
    loop {
        let draw: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = draw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return draw.iter().map(|v| v * magnitude / norm).collect();
        }
    }
}

fn perturbed_laws(rng: &mut ChaCha8Rng, laws: &[ControlLaw], magnitude: f64) -> Vec<ControlLaw> {
    let len: usize = laws.iter().map(|l| l.gain.len() + l.offset.len()).sum();
    let delta = random_direction(rng, len, magnitude);
    let mut offset = 0;
    laws.iter()
        .map(|law| {
            let (rows, cols) = law.gain.shape();
            let dg = Matrix::from_column_slice(rows, cols, &delta[offset..offset + rows * cols]);
            offset += rows * cols;
            let dv = Vector::from_column_slice(&delta[offset..offset + rows]);
            offset += rows;
            ControlLaw::new(&law.gain + dg, &law.offset + dv)
        })
        .collect()
}

/// Smallest cost change of `player` over `samples` random unilateral deviations.
///
/// Open loop: additive perturbations of the player's whole control sequence with
/// Euclidean norm `magnitude`. Feedback: perturbations of the player's gains and
/// offsets at every stage (joint norm `magnitude`) with the play re-rolled from `x0`.
/// For a Stackelberg leader this delegates to [`leader_gap`].
pub fn deviation_gap(
    spec: &GameSpec,
    candidate: &Candidate<'_>,
    pattern: Pattern,
    player: usize,
    samples: usize,
    magnitude: f64,
    seed: u64,
) -> Result<f64> {
    check_pattern(candidate, pattern)?;
    check_player(spec, player)?;
    if candidate.is_stackelberg() && player == 0 {
        return leader_gap(spec, candidate, pattern, samples, magnitude, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = candidate.x0();
    let mut worst = f64::INFINITY;
    if let Some(controls) = candidate.controls() {
        let reference = sequence_cost(spec, controls, x0, player)?;
        let base = flatten(&controls[player]);
        for _ in 0..samples {
            let delta = random_direction(&mut rng, base.len(), magnitude);
            let moved: Vec<f64> = base.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let mut all = controls.to_vec();
            all[player] = unflatten(&moved, &controls[player]);
            worst = worst.min(sequence_cost(spec, &all, x0, player)? - reference);
        }
    } else {
        let laws = candidate.laws().expect("feedback candidates carry laws");
        let reference = rollout(spec, Policy::Laws(laws), x0)?.total_costs[player];
        let own: Vec<ControlLaw> = laws.iter().map(|stage| stage[player].clone()).collect();
        for _ in 0..samples {
            let deviated = perturbed_laws(&mut rng, &own, magnitude);
            let mut all = laws.to_vec();
            for (t, law) in deviated.into_iter().enumerate() {
                all[t][player] = law;
            }
            worst = worst.min(rollout(spec, Policy::Laws(&all), x0)?.total_costs[player] - reference);
        }
    }
    Ok(if samples == 0 { 0.0 } else { worst })
}

/// Smallest change of the leader's cost over `samples` random leader deviations,
/// with followers re-optimizing: open loop by re-solving their open-loop Nash game
/// against the perturbed sequence, feedback by reacting stage by stage.
pub fn leader_gap(
    spec: &GameSpec,
    candidate: &Candidate<'_>,
    pattern: Pattern,
    samples: usize,
    magnitude: f64,
    seed: u64,
) -> Result<f64> {
    check_pattern(candidate, pattern)?;
    if !candidate.is_stackelberg() {
        return Err(Error::InvalidArgument("leader gaps need a Stackelberg solution".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = candidate.x0();
    let mut worst = f64::INFINITY;
    match candidate {
        Candidate::OpenLoopStackelberg(sol) => {
            let leader = &sol.controls()[0];
            let reference = leader_cost_open_loop(spec, leader, x0)?;
            let base = flatten(leader);
            for _ in 0..samples {
                let delta = random_direction(&mut rng, base.len(), magnitude);
                let moved: Vec<f64> = base.iter().zip(&delta).map(|(a, d)| a + d).collect();
                let cost = leader_cost_open_loop(spec, &unflatten(&moved, leader), x0)?;
                worst = worst.min(cost - reference);
            }
        }
        Candidate::FeedbackStackelberg { solution, .. } => {
            let laws = solution.laws();
            let own: Vec<ControlLaw> = laws.iter().map(|stage| stage[0].clone()).collect();
            let responders = Responders::Reacting(solution);
            let mut equilibrium = |t: usize, x: &Vector| own[t].apply(x);
            let reference = play_feedback(spec, 0, x0, 0, &responders, &mut equilibrium)?[0];
            for _ in 0..samples {
                let deviated = perturbed_laws(&mut rng, &own, magnitude);
                let mut decide = |t: usize, x: &Vector| deviated[t].apply(x);
                let cost = play_feedback(spec, 0, x0, 0, &responders, &mut decide)?[0];
                worst = worst.min(cost - reference);
            }
        }
        _ => unreachable!("checked above"),
    }
    Ok(if samples == 0 { 0.0 } else { worst })
}

/// Time-consistency verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Strong,
    Weak,
    Neither,
}

/// Outcome of [`time_consistency`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConsistencyReport {
    pub verdict: Consistency,
    /// Largest tail difference after re-solving every truncated game.
    pub max_tail_deviation: f64,
    /// Open-loop Stackelberg only: largest tail difference when the truncated game is
    /// re-solved with the leader's multipliers reset to zero. Expected to be large.
    pub reset_deviation: Option<f64>,
}

/// Re-solves every truncated game `[s, T)` and compares with the tail of the solution.
///
/// Feedback solutions are compared law by law (strong consistency, no state enters).
/// Open-loop Nash is re-solved from `x_s` and compared control by control (weak
/// consistency). Open-loop Stackelberg is re-solved from `(x_s, mu_s)` for the weak
/// verdict and from `(x_s, 0)` for the reported reset deviation.
pub fn time_consistency(spec: &GameSpec, candidate: &Candidate<'_>, pattern: Pattern) -> Result<TimeConsistencyReport> {
    check_pattern(candidate, pattern)?;
    let mut tail: f64 = 0.0;
    let mut reset: Option<f64> = None;
    for s in 1..spec.horizon {
        let truncated = spec.truncated(s);
        match candidate {
            Candidate::FeedbackNash { solution, .. } => {
                let again = feedback_nash::solve(&truncated)?;
                tail = tail.max(crate::lq_control::law_deviation(&solution.laws[s..], &again.laws));
            }
            Candidate::FeedbackStackelberg { solution, .. } => {
                let again = feedback_stackelberg::solve(&truncated)?;
                tail = tail.max(crate::lq_control::law_deviation(&solution.laws()[s..], again.laws()));
            }
            Candidate::OpenLoopNash(sol) => {
                let again = openloop_nash::solve(&truncated, &sol.trajectory.states[s])?;
                tail = tail.max(tail_deviation(sol.controls(), again.controls(), s));
            }
            Candidate::OpenLoopStackelberg(sol) => {
                let x_s = &sol.trajectory.states[s];
                let mu_s: Vec<Vector> = sol.multipliers.iter().map(|m| m[s].clone()).collect();
                let inherited = openloop_stackelberg::solve_from(&truncated, x_s, &mu_s)?;
                tail = tail.max(tail_deviation(sol.controls(), inherited.controls(), s));
                let restarted = openloop_stackelberg::solve(&truncated, x_s)?;
                let d = tail_deviation(sol.controls(), restarted.controls(), s);
                reset = Some(reset.unwrap_or(0.0).max(d));
            }
        }
    }
    if matches!(candidate, Candidate::OpenLoopStackelberg(_)) && reset.is_none() {
        reset = Some(0.0);
    }
    let verdict = match pattern {
        Pattern::Feedback if tail <= STRONG_CONSISTENCY_TOLERANCE => Consistency::Strong,
        Pattern::OpenLoop if tail <= WEAK_CONSISTENCY_TOLERANCE => Consistency::Weak,
        _ => Consistency::Neither,
    };
    Ok(TimeConsistencyReport {
        verdict,
        max_tail_deviation: tail,
        reset_deviation: reset,
    })
}

fn tail_deviation(full: &[Vec<Vector>], tail: &[Vec<Vector>], from: usize) -> f64 {
    full.iter()
        .zip(tail)
        .flat_map(|(f, t)| f[from..].iter().zip(t))
        .map(|(a, b)| max_abs_vec(&(a - b)))
        .fold(0.0, f64::max)
}

/// One entry of the definiteness monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEntry {
    pub stage: usize,
    pub player: usize,
    pub matrix: String,
    pub min_eigenvalue: f64,
}

/// Smallest eigenvalue of every value Hessian `Z_t^i` (feedback) or of the symmetric
/// part of every costate Hessian `M_t^i` / `M_t^{ix}` (open loop), for `t = 0..=T`.
pub fn definiteness_monitor(candidate: &Candidate<'_>) -> Vec<MonitorEntry> {
    let (name, sequences, first_player): (&str, Vec<&Vec<Matrix>>, usize) = match candidate {
        Candidate::FeedbackNash { solution, .. } => ("Z", solution.value_hessian.iter().collect(), 0),
        Candidate::FeedbackStackelberg { solution, .. } => {
            ("Z", solution.equilibrium.value_hessian.iter().collect(), 0)
        }
        Candidate::OpenLoopNash(sol) => ("M", sol.costate_hessian.iter().collect(), 0),
        Candidate::OpenLoopStackelberg(_) => ("M^x", Vec::new(), 1),
    };
    let mut log = Vec::new();
    if let Candidate::OpenLoopStackelberg(sol) = candidate {
        for (t, coeff) in sol.recursion.costates.iter().enumerate() {
            for (k, follower) in coeff.follower.iter().enumerate() {
                log.push(MonitorEntry {
                    stage: t,
                    player: k + first_player,
                    matrix: name.to_string(),
                    min_eigenvalue: min_symmetric_eigenvalue(&follower.state),
                });
            }
        }
        return log;
    }
    for (i, seq) in sequences.into_iter().enumerate() {
        for (t, m) in seq.iter().enumerate() {
            log.push(MonitorEntry {
                stage: t,
                player: i + first_player,
                matrix: name.to_string(),
                min_eigenvalue: min_symmetric_eigenvalue(m),
            });
        }
    }
    log
}

/// Largest residual of the open-loop Nash optimality conditions along the path:
/// the state equation, the costate recursion `p_t = A'(p_{t+1} + Q(x_{t+1} - xt))`
/// with `p_T = 0`, and stationarity `R^{ii}(u^i - ut^{ii}) + B^i'(Q^i(x_{t+1} - xt^i) + p_{t+1}^i) = 0`.
pub fn openloop_nash_kkt(spec: &GameSpec, sol: &OpenLoopNashSolution) -> f64 {
    let costates = openloop_nash::costates(spec, sol);
    let states = &sol.trajectory.states;
    let mut worst: f64 = 0.0;
    for t in 0..spec.horizon {
        let stage = &spec.stages[t];
        let controls = sol.trajectory.controls_at(t);
        worst = worst.max(max_abs_vec(&(step(spec, t, &states[t], &controls) - &states[t + 1])));
        worst = worst.max(max_abs_vec(
            &(&sol.transition[t] * &states[t] + &sol.transition_offset[t] - &states[t + 1]),
        ));
        for i in 0..spec.player_count() {
            let pull = &stage.q[i] * (&states[t + 1] - &stage.x_target[i]);
            let adjoint = stage.a.transpose() * (&costates[i][t + 1] + &pull) - &costates[i][t];
            let station = &stage.r[i][i] * (&controls[i] - &stage.u_target[i][i])
                + stage.b[i].transpose() * (&pull + &costates[i][t + 1]);
            worst = worst.max(max_abs_vec(&adjoint)).max(max_abs_vec(&station));
        }
    }
    for p in &costates {
        worst = worst.max(max_abs_vec(&p[spec.horizon]));
    }
    worst
}

/// Residuals of the seven families of open-loop Stackelberg optimality conditions,
/// evaluated on the reconstructed multipliers, in the order: leader stationarity in
/// its own control, leader stationarity in each follower's control, leader costate
/// recursion, multiplier recursion, follower stationarity, follower costate
/// recursion, state equation. Boundary conditions (`lambda_T = 0`, `mu_0 = 0` for the
/// equilibrium, `p_T = 0`) are folded into their families.
pub fn openloop_stackelberg_kkt(spec: &GameSpec, sol: &OLStackelbergSolution) -> [f64; 7] {
    let n = spec.player_count();
    let nf = n - 1;
    let x = &sol.trajectory.states;
    let lambda = &sol.leader_costate;
    let p = &sol.follower_costates;
    let mu = &sol.multipliers;
    let v = &sol.cocontrols;
    let mut r = [0.0_f64; 7];
    r[2] = max_abs_vec(&lambda[spec.horizon]);
    for k in 0..nf {
        r[3] = r[3].max(max_abs_vec(&(&mu[k][0] - &sol.mu0[k])));
        r[5] = r[5].max(max_abs_vec(&p[k][spec.horizon]));
    }
    for t in 0..spec.horizon {
        let stage = &spec.stages[t];
        let u = sol.trajectory.controls_at(t);
        // Leader's post-decision sensitivity: Q^1(x_{t+1} - xt^1) + lambda_{t+1} + sum_j Q^j mu_{t+1}^j.
        let mut sensitivity = &stage.q[0] * (&x[t + 1] - &stage.x_target[0]) + &lambda[t + 1];
        for k in 0..nf {
            sensitivity += &stage.q[k + 1] * (&stage.a * &mu[k][t] + &stage.b[k + 1] * &v[k][t]);
        }
        let own = &stage.r[0][0] * (&u[0] - &stage.u_target[0][0]) + stage.b[0].transpose() * &sensitivity;
        r[0] = r[0].max(max_abs_vec(&own));
        r[2] = r[2].max(max_abs_vec(&(stage.a.transpose() * &sensitivity - &lambda[t])));
        for k in 0..nf {
            let i = k + 1;
            let cross = &stage.r[0][i] * (&u[i] - &stage.u_target[0][i])
                + stage.b[i].transpose() * &sensitivity
                + &stage.r[i][i] * &v[k][t];
            r[1] = r[1].max(max_abs_vec(&cross));
            let mu_next = &stage.a * &mu[k][t] + &stage.b[i] * &v[k][t];
            r[3] = r[3].max(max_abs_vec(&(mu_next - &mu[k][t + 1])));
            let pull = &stage.q[i] * (&x[t + 1] - &stage.x_target[i]);
            let station = &stage.r[i][i] * (&u[i] - &stage.u_target[i][i])
                + stage.b[i].transpose() * (&pull + &p[k][t + 1]);
            r[4] = r[4].max(max_abs_vec(&station));
            let adjoint = stage.a.transpose() * (&p[k][t + 1] + &pull) - &p[k][t];
            r[5] = r[5].max(max_abs_vec(&adjoint));
        }
        r[6] = r[6].max(max_abs_vec(&(step(spec, t, &x[t], &u) - &x[t + 1])));
    }
    r
}

/// Settings for [`verify_all`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub samples: usize,
    pub fd_step: f64,
    pub magnitude: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            fd_step: DEFAULT_FD_STEP,
            magnitude: DEFAULT_MAGNITUDE,
            seed: 0,
        }
    }
}

/// Every oracle's outcome for one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub pattern: Pattern,
    pub options: VerifyOptions,
    /// Per player.
    pub stationarity: Vec<f64>,
    /// Per player; the leader's entry of a Stackelberg solution is its leader gap.
    pub deviation_gaps: Vec<f64>,
    /// Open-loop solutions only.
    pub kkt_residual: Option<f64>,
    pub time_consistency: TimeConsistencyReport,
    pub definiteness: Vec<MonitorEntry>,
    /// Human-readable list of violated checks; empty when everything passes.
    pub failures: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every applicable oracle and collects violations of the default tolerances.
pub fn verify_all(spec: &GameSpec, candidate: &Candidate<'_>, options: VerifyOptions) -> Result<VerificationReport> {
    let pattern = candidate.pattern();
    let stationarity = stationarity(spec, candidate, pattern, options.fd_step)?;
    let deviation_gaps = (0..spec.player_count())
        .map(|i| {
            deviation_gap(
                spec,
                candidate,
                pattern,
                i,
                options.samples,
                options.magnitude,
                options.seed.wrapping_add(i as u64),
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let kkt_residual = match candidate {
        Candidate::OpenLoopNash(sol) => Some(openloop_nash_kkt(spec, sol)),
        Candidate::OpenLoopStackelberg(sol) => {
            Some(openloop_stackelberg_kkt(spec, sol).iter().copied().fold(0.0, f64::max))
        }
        _ => None,
    };
    let time_consistency = time_consistency(spec, candidate, pattern)?;
    let definiteness = definiteness_monitor(candidate);

    let mut failures = Vec::new();
    for (i, r) in stationarity.iter().enumerate() {
        if r.is_nan() || *r > STATIONARITY_TOLERANCE {
            failures.push(format!("player {}: stationarity residual {r:.3e}", i + 1));
        }
    }
    for (i, g) in deviation_gaps.iter().enumerate() {
        if g.is_nan() || *g < GAP_TOLERANCE {
            failures.push(format!("player {}: deviation gap {g:.3e}", i + 1));
        }
    }
    if let Some(k) = kkt_residual {
        let limit = if candidate.is_stackelberg() {
            OPENLOOP_STACKELBERG_KKT_TOLERANCE
        } else {
            OPENLOOP_NASH_KKT_TOLERANCE
        };
        if k.is_nan() || k > limit {
            failures.push(format!("optimality-condition residual {k:.3e}"));
        }
    }
    if time_consistency.verdict == Consistency::Neither {
        failures.push(format!(
            "time consistency: tail deviation {:.3e}",
            time_consistency.max_tail_deviation
        ));
    }
    for entry in &definiteness {
        if entry.min_eigenvalue < PSD_TOLERANCE {
            failures.push(format!(
                "{} of player {} at index {}: min eigenvalue {:.3e}",
                entry.matrix,
                entry.player + 1,
                entry.stage,
                entry.min_eigenvalue
            ));
        }
    }
    Ok(VerificationReport {
        pattern,
        options,
        stationarity,
        deviation_gaps,
        kkt_residual,
        time_consistency,
        definiteness,
        failures,
    })
}
