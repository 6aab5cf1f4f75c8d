//! Feedback Stackelberg equilibria with player 0 as leader and all others as followers.
//!
//! At every stage the followers play a Nash game among themselves in response to the
//! leader's stage control, using their equilibrium costs-to-go. Their joint response
//! is affine, `r^i = W^i x + Rbar^i u^1 + w^i`, and the leader minimizes its own
//! stage cost plus cost-to-go anticipating that response.

use crate::error::{Error, Result};
use crate::feedback_nash::{assemble, propagate_values, ValueCoefficients};
use crate::game_model::{validate_stackelberg, ControlLaw, FeedbackSolution, GameSpec};
use crate::numerics::{max_abs, solve_blocks, solve_dense, Matrix, Vector, DEFAULT_TOLERANCE};

/// Follower reaction coefficients at one stage, indexed by follower position
/// (entry `k` belongs to player `k + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct StageReaction {
    /// Sensitivity of each follower's control to the leader's control (`m_i x m_1`).
    pub leader_sensitivity: Vec<Matrix>,
    /// Dependence of each follower's control on the state (`m_i x p`).
    pub state_response: Vec<Matrix>,
    /// Constant part of each follower's response (`m_i`).
    pub offset_response: Vec<Vector>,
}

impl StageReaction {
    /// Followers' controls in response to leader control `u1` at state `x`.
    pub fn respond(&self, x: &Vector, u1: &Vector) -> Vec<Vector> {
        (0..self.state_response.len())
            .map(|k| {
                &self.state_response[k] * x
                    + &self.leader_sensitivity[k] * u1
                    + &self.offset_response[k]
            })
            .collect()
    }
}

/// Feedback Stackelberg laws, value coefficients, and per-stage follower reactions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackStackelbergSolution {
    pub equilibrium: FeedbackSolution,
    pub reactions: Vec<StageReaction>,
}

impl FeedbackStackelbergSolution {
    pub fn laws(&self) -> &[Vec<ControlLaw>] {
        &self.equilibrium.laws
    }
}

/// Feedback Stackelberg equilibrium with player 0 leading.
///
/// Per stage, with successor coefficients `Z^i, zeta^i`, the followers' operator
/// `D_{ij} = delta_{ij} R^{ii} + B^i'Z^iB^j` is factored once and solved against the
/// three right-hand families `-B^i'Z^iB^1`, `-B^i'Z^iA`, and
/// `-(B^i'(Z^i s + zeta^i - Q^i xt^i) - R^{ii} ut^{ii})`, giving `Rbar`, `W`, `w`.
/// With `Bbar = B^1 + sum_j B^j Rbar^j` the leader's stage Hessian is
/// `Bbar'Z^1Bbar + R^{11} + sum_j Rbar^j'R^{1j}Rbar^j` and its law follows from the
/// leader's first-order condition; follower laws are `G^i = W^i + Rbar^i G^1` and
/// `g^i = w^i + Rbar^i g^1`.
pub fn solve(spec: &GameSpec) -> Result<FeedbackStackelbergSolution> {
    validate_stackelberg(spec, DEFAULT_TOLERANCE).into_result()?;
    let n = spec.player_count();
    let p = spec.state_dim;
    let m1 = spec.control_dim(0);
    let mut next = ValueCoefficients::terminal(spec);
    let mut values = vec![next.clone()];
    let mut laws = Vec::with_capacity(spec.horizon);
    let mut reactions = Vec::with_capacity(spec.horizon);
    for t in (0..spec.horizon).rev() {
        let stage = &spec.stages[t];
        let followers: Vec<usize> = (1..n).collect();
        let weighted: Vec<Matrix> = (0..n)
            .map(|i| stage.b[i].transpose() * &next.hessian[i])
            .collect();
        let blocks: Vec<Vec<Matrix>> = followers
            .iter()
            .map(|&i| {
                followers
                    .iter()
                    .map(|&j| {
                        let coupling = &weighted[i] * &stage.b[j];
                        if i == j {
                            coupling + &stage.r[i][i]
                        } else {
                            coupling
                        }
                    })
                    .collect()
            })
            .collect();
        let rhs: Vec<Matrix> = followers
            .iter()
            .map(|&i| {
                let mut cols = Matrix::zeros(spec.control_dim(i), m1 + p + 1);
                cols.columns_mut(0, m1).copy_from(&-(&weighted[i] * &stage.b[0]));
                cols.columns_mut(m1, p).copy_from(&-(&weighted[i] * &stage.a));
                let forcing = &weighted[i] * &stage.s
                    + stage.b[i].transpose() * (&next.linear[i] - &stage.q[i] * &stage.x_target[i])
                    - &stage.r[i][i] * &stage.u_target[i][i];
                cols.set_column(m1 + p, &-forcing);
                cols
            })
            .collect();
        let solved = solve_blocks(&blocks, &rhs, "feedback Stackelberg follower reaction system")
            .map_err(|e| e.at_stage(t))?;
        let reaction = StageReaction {
            leader_sensitivity: solved.iter().map(|x| x.columns(0, m1).into_owned()).collect(),
            state_response: solved.iter().map(|x| x.columns(m1, p).into_owned()).collect(),
            offset_response: solved.iter().map(|x| x.column(m1 + p).into_owned()).collect(),
        };

        // Leader: effective input, state map, and drift once the followers react.
        let mut effective_input = stage.b[0].clone();
        let mut reacted_state = stage.a.clone();
        let mut reacted_drift = stage.s.clone();
        for (k, &j) in followers.iter().enumerate() {
            effective_input += &stage.b[j] * &reaction.leader_sensitivity[k];
            reacted_state += &stage.b[j] * &reaction.state_response[k];
            reacted_drift += &stage.b[j] * &reaction.offset_response[k];
        }
        let z1 = &next.hessian[0];
        let bbar_t = effective_input.transpose();
        let mut leader_hessian = &bbar_t * z1 * &effective_input + &stage.r[0][0];
        let mut gain_rhs = &bbar_t * z1 * &reacted_state;
        let mut offset_rhs = &bbar_t
            * (z1 * &reacted_drift + &next.linear[0] - &stage.q[0] * &stage.x_target[0])
            - &stage.r[0][0] * &stage.u_target[0][0];
        for (k, &j) in followers.iter().enumerate() {
            let sens_t_r = reaction.leader_sensitivity[k].transpose() * &stage.r[0][j];
            leader_hessian += &sens_t_r * &reaction.leader_sensitivity[k];
            gain_rhs += &sens_t_r * &reaction.state_response[k];
            offset_rhs += &sens_t_r * (&reaction.offset_response[k] - &stage.u_target[0][j]);
        }
        let mut leader_rhs = Matrix::zeros(m1, p + 1);
        leader_rhs.columns_mut(0, p).copy_from(&gain_rhs);
        leader_rhs.set_column(p, &offset_rhs);
        let leader = solve_dense(&leader_hessian, &leader_rhs, "feedback Stackelberg leader Hessian")
            .map_err(|e| e.at_stage(t))?;
        let leader_gain = -leader.columns(0, p).into_owned();
        let leader_offset = -leader.column(p).into_owned();

        let mut stage_laws = Vec::with_capacity(n);
        for k in 0..followers.len() {
            let sens = &reaction.leader_sensitivity[k];
            stage_laws.push(ControlLaw::new(
                &reaction.state_response[k] + sens * &leader_gain,
                &reaction.offset_response[k] + sens * &leader_offset,
            ));
        }
        stage_laws.insert(0, ControlLaw::new(leader_gain, leader_offset));

        next = propagate_values(spec, t, &stage_laws, &next);
        values.push(next.clone());
        laws.push(stage_laws);
        reactions.push(reaction);
    }
    laws.reverse();
    values.reverse();
    reactions.reverse();
    Ok(FeedbackStackelbergSolution {
        equilibrium: assemble(spec, laws, values),
        reactions,
    })
}

/// Followers' optimal stage-`t` controls against leader control `u1` at state `x`,
/// assuming equilibrium play from stage `t + 1` on.
pub fn stage_reaction(
    sol: &FeedbackStackelbergSolution,
    t: usize,
    x: &Vector,
    u1: &Vector,
) -> Vec<Vector> {
    sol.reactions[t].respond(x, u1)
}

fn check_two_player_lq(spec: &GameSpec) -> Result<()> {
    validate_stackelberg(spec, DEFAULT_TOLERANCE).into_result()?;
    if spec.player_count() != 2 {
        return Err(Error::Precondition("the two-player closed form needs exactly two players".into()));
    }
    if !spec.is_linear_quadratic() {
        return Err(Error::Precondition("the two-player closed form needs zero drift and targets".into()));
    }
    for (t, stage) in spec.stages.iter().enumerate() {
        for i in 0..2 {
            let r = &stage.r[i][i];
            if max_abs(&(r - Matrix::identity(r.nrows(), r.ncols()))) != 0.0 {
                return Err(Error::Precondition(format!(
                    "the two-player closed form needs R^{{{0}{0}}} = I (stage {t})",
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

/// Two-player linear-quadratic Stackelberg laws from the push-through closed form.
///
/// With `E = (I + B^2 B^2' L^2)^-1` and `F = (I + B^2'L^2 B^2)^-1` the leader gain is
///
/// ```text
/// S^1 = [B^1'(E'L^1E + L^2B^2 F R^{12} F B^2'L^2) B^1 + I]^-1 B^1'(E'L^1E + L^2B^2 F R^{12} F B^2'L^2) A
/// ```
///
/// the follower gain is `S^2 = F B^2'L^2 (A - B^1 S^1)`, and the laws are `u^i = -S^i x`.
/// `L^i` follow the same recursion as the value Hessians.
pub fn solve_two_player_lq(spec: &GameSpec) -> Result<Vec<Vec<ControlLaw>>> {
    check_two_player_lq(spec)?;
    let p = spec.state_dim;
    let ip = Matrix::identity(p, p);
    let mut l = spec.stages[spec.horizon - 1].q.clone();
    let mut laws = Vec::with_capacity(spec.horizon);
    for t in (0..spec.horizon).rev() {
        let stage = &spec.stages[t];
        let (a, b1, b2) = (&stage.a, &stage.b[0], &stage.b[1]);
        let m1 = b1.ncols();
        let m2 = b2.ncols();
        let e = solve_dense(&(&ip + b2 * b2.transpose() * &l[1]), &ip, "follower closed-loop map")
            .map_err(|err| err.at_stage(t))?;
        let f = solve_dense(
            &(Matrix::identity(m2, m2) + b2.transpose() * &l[1] * b2),
            &Matrix::identity(m2, m2),
            "follower stage Hessian",
        )
        .map_err(|err| err.at_stage(t))?;
        let cross = &l[1] * b2 * &f * &stage.r[0][1] * &f * b2.transpose() * &l[1];
        let kernel = e.transpose() * &l[0] * &e + cross;
        let leader_hessian = b1.transpose() * &kernel * b1 + Matrix::identity(m1, m1);
        let s1 = solve_dense(&leader_hessian, &(b1.transpose() * &kernel * a), "leader closed form")
            .map_err(|err| err.at_stage(t))?;
        let s2 = &f * b2.transpose() * &l[1] * (a - b1 * &s1);
        let closed = a - b1 * &s1 - b2 * &s2;
        let gains = [s1, s2];
        let mut next_l = Vec::with_capacity(2);
        for i in 0..2 {
            let mut lt = spec.state_weight(t, i) + closed.transpose() * &l[i] * &closed;
            for (j, g) in gains.iter().enumerate() {
                lt += g.transpose() * &stage.r[i][j] * g;
            }
            next_l.push((&lt + lt.transpose()) * 0.5);
        }
        l = next_l;
        laws.push(
            gains
                .iter()
                .map(|g| ControlLaw::new(-g, Vector::zeros(g.nrows())))
                .collect(),
        );
    }
    laws.reverse();
    Ok(laws)
}

/// Largest gain difference between [`solve`] and [`solve_two_player_lq`].
pub fn crosscheck_two_player_lq(spec: &GameSpec) -> Result<f64> {
    let main = solve(spec)?;
    let closed_form = solve_two_player_lq(spec)?;
    Ok(crate::lq_control::law_deviation(main.laws(), &closed_form))
}
