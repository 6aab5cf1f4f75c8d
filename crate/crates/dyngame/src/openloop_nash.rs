//! Open-loop Nash equilibria from costate recursions.
//!
//! Each player's minimum-principle costate is affine in the current state,
//! `p_t^i = (M_t^i - W_t^i) x_t + m_t^i` with `W_t^i` the weight on `x_t`. A backward pass
//! computes `M, m` together with the equilibrium state transition
//! `x_{t+1} = Phi_t x_t + phi_t`; a forward pass then produces the committed control
//! sequences from `x0`.

use crate::error::Result;
use crate::game_model::{ensure_valid, rollout, ControlLaw, GameSpec, Policy, Trajectory};
use crate::numerics::{solve_dense, Matrix, Vector};

/// Open-loop Nash equilibrium from a fixed initial state.
///
/// `costate_hessian[i][t]` and `costate_offset[i][t]` (for `t = 0..=T`) are `M_t^i` and
/// `m_t^i`. `path_laws[t][i]` reproduces the equilibrium control as an affine function
/// of the equilibrium state `x_t`; evaluated off the equilibrium path it is an
/// extrapolation, not an equilibrium strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopNashSolution {
    pub x0: Vector,
    pub trajectory: Trajectory,
    pub costate_hessian: Vec<Vec<Matrix>>,
    pub costate_offset: Vec<Vec<Vector>>,
    pub transition: Vec<Matrix>,
    pub transition_offset: Vec<Vector>,
    pub path_laws: Vec<Vec<ControlLaw>>,
}

impl OpenLoopNashSolution {
    /// Equilibrium control sequences indexed `[i][t]`.
    pub fn controls(&self) -> &[Vec<Vector>] {
        &self.trajectory.controls
    }
}

/// `(R^{jj})^-1 B^j'` for every player at one stage.
fn feedthroughs(spec: &GameSpec, t: usize) -> Result<Vec<Matrix>> {
    let stage = &spec.stages[t];
    (0..spec.player_count())
        .map(|j| {
            solve_dense(&stage.r[j][j], &stage.b[j].transpose(), "control weight R^{jj}")
                .map_err(|e| e.at_stage(t))
        })
        .collect()
}

fn finish(
    spec: &GameSpec,
    x0: &Vector,
    costate_hessian: Vec<Vec<Matrix>>,
    costate_offset: Vec<Vec<Vector>>,
    transition: Vec<Matrix>,
    transition_offset: Vec<Vector>,
    path_laws: Vec<Vec<ControlLaw>>,
) -> Result<OpenLoopNashSolution> {
    let n = spec.player_count();
    let mut controls = vec![Vec::with_capacity(spec.horizon); n];
    let mut x = x0.clone();
    for t in 0..spec.horizon {
        for (i, law) in path_laws[t].iter().enumerate() {
            controls[i].push(law.apply(&x));
        }
        x = &transition[t] * &x + &transition_offset[t];
    }
    let trajectory = rollout(spec, Policy::Controls(&controls), x0)?;
    Ok(OpenLoopNashSolution {
        x0: x0.clone(),
        trajectory,
        costate_hessian,
        costate_offset,
        transition,
        transition_offset,
        path_laws,
    })
}

fn check_x0(spec: &GameSpec, x0: &Vector) -> Result<()> {
    if x0.len() != spec.state_dim {
        return Err(crate::Error::InvalidArgument(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            spec.state_dim
        )));
    }
    Ok(())
}

/// Open-loop Nash equilibrium from `x0`.
///
/// Backward from `M_T^i = Q_T^i`, `m_T^i = 0`, with `Lambda = I + sum_j B^j (R^{jj})^-1 B^j' M^j`:
///
/// ```text
/// Phi_t = Lambda^-1 A
/// phi_t = Lambda^-1 (s - sum_j B^j ((R^{jj})^-1 B^j'(m^j - Q^j xt^j) - ut^{jj}))
/// M_t^i = W_t^i + A'M^i Phi_t
/// m_t^i = A'(M^i phi_t + m^i - Q^i xt^i)
/// u_t^i = -P^i x_t - alpha^i,  P^i = (R^{ii})^-1 B^i'M^i Phi_t,
///         alpha^i = (R^{ii})^-1 B^i'(M^i phi_t + m^i - Q^i xt^i) - ut^{ii}
/// ```
///
/// where unindexed `M, m` are the successor values at `t + 1`.
pub fn solve(spec: &GameSpec, x0: &Vector) -> Result<OpenLoopNashSolution> {
    ensure_valid(spec)?;
    check_x0(spec, x0)?;
    let n = spec.player_count();
    let p = spec.state_dim;
    let horizon = spec.horizon;
    let mut hess: Vec<Vec<Matrix>> = vec![Vec::with_capacity(horizon + 1); n];
    let mut offs: Vec<Vec<Vector>> = vec![Vec::with_capacity(horizon + 1); n];
    for i in 0..n {
        hess[i].push(spec.stages[horizon - 1].q[i].clone());
        offs[i].push(Vector::zeros(p));
    }
    let mut transition = Vec::with_capacity(horizon);
    let mut transition_offset = Vec::with_capacity(horizon);
    let mut path_laws = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let stage = &spec.stages[t];
        let feed = feedthroughs(spec, t)?;
        let next_m: Vec<&Matrix> = hess.iter().map(|h| h.last().unwrap()).collect();
        let tilted: Vec<Vector> = (0..n)
            .map(|i| offs[i].last().unwrap() - &stage.q[i] * &stage.x_target[i])
            .collect();
        let mut operator = Matrix::identity(p, p);
        let mut forcing = stage.s.clone();
        for j in 0..n {
            operator += &stage.b[j] * &feed[j] * next_m[j];
            forcing -= &stage.b[j] * (&feed[j] * &tilted[j] - &stage.u_target[j][j]);
        }
        let mut rhs = Matrix::zeros(p, p + 1);
        rhs.columns_mut(0, p).copy_from(&stage.a);
        rhs.set_column(p, &forcing);
        let solved = solve_dense(&operator, &rhs, "open-loop Nash transition operator I + sum B R^-1 B'M")
            .map_err(|e| e.at_stage(t))?;
        let phi = solved.columns(0, p).into_owned();
        let phi_offset = solved.column(p).into_owned();

        let mut stage_laws = Vec::with_capacity(n);
        let mut new_m = Vec::with_capacity(n);
        let mut new_o = Vec::with_capacity(n);
        for i in 0..n {
            let m_phi = next_m[i] * &phi;
            let m_offset = next_m[i] * &phi_offset + &tilted[i];
            let gain = &feed[i] * &m_phi;
            let offset = &feed[i] * &m_offset - &stage.u_target[i][i];
            stage_laws.push(ControlLaw::new(-gain, -offset));
            new_m.push(spec.state_weight(t, i) + stage.a.transpose() * &m_phi);
            new_o.push(stage.a.transpose() * &m_offset);
        }
        for i in 0..n {
            hess[i].push(new_m[i].clone());
            offs[i].push(new_o[i].clone());
        }
        transition.push(phi);
        transition_offset.push(phi_offset);
        path_laws.push(stage_laws);
    }
    for i in 0..n {
        hess[i].reverse();
        offs[i].reverse();
    }
    transition.reverse();
    transition_offset.reverse();
    path_laws.reverse();
    finish(spec, x0, hess, offs, transition, transition_offset, path_laws)
}

/// Costates `p_t^i = (M_t^i - W_t^i) x_t + m_t^i` along the equilibrium path, indexed
/// `[i][t]` for `t = 0..=T`; the terminal costate is exactly zero.
pub fn costates(spec: &GameSpec, sol: &OpenLoopNashSolution) -> Vec<Vec<Vector>> {
    let horizon = spec.horizon;
    (0..spec.player_count())
        .map(|i| {
            (0..=horizon)
                .map(|t| {
                    if t == horizon {
                        Vector::zeros(spec.state_dim)
                    } else {
                        (&sol.costate_hessian[i][t] - spec.state_weight(t, i)) * &sol.trajectory.states[t]
                            + &sol.costate_offset[i][t]
                    }
                })
                .collect()
        })
        .collect()
}

/// Open-loop Nash equilibrium through the `(H, h)` rewrite.
///
/// With `h^i = m^i - Q^i xt^i` (the costate offset net of the target pull at the same
/// state), `Lambda = I + sum_j B^j (R^{jj})^-1 B^j' H^j` and
/// `eta = s + sum_j B^j (ut^{jj} - (R^{jj})^-1 B^j' h^j)`:
///
/// ```text
/// x_{t+1} = Lambda^-1 (A x_t + eta)
/// H_t^i   = W_t^i + A'H^i Lambda^-1 A
/// h_t^i   = -W_t^i xt_t^i + A'(H^i Lambda^-1 eta + h^i),   h_T^i = -Q_T^i xt_T^i
/// u_t^i   = ut^{ii} - (R^{ii})^-1 B^i'(H^i x_{t+1} + h^i)
/// ```
///
/// `Lambda^-1` is formed explicitly here, unlike [`solve`].
pub fn solve_alt(spec: &GameSpec, x0: &Vector) -> Result<OpenLoopNashSolution> {
    ensure_valid(spec)?;
    check_x0(spec, x0)?;
    let n = spec.player_count();
    let p = spec.state_dim;
    let horizon = spec.horizon;
    let ip = Matrix::identity(p, p);
    let last = &spec.stages[horizon - 1];
    let mut h_mat: Vec<Matrix> = last.q.clone();
    let mut h_vec: Vec<Vector> = (0..n).map(|i| -(&last.q[i] * &last.x_target[i])).collect();
    let mut all_h_mat = vec![h_mat.clone()];
    let mut all_h_vec = vec![h_vec.clone()];
    let mut inverses = Vec::with_capacity(horizon);
    let mut drifts = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let stage = &spec.stages[t];
        let feed = feedthroughs(spec, t)?;
        let mut lambda = ip.clone();
        let mut eta = stage.s.clone();
        for j in 0..n {
            lambda += &stage.b[j] * &feed[j] * &h_mat[j];
            eta += &stage.b[j] * (&stage.u_target[j][j] - &feed[j] * &h_vec[j]);
        }
        let lambda_inv = solve_dense(&lambda, &ip, "open-loop Nash operator Lambda")
            .map_err(|e| e.at_stage(t))?;
        let mut next_mat = Vec::with_capacity(n);
        let mut next_vec = Vec::with_capacity(n);
        for i in 0..n {
            next_mat.push(spec.state_weight(t, i) + stage.a.transpose() * &h_mat[i] * &lambda_inv * &stage.a);
            let mut v = stage.a.transpose() * (&h_mat[i] * &lambda_inv * &eta + &h_vec[i]);
            if t > 0 {
                let prev = &spec.stages[t - 1];
                v -= &prev.q[i] * &prev.x_target[i];
            }
            next_vec.push(v);
        }
        inverses.push((lambda_inv, feed));
        drifts.push(eta);
        h_mat = next_mat;
        h_vec = next_vec;
        all_h_mat.push(h_mat.clone());
        all_h_vec.push(h_vec.clone());
    }
    inverses.reverse();
    drifts.reverse();
    all_h_mat.reverse();
    all_h_vec.reverse();

    let mut transition = Vec::with_capacity(horizon);
    let mut transition_offset = Vec::with_capacity(horizon);
    let mut path_laws = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let stage = &spec.stages[t];
        let (lambda_inv, feed) = &inverses[t];
        let phi = lambda_inv * &stage.a;
        let phi_offset = lambda_inv * &drifts[t];
        let laws = (0..n)
            .map(|i| {
                let h_next = &all_h_mat[t + 1][i];
                ControlLaw::new(
                    -(&feed[i] * h_next * &phi),
                    &stage.u_target[i][i] - &feed[i] * (h_next * &phi_offset + &all_h_vec[t + 1][i]),
                )
            })
            .collect();
        transition.push(phi);
        transition_offset.push(phi_offset);
        path_laws.push(laws);
    }
    let costate_hessian: Vec<Vec<Matrix>> = (0..n)
        .map(|i| (0..=horizon).map(|t| all_h_mat[t][i].clone()).collect())
        .collect();
    let costate_offset: Vec<Vec<Vector>> = (0..n)
        .map(|i| {
            (0..=horizon)
                .map(|t| {
                    let pull = if t == 0 {
                        Vector::zeros(p)
                    } else {
                        let prev = &spec.stages[t - 1];
                        &prev.q[i] * &prev.x_target[i]
                    };
                    &all_h_vec[t][i] + pull
                })
                .collect()
        })
        .collect();
    finish(spec, x0, costate_hessian, costate_offset, transition, transition_offset, path_laws)
}

/// Largest control difference between two open-loop solutions of the same game.
pub fn control_deviation(left: &[Vec<Vector>], right: &[Vec<Vector>]) -> f64 {
    left.iter()
        .zip(right)
        .flat_map(|(l, r)| l.iter().zip(r))
        .map(|(l, r)| crate::numerics::max_abs_vec(&(l - r)))
        .fold(0.0, f64::max)
}
