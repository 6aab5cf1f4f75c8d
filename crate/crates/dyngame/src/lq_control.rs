//! Single-player affine-quadratic optimal control.
//!
//! [`solve_control`] runs the backward Riccati recursion in gain/offset form and
//! [`solve_control_alt`] runs an algebraically rearranged recursion that factors the
//! stage Hessian once per stage and propagates the value through the classical
//! Riccati difference equation. Both act as oracles for single-player games.

use crate::error::{Error, Result};
use crate::game_model::{ensure_valid, ControlLaw, FeedbackSolution, GameSpec};
use crate::numerics::{max_abs, max_abs_vec, solve_dense, Matrix, Vector};

fn check_control_problem(spec: &GameSpec) -> Result<()> {
    ensure_valid(spec)?;
    if spec.player_count() != 1 {
        return Err(Error::Precondition(format!(
            "optimal control needs exactly one player, found {}",
            spec.player_count()
        )));
    }
    let zero_targets = spec.stages.iter().all(|s| {
        s.x_target[0].iter().all(|v| *v == 0.0) && s.u_target[0][0].iter().all(|v| *v == 0.0)
    });
    if !zero_targets {
        return Err(Error::Precondition(
            "optimal control expects zero targets; use the feedback Nash solver for tracking costs"
                .into(),
        ));
    }
    Ok(())
}

fn terminal_values(spec: &GameSpec) -> (Matrix, Vector, f64) {
    let p = spec.state_dim;
    (
        spec.stages[spec.horizon - 1].q[0].clone(),
        Vector::zeros(p),
        0.0,
    )
}

fn assemble(
    laws: Vec<ControlLaw>,
    hessian: Vec<Matrix>,
    linear: Vec<Vector>,
    constant: Vec<f64>,
) -> FeedbackSolution {
    FeedbackSolution {
        laws: laws.into_iter().map(|l| vec![l]).collect(),
        value_hessian: vec![hessian],
        value_linear: vec![linear],
        value_constant: vec![constant],
    }
}

/// Optimal feedback laws and value coefficients of a single-player game with zero targets.
///
/// Per stage, backward from the terminal weight: the laws `u = -P x - alpha` with
/// `P = (R + B'ZB)^-1 B'ZA` and `alpha = (R + B'ZB)^-1 B'(Zs + zeta)` are reported as
/// `G = -P`, `g = -alpha`. The value is `1/2 x0'Z_0 x0 + zeta_0'x0 + n_0`.
pub fn solve_control(spec: &GameSpec) -> Result<FeedbackSolution> {
    check_control_problem(spec)?;
    let horizon = spec.horizon;
    let (mut z, mut zeta, mut constant) = terminal_values(spec);
    let mut laws = Vec::with_capacity(horizon);
    let mut hessians = vec![z.clone()];
    let mut linears = vec![zeta.clone()];
    let mut constants = vec![constant];
    for t in (0..horizon).rev() {
        let stage = &spec.stages[t];
        let (a, b, s, r) = (&stage.a, &stage.b[0], &stage.s, &stage.r[0][0]);
        let bt_z = b.transpose() * &z;
        let hessian = r + &bt_z * b;
        let mut rhs = Matrix::zeros(b.ncols(), a.ncols() + 1);
        rhs.columns_mut(0, a.ncols()).copy_from(&(&bt_z * a));
        rhs.set_column(a.ncols(), &(&bt_z * s + b.transpose() * &zeta));
        let solved = solve_dense(&hessian, &rhs, "control stage Hessian R + B'ZB")
            .map_err(|e| e.at_stage(t))?;
        let gain = solved.columns(0, a.ncols()).into_owned();
        let offset = solved.column(a.ncols()).into_owned();

        let closed = a - b * &gain;
        let drift = s - b * &offset;
        let next_constant = constant
            + 0.5 * drift.dot(&(&z * &drift))
            + zeta.dot(&drift)
            + 0.5 * offset.dot(&(r * &offset));
        let next_zeta = closed.transpose() * (&z * &drift + &zeta) + gain.transpose() * r * &offset;
        let next_z = spec.state_weight(t, 0)
            + closed.transpose() * &z * &closed
            + gain.transpose() * r * &gain;
        z = (&next_z + next_z.transpose()) * 0.5;
        zeta = next_zeta;
        constant = next_constant;
        laws.push(ControlLaw::new(-gain, -offset));
        hessians.push(z.clone());
        linears.push(zeta.clone());
        constants.push(constant);
    }
    laws.reverse();
    hessians.reverse();
    linears.reverse();
    constants.reverse();
    Ok(assemble(laws, hessians, linears, constants))
}

/// Same problem as [`solve_control`] through the rearranged recursion
///
/// ```text
/// K_t   = (R + B'SB)^-1 B'
/// G_t   = -K_t S A,   g_t = -K_t (S s + v)
/// S_t   = W_t + A'SA - A'SB K_t S A
/// v_t   = (A + B G_t)' (S s + v)
/// c_t   = c + 1/2 s'Ss + v's - 1/2 (Ss + v)' B K_t (Ss + v)
/// ```
///
/// where `S, v, c` are the successor value coefficients and `W_t` the weight on `x_t`.
pub fn solve_control_alt(spec: &GameSpec) -> Result<FeedbackSolution> {
    check_control_problem(spec)?;
    let horizon = spec.horizon;
    let (mut hess, mut lin, mut constant) = terminal_values(spec);
    let mut laws = Vec::with_capacity(horizon);
    let mut hessians = vec![hess.clone()];
    let mut linears = vec![lin.clone()];
    let mut constants = vec![constant];
    for t in (0..horizon).rev() {
        let stage = &spec.stages[t];
        let (a, b, s, r) = (&stage.a, &stage.b[0], &stage.s, &stage.r[0][0]);
        let stage_hessian = r + b.transpose() * &hess * b;
        let k = solve_dense(&stage_hessian, &b.transpose(), "control stage Hessian R + B'SB")
            .map_err(|e| e.at_stage(t))?;
        let sa = &hess * a;
        let forcing = &hess * s + &lin;
        let gain = -(&k * &sa);
        let offset = -(&k * &forcing);
        let next_hess = spec.state_weight(t, 0) + a.transpose() * &sa
            - a.transpose() * &hess * b * &k * &sa;
        let next_lin = (a + b * &gain).transpose() * &forcing;
        constant += 0.5 * s.dot(&(&hess * s)) + lin.dot(s)
            - 0.5 * forcing.dot(&(b * &k * &forcing));
        hess = (&next_hess + next_hess.transpose()) * 0.5;
        lin = next_lin;
        laws.push(ControlLaw::new(gain, offset));
        hessians.push(hess.clone());
        linears.push(lin.clone());
        constants.push(constant);
    }
    laws.reverse();
    hessians.reverse();
    linears.reverse();
    constants.reverse();
    Ok(assemble(laws, hessians, linears, constants))
}

/// Largest entry-wise difference between two law sets indexed `[t][i]`.
pub fn law_deviation(left: &[Vec<ControlLaw>], right: &[Vec<ControlLaw>]) -> f64 {
    left.iter()
        .zip(right)
        .flat_map(|(l, r)| l.iter().zip(r))
        .map(|(l, r)| max_abs(&(&l.gain - &r.gain)).max(max_abs_vec(&(&l.offset - &r.offset))))
        .fold(0.0, f64::max)
}

/// Largest law difference between [`solve_control`] and [`solve_control_alt`].
pub fn crosscheck_prop2(spec: &GameSpec) -> Result<f64> {
    let main = solve_control(spec)?;
    let alt = solve_control_alt(spec)?;
    Ok(law_deviation(&main.laws, &alt.laws))
}
