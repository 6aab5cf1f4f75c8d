//! Feedback Nash equilibria by backward induction over coupled per-stage systems.
//!
//! At every stage each player's law minimizes its stage cost plus its equilibrium
//! cost-to-go, given the other players' laws at the same stage. Because the value
//! functions stay quadratic, the first-order conditions of all players form one linear
//! system per stage in the stacked gains and one in the stacked offsets.

use crate::error::Result;
use crate::game_model::{ensure_valid, ControlLaw, FeedbackSolution, GameSpec};
use crate::numerics::{solve_blocks, Matrix, Vector};

/// Per-player value coefficients at one state index.
#[derive(Debug, Clone)]
pub(crate) struct ValueCoefficients {
    pub hessian: Vec<Matrix>,
    pub linear: Vec<Vector>,
    pub constant: Vec<f64>,
}

impl ValueCoefficients {
    /// Terminal coefficients: the last stage weight, zero gradient, zero constant.
    pub fn terminal(spec: &GameSpec) -> Self {
        let last = &spec.stages[spec.horizon - 1];
        let n = spec.player_count();
        Self {
            hessian: last.q.clone(),
            linear: vec![Vector::zeros(spec.state_dim); n],
            constant: vec![0.0; n],
        }
    }
}

/// Value coefficients at state index `t` given successor coefficients at `t + 1`
/// and every player's stage-`t` law.
///
/// With `K = A + sum_j B^j G^j`, `c = s + sum_j B^j g^j` and the successor `Z, zeta, n`:
///
/// ```text
/// Z_t    = W_t + K'ZK + sum_j G^j' R^{ij} G^j
/// zeta_t = K'(Zc + zeta - Q xt) + sum_j G^j' R^{ij} (g^j - ut^{ij})
/// n_t    = n + 1/2 c'Zc + (zeta - Q xt)'c + 1/2 xt'Q xt + 1/2 sum_j |g^j - ut^{ij}|^2_{R^{ij}}
/// ```
pub(crate) fn propagate_values(
    spec: &GameSpec,
    t: usize,
    laws: &[ControlLaw],
    next: &ValueCoefficients,
) -> ValueCoefficients {
    let stage = &spec.stages[t];
    let mut closed = stage.a.clone();
    let mut drift = stage.s.clone();
    for (b, law) in stage.b.iter().zip(laws) {
        closed += b * &law.gain;
        drift += b * &law.offset;
    }
    let n = spec.player_count();
    let mut out = ValueCoefficients {
        hessian: Vec::with_capacity(n),
        linear: Vec::with_capacity(n),
        constant: Vec::with_capacity(n),
    };
    for i in 0..n {
        let z = &next.hessian[i];
        let q = &stage.q[i];
        let weighted_target = q * &stage.x_target[i];
        let tilt = &next.linear[i] - &weighted_target;
        let mut hessian = spec.state_weight(t, i) + closed.transpose() * z * &closed;
        let mut linear = closed.transpose() * (z * &drift + &tilt);
        let mut constant = next.constant[i]
            + 0.5 * drift.dot(&(z * &drift))
            + tilt.dot(&drift)
            + 0.5 * stage.x_target[i].dot(&weighted_target);
        for (j, law) in laws.iter().enumerate() {
            let r = &stage.r[i][j];
            let gap = &law.offset - &stage.u_target[i][j];
            hessian += law.gain.transpose() * r * &law.gain;
            linear += law.gain.transpose() * (r * &gap);
            constant += 0.5 * gap.dot(&(r * &gap));
        }
        out.hessian.push((&hessian + hessian.transpose()) * 0.5);
        out.linear.push(linear);
        out.constant.push(constant);
    }
    out
}

/// Collects per-stage value coefficients into the solution layout.
pub(crate) fn assemble(
    spec: &GameSpec,
    laws: Vec<Vec<ControlLaw>>,
    values: Vec<ValueCoefficients>,
) -> FeedbackSolution {
    let n = spec.player_count();
    let mut sol = FeedbackSolution {
        laws,
        value_hessian: vec![Vec::with_capacity(spec.horizon + 1); n],
        value_linear: vec![Vec::with_capacity(spec.horizon + 1); n],
        value_constant: vec![Vec::with_capacity(spec.horizon + 1); n],
    };
    for v in values {
        for i in 0..n {
            sol.value_hessian[i].push(v.hessian[i].clone());
            sol.value_linear[i].push(v.linear[i].clone());
            sol.value_constant[i].push(v.constant[i]);
        }
    }
    sol
}

/// Feedback Nash equilibrium laws and value coefficients.
///
/// At stage `t`, with successor coefficients `Z^i, zeta^i`, the laws
/// `u^i = -P^i x - alpha^i` solve
///
/// ```text
/// (R^{ii} + B^i'Z^iB^i) P^i     + B^i'Z^i sum_{j!=i} B^j P^j     = B^i'Z^i A
/// (R^{ii} + B^i'Z^iB^i) alpha^i + B^i'Z^i sum_{j!=i} B^j alpha^j = B^i'(Z^i s + zeta^i - Q^i xt^i) - R^{ii} ut^{ii}
/// ```
///
/// and are reported as `G = -P`, `g = -alpha`. Both systems share one operator, so a
/// single factorization with `p + 1` right-hand columns serves the stage.
pub fn solve(spec: &GameSpec) -> Result<FeedbackSolution> {
    ensure_valid(spec)?;
    let n = spec.player_count();
    let p = spec.state_dim;
    let mut next = ValueCoefficients::terminal(spec);
    let mut values = vec![next.clone()];
    let mut laws = Vec::with_capacity(spec.horizon);
    for t in (0..spec.horizon).rev() {
        let stage = &spec.stages[t];
        let weighted_inputs: Vec<Matrix> = (0..n)
            .map(|i| stage.b[i].transpose() * &next.hessian[i])
            .collect();
        let blocks: Vec<Vec<Matrix>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let coupling = &weighted_inputs[i] * &stage.b[j];
                        if i == j {
                            coupling + &stage.r[i][i]
                        } else {
                            coupling
                        }
                    })
                    .collect()
            })
            .collect();
        let rhs: Vec<Matrix> = (0..n)
            .map(|i| {
                let mut col = Matrix::zeros(spec.control_dim(i), p + 1);
                col.columns_mut(0, p).copy_from(&(&weighted_inputs[i] * &stage.a));
                let forcing = &weighted_inputs[i] * &stage.s
                    + stage.b[i].transpose() * (&next.linear[i] - &stage.q[i] * &stage.x_target[i])
                    - &stage.r[i][i] * &stage.u_target[i][i];
                col.set_column(p, &forcing);
                col
            })
            .collect();
        let solved = solve_blocks(&blocks, &rhs, "feedback Nash stage system")
            .map_err(|e| e.at_stage(t))?;
        let stage_laws: Vec<ControlLaw> = solved
            .iter()
            .map(|x| ControlLaw::new(-x.columns(0, p).into_owned(), -x.column(p).into_owned()))
            .collect();
        next = propagate_values(spec, t, &stage_laws, &next);
        values.push(next.clone());
        laws.push(stage_laws);
    }
    laws.reverse();
    values.reverse();
    Ok(assemble(spec, laws, values))
}

/// Player `i`'s equilibrium cost from `x0`.
pub fn value(sol: &FeedbackSolution, x0: &Vector, player: usize) -> f64 {
    sol.value(x0, player)
}

/// Feedback Nash equilibrium through the closed-loop form of the same conditions.
///
/// Writing `K = A + sum_j B^j G^j` and `k = s + sum_j B^j g^j` for the closed loop and
/// `H^i = Z^i`, `h^i = Q^i xt^i - zeta^i` for the successor value, each player's
/// condition reduces to `G^i = -(R^{ii})^-1 B^i'H^i K` and
/// `g^i = ut^{ii} - (R^{ii})^-1 B^i'(H^i k - h^i)`. Substituting into the closed loop
/// gives `Lambda K = A` and `Lambda k = s + sum_j B^j (ut^{jj} + (R^{jj})^-1 B^j' h^j)`
/// with `Lambda = I + sum_j B^j (R^{jj})^-1 B^j' H^j`, one `p x p` solve per stage.
/// The value recursion is run on `(H, h)` directly.
pub fn solve_alt(spec: &GameSpec) -> Result<FeedbackSolution> {
    ensure_valid(spec)?;
    let n = spec.player_count();
    let p = spec.state_dim;
    let last = &spec.stages[spec.horizon - 1];
    let mut hess: Vec<Matrix> = last.q.clone();
    let mut tilt: Vec<Vector> = (0..n).map(|i| &last.q[i] * &last.x_target[i]).collect();
    let mut constant = vec![0.0; n];
    let mut all_hess = vec![hess.clone()];
    let mut all_tilt = vec![tilt.clone()];
    let mut all_const = vec![constant.clone()];
    let mut laws = Vec::with_capacity(spec.horizon);
    for t in (0..spec.horizon).rev() {
        let stage = &spec.stages[t];
        let mut coupling = Matrix::identity(p, p);
        let mut forcing = stage.s.clone();
        let mut feedthrough = Vec::with_capacity(n);
        for j in 0..n {
            let b = &stage.b[j];
            let inv_r_bt = crate::numerics::solve_dense(
                &stage.r[j][j],
                &b.transpose(),
                "control weight R^{jj}",
            )
            .map_err(|e| e.at_stage(t))?;
            coupling += b * &inv_r_bt * &hess[j];
            forcing += b * (&stage.u_target[j][j] + &inv_r_bt * &tilt[j]);
            feedthrough.push(inv_r_bt);
        }
        let mut rhs = Matrix::zeros(p, p + 1);
        rhs.columns_mut(0, p).copy_from(&stage.a);
        rhs.set_column(p, &forcing);
        let closed_loop = crate::numerics::solve_dense(&coupling, &rhs, "feedback Nash closed-loop operator")
            .map_err(|e| e.at_stage(t))?;
        let k_mat = closed_loop.columns(0, p).into_owned();
        let k_vec = closed_loop.column(p).into_owned();
        let stage_laws: Vec<ControlLaw> = (0..n)
            .map(|i| {
                let gain = -(&feedthrough[i] * &hess[i] * &k_mat);
                let offset = &stage.u_target[i][i] - &feedthrough[i] * (&hess[i] * &k_vec - &tilt[i]);
                ControlLaw::new(gain, offset)
            })
            .collect();

        let mut next_hess = Vec::with_capacity(n);
        let mut next_tilt = Vec::with_capacity(n);
        for i in 0..n {
            let mut h_mat = spec.state_weight(t, i) + k_mat.transpose() * &hess[i] * &k_mat;
            let mut h_vec = -(k_mat.transpose() * (&hess[i] * &k_vec - &tilt[i]));
            if t > 0 {
                let prev = &spec.stages[t - 1];
                h_vec += &prev.q[i] * &prev.x_target[i];
            }
            let target = &stage.x_target[i];
            let q_target = &stage.q[i] * target;
            let mut c = constant[i] + 0.5 * k_vec.dot(&(&hess[i] * &k_vec)) - tilt[i].dot(&k_vec)
                + 0.5 * target.dot(&q_target);
            for (j, law) in stage_laws.iter().enumerate() {
                let r = &stage.r[i][j];
                let gap = &stage.u_target[i][j] - &law.offset;
                h_mat += law.gain.transpose() * r * &law.gain;
                h_vec += law.gain.transpose() * (r * &gap);
                c += 0.5 * gap.dot(&(r * &gap));
            }
            next_hess.push((&h_mat + h_mat.transpose()) * 0.5);
            next_tilt.push(h_vec);
            constant[i] = c;
        }
        hess = next_hess;
        tilt = next_tilt;
        all_hess.push(hess.clone());
        all_tilt.push(tilt.clone());
        all_const.push(constant.clone());
        laws.push(stage_laws);
    }
    laws.reverse();
    all_hess.reverse();
    all_tilt.reverse();
    all_const.reverse();
    let values: Vec<ValueCoefficients> = (0..=spec.horizon)
        .map(|t| ValueCoefficients {
            hessian: all_hess[t].clone(),
            linear: (0..n)
                .map(|i| {
                    let weighted = if t == 0 {
                        Vector::zeros(p)
                    } else {
                        let prev = &spec.stages[t - 1];
                        &prev.q[i] * &prev.x_target[i]
                    };
                    weighted - &all_tilt[t][i]
                })
                .collect(),
            constant: all_const[t].clone(),
        })
        .collect();
    Ok(assemble(spec, laws, values))
}
