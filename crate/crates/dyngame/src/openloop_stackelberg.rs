//! Open-loop Stackelberg equilibria with player 0 as leader.
//!
//! The followers play an open-loop Nash game given the leader's committed control
//! sequence. The leader minimizes its cost subject to the followers' state equation,
//! costate equations, and stationarity conditions, which introduces
//!
//! * `lambda_t`, the leader's costate of the state equation,
//! * `mu_t^i`, the leader's multipliers of follower `i`'s costate equation
//!   (`mu_0^i = 0`), and
//! * `v_t^i`, the leader's multipliers ("cocontrols") of follower `i`'s stationarity
//!   condition at stage `t`.
//!
//! A single backward induction expresses the costates as affine functions of the
//! current state and multipliers,
//!
//! ```text
//! p_t^i    = (M_t^{ix} - W_t^i) x_t + sum_j M_t^{ijmu} mu_t^j + m_t^i
//! lambda_t = (L_t^x  - W_t^1) x_t + sum_j L_t^{jmu} mu_t^j + l_t
//! ```
//!
//! and the forward pass advances the extended state `(x, mu^2, ..., mu^n)` jointly.
//! Follower-indexed vectors in this module use follower positions: entry `k` belongs
//! to player `k + 1`.

use crate::error::{Error, Result};
use crate::game_model::{rollout, validate_stackelberg, GameSpec, Policy, Trajectory};
use crate::numerics::{max_abs, max_abs_vec, solve_blocks, solve_dense, Matrix, Vector, DEFAULT_TOLERANCE};

/// Affine map `y = state * x + sum_k multipliers[k] * mu^k + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub state: Matrix,
    pub multipliers: Vec<Matrix>,
    pub offset: Vector,
}

impl AffineMap {
    /// Splits a `rows x (p + k p + 1)` column block `[x | mu^1 .. mu^k | 1]`.
    fn from_columns(columns: &Matrix, p: usize, followers: usize) -> Self {
        Self {
            state: columns.columns(0, p).into_owned(),
            multipliers: (0..followers)
                .map(|k| columns.columns(p + k * p, p).into_owned())
                .collect(),
            offset: columns.column(p + followers * p).into_owned(),
        }
    }

    /// Evaluates the map at `(x, mu)`.
    pub fn apply(&self, x: &Vector, mu: &[Vector]) -> Vector {
        let mut y = &self.state * x + &self.offset;
        for (block, m) in self.multipliers.iter().zip(mu) {
            y += block * m;
        }
        y
    }
}

/// Costate coefficients at one state index.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateCoefficients {
    /// `(M^{ix}, M^{ijmu}, m^i)` for every follower.
    pub follower: Vec<AffineMap>,
    /// `(L^x, L^{jmu}, l)` for the leader.
    pub leader: AffineMap,
}

/// Stage maps of the backward induction.
///
/// Maps named `*_response` and `cocontrol` take `(x_{t+1}, mu_t)`; `state_transition`,
/// `multiplier_transition`, and `path_gains` take `(x_t, mu_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCoefficients {
    /// `N^i`: the leader's cocontrol for follower `i`.
    pub cocontrol: Vec<AffineMap>,
    /// `T^i`: follower `i`'s control.
    pub follower_response: Vec<AffineMap>,
    /// `W`: the leader's control.
    pub leader_response: AffineMap,
    /// `Phi`: the state transition.
    pub state_transition: AffineMap,
    /// `Psi^i`: the transition of follower `i`'s multiplier.
    pub multiplier_transition: Vec<AffineMap>,
    /// `P^i`: every player's control in terms of the current extended state.
    pub path_gains: Vec<AffineMap>,
}

/// All coefficients of the backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct OLStackelbergRecursion {
    /// Indexed `t = 0..=T`.
    pub costates: Vec<CostateCoefficients>,
    /// Indexed `t = 0..T-1`.
    pub stages: Vec<StageCoefficients>,
}

/// Open-loop Stackelberg equilibrium from a fixed initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct OLStackelbergSolution {
    pub x0: Vector,
    /// Follower multipliers at the start; zero for the game itself.
    pub mu0: Vec<Vector>,
    pub trajectory: Trajectory,
    /// `multipliers[k][t]` for `t = 0..=T`.
    pub multipliers: Vec<Vec<Vector>>,
    pub recursion: OLStackelbergRecursion,
    /// `lambda_t` for `t = 0..=T`.
    pub leader_costate: Vec<Vector>,
    /// `p_t^i` for `t = 0..=T`, by follower position.
    pub follower_costates: Vec<Vec<Vector>>,
    /// `v_t^i` for `t = 0..T-1`, by follower position.
    pub cocontrols: Vec<Vec<Vector>>,
}

impl OLStackelbergSolution {
    /// Equilibrium control sequences indexed `[i][t]` (leader first).
    pub fn controls(&self) -> &[Vec<Vector>] {
        &self.trajectory.controls
    }
}

fn check_inputs(spec: &GameSpec, x0: &Vector, mu0: &[Vector]) -> Result<()> {
    validate_stackelberg(spec, DEFAULT_TOLERANCE).into_result()?;
    if x0.len() != spec.state_dim {
        return Err(Error::InvalidArgument(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            spec.state_dim
        )));
    }
    if mu0.len() != spec.player_count() - 1 || mu0.iter().any(|m| m.len() != spec.state_dim) {
        return Err(Error::InvalidArgument(
            "initial multipliers must hold one state-sized vector per follower".into(),
        ));
    }
    Ok(())
}

/// Open-loop Stackelberg equilibrium from `x0` with player 0 leading.
pub fn solve(spec: &GameSpec, x0: &Vector) -> Result<OLStackelbergSolution> {
    let mu0 = vec![Vector::zeros(spec.state_dim); spec.player_count().saturating_sub(1)];
    solve_from(spec, x0, &mu0)
}

/// Runs the backward induction and then the forward pass from `(x0, mu0)`.
///
/// With `mu0 = 0` this is the equilibrium; a nonzero `mu0` continues an equilibrium
/// whose earlier stages have already been played.
pub fn solve_from(spec: &GameSpec, x0: &Vector, mu0: &[Vector]) -> Result<OLStackelbergSolution> {
    check_inputs(spec, x0, mu0)?;
    let recursion = backward(spec)?;
    forward(spec, recursion, x0, mu0)
}

/// The backward induction alone; it does not depend on the initial state.
pub fn backward(spec: &GameSpec) -> Result<OLStackelbergRecursion> {
    validate_stackelberg(spec, DEFAULT_TOLERANCE).into_result()?;
    let n = spec.player_count();
    let nf = n - 1;
    let p = spec.state_dim;
    let horizon = spec.horizon;
    let cols = p + nf * p + 1;
    let const_col = cols - 1;
    let last = &spec.stages[horizon - 1];
    let zero_map = |rows: usize| AffineMap {
        state: Matrix::zeros(rows, p),
        multipliers: vec![Matrix::zeros(rows, p); nf],
        offset: Vector::zeros(rows),
    };
    let terminal = CostateCoefficients {
        follower: (1..n)
            .map(|i| AffineMap {
                state: last.q[i].clone(),
                ..zero_map(p)
            })
            .collect(),
        leader: AffineMap {
            state: last.q[0].clone(),
            ..zero_map(p)
        },
    };
    let mut costates = vec![terminal];
    let mut stages = Vec::with_capacity(horizon);

    for t in (0..horizon).rev() {
        let stage = &spec.stages[t];
        let next = costates.last().unwrap();
        let a = &stage.a;
        let player = |k: usize| k + 1;
        let b = |k: usize| &stage.b[player(k)];

        // (R^{ii})^-1 B^i' for every follower.
        let feed: Vec<Matrix> = (0..nf)
            .map(|k| {
                solve_dense(&stage.r[player(k)][player(k)], &b(k).transpose(), "control weight R^{ii}")
                    .map_err(|e| e.at_stage(t))
            })
            .collect::<Result<_>>()?;
        // Leader weight on each follower's multiplier: L^{jmu} + Q^j.
        let leader_mu: Vec<Matrix> = (0..nf)
            .map(|k| &next.leader.multipliers[k] + &stage.q[player(k)])
            .collect();

        // Column blocks over [x_{t+1} | mu_t^1 .. mu_t^nf | 1].
        let follower_base: Vec<Matrix> = (0..nf)
            .map(|k| {
                let i = player(k);
                let coeff = &next.follower[k];
                let mut base = Matrix::zeros(p, cols);
                base.columns_mut(0, p).copy_from(&coeff.state);
                for m in 0..nf {
                    base.columns_mut(p + m * p, p).copy_from(&(&coeff.multipliers[m] * a));
                }
                base.set_column(const_col, &(&coeff.offset - &stage.q[i] * &stage.x_target[i]));
                base
            })
            .collect();
        let leader_base = {
            let mut base = Matrix::zeros(p, cols);
            base.columns_mut(0, p).copy_from(&next.leader.state);
            for m in 0..nf {
                base.columns_mut(p + m * p, p).copy_from(&(&leader_mu[m] * a));
            }
            base.set_column(const_col, &(&next.leader.offset - &stage.q[0] * &stage.x_target[0]));
            base
        };

        // Cocontrol system: sum_b Omega_ab N^b = -rhs_a.
        let blocks: Vec<Vec<Matrix>> = (0..nf)
            .map(|ka| {
                let i = player(ka);
                let cross = &stage.r[0][i] * &feed[ka];
                (0..nf)
                    .map(|kb| {
                        let mut block = b(ka).transpose() * &leader_mu[kb] * b(kb)
                            - &cross * &next.follower[ka].multipliers[kb] * b(kb);
                        if ka == kb {
                            block += &stage.r[i][i];
                        }
                        block
                    })
                    .collect()
            })
            .collect();
        let rhs: Vec<Matrix> = (0..nf)
            .map(|ka| {
                let i = player(ka);
                let cross = &stage.r[0][i] * &feed[ka];
                let mut r = b(ka).transpose() * &leader_base - &cross * &follower_base[ka];
                let target_gap = &stage.r[0][i] * (&stage.u_target[i][i] - &stage.u_target[0][i]);
                let mut c = r.column_mut(const_col);
                c += target_gap;
                -r
            })
            .collect();
        let cocontrol_cols = solve_blocks(&blocks, &rhs, "open-loop Stackelberg cocontrol system")
            .map_err(|e| e.at_stage(t))?;

        // Follower and leader controls as column blocks.
        let coupled = |base: &Matrix, weights: &dyn Fn(usize) -> Matrix| {
            let mut total = base.clone();
            for kb in 0..nf {
                total += weights(kb) * b(kb) * &cocontrol_cols[kb];
            }
            total
        };
        let follower_cols: Vec<Matrix> = (0..nf)
            .map(|ka| {
                let i = player(ka);
                let inner = coupled(&follower_base[ka], &|kb| next.follower[ka].multipliers[kb].clone());
                let mut u = -(&feed[ka] * inner);
                let mut c = u.column_mut(const_col);
                c += &stage.u_target[i][i];
                u
            })
            .collect();
        let leader_cols = {
            let inner = coupled(&leader_base, &|kb| leader_mu[kb].clone());
            let mut u = -solve_dense(&stage.r[0][0], &(stage.b[0].transpose() * inner), "control weight R^{11}")
                .map_err(|e| e.at_stage(t))?;
            let mut c = u.column_mut(const_col);
            c += &stage.u_target[0][0];
            u
        };

        // State transition: (I - U_x) x_{t+1} = A x_t + U_mu mu_t + U_c + s.
        let mut input_cols = &stage.b[0] * &leader_cols;
        for ka in 0..nf {
            input_cols += b(ka) * &follower_cols[ka];
        }
        let operator = Matrix::identity(p, p) - input_cols.columns(0, p);
        let mut transition_rhs = Matrix::zeros(p, cols);
        transition_rhs.columns_mut(0, p).copy_from(a);
        transition_rhs
            .columns_mut(p, nf * p + 1)
            .copy_from(&input_cols.columns(p, nf * p + 1));
        {
            let mut c = transition_rhs.column_mut(const_col);
            c += &stage.s;
        }
        let transition_cols = solve_dense(&operator, &transition_rhs, "open-loop Stackelberg transition operator I - B^1W^x - sum B^jT^{jx}")
            .map_err(|e| e.at_stage(t))?;

        // Substitution from [x_t | mu_t | 1] to [x_{t+1} | mu_t | 1].
        let mut substitution = Matrix::identity(cols, cols);
        substitution.rows_mut(0, p).copy_from(&transition_cols);

        let multiplier_cols: Vec<Matrix> = (0..nf)
            .map(|ka| {
                let mut psi = b(ka) * &cocontrol_cols[ka] * &substitution;
                let mut block = psi.columns_mut(p + ka * p, p);
                block += a;
                psi
            })
            .collect();

        // Costate coefficients at t.
        let mut follower_costates = Vec::with_capacity(nf);
        for ka in 0..nf {
            let i = player(ka);
            let coeff = &next.follower[ka];
            let mut inner = &coeff.state * &transition_cols;
            for kb in 0..nf {
                inner += &coeff.multipliers[kb] * &multiplier_cols[kb];
            }
            {
                let mut c = inner.column_mut(const_col);
                c += &coeff.offset - &stage.q[i] * &stage.x_target[i];
            }
            let mut map = AffineMap::from_columns(&(a.transpose() * inner), p, nf);
            map.state += spec.state_weight(t, i);
            follower_costates.push(map);
        }
        let leader_costate = {
            let mut inner = &next.leader.state * &transition_cols;
            for kb in 0..nf {
                inner += &leader_mu[kb] * &multiplier_cols[kb];
            }
            {
                let mut c = inner.column_mut(const_col);
                c += &next.leader.offset - &stage.q[0] * &stage.x_target[0];
            }
            let mut map = AffineMap::from_columns(&(a.transpose() * inner), p, nf);
            map.state += spec.state_weight(t, 0);
            map
        };

        let mut path_gains = vec![AffineMap::from_columns(&(&leader_cols * &substitution), p, nf)];
        for u in &follower_cols {
            path_gains.push(AffineMap::from_columns(&(u * &substitution), p, nf));
        }
        stages.push(StageCoefficients {
            cocontrol: cocontrol_cols.iter().map(|c| AffineMap::from_columns(c, p, nf)).collect(),
            follower_response: follower_cols.iter().map(|c| AffineMap::from_columns(c, p, nf)).collect(),
            leader_response: AffineMap::from_columns(&leader_cols, p, nf),
            state_transition: AffineMap::from_columns(&transition_cols, p, nf),
            multiplier_transition: multiplier_cols.iter().map(|c| AffineMap::from_columns(c, p, nf)).collect(),
            path_gains,
        });
        costates.push(CostateCoefficients {
            follower: follower_costates,
            leader: leader_costate,
        });
    }
    costates.reverse();
    stages.reverse();
    Ok(OLStackelbergRecursion { costates, stages })
}

fn forward(
    spec: &GameSpec,
    recursion: OLStackelbergRecursion,
    x0: &Vector,
    mu0: &[Vector],
) -> Result<OLStackelbergSolution> {
    let n = spec.player_count();
    let nf = n - 1;
    let horizon = spec.horizon;
    let mut x = x0.clone();
    let mut mu: Vec<Vector> = mu0.to_vec();
    let mut xs = vec![x.clone()];
    let mut multipliers: Vec<Vec<Vector>> = mu.iter().map(|m| vec![m.clone()]).collect();
    let mut controls = vec![Vec::with_capacity(horizon); n];
    for t in 0..horizon {
        let coeff = &recursion.stages[t];
        for (i, gain) in coeff.path_gains.iter().enumerate() {
            controls[i].push(gain.apply(&x, &mu));
        }
        let next_x = coeff.state_transition.apply(&x, &mu);
        let next_mu: Vec<Vector> = coeff
            .multiplier_transition
            .iter()
            .map(|psi| psi.apply(&x, &mu))
            .collect();
        x = next_x;
        mu = next_mu;
        xs.push(x.clone());
        for k in 0..nf {
            multipliers[k].push(mu[k].clone());
        }
    }
    let trajectory = rollout(spec, Policy::Controls(&controls), x0)?;

    let leader_costate = (0..=horizon)
        .map(|t| {
            if t == horizon {
                return Vector::zeros(spec.state_dim);
            }
            let coeff = &recursion.costates[t].leader;
            let mu_t: Vec<Vector> = (0..nf).map(|k| multipliers[k][t].clone()).collect();
            coeff.apply(&xs[t], &mu_t) - spec.state_weight(t, 0) * &xs[t]
        })
        .collect();
    let follower_costates = (0..nf)
        .map(|k| {
            (0..=horizon)
                .map(|t| {
                    if t == horizon {
                        return Vector::zeros(spec.state_dim);
                    }
                    let coeff = &recursion.costates[t].follower[k];
                    let mu_t: Vec<Vector> = (0..nf).map(|j| multipliers[j][t].clone()).collect();
                    coeff.apply(&xs[t], &mu_t) - spec.state_weight(t, k + 1) * &xs[t]
                })
                .collect()
        })
        .collect();
    let cocontrols = (0..nf)
        .map(|k| {
            (0..horizon)
                .map(|t| {
                    let mu_t: Vec<Vector> = (0..nf).map(|j| multipliers[j][t].clone()).collect();
                    recursion.stages[t].cocontrol[k].apply(&xs[t + 1], &mu_t)
                })
                .collect()
        })
        .collect();
    Ok(OLStackelbergSolution {
        x0: x0.clone(),
        mu0: mu0.to_vec(),
        trajectory,
        multipliers,
        recursion,
        leader_costate,
        follower_costates,
        cocontrols,
    })
}

/// Reconstructed `(lambda, p^i, v^i)` along the equilibrium path.
pub fn costate_reconstruction(sol: &OLStackelbergSolution) -> (Vec<Vector>, Vec<Vec<Vector>>, Vec<Vec<Vector>>) {
    (
        sol.leader_costate.clone(),
        sol.follower_costates.clone(),
        sol.cocontrols.clone(),
    )
}

fn check_two_player_lq(spec: &GameSpec) -> Result<()> {
    validate_stackelberg(spec, DEFAULT_TOLERANCE).into_result()?;
    if spec.player_count() != 2 {
        return Err(Error::Precondition("the two-player specialization needs exactly two players".into()));
    }
    if !spec.is_linear_quadratic() {
        return Err(Error::Precondition("the two-player specialization needs zero drift and targets".into()));
    }
    for (t, stage) in spec.stages.iter().enumerate() {
        for i in 0..2 {
            let r = &stage.r[i][i];
            if max_abs(&(r - Matrix::identity(r.nrows(), r.ncols()))) != 0.0 {
                return Err(Error::Precondition(format!(
                    "the two-player specialization needs R^{{{0}{0}}} = I (stage {t})",
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

/// Controls, states, and the follower cocontrol operators of the two-player
/// linear-quadratic specialization.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPlayerPath {
    /// `controls[i][t]`.
    pub controls: Vec<Vec<Vector>>,
    pub states: Vec<Vector>,
    /// `B^2'(Q^2 + L^mu)B^2 + I - R^{12}B^2'M^mu B^2` per stage.
    pub cocontrol_operators: Vec<Matrix>,
}

/// Two-player linear-quadratic open-loop Stackelberg path with unit own-control
/// weights, written out without block systems:
///
/// ```text
/// C     = B^2'(Q^2 + L^mu)B^2 + I - R^{12}B^2'M^mu B^2
/// N^x   = -C^-1 (B^2'L^x - R^{12}B^2'M^x)
/// N^mu  = -C^-1 (B^2'(Q^2 + L^mu) - R^{12}B^2'M^mu) A
/// W^x   = -B^1'(L^x + (L^mu + Q^2) B^2 N^x)
/// W^mu  = -B^1'((L^mu + Q^2)(A + B^2 N^mu))
/// T^x   = -B^2'(M^x + M^mu B^2 N^x)
/// T^mu  = -B^2' M^mu (A + B^2 N^mu)
/// E     = I - B^1 W^x - B^2 T^x
/// Phi^x = E^-1 A,  Phi^mu = E^-1 (B^1 W^mu + B^2 T^mu)
/// Psi^x = B^2 N^x Phi^x,  Psi^mu = A + B^2 (N^x Phi^mu + N^mu)
/// M^x_t  = W^2_t + A'(M^x Phi^x + M^mu Psi^x),   M^mu_t = A'(M^x Phi^mu + M^mu Psi^mu)
/// L^x_t  = W^1_t + A'(L^x Phi^x + (L^mu + Q^2) Psi^x)
/// L^mu_t = A'(L^x Phi^mu + (L^mu + Q^2) Psi^mu)
/// ```
pub fn solve_two_player_lq(spec: &GameSpec, x0: &Vector) -> Result<TwoPlayerPath> {
    check_two_player_lq(spec)?;
    let p = spec.state_dim;
    let horizon = spec.horizon;
    let ip = Matrix::identity(p, p);
    let last = &spec.stages[horizon - 1];
    let mut mx = last.q[1].clone();
    let mut mmu = Matrix::zeros(p, p);
    let mut lx = last.q[0].clone();
    let mut lmu = Matrix::zeros(p, p);
    let mut gains = Vec::with_capacity(horizon);
    let mut operators = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let stage = &spec.stages[t];
        let (a, b1, b2, q2, r12) = (&stage.a, &stage.b[0], &stage.b[1], &stage.q[1], &stage.r[0][1]);
        let m2 = b2.ncols();
        let lead_mu = &lmu + q2;
        let c = b2.transpose() * &lead_mu * b2 + Matrix::identity(m2, m2) - r12 * b2.transpose() * &mmu * b2;
        let c_inv = solve_dense(&c, &Matrix::identity(m2, m2), "two-player cocontrol operator")
            .map_err(|e| e.at_stage(t))?;
        let nx = -(&c_inv * (b2.transpose() * &lx - r12 * b2.transpose() * &mx));
        let nmu = -(&c_inv * (b2.transpose() * &lead_mu - r12 * b2.transpose() * &mmu) * a);
        let wx = -(b1.transpose() * (&lx + &lead_mu * b2 * &nx));
        let wmu = -(b1.transpose() * &lead_mu * (a + b2 * &nmu));
        let tx = -(b2.transpose() * (&mx + &mmu * b2 * &nx));
        let tmu = -(b2.transpose() * &mmu * (a + b2 * &nmu));
        let e = &ip - b1 * &wx - b2 * &tx;
        let e_inv = solve_dense(&e, &ip, "two-player transition operator").map_err(|err| err.at_stage(t))?;
        let phix = &e_inv * a;
        let phimu = &e_inv * (b1 * &wmu + b2 * &tmu);
        let psix = b2 * &nx * &phix;
        let psimu = a + b2 * (&nx * &phimu + &nmu);
        let new_mx = spec.state_weight(t, 1) + a.transpose() * (&mx * &phix + &mmu * &psix);
        let new_mmu = a.transpose() * (&mx * &phimu + &mmu * &psimu);
        let new_lx = spec.state_weight(t, 0) + a.transpose() * (&lx * &phix + &lead_mu * &psix);
        let new_lmu = a.transpose() * (&lx * &phimu + &lead_mu * &psimu);
        gains.push((
            &wx * &phix,
            &wx * &phimu + &wmu,
            &tx * &phix,
            &tx * &phimu + &tmu,
            phix,
            phimu,
            psix,
            psimu,
        ));
        operators.push(c);
        mx = new_mx;
        mmu = new_mmu;
        lx = new_lx;
        lmu = new_lmu;
    }
    gains.reverse();
    operators.reverse();
    let mut x = x0.clone();
    let mut mu = Vector::zeros(p);
    let mut states = vec![x.clone()];
    let mut controls = vec![Vec::with_capacity(horizon), Vec::with_capacity(horizon)];
    for (p1x, p1mu, p2x, p2mu, phix, phimu, psix, psimu) in &gains {
        controls[0].push(p1x * &x + p1mu * &mu);
        controls[1].push(p2x * &x + p2mu * &mu);
        let next_x = phix * &x + phimu * &mu;
        mu = psix * &x + psimu * &mu;
        x = next_x;
        states.push(x.clone());
    }
    Ok(TwoPlayerPath {
        controls,
        states,
        cocontrol_operators: operators,
    })
}

/// Largest control or state difference between [`solve`] and [`solve_two_player_lq`].
pub fn crosscheck_cor6(spec: &GameSpec, x0: &Vector) -> Result<f64> {
    let main = solve(spec, x0)?;
    let special = solve_two_player_lq(spec, x0)?;
    let controls = crate::openloop_nash::control_deviation(main.controls(), &special.controls);
    let states = main
        .trajectory
        .states
        .iter()
        .zip(&special.states)
        .map(|(a, b)| max_abs_vec(&(a - b)))
        .fold(0.0, f64::max);
    Ok(controls.max(states))
}
