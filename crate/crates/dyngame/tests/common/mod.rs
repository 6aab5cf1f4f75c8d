//! Shared fixtures for the integration tests: seeded random games, the scalar unit
//! instances, and dense whole-horizon oracles that never touch the recursions.
#![allow(dead_code)]

use dyngame::{GameSpec, Matrix, Player, StageData, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INSTANCES: usize = 50;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.gen_range(-1.0..1.0))
}

fn gram(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Matrix {
    let factor = uniform(rng, dim, dim);
    &factor * factor.transpose() * scale
}

/// Knobs for [`random_game`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub players: (usize, usize),
    /// Zero drift and targets.
    pub linear_quadratic: bool,
    /// `R^{ii} = I` exactly, as the two-player closed forms require.
    pub unit_own_weights: bool,
    /// `R^{ij} = 0` for `i != j`.
    pub no_cross_weights: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            players: (1, 3),
            linear_quadratic: false,
            unit_own_weights: false,
            no_cross_weights: false,
        }
    }
}

/// Random game with `p <= 3`, `m_i <= 2`, `n` in `shape.players`, `T <= 5`, PSD
/// state weights, PD own control weights and PSD cross weights.
pub fn random_game(rng: &mut ChaCha8Rng, shape: Shape) -> GameSpec {
    let p = rng.gen_range(1..=3);
    let n = rng.gen_range(shape.players.0..=shape.players.1);
    let horizon = rng.gen_range(1..=5);
    let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=2)).collect();
    let players = dims.iter().map(|&m| Player::new(m)).collect();
    let stages = (0..horizon)
        .map(|_| {
            let mut stage = StageData::zeros(p, &dims);
            stage.a = uniform(rng, p, p);
            for i in 0..n {
                stage.b[i] = uniform(rng, p, dims[i]);
                stage.q[i] = gram(rng, p, 0.5);
                for j in 0..n {
                    stage.r[i][j] = if i == j {
                        if shape.unit_own_weights {
                            Matrix::identity(dims[i], dims[i])
                        } else {
                            gram(rng, dims[i], 0.5) + Matrix::identity(dims[i], dims[i]) * 0.5
                        }
                    } else if shape.no_cross_weights {
                        Matrix::zeros(dims[j], dims[j])
                    } else {
                        gram(rng, dims[j], 0.3)
                    };
                }
            }
            if !shape.linear_quadratic {
                stage.s = uniform_vec(rng, p);
                for i in 0..n {
                    stage.x_target[i] = uniform_vec(rng, p);
                    for (target, &m) in stage.u_target[i].iter_mut().zip(&dims) {
                        *target = uniform_vec(rng, m);
                    }
                }
            }
            stage
        })
        .collect();
    GameSpec::new(p, players, stages)
}

pub fn random_x0(rng: &mut ChaCha8Rng, spec: &GameSpec) -> Vector {
    uniform_vec(rng, spec.state_dim)
}

pub fn random_pd(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
    gram(rng, dim, 1.0) + Matrix::identity(dim, dim) * 0.1
}

pub fn random_psd(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
    let rank = rng.gen_range(0..=dim);
    let factor = uniform(rng, dim, rank);
    &factor * factor.transpose()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    uniform(rng, rows, cols)
}

/// Scalar game with `A = 1`, `B^i = 1`, `Q^i = 1`, `R^{ii} = 1`, `R^{ij} = 0`.
pub fn unit_game(players: usize, horizon: usize) -> GameSpec {
    let dims = vec![1; players];
    let mut stage = StageData::zeros(1, &dims);
    for i in 0..players {
        stage.b[i][(0, 0)] = 1.0;
        stage.q[i][(0, 0)] = 1.0;
        stage.r[i][i][(0, 0)] = 1.0;
    }
    GameSpec::stationary(1, (0..players).map(|_| Player::new(1)).collect(), stage, horizon)
}

pub fn scalar(value: f64) -> Vector {
    Vector::from_element(1, value)
}

/// Every player's total cost as a quadratic in the stacked controls
/// `U = (u^1_0..u^1_{T-1}, u^2_0.., ...)`: `L^i(U) = U'H^iU/2 + c^i'U + const`.
pub struct StackedCosts {
    pub hessians: Vec<Matrix>,
    pub gradients: Vec<Vector>,
    /// Start index of each player's block in `U`.
    pub offsets: Vec<usize>,
    pub len: usize,
}

pub fn stacked_costs(spec: &GameSpec, x0: &Vector) -> StackedCosts {
    let n = spec.player_count();
    let horizon = spec.horizon;
    let p = spec.state_dim;
    let mut offsets = Vec::with_capacity(n);
    let mut len = 0;
    for i in 0..n {
        offsets.push(len);
        len += spec.control_dim(i) * horizon;
    }
    let selector = |i: usize, t: usize| {
        let m = spec.control_dim(i);
        let mut e = Matrix::zeros(m, len);
        for k in 0..m {
            e[(k, offsets[i] + t * m + k)] = 1.0;
        }
        e
    };
    // x_t = state_map * U + state_const
    let mut state_map = Matrix::zeros(p, len);
    let mut state_const = x0.clone();
    let mut hessians = vec![Matrix::zeros(len, len); n];
    let mut gradients = vec![Vector::zeros(len); n];
    for t in 0..horizon {
        let stage = &spec.stages[t];
        let mut next_map = &stage.a * &state_map;
        let next_const = &stage.a * &state_const + &stage.s;
        for j in 0..n {
            next_map += &stage.b[j] * selector(j, t);
        }
        for i in 0..n {
            hessians[i] += next_map.transpose() * &stage.q[i] * &next_map;
            gradients[i] += next_map.transpose() * &stage.q[i] * (&next_const - &stage.x_target[i]);
            for j in 0..n {
                let e = selector(j, t);
                hessians[i] += e.transpose() * &stage.r[i][j] * &e;
                gradients[i] -= e.transpose() * &stage.r[i][j] * &stage.u_target[i][j];
            }
        }
        state_map = next_map;
        state_const = next_const;
    }
    StackedCosts {
        hessians,
        gradients,
        offsets,
        len,
    }
}

fn split(spec: &GameSpec, stacked: &StackedCosts, u: &Vector) -> Vec<Vec<Vector>> {
    (0..spec.player_count())
        .map(|i| {
            let m = spec.control_dim(i);
            (0..spec.horizon)
                .map(|t| u.rows(stacked.offsets[i] + t * m, m).into_owned())
                .collect()
        })
        .collect()
}

fn player_range(spec: &GameSpec, stacked: &StackedCosts, i: usize) -> std::ops::Range<usize> {
    let start = stacked.offsets[i];
    start..start + spec.control_dim(i) * spec.horizon
}

/// Open-loop Nash controls from the stacked first-order conditions.
pub fn dense_openloop_nash(spec: &GameSpec, x0: &Vector) -> Vec<Vec<Vector>> {
    let stacked = stacked_costs(spec, x0);
    let mut lhs = Matrix::zeros(stacked.len, stacked.len);
    let mut rhs = Vector::zeros(stacked.len);
    for i in 0..spec.player_count() {
        for row in player_range(spec, &stacked, i) {
            lhs.set_row(row, &stacked.hessians[i].row(row));
            rhs[row] = -stacked.gradients[i][row];
        }
    }
    let u = lhs.lu().solve(&rhs).expect("nonsingular Nash system");
    split(spec, &stacked, &u)
}

/// Open-loop Stackelberg controls: the followers' stacked Nash conditions give an
/// affine response to the leader's sequence, and the leader minimizes its cost
/// composed with that response.
pub fn dense_openloop_stackelberg(spec: &GameSpec, x0: &Vector) -> Vec<Vec<Vector>> {
    let stacked = stacked_costs(spec, x0);
    let leader = player_range(spec, &stacked, 0);
    let lead_len = leader.len();
    let follow_len = stacked.len - lead_len;
    // Followers: F_ff U_f + F_f1 u^1 = -c_f.
    let mut f_ff = Matrix::zeros(follow_len, follow_len);
    let mut f_f1 = Matrix::zeros(follow_len, lead_len);
    let mut c_f = Vector::zeros(follow_len);
    for i in 1..spec.player_count() {
        for row in player_range(spec, &stacked, i) {
            let r = row - lead_len;
            f_ff.set_row(r, &stacked.hessians[i].row(row).columns(lead_len, follow_len));
            f_f1.set_row(r, &stacked.hessians[i].row(row).columns(0, lead_len));
            c_f[r] = stacked.gradients[i][row];
        }
    }
    let lu = f_ff.lu();
    let response_gain = -lu.solve(&f_f1).expect("nonsingular follower system");
    let response_offset = -lu.solve(&c_f).expect("nonsingular follower system");
    let mut embed = Matrix::zeros(stacked.len, lead_len);
    embed.view_mut((0, 0), (lead_len, lead_len)).fill_with_identity();
    embed.view_mut((lead_len, 0), (follow_len, lead_len)).copy_from(&response_gain);
    let mut shift = Vector::zeros(stacked.len);
    shift.rows_mut(lead_len, follow_len).copy_from(&response_offset);
    let h = &stacked.hessians[0];
    let reduced = embed.transpose() * h * &embed;
    let linear = embed.transpose() * (h * &shift + &stacked.gradients[0]);
    let u1 = reduced.lu().solve(&(-linear)).expect("nonsingular leader system");
    let u = embed * u1 + shift;
    split(spec, &stacked, &u)
}

pub fn sequence_deviation(left: &[Vec<Vector>], right: &[Vec<Vector>]) -> f64 {
    left.iter()
        .zip(right)
        .flat_map(|(a, b)| a.iter().zip(b))
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max)
}
