//! Affine-quadratic game specifications, stage costs, and trajectory rollout.
//!
//! Stages are indexed `t = 0..T-1`. Stage `t` maps the pre-decision state `x_t` to
//! `x_{t+1} = A_t x_t + sum_j B_t^j u_t^j + s_t`, and player `i` pays
//!
//! ```text
//! 1/2 (x_{t+1} - xt^i)' Q^i (x_{t+1} - xt^i) + 1/2 sum_j (u^j - ut^{ij})' R^{ij} (u^j - ut^{ij})
//! ```
//!
//! where `xt^i` and `ut^{ij}` are the player's targets. The initial state carries no
//! cost, so the weight acting on `x_t` is `stages[t-1].q[i]` for `t >= 1` and zero at
//! `t = 0` (see [`GameSpec::state_weight`]).

pub mod document;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    classify_definiteness, max_abs, DefinitenessClass, Matrix, Vector, DEFAULT_TOLERANCE,
};

/// A decision maker with a control vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Player {
    pub name: Option<String>,
    pub control_dim: usize,
}

impl Player {
    pub fn new(control_dim: usize) -> Self {
        Self {
            name: None,
            control_dim,
        }
    }

    pub fn named(name: &str, control_dim: usize) -> Self {
        Self {
            name: Some(name.to_string()),
            control_dim,
        }
    }
}

/// Dynamics and cost data of one decision stage.
///
/// Player-indexed fields use ascending player order. `r[i][j]` weights player `j`'s
/// control in player `i`'s cost and `u_target[i][j]` is the matching target.
#[derive(Debug, Clone, PartialEq)]
pub struct StageData {
    pub a: Matrix,
    pub b: Vec<Matrix>,
    pub s: Vector,
    pub q: Vec<Matrix>,
    pub r: Vec<Vec<Matrix>>,
    pub x_target: Vec<Vector>,
    pub u_target: Vec<Vec<Vector>>,
}

impl StageData {
    /// All-zero stage data with identity transition for the given dimensions.
    pub fn zeros(state_dim: usize, control_dims: &[usize]) -> Self {
        let n = control_dims.len();
        Self {
            a: Matrix::identity(state_dim, state_dim),
            b: control_dims
                .iter()
                .map(|&m| Matrix::zeros(state_dim, m))
                .collect(),
            s: Vector::zeros(state_dim),
            q: vec![Matrix::zeros(state_dim, state_dim); n],
            r: (0..n)
                .map(|_| control_dims.iter().map(|&m| Matrix::zeros(m, m)).collect())
                .collect(),
            x_target: vec![Vector::zeros(state_dim); n],
            u_target: (0..n)
                .map(|_| control_dims.iter().map(|&m| Vector::zeros(m)).collect())
                .collect(),
        }
    }

    /// True when the drift and every target vanish.
    pub fn is_linear_quadratic(&self) -> bool {
        self.s.iter().all(|v| *v == 0.0)
            && self.x_target.iter().all(|x| x.iter().all(|v| *v == 0.0))
            && self
                .u_target
                .iter()
                .flatten()
                .all(|u| u.iter().all(|v| *v == 0.0))
    }
}

/// A finite-horizon affine-quadratic dynamic game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub horizon: usize,
    pub state_dim: usize,
    pub players: Vec<Player>,
    pub stages: Vec<StageData>,
}

impl GameSpec {
    /// Builds a game from per-stage data; the horizon is the number of stages.
    pub fn new(state_dim: usize, players: Vec<Player>, stages: Vec<StageData>) -> Self {
        Self {
            horizon: stages.len(),
            state_dim,
            players,
            stages,
        }
    }

    /// Builds a game whose stages all share the same data.
    pub fn stationary(
        state_dim: usize,
        players: Vec<Player>,
        stage: StageData,
        horizon: usize,
    ) -> Self {
        Self::new(state_dim, players, vec![stage; horizon])
    }

    pub fn player_count(&self) -> usize {
        self.players.len()
    }

    pub fn control_dim(&self, player: usize) -> usize {
        self.players[player].control_dim
    }

    pub fn control_dims(&self) -> Vec<usize> {
        self.players.iter().map(|p| p.control_dim).collect()
    }

    /// Weight of player `i`'s cost acting on the state `x_t`, for `t = 0..=T`.
    pub fn state_weight(&self, t: usize, player: usize) -> Matrix {
        if t == 0 {
            Matrix::zeros(self.state_dim, self.state_dim)
        } else {
            self.stages[t - 1].q[player].clone()
        }
    }

    /// The game restricted to stages `from..T`, re-indexed to start at zero.
    pub fn truncated(&self, from: usize) -> Self {
        Self::new(
            self.state_dim,
            self.players.clone(),
            self.stages[from..].to_vec(),
        )
    }

    /// True when every stage has zero drift and zero targets.
    pub fn is_linear_quadratic(&self) -> bool {
        self.stages.iter().all(StageData::is_linear_quadratic)
    }

    /// Copy with every `Q` and `R` replaced by its symmetric part when the
    /// asymmetry is within `tol`; fails on the first larger asymmetry.
    pub fn symmetrized(&self, tol: f64) -> Result<Self> {
        let mut out = self.clone();
        for (t, stage) in out.stages.iter_mut().enumerate() {
            for (i, q) in stage.q.iter_mut().enumerate() {
                *q = crate::numerics::symmetrize(q, tol).map_err(|_| {
                    Error::InvalidArgument(format!("Q^{} not symmetric at stage {t}", i + 1))
                })?;
            }
            for (i, row) in stage.r.iter_mut().enumerate() {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = crate::numerics::symmetrize(r, tol).map_err(|_| {
                        Error::InvalidArgument(format!(
                            "R^{{{}{}}} not symmetric at stage {t}",
                            i + 1,
                            j + 1
                        ))
                    })?;
                }
            }
        }
        Ok(out)
    }
}

/// One problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: Option<usize>,
    pub message: String,
}

/// List of problems found by [`validate`]; empty when the game is well formed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, stage: Option<usize>, message: String) {
        self.violations.push(Violation { stage, message });
    }

    /// Converts a non-empty report into a precondition error.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let joined: Vec<String> = self.violations.iter().map(|v| v.message.clone()).collect();
            Err(Error::Precondition(joined.join("; ")))
        }
    }
}

fn check_shape(
    report: &mut ValidationReport,
    t: usize,
    name: &str,
    found: (usize, usize),
    expected: (usize, usize),
) -> bool {
    if found != expected {
        report.push(
            Some(t),
            format!(
                "{name} is {}x{}, expected {}x{} at stage {t}",
                found.0, found.1, expected.0, expected.1
            ),
        );
        false
    } else {
        true
    }
}

fn check_symmetric_class(
    report: &mut ValidationReport,
    t: usize,
    name: &str,
    m: &Matrix,
    tol: f64,
    require_pd: bool,
) {
    let asymmetry = max_abs(&(m - m.transpose()));
    if asymmetry > tol * (1.0 + max_abs(m)) {
        report.push(Some(t), format!("{name} not symmetric at stage {t}"));
        return;
    }
    let sym = (m + m.transpose()) * 0.5;
    match classify_definiteness(&sym, tol) {
        Ok(d) if require_pd && d.class != DefinitenessClass::PositiveDefinite => {
            report.push(Some(t), format!("{name} not PD at stage {t}"))
        }
        Ok(d) if d.class == DefinitenessClass::Indefinite => {
            report.push(Some(t), format!("{name} not PSD at stage {t}"))
        }
        Ok(_) => {}
        Err(e) => report.push(Some(t), format!("{name} at stage {t}: {e}")),
    }
}

/// Checks dimensions, symmetry, and the definiteness conditions shared by all solvers:
/// every `Q^i` positive semidefinite and every `R^{ii}` positive definite.
pub fn validate(spec: &GameSpec, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let p = spec.state_dim;
    let n = spec.player_count();
    if spec.horizon == 0 {
        report.push(None, "horizon must be at least 1".into());
    }
    if p == 0 {
        report.push(None, "state_dim must be at least 1".into());
    }
    if n == 0 {
        report.push(None, "at least one player is required".into());
    }
    for (i, player) in spec.players.iter().enumerate() {
        if player.control_dim == 0 {
            report.push(None, format!("player {} has control_dim 0", i + 1));
        }
    }
    if spec.stages.len() != spec.horizon {
        report.push(
            None,
            format!(
                "{} stages supplied for horizon {}",
                spec.stages.len(),
                spec.horizon
            ),
        );
    }
    if !report.is_valid() {
        return report;
    }
    let dims = spec.control_dims();
    for (t, stage) in spec.stages.iter().enumerate() {
        check_shape(&mut report, t, "A", stage.a.shape(), (p, p));
        if stage.s.len() != p {
            report.push(Some(t), format!("s has length {}, expected {p} at stage {t}", stage.s.len()));
        }
        let counts = [
            ("B", stage.b.len()),
            ("Q", stage.q.len()),
            ("R", stage.r.len()),
            ("x_target", stage.x_target.len()),
            ("u_target", stage.u_target.len()),
        ];
        let mut counts_ok = true;
        for (name, count) in counts {
            if count != n {
                report.push(Some(t), format!("{name} has {count} entries, expected {n} at stage {t}"));
                counts_ok = false;
            }
        }
        if !counts_ok {
            continue;
        }
        for j in 0..n {
            check_shape(&mut report, t, &format!("B^{}", j + 1), stage.b[j].shape(), (p, dims[j]));
        }
        for i in 0..n {
            let q_name = format!("Q^{}", i + 1);
            if check_shape(&mut report, t, &q_name, stage.q[i].shape(), (p, p)) {
                check_symmetric_class(&mut report, t, &q_name, &stage.q[i], tol, false);
            }
            if stage.x_target[i].len() != p {
                report.push(Some(t), format!("x_target^{} has wrong length at stage {t}", i + 1));
            }
            if stage.r[i].len() != n || stage.u_target[i].len() != n {
                report.push(Some(t), format!("R/u_target row {} has wrong length at stage {t}", i + 1));
                continue;
            }
            for j in 0..n {
                let r_name = format!("R^{{{}{}}}", i + 1, j + 1);
                if check_shape(&mut report, t, &r_name, stage.r[i][j].shape(), (dims[j], dims[j])) {
                    if i == j {
                        check_symmetric_class(&mut report, t, &r_name, &stage.r[i][j], tol, true);
                    } else {
                        let m = &stage.r[i][j];
                        if max_abs(&(m - m.transpose())) > tol * (1.0 + max_abs(m)) {
                            report.push(Some(t), format!("{r_name} not symmetric at stage {t}"));
                        }
                    }
                }
                if stage.u_target[i][j].len() != dims[j] {
                    report.push(
                        Some(t),
                        format!("u_target^{{{}{}}} has wrong length at stage {t}", i + 1, j + 1),
                    );
                }
            }
        }
    }
    report
}

/// [`validate`] plus the leader condition of Stackelberg solvers: `R^{1j}`
/// positive semidefinite for every follower `j`, and at least two players.
pub fn validate_stackelberg(spec: &GameSpec, tol: f64) -> ValidationReport {
    let mut report = validate(spec, tol);
    if !report.is_valid() {
        return report;
    }
    if spec.player_count() < 2 {
        report.push(None, "Stackelberg games need a leader and at least one follower".into());
        return report;
    }
    for (t, stage) in spec.stages.iter().enumerate() {
        for j in 1..spec.player_count() {
            let name = format!("R^{{1{}}}", j + 1);
            check_symmetric_class(&mut report, t, &name, &stage.r[0][j], tol, false);
        }
    }
    report
}

/// Affine decision rule `u = gain * x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw {
    pub gain: Matrix,
    pub offset: Vector,
}

impl ControlLaw {
    pub fn new(gain: Matrix, offset: Vector) -> Self {
        Self { gain, offset }
    }

    /// The law that always returns `control`.
    pub fn constant(control: Vector, state_dim: usize) -> Self {
        Self {
            gain: Matrix::zeros(control.len(), state_dim),
            offset: control,
        }
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        &self.gain * x + &self.offset
    }
}

/// Per-stage, per-player feedback laws with the players' quadratic value functions.
///
/// `laws[t][i]` is player `i`'s law at stage `t`. `value_hessian[i][t]`,
/// `value_linear[i][t]`, and `value_constant[i][t]` for `t = 0..=T` define
/// `V_t^i(x) = 1/2 x' (H - W_t) x + g' x + c`, where `W_t` is
/// [`GameSpec::state_weight`]; the Hessian thus includes the weight on `x_t` and ends
/// at the terminal weight `stages[T-1].q[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSolution {
    pub laws: Vec<Vec<ControlLaw>>,
    pub value_hessian: Vec<Vec<Matrix>>,
    pub value_linear: Vec<Vec<Vector>>,
    pub value_constant: Vec<Vec<f64>>,
}

impl FeedbackSolution {
    /// Player `i`'s equilibrium cost incurred from stage `t` onward, starting at `x`.
    pub fn cost_to_go(&self, spec: &GameSpec, t: usize, x: &Vector, player: usize) -> f64 {
        let h = &self.value_hessian[player][t] - spec.state_weight(t, player);
        0.5 * x.dot(&(h * x)) + self.value_linear[player][t].dot(x) + self.value_constant[player][t]
    }

    /// Player `i`'s total equilibrium cost from the initial state `x0`.
    pub fn value(&self, x0: &Vector, player: usize) -> f64 {
        0.5 * x0.dot(&(&self.value_hessian[player][0] * x0))
            + self.value_linear[player][0].dot(x0)
            + self.value_constant[player][0]
    }
}

/// States, controls, and costs of one play of the game.
///
/// `controls[i][t]` and `stage_costs[i][t]` are indexed by player then stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub controls: Vec<Vec<Vector>>,
    pub stage_costs: Vec<Vec<f64>>,
    pub total_costs: Vec<f64>,
}

impl Trajectory {
    /// Controls of all players at stage `t`.
    pub fn controls_at(&self, t: usize) -> Vec<Vector> {
        self.controls.iter().map(|seq| seq[t].clone()).collect()
    }
}

/// How controls are produced during [`rollout`].
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Feedback laws indexed `[t][i]`, evaluated at the current state.
    Laws(&'a [Vec<ControlLaw>]),
    /// Explicit control sequences indexed `[i][t]`.
    Controls(&'a [Vec<Vector>]),
}

/// Player `i`'s cost at stage `t` for the post-decision state and all controls.
pub fn stage_cost(
    spec: &GameSpec,
    player: usize,
    t: usize,
    x_next: &Vector,
    u_all: &[Vector],
) -> Result<f64> {
    if player >= spec.player_count() {
        return Err(Error::InvalidArgument(format!("player index {player} out of range")));
    }
    if t >= spec.horizon {
        return Err(Error::InvalidArgument(format!("stage {t} outside horizon {}", spec.horizon)));
    }
    if x_next.len() != spec.state_dim {
        return Err(Error::InvalidArgument(format!(
            "state has length {}, expected {}",
            x_next.len(),
            spec.state_dim
        )));
    }
    if u_all.len() != spec.player_count() {
        return Err(Error::InvalidArgument(format!(
            "{} controls supplied for {} players",
            u_all.len(),
            spec.player_count()
        )));
    }
    let stage = &spec.stages[t];
    let dx = x_next - &stage.x_target[player];
    let mut cost = 0.5 * dx.dot(&(&stage.q[player] * &dx));
    for (j, u) in u_all.iter().enumerate() {
        if u.len() != spec.control_dim(j) {
            return Err(Error::InvalidArgument(format!(
                "control of player {} has length {}, expected {}",
                j + 1,
                u.len(),
                spec.control_dim(j)
            )));
        }
        let du = u - &stage.u_target[player][j];
        cost += 0.5 * du.dot(&(&stage.r[player][j] * &du));
    }
    Ok(cost)
}

fn check_trajectory(spec: &GameSpec, traj: &Trajectory) -> Result<()> {
    let t_len = spec.horizon;
    if traj.states.len() != t_len + 1 {
        return Err(Error::InvalidArgument(format!(
            "trajectory has {} states, expected {}",
            traj.states.len(),
            t_len + 1
        )));
    }
    if traj.controls.len() != spec.player_count()
        || traj.controls.iter().any(|seq| seq.len() != t_len)
    {
        return Err(Error::InvalidArgument(
            "trajectory control sequences do not match the horizon and player count".into(),
        ));
    }
    Ok(())
}

/// Player `i`'s total cost along a trajectory, recomputed from states and controls.
pub fn total_cost(spec: &GameSpec, traj: &Trajectory, player: usize) -> Result<f64> {
    check_trajectory(spec, traj)?;
    let mut total = 0.0;
    for t in 0..spec.horizon {
        total += stage_cost(spec, player, t, &traj.states[t + 1], &traj.controls_at(t))?;
    }
    Ok(total)
}

/// One state-equation step at stage `t`.
pub fn step(spec: &GameSpec, t: usize, x: &Vector, u_all: &[Vector]) -> Vector {
    let stage = &spec.stages[t];
    let mut next = &stage.a * x + &stage.s;
    for (b, u) in stage.b.iter().zip(u_all) {
        next += b * u;
    }
    next
}

/// Simulates the game from `x0` under `policy` and records all costs.
pub fn rollout(spec: &GameSpec, policy: Policy<'_>, x0: &Vector) -> Result<Trajectory> {
    let n = spec.player_count();
    if x0.len() != spec.state_dim {
        return Err(Error::InvalidArgument(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            spec.state_dim
        )));
    }
    match policy {
        Policy::Laws(laws) if laws.len() != spec.horizon || laws.iter().any(|l| l.len() != n) => {
            return Err(Error::InvalidArgument("law set does not match the game".into()));
        }
        Policy::Controls(seqs) if seqs.len() != n || seqs.iter().any(|s| s.len() != spec.horizon) => {
            return Err(Error::InvalidArgument(
                "control sequences do not match the game".into(),
            ));
        }
        _ => {}
    }
    let mut states = Vec::with_capacity(spec.horizon + 1);
    let mut controls = vec![Vec::with_capacity(spec.horizon); n];
    let mut stage_costs = vec![Vec::with_capacity(spec.horizon); n];
    let mut x = x0.clone();
    states.push(x.clone());
    for t in 0..spec.horizon {
        let u_all: Vec<Vector> = match policy {
            Policy::Laws(laws) => laws[t].iter().map(|law| law.apply(&x)).collect(),
            Policy::Controls(seqs) => seqs.iter().map(|seq| seq[t].clone()).collect(),
        };
        let next = step(spec, t, &x, &u_all);
        for i in 0..n {
            stage_costs[i].push(stage_cost(spec, i, t, &next, &u_all)?);
        }
        for (i, u) in u_all.into_iter().enumerate() {
            controls[i].push(u);
        }
        x = next;
        states.push(x.clone());
    }
    let total_costs = stage_costs.iter().map(|c| c.iter().sum()).collect();
    Ok(Trajectory {
        states,
        controls,
        stage_costs,
        total_costs,
    })
}

/// Runs [`validate`] at the default tolerance and converts violations to an error.
pub(crate) fn ensure_valid(spec: &GameSpec) -> Result<()> {
    validate(spec, DEFAULT_TOLERANCE).into_result()
}
