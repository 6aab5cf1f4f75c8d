//! Command-line front end for `dyngame`: parse game documents, run solvers, write
//! trajectories and verification reports, and compare solution concepts.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use dyngame::feedback_stackelberg::FeedbackStackelbergSolution;
use dyngame::game_model::document::game_from_str;
use dyngame::game_model::{rollout, validate, validate_stackelberg};
use dyngame::openloop_nash::OpenLoopNashSolution;
use dyngame::openloop_stackelberg::OLStackelbergSolution;
use dyngame::verify::{self, Candidate, VerifyOptions};
use dyngame::{
    feedback_nash, feedback_stackelberg, lq_control, openloop_nash, openloop_stackelberg, ControlLaw,
    FeedbackSolution, GameSpec, Policy, Trajectory, Vector,
};
use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INVALID: i32 = 1;
    pub const SOLVER: i32 = 2;
    pub const VERIFICATION: i32 = 3;
}

const DEFAULT_VALIDATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Check a game document against the model's requirements.
    Validate,
    /// Solve a game; with `--x0` also play the solution out.
    Solve,
    /// Solve and write the equilibrium trajectory from `--x0`.
    Simulate,
    /// Solve and run every verification oracle.
    Verify,
    /// Run every applicable solver and tabulate costs and controls.
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Lqr,
    FeedbackNash,
    FeedbackStackelberg,
    OpenloopNash,
    OpenloopStackelberg,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Lqr => "lqr",
            SolverKind::FeedbackNash => "feedback-nash",
            SolverKind::FeedbackStackelberg => "feedback-stackelberg",
            SolverKind::OpenloopNash => "openloop-nash",
            SolverKind::OpenloopStackelberg => "openloop-stackelberg",
        }
    }

    fn is_open_loop(self) -> bool {
        matches!(self, SolverKind::OpenloopNash | SolverKind::OpenloopStackelberg)
    }

    const ALL: [SolverKind; 5] = [
        SolverKind::Lqr,
        SolverKind::FeedbackNash,
        SolverKind::FeedbackStackelberg,
        SolverKind::OpenloopNash,
        SolverKind::OpenloopStackelberg,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Parsed command line.
#[derive(Debug, Clone, Parser)]
#[command(name = "dyngame", version, about = "Solve and verify affine-quadratic dynamic games")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Game document (JSON).
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Initial state: comma-separated numbers, or a file holding a JSON array or
    /// whitespace/comma-separated numbers.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Seed of the verification deviations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random deviations per player.
    #[arg(long, default_value_t = verify::DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = verify::DEFAULT_FD_STEP)]
    pub fd_step: f64,
    /// Definiteness and symmetry tolerance for validation.
    #[arg(long)]
    pub tol: Option<f64>,
}

/// A failed run with its exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: exit::INVALID,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<dyngame::Error> for Failure {
    fn from(err: dyngame::Error) -> Self {
        let code = if err.is_singular() { exit::SOLVER } else { exit::INVALID };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Reads and parses a game document; schema errors name the offending JSON pointer.
pub fn parse_game(path: &Path) -> Outcome<GameSpec> {
    let text = fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    game_from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Parses an initial state given inline (`1,-2.5`) or as a file path.
pub fn parse_x0(arg: &str) -> Outcome<Vector> {
    let inline: std::result::Result<Vec<f64>, _> = arg.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = match inline {
        Ok(values) => values,
        Err(_) => {
            let text = fs::read_to_string(arg).map_err(|e| Failure::invalid(format!("x0: {arg}: {e}")))?;
            match serde_json::from_str::<Vec<f64>>(&text) {
                Ok(values) => values,
                Err(_) => text
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<f64>, _>>()
                    .map_err(|e| Failure::invalid(format!("x0: {arg}: {e}")))?,
            }
        }
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Failure::invalid("x0: expected finite numbers"));
    }
    Ok(Vector::from_vec(values))
}

/// One solver's output.
enum Solved {
    Feedback(FeedbackSolution),
    FeedbackStackelberg(FeedbackStackelbergSolution),
    OpenLoopNash(OpenLoopNashSolution),
    OpenLoopStackelberg(OLStackelbergSolution),
}

impl Solved {
    fn laws(&self) -> Option<&[Vec<ControlLaw>]> {
        match self {
            Solved::Feedback(sol) => Some(&sol.laws),
            Solved::FeedbackStackelberg(sol) => Some(sol.laws()),
            _ => None,
        }
    }

    fn trajectory(&self, spec: &GameSpec, x0: Option<&Vector>) -> Outcome<Option<Trajectory>> {
        Ok(match self {
            Solved::OpenLoopNash(sol) => Some(sol.trajectory.clone()),
            Solved::OpenLoopStackelberg(sol) => Some(sol.trajectory.clone()),
            _ => match x0 {
                Some(x0) => Some(rollout(spec, Policy::Laws(self.laws().expect("feedback laws")), x0)?),
                None => None,
            },
        })
    }

    fn candidate<'a>(&'a self, x0: &'a Vector) -> Candidate<'a> {
        match self {
            Solved::Feedback(solution) => Candidate::FeedbackNash { solution, x0 },
            Solved::FeedbackStackelberg(solution) => Candidate::FeedbackStackelberg { solution, x0 },
            Solved::OpenLoopNash(sol) => Candidate::OpenLoopNash(sol),
            Solved::OpenLoopStackelberg(sol) => Candidate::OpenLoopStackelberg(sol),
        }
    }
}

fn check_x0(spec: &GameSpec, x0: &Vector) -> Outcome<()> {
    if x0.len() != spec.state_dim {
        return Err(Failure::invalid(format!(
            "x0: has length {}, expected state_dim = {}",
            x0.len(),
            spec.state_dim
        )));
    }
    Ok(())
}

fn solve(spec: &GameSpec, solver: SolverKind, x0: Option<&Vector>) -> Outcome<Solved> {
    if solver.is_open_loop() && x0.is_none() {
        return Err(Failure::invalid(format!("--x0 is required for {}", solver.name())));
    }
    if solver == SolverKind::Lqr && spec.player_count() != 1 {
        return Err(Failure::invalid(format!(
            "players: lqr needs exactly one player, found {}",
            spec.player_count()
        )));
    }
    log::info!("solving with {}", solver.name());
    Ok(match solver {
        SolverKind::Lqr => Solved::Feedback(lq_control::solve_control(spec)?),
        SolverKind::FeedbackNash => Solved::Feedback(feedback_nash::solve(spec)?),
        SolverKind::FeedbackStackelberg => Solved::FeedbackStackelberg(feedback_stackelberg::solve(spec)?),
        SolverKind::OpenloopNash => Solved::OpenLoopNash(openloop_nash::solve(spec, x0.expect("checked"))?),
        SolverKind::OpenloopStackelberg => {
            Solved::OpenLoopStackelberg(openloop_stackelberg::solve(spec, x0.expect("checked"))?)
        }
    })
}

#[derive(Serialize)]
struct LawOut {
    gain: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

/// Maps negative zero to zero so that printed output does not show `-0.0`.
fn tidy(value: f64) -> f64 {
    value + 0.0
}

fn law_out(law: &ControlLaw) -> LawOut {
    LawOut {
        gain: law.gain.row_iter().map(|r| r.iter().copied().map(tidy).collect()).collect(),
        offset: law.offset.iter().copied().map(tidy).collect(),
    }
}

#[derive(Serialize)]
struct TrajectoryOut {
    states: Vec<Vec<f64>>,
    /// `[player][stage]`.
    controls: Vec<Vec<Vec<f64>>>,
    /// `[player][stage]`.
    stage_costs: Vec<Vec<f64>>,
    total_costs: Vec<f64>,
}

fn trajectory_out(traj: &Trajectory) -> TrajectoryOut {
    let seq = |v: &Vector| v.iter().copied().map(tidy).collect::<Vec<f64>>();
    TrajectoryOut {
        states: traj.states.iter().map(seq).collect(),
        controls: traj.controls.iter().map(|c| c.iter().map(seq).collect()).collect(),
        stage_costs: traj.stage_costs.clone(),
        total_costs: traj.total_costs.clone(),
    }
}

#[derive(Serialize)]
struct SolveOut {
    solver: &'static str,
    /// Feedback solvers only, `[stage][player]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    laws: Option<Vec<Vec<LawOut>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectory: Option<TrajectoryOut>,
}

/// CSV layout: one row per stage with `t`, the state entries, every player's control
/// entries, and every player's stage cost; a final row carries the terminal state.
fn trajectory_csv(spec: &GameSpec, traj: &Trajectory) -> Outcome<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((0..spec.state_dim).map(|k| format!("x{k}")));
    for i in 0..spec.player_count() {
        header.extend((0..spec.control_dim(i)).map(|k| format!("u{}_{k}", i + 1)));
    }
    header.extend((0..spec.player_count()).map(|i| format!("cost{}", i + 1)));
    let width = header.len();
    writer.write_record(&header).map_err(csv_failure)?;
    for t in 0..=spec.horizon {
        let mut row = vec![t.to_string()];
        row.extend(traj.states[t].iter().map(|v| v.to_string()));
        if t < spec.horizon {
            for controls in &traj.controls {
                row.extend(controls[t].iter().map(|v| v.to_string()));
            }
            row.extend(traj.stage_costs.iter().map(|c| c[t].to_string()));
        }
        row.resize(width, String::new());
        writer.write_record(&row).map_err(csv_failure)?;
    }
    let bytes = writer.into_inner().map_err(|e| Failure::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_failure(err: csv::Error) -> Failure {
    Failure::invalid(format!("csv: {err}"))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    text
}

fn emit(config: &RunConfig, text: &str) -> Outcome<()> {
    match &config.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::invalid(format!("stdout: {e}"))),
    }
}

fn require_solver(config: &RunConfig) -> Outcome<SolverKind> {
    config
        .solver
        .ok_or_else(|| Failure::invalid(format!("--solver is required for {:?}", config.command).to_lowercase()))
}

fn x0_for(config: &RunConfig, spec: &GameSpec) -> Outcome<Option<Vector>> {
    match &config.x0 {
        Some(arg) => {
            let x0 = parse_x0(arg)?;
            check_x0(spec, &x0)?;
            Ok(Some(x0))
        }
        None => Ok(None),
    }
}

fn require_x0(config: &RunConfig, spec: &GameSpec) -> Outcome<Vector> {
    x0_for(config, spec)?.ok_or_else(|| Failure::invalid(format!("--x0 is required for {:?}", config.command).to_lowercase()))
}

fn run_validate(config: &RunConfig, spec: &GameSpec) -> Outcome<()> {
    let tol = config.tol.unwrap_or(DEFAULT_VALIDATION_TOLERANCE);
    let mut report = validate(spec, tol);
    if config.solver == Some(SolverKind::FeedbackStackelberg) || config.solver == Some(SolverKind::OpenloopStackelberg) {
        report = validate_stackelberg(spec, tol);
    }
    if report.is_valid() {
        log::info!("game is valid");
        return Ok(());
    }
    let lines: Vec<String> = report
        .violations
        .iter()
        .map(|v| match v.stage {
            Some(t) => format!("stage {t}: {}", v.message),
            None => v.message.clone(),
        })
        .collect();
    Err(Failure::invalid(lines.join("\n")))
}

fn run_solve(config: &RunConfig, spec: &GameSpec, trajectory_only: bool) -> Outcome<()> {
    let solver = require_solver(config)?;
    let x0 = if trajectory_only {
        Some(require_x0(config, spec)?)
    } else {
        x0_for(config, spec)?
    };
    let solved = solve(spec, solver, x0.as_ref())?;
    let trajectory = solved.trajectory(spec, x0.as_ref())?;
    let text = match config.format {
        Format::Csv => {
            let traj = trajectory.ok_or_else(|| Failure::invalid("--x0 is required for csv output"))?;
            trajectory_csv(spec, &traj)?
        }
        Format::Json if trajectory_only => to_json(&trajectory_out(&trajectory.expect("x0 given"))),
        Format::Json => to_json(&SolveOut {
            solver: solver.name(),
            laws: solved
                .laws()
                .map(|laws| laws.iter().map(|stage| stage.iter().map(law_out).collect()).collect()),
            trajectory: trajectory.as_ref().map(trajectory_out),
        }),
    };
    emit(config, &text)
}

#[derive(Serialize)]
struct VerifyOut<'a> {
    solver: &'static str,
    passed: bool,
    report: &'a verify::VerificationReport,
}

fn run_verify(config: &RunConfig, spec: &GameSpec) -> Outcome<()> {
    let solver = require_solver(config)?;
    let x0 = require_x0(config, spec)?;
    let solved = solve(spec, solver, Some(&x0))?;
    let options = VerifyOptions {
        samples: config.samples,
        fd_step: config.fd_step,
        seed: config.seed,
        ..VerifyOptions::default()
    };
    let report = verify::verify_all(spec, &solved.candidate(&x0), options)?;
    if config.format == Format::Csv {
        return Err(Failure::invalid("verification reports are JSON only"));
    }
    emit(
        config,
        &to_json(&VerifyOut {
            solver: solver.name(),
            passed: report.passed(),
            report: &report,
        }),
    )?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: exit::VERIFICATION,
            message: format!("verification failed:\n  {}", report.failures.join("\n  ")),
        })
    }
}

#[derive(Serialize)]
struct CompareEntry {
    solver: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_costs: Option<Vec<f64>>,
    /// `[player][stage]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    controls: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn applicable(spec: &GameSpec) -> Vec<SolverKind> {
    let n = spec.player_count();
    SolverKind::ALL
        .into_iter()
        .filter(|s| match s {
            SolverKind::Lqr => n == 1 && spec.is_linear_quadratic(),
            SolverKind::FeedbackStackelberg | SolverKind::OpenloopStackelberg => n >= 2,
            _ => true,
        })
        .collect()
}

fn run_compare(config: &RunConfig, spec: &GameSpec) -> Outcome<()> {
    let x0 = require_x0(config, spec)?;
    let mut entries = Vec::new();
    let mut singular = false;
    for solver in applicable(spec) {
        let outcome = solve(spec, solver, Some(&x0)).and_then(|s| s.trajectory(spec, Some(&x0)));
        entries.push(match outcome {
            Ok(Some(traj)) => {
                let out = trajectory_out(&traj);
                CompareEntry {
                    solver: solver.name(),
                    total_costs: Some(out.total_costs),
                    controls: Some(out.controls),
                    error: None,
                }
            }
            Ok(None) => unreachable!("x0 is given"),
            Err(failure) => {
                singular |= failure.code == exit::SOLVER;
                log::error!("{}: {}", solver.name(), failure.message);
                CompareEntry {
                    solver: solver.name(),
                    total_costs: None,
                    controls: None,
                    error: Some(failure.message),
                }
            }
        });
    }
    let text = match config.format {
        Format::Json => to_json(&entries),
        Format::Csv => compare_csv(spec, &entries)?,
    };
    emit(config, &text)?;
    if singular {
        return Err(Failure {
            code: exit::SOLVER,
            message: "at least one solver hit a singular system".into(),
        });
    }
    Ok(())
}

/// One row per solver and player: total cost, then every stage's control entries.
fn compare_csv(spec: &GameSpec, entries: &[CompareEntry]) -> Outcome<String> {
    let widest = spec.control_dims().into_iter().max().unwrap_or(0);
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["solver".to_string(), "player".into(), "total_cost".into()];
    for t in 0..spec.horizon {
        header.extend((0..widest).map(|k| format!("u{t}_{k}")));
    }
    header.push("error".into());
    let width = header.len();
    writer.write_record(&header).map_err(csv_failure)?;
    for entry in entries {
        for i in 0..spec.player_count() {
            let mut row = vec![entry.solver.to_string(), (i + 1).to_string()];
            match (&entry.total_costs, &entry.controls) {
                (Some(costs), Some(controls)) => {
                    row.push(costs[i].to_string());
                    for u in &controls[i] {
                        let mut cells: Vec<String> = u.iter().map(|v| v.to_string()).collect();
                        cells.resize(widest, String::new());
                        row.extend(cells);
                    }
                }
                _ => row.resize(width - 1, String::new()),
            }
            row.resize(width - 1, String::new());
            row.push(entry.error.clone().unwrap_or_default());
            writer.write_record(&row).map_err(csv_failure)?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| Failure::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Executes one command; on failure the message is printed to standard error.
pub fn run(config: &RunConfig) -> i32 {
    match execute(config) {
        Ok(()) => exit::OK,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

/// Executes one command and returns the failure instead of printing it.
pub fn execute(config: &RunConfig) -> Outcome<()> {
    let spec = parse_game(&config.game)?;
    match config.command {
        Command::Validate => run_validate(config, &spec),
        Command::Solve => run_solve(config, &spec, false),
        Command::Simulate => run_solve(config, &spec, true),
        Command::Verify => run_verify(config, &spec),
        Command::Compare => run_compare(config, &spec),
    }
}
