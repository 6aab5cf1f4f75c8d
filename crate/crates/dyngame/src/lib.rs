//! Solvers and verification oracles for finite-horizon, discrete-time, n-player
//! affine-quadratic dynamic games.
//!
//! The crate computes feedback Nash, feedback Stackelberg, open-loop Nash, and
//! open-loop Stackelberg equilibria by backward recursions over the stages, and
//! checks any computed solution against finite-difference stationarity, sampled
//! deviation, time-consistency, and definiteness oracles.
//!
//! Conventions used everywhere:
//!
//! * Stages run `t = 0..T-1`; `x_t` is the state before stage `t` decides.
//! * Stage `t` costs are charged on the post-decision state `x_{t+1}` and the
//!   stage-`t` controls.
//! * Reported feedback laws have the form `u = G x + g` ([`game_model::ControlLaw`]).
//! * Player 0 is the leader in Stackelberg games.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod feedback_nash;
pub mod feedback_stackelberg;
pub mod game_model;
pub mod lq_control;
pub mod numerics;
pub mod openloop_nash;
pub mod openloop_stackelberg;
pub mod verify;

pub use error::{Error, Result};
pub use game_model::{ControlLaw, FeedbackSolution, GameSpec, Player, Policy, StageData, Trajectory};
pub use numerics::{Matrix, Vector};
