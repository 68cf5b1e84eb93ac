//! Koopman-lifted predictors for condensed model predictive control.
//!
//! The crate identifies linear predictors of nonlinear dynamics in a lifted
//! observable space and wires them into a dense, input-only MPC quadratic
//! program. Two identification routes are provided:
//!
//! * [`onestep::fit_onestep`] — classical EDMD: fit a one-step lifted model
//!   `psi(x+) ~ A psi(x) + B u`, then power it up over the horizon
//!   ([`onestep::condense`]) to obtain the stacked prediction matrices
//!   `(E, F)`.
//! * [`multistep::fit_multistep`] — fit the horizon-stacked mapping
//!   `x_k ~ E_k psi(x_0) + F_k (u_0..u_{k-1})` directly, one convex
//!   least-squares subproblem per horizon step and state coordinate. This
//!   avoids powering an imperfect one-step operator, so prediction error
//!   does not compound across the horizon.
//!
//! The rest of the crate supplies everything the two routes need end to end:
//! benchmark plants and trajectory sampling ([`dynamics`]), tensor-product
//! Legendre observable dictionaries ([`dictionary`]), dense ridge /
//! elastic-net solvers ([`regression`]), sparsity-driven dictionary pruning
//! ([`multistep::prune`]), a box/affine QP solver with KKT certification
//! ([`qp`]), a receding-horizon closed-loop harness ([`mpc_loop`]), and
//! multi-step MSE evaluation plus model persistence ([`eval`]).

pub mod config;
pub mod dictionary;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod mpc_loop;
pub mod multistep;
pub mod onestep;
pub mod qp;
pub mod regression;

pub use config::ExperimentConfig;
pub use dictionary::{Dictionary, MultiIndex, Truncation};
pub use dynamics::{PlantKind, PlantSpec, SamplingSpec, TrajectoryDataset};
pub use error::{Error, Result};
pub use eval::{ModelFile, MseReport};
pub use mpc_loop::ClosedLoopRun;
pub use multistep::{CondensedModel, Provenance, RegressorCache};
pub use onestep::OneStepModel;
pub use qp::{MpcConfig, QpProblem, QpSolution, QpStatus};
pub use regression::{LsProblem, LsSolution};
