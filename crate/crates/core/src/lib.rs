//! Physics-informed MLP solver for the nonlinear MEMS beam oscillator.
//!
//! A small network `N(t)` is wrapped in a trial transform that satisfies the
//! initial conditions by construction, and trained with Adam to minimise the
//! mean squared ODE residual at collocation times. Classical integrators
//! supply reference solutions, and a benchmark compares convergence speed
//! across oscillatory and non-oscillatory activations.

pub mod activations;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod exec;
pub mod integrators;
pub mod jet;
pub mod network;
pub mod problem;
pub mod report;
pub mod training;

pub use activations::ActivationKind;
pub use autodiff::{loss_and_grad, GradientSet};
pub use exec::Execution;
pub use jet::Jet2;
pub use network::{forward_jet, init_params, MlpParams};
pub use problem::{collocation_loss, Objective, OscillatorProblem, TrialTransformKind};
