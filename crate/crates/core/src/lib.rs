//! Task-adaptive quasi-stiffness control for a powered knee-ankle prosthesis.
//!
//! The crate covers the full offline-to-online pipeline:
//!
//! 1. [`corpus`] — ingest and validate gait cycles (knee/ankle angle and
//!    torque over normalized gait phase) recorded across walking tasks.
//! 2. [`features`] — reduce each cycle to a small set of extremum features
//!    (peak angles/torques and the phases where they occur).
//! 3. [`gpr`] — Gaussian-process regression from task parameters
//!    (speed, incline) to those target features, with predictive variance.
//! 4. [`gmm`] — Gaussian-mixture encoding of the training trajectories and
//!    Gaussian-mixture regression for a phase-indexed reference distribution.
//! 5. [`kmp`] — kernelized movement primitives that adapt the reference
//!    trajectory through the GPR-predicted features used as via-points.
//! 6. [`stiffness`] — piecewise-linear fits of the reconstructed
//!    torque-angle relation, one (stiffness, equilibrium angle) pair per
//!    gait sub-phase.
//! 7. [`fsm`] — a four-state finite-state machine that plays those
//!    parameters back against a sensor stream as a spring-law controller.
//! 8. [`eval`] / [`synth`] — a synthetic gait generator with known ground
//!    truth and an end-to-end evaluation harness.
//!
//! Every stage is deterministic given its explicit seed: repeated runs over
//! the same inputs produce byte-identical artifacts.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod fsm;
pub mod gmm;
pub mod gpr;
pub mod kmp;
pub mod persist;
pub mod pipeline;
pub mod plot;
pub mod stiffness;
pub mod synth;
pub mod task;
pub mod trajectory;

pub use error::{Error, Result};
pub use task::TaskParams;
pub use trajectory::{GaitTrajectory, Joint, TorqueAngleRelation};
