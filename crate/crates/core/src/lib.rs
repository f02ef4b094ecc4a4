//! Fixed-energy periodic approximants of strong-force N-body systems.
//!
//! The pipeline minimizes `f(q) = ½‖q‖² ∫(H - V(q))dt` over antiperiodic
//! loops whose bodies start at radius `R`, rescales the minimizer to a
//! `T_R`-periodic Newtonian trajectory, verifies it, and continues in `R`
//! to expose escaping (hyperbolic) behaviour.

pub mod action;
pub mod config;
pub mod continuation;
pub mod error;
pub mod io;
pub mod loop_space;
pub mod minimizer;
pub mod model;
pub mod rescale;

pub use action::{action, action_gradient, directional_identity, virial_integral, ActionValue};
pub use continuation::{
    classify_hyperbolic, crossing_times, run_sweep, time_shift, Classification, ContinuationRecord,
    ContinuationSchedule, SweepResult,
};
pub use error::{Error, Result};
pub use loop_space::{integrate_over_loop, LoopPath, Part, QuadratureGrid};
pub use minimizer::{initial_loop, minimize, symmetric_criticality_check, SolveConfig, SolveReport};
pub use model::{
    gordon_constant, min_pairwise_distance, potential, potential_gradient, virial_quantity,
    BodySystem, Configuration,
};
pub use rescale::{eom_residual, period_from_path, rescale, symplectic_crosscheck, Trajectory};
