//! Shared human-machine control with an uncertainty-driven sliding level of
//! autonomy, demonstrated on a simulated peg-in-hole task.
//!
//! The machine follows a preplanned trajectory to the nominal hole. The level
//! of autonomy `α` is the probability that the uncertain hole surface has not
//! yet been reached, low-pass filtered. The operator's input and the machine
//! trajectory are blended by `α`, and the operator feels a haptic fixture
//! whose stiffness scales with `α`.

pub mod arbitration;
pub mod config;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod haptics;
pub mod kinematics;
pub mod operator;
pub mod trace;
pub mod trajectory;

pub use config::{EpisodeConfig, Mode};
pub use engine::{run_episode, run_episode_summary, Episode, EpisodeResult, FailureReason, SimState};
pub use error::{Error, Result};

/// Workspace position (m).
pub type Vec3 = nalgebra::Vector3<f64>;
