//! Structured pruning of MLP channel groups by multi-step norm decay with
//! gradient-driven release, a single-step baseline, and a small training
//! harness for comparing them.
//!
//! See `examples/` for one runnable program per capability.

pub mod baseline;
pub mod cli;
pub mod dpm;
pub mod harness;
pub mod nn;
pub mod tensor;

pub use baseline::SingleStepPruner;
pub use dpm::{DecayPruner, DecayState, DpmConfig, ReleaseEvent};
pub use harness::{run_experiment, ExperimentConfig, Method};
pub use nn::{group_view, Network};
