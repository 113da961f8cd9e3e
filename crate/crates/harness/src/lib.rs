//! Simulation harness for the magnetic inverted pendulum: configuration,
//! setpoint trajectories, the closed-loop engine, CSV traces and the
//! identification and learning experiments driven by the `magpend` CLI.

pub mod config;
pub mod error;
pub mod experiments;
pub mod sim;
pub mod trace;
pub mod trajectory;

pub use config::Config;
pub use error::{HarnessError, Result};
pub use sim::{simulate_closed_loop, SimConfig};
pub use trace::{export_trace, Trace, TraceRow};
pub use trajectory::{generate_trajectory, Trajectory, TrajectoryKind};
