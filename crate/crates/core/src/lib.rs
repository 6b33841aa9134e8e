//! Digital twin of a lever-type axial force sensor for endoscope insertion,
//! the ureter testbed it is validated on, and the trial harness that compares
//! its reading against the testbed's reference cells.
//!
//! Module map:
//!
//! - [`sensing`]: lever, preload and overload limiter between tube holder and load cell
//! - [`gripper`]: bistable gripper and detachable holder state machine
//! - [`transport`]: grasp/advance/release/return stroke cycle with threshold stop
//! - [`testbed`]: sheath friction (with capstan amplification), wall contact, noisy cells
//! - [`signal`]: sampling, moving average, RMSE and std
//! - [`harness`]: closed-loop trials, scenarios and noise calibration
//! - [`scenario`], [`trace`]: scenario files and CSV telemetry

pub mod error;
pub mod gripper;
pub mod harness;
pub mod scenario;
pub mod sensing;
pub mod signal;
pub mod testbed;
pub mod trace;
pub mod transport;

pub use error::{Error, Result};
pub use gripper::{Grip, GripperCommand, GripperState, Holder};
pub use harness::{calibrate_noise, run_scenario, run_trial, simulate_trial, TrialReport};
pub use scenario::ScenarioConfig;
pub use sensing::{LeverGeometry, SensingState};
pub use signal::{moving_average, rmse, stddev, FilterSpec, Frame};
pub use testbed::{ContactModel, NoiseSpec, PathwayKind, PathwaySpec, SimState, Testbed};
pub use trace::{read_trace, replay_metrics, write_trace, TelemetryRecord};
pub use transport::{Phase, TransportConfig, TransportState};
