use std::path::PathBuf;

use crate::gripper::{GripperCommand, GripperState};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input out of domain: {0}")]
    InputDomain(String),

    #[error("illegal gripper transition: {command:?} from {state}")]
    Transition {
        state: GripperState,
        command: GripperCommand,
    },

    #[error("consistency fault: {0}")]
    Consistency(String),

    #[error("acquisition failed on channel {channel}: {reason}")]
    Acquisition { channel: usize, reason: String },

    #[error("trial {trial} aborted at t = {t:.3} s: {source}")]
    TrialFault {
        trial: u32,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "noise calibration did not converge: best sigma {best_sigma:.6} N gives {achieved_std:.6} N (target {target_std:.6} N)"
    )]
    Calibration {
        best_sigma: f64,
        achieved_std: f64,
        target_std: f64,
    },

    #[error("{path}:{line}: column `{column}`: {message}")]
    Parse {
        path: String,
        line: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::InputDomain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
