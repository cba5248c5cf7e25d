//! Batch pipeline around `hom_core`: simulation, detector calibration and
//! analysis verbs writing CSV tables and JSON reports.

pub mod commands;
pub mod config;
pub mod exec;
pub mod io;

use hom_core::Error;

/// Process exit code for a failed command: 3 for convergence failures, 2 for
/// invalid input or configuration, 1 for IO failures.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NotConverged { .. } => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}
