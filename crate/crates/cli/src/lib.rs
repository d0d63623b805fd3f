//! Campaign driver behind the `relqkd` binary.

pub mod campaign;
pub mod config;
pub mod verify;

use relqkd_core::Error as CoreError;

/// Marks an error as caused by the user's input rather than a failed run.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InvalidInput(pub String);

/// A run that completed but did not meet its checks.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID_INPUT: i32 = 2;

/// Exit code for an error escaping a subcommand.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<InvalidInput>().is_some() {
        return EXIT_INVALID_INPUT;
    }
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::ResourceExhausted(_)) => EXIT_CHECK_FAILED,
        Some(_) => EXIT_INVALID_INPUT,
        None => EXIT_CHECK_FAILED,
    }
}
