//! Generator/discriminator pair, adversarial training and the
//! generate-gate-verify campaign loop.

mod arch;
mod campaign;
mod train;

pub use arch::*;
pub use campaign::*;
pub use train::*;

use thiserror::Error;

use crate::nn::{CheckpointError, NnError};
use crate::plausibility::PlausibilityError;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("losses became non-finite at epoch {0}")]
    Diverged(u64),
    #[error("generator produced an invalid beat: {0}")]
    InvalidOutput(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Plausibility(#[from] PlausibilityError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
