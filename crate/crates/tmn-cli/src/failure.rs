//! Command failures with their process exit codes.
//!
//! The codes are part of the command-line contract: 0 success, 1
//! internal error, 2 unusable input (missing or malformed files,
//! invalid settings), 3 training divergence, 4 checkpoint/corpus
//! vocabulary mismatch, 5 unknown document id.

use std::fmt::Display;

use tmn::checkpoint::CheckpointError;
use tmn::corpus::CorpusError;
use tmn::train::TrainError;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn internal(message: impl Display) -> Failure {
        Failure { code: 1, message: message.to_string() }
    }

    pub fn input(message: impl Display) -> Failure {
        Failure { code: 2, message: message.to_string() }
    }

    pub fn diverged(message: impl Display) -> Failure {
        Failure { code: 3, message: message.to_string() }
    }

    pub fn vocab_mismatch(message: impl Display) -> Failure {
        Failure { code: 4, message: message.to_string() }
    }

    pub fn unknown_doc(message: impl Display) -> Failure {
        Failure { code: 5, message: message.to_string() }
    }

    /// An input failure that names the file it came from.
    pub fn file(path: &std::path::Path, err: impl Display) -> Failure {
        Failure::input(format!("{}: {}", path.display(), err))
    }
}

impl From<CorpusError> for Failure {
    fn from(err: CorpusError) -> Failure {
        Failure::input(err)
    }
}

impl From<CheckpointError> for Failure {
    fn from(err: CheckpointError) -> Failure {
        Failure::input(err)
    }
}

impl From<TrainError> for Failure {
    fn from(err: TrainError) -> Failure {
        match err {
            TrainError::Diverged { .. } => Failure::diverged(err),
            TrainError::Tensor(inner) => Failure::internal(inner),
            other => Failure::input(other),
        }
    }
}
