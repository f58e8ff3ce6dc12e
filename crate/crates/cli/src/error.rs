use std::fmt;

use balmatch::balance::BalanceError;
use balmatch::cardmatch::MatchError;
use balmatch::data::DataError;
use balmatch::multitest::MultiError;
use balmatch::pairing::PairingError;
use balmatch::power::PowerError;
use balmatch::scores::ScoreError;
use balmatch::sens::SensError;
use thiserror::Error;

/// Error class, which fixes the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Infeasible,
    Solver,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Infeasible => 4,
            ErrorClass::Solver => 5,
        }
    }
}

/// Pipeline stage an error surfaced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Balance,
    Match,
    Pair,
    Differences,
    Scores,
    Sens,
    Hl,
    Amplify,
    Multitest,
    Power,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Balance => "balance",
            Stage::Match => "match",
            Stage::Pair => "pair",
            Stage::Differences => "differences",
            Stage::Scores => "scores",
            Stage::Sens => "sens",
            Stage::Hl => "hl",
            Stage::Amplify => "amplify",
            Stage::Multitest => "multitest",
            Stage::Power => "power",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("[{stage}] {message}")]
pub struct CliError {
    pub stage: Stage,
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn new(stage: Stage, class: ErrorClass, message: impl Into<String>) -> Self {
        CliError { stage, class, message: message.into() }
    }

    pub fn config(stage: Stage, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorClass::Config, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.class.exit_code()
    }
}

/// Attaches a stage label to a library error.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, CliError>;
}

/// Library errors with a fixed error class.
pub trait Classify: fmt::Display {
    fn class(&self) -> ErrorClass;
}

impl<T, E: Classify> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(stage, e.class(), e.to_string()))
    }
}

impl Classify for DataError {
    fn class(&self) -> ErrorClass {
        match self {
            DataError::Schema(_) => ErrorClass::Config,
            _ => ErrorClass::Data,
        }
    }
}

impl Classify for BalanceError {
    fn class(&self) -> ErrorClass {
        match self {
            BalanceError::EmptyMatch => ErrorClass::Infeasible,
            BalanceError::ZeroVariance(_) | BalanceError::LengthMismatch { .. } => ErrorClass::Data,
            _ => ErrorClass::Config,
        }
    }
}

impl Classify for MatchError {
    fn class(&self) -> ErrorClass {
        match self {
            MatchError::Balance(e) => e.class(),
            MatchError::InvalidOptions(_) | MatchError::BadRatio | MatchError::ProblemTooLarge(_) => ErrorClass::Config,
            _ => ErrorClass::Solver,
        }
    }
}

impl Classify for PairingError {
    fn class(&self) -> ErrorClass {
        match self {
            PairingError::NoColumns | PairingError::UnknownColumn(_) | PairingError::NotNumeric(_) | PairingError::SingularCovariance => {
                ErrorClass::Config
            }
            PairingError::MissingValue { .. } | PairingError::TooFewPairs(_) => ErrorClass::Data,
            _ => ErrorClass::Solver,
        }
    }
}

impl Classify for ScoreError {
    fn class(&self) -> ErrorClass {
        match self {
            ScoreError::TooFewPairs(_) => ErrorClass::Data,
            _ => ErrorClass::Config,
        }
    }
}

impl Classify for SensError {
    fn class(&self) -> ErrorClass {
        match self {
            SensError::DegenerateScores => ErrorClass::Data,
            SensError::Scores(e) => e.class(),
            _ => ErrorClass::Config,
        }
    }
}

impl Classify for MultiError {
    fn class(&self) -> ErrorClass {
        match self {
            MultiError::DegenerateScores(_) => ErrorClass::Data,
            MultiError::NotPsd => ErrorClass::Solver,
            MultiError::Scores(e) => e.class(),
            MultiError::Sens(e) => e.class(),
            MultiError::TooManyFamilies(_) => ErrorClass::Config,
        }
    }
}

impl Classify for PowerError {
    fn class(&self) -> ErrorClass {
        match self {
            PowerError::Scores(e) => e.class(),
            PowerError::Sens(e) => e.class(),
            _ => ErrorClass::Config,
        }
    }
}
