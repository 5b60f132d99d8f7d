use std::fmt;

use thiserror::Error;

use crate::link::Basis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The polarizer at `theta` fully blocks the signal state.
    #[error("intensity ratio has a pole at theta = {theta} rad")]
    Pole { theta: f64 },

    #[error("invalid configuration:\n{0}")]
    Config(ConfigErrors),

    #[error("binary entropy argument {0} is outside [0, 1]")]
    EntropyDomain(f64),

    #[error("no sifted detections in the {0} basis")]
    EmptyBasis(Basis),

    #[error("transition {0} never occurs in the record stream")]
    MissingTransition(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("decoy linear program is infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate bound: {0}")]
    DegenerateBound(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("failed to parse configuration: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single invalid configuration field, addressed by its dotted path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

/// Every field that failed validation, in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl ConfigErrors {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn paths(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.path.as_str()).collect()
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {}: {}", e.path, e.message)?;
        }
        Ok(())
    }
}
