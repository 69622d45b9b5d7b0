use std::io;

use thiserror::Error;

/// A violated parameter invariant. The display string names the invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("basis probabilities sum ≠ 1")]
    BasisProbabilitySum,
    #[error("intensity probabilities sum ≠ 1")]
    IntensityProbabilitySum,
    #[error("probability `{0}` outside [0, 1]")]
    ProbabilityRange(&'static str),
    #[error("fluxes not strictly ordered")]
    FluxOrder,
    #[error("vacuum flux negative")]
    NegativeFlux,
    #[error("visibility outside [0, 1]")]
    Visibility,
    #[error("`{0}` must be a fraction in [0, 1]")]
    Fraction(&'static str),
    #[error("`{0}` must be non-negative")]
    Negative(&'static str),
    #[error("`{0}` must be strictly positive")]
    NonPositive(&'static str),
    #[error("`{0}` must lie strictly between 0 and 1")]
    Epsilon(&'static str),
    #[error("`{0}` is not a finite number")]
    NotFinite(&'static str),
    #[error("pulse rate must be twice the symbol rate (two time bins per symbol)")]
    PulseRate,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Param(#[from] ParamError),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("degenerate decoy: decoy and vacuum fluxes are equal")]
    DegenerateDecoy,
    #[error("flux ordering violated: signal must exceed decoy + vacuum, decoy must exceed vacuum")]
    FluxOrdering,
    #[error("undefined {0}: the cell is empty")]
    EmptyCell(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
