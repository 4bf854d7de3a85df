use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// The configuration document could not be parsed at all.
    #[error("syntax error: {0}")]
    Syntax(String),

    /// A parsed value violates a model invariant.
    #[error("invalid value at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("branch {index} already uses a droop controller")]
    WrongControllerKind { index: usize },

    /// Large-signal machinery only exists for the proposed current-mode controller.
    #[error("unsupported controller: {0}")]
    UnsupportedController(String),

    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    StepSizeUnderflow { t: f64, h: f64, state: Vec<f64> },

    #[error("non-finite state at t = {t:e} s")]
    NonFiniteState { t: f64 },

    /// The load demand exceeds what the network can deliver.
    #[error("no equilibrium: P_L = {p_l} W exceeds the deliverable maximum {p_max:.4} W")]
    NoEquilibrium { p_l: f64, p_max: f64 },

    #[error("potential undefined: {0}")]
    Domain(String),

    #[error("potential is not twice differentiable at V_L = V_min = {v_min}")]
    NotTwiceDifferentiable { v_min: f64 },

    #[error("time series is empty")]
    EmptySeries,

    #[error("degenerate transfer function denominator (L*C*R_L = 0)")]
    DegenerateDenominator,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True when the error stems from user input rather than from the analysis itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax(_) | Error::Validation { .. } | Error::WrongControllerKind { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
