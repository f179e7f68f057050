use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An input that must be finite was NaN or infinite.
    #[error("non-finite input `{name}` = {value}")]
    NonFinite { name: &'static str, value: f64 },

    /// An operation was called outside its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The discretized path produced a non-finite state.
    #[error("simulation blew up at t = {time} (last finite state {state})")]
    BlowUp { time: f64, state: f64 },

    /// The Φ_c transform of the rate function does not map onto the real line.
    #[error("rate function is not onto: {0}")]
    NotOnto(String),

    #[error("quadrature failed to converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { name, value })
    }
}
