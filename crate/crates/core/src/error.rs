use thiserror::Error;

/// Errors surfaced by lattice construction, codec configuration, and estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (family/dimension mismatch, bad parameter ranges,
    /// enumeration caps exceeded).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid runtime input (non-finite vectors, shape mismatches).
    #[error("input error: {0}")]
    Input(String),

    /// Shared-dither record missing or inconsistent with the codec mode.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// An operation was called on a codec mode that does not support it.
    #[error("contract error: {0}")]
    Contract(String),

    /// Closed-form evaluation outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Exhaustive enumeration found no candidate inside the stated radius.
    #[error("oracle error: {0}")]
    Oracle(String),
}

pub type Result<T> = std::result::Result<T, Error>;
