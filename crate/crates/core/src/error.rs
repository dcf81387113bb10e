use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (empty input, unnormalized
    /// distribution, mismatched lengths).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// An exact enumeration would exceed the configured table-size cap.
    #[error("enumeration of {required} entries exceeds cap of {cap}")]
    SizeCap { required: u128, cap: u128 },

    /// A checked property (detailed balance, monotonicity, ...) failed.
    #[error("property failure: {0}")]
    Property(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
