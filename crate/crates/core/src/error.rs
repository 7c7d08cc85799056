use alloc::string::String;

/// Errors raised by the core numerics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("config error: {0}")]
    Config(String),
    /// A loss, gradient or estimate became non-finite.
    #[error("training error in {component} at epoch {epoch}: {message}")]
    Training {
        component: &'static str,
        epoch: usize,
        message: String,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
