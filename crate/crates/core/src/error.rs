use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("attribute id {id} out of range (table has {count} attributes)")]
    AttributeOutOfRange { id: usize, count: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid table: {0}")]
    Table(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("cannot inject {kind} errors into attribute `{attribute}`: {reason}")]
    Injection {
        kind: &'static str,
        attribute: String,
        reason: &'static str,
    },
}
