use alloc::string::String;

/// Errors produced by the index, token and crypto layers.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("duplicate keyword at dictionary index {0}")]
    DuplicateKeyword(usize),
    #[error("keyword contains the separator byte")]
    SeparatorInKeyword,
    #[error("keyword is empty")]
    EmptyKeyword,
    #[error("query contains the separator byte")]
    SeparatorInQuery,
    #[error("query is empty")]
    EmptyQuery,
    #[error("security parameter {0} is below 128 bits")]
    WeakParameter(u32),
    #[error("unsupported security parameter {0}")]
    UnsupportedParameter(u32),
    #[error("decryption failed")]
    DecryptionFailure,
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("posting slot {0} is already occupied")]
    CounterConflict(u64),
    #[error("posting slot {0} does not follow an occupied slot")]
    CounterGap(u64),
    #[error("invalid key file: {0}")]
    KeyFile(&'static str),
    #[error("invalid node table: {0}")]
    NodeTable(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// Stable variant name, used as the error code on the wire.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateKeyword(_) => "DuplicateKeyword",
            Error::SeparatorInKeyword => "SeparatorInKeyword",
            Error::EmptyKeyword => "EmptyKeyword",
            Error::SeparatorInQuery => "SeparatorInQuery",
            Error::EmptyQuery => "EmptyQuery",
            Error::WeakParameter(_) => "WeakParameter",
            Error::UnsupportedParameter(_) => "UnsupportedParameter",
            Error::DecryptionFailure => "DecryptionFailure",
            Error::MalformedRequest(_) => "MalformedRequest",
            Error::CounterConflict(_) => "CounterConflict",
            Error::CounterGap(_) => "CounterGap",
            Error::KeyFile(_) => "KeyFile",
            Error::NodeTable(_) => "NodeTable",
        }
    }
}
