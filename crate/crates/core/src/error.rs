use thiserror::Error;

/// Every failure a core operation can report.
///
/// Variant names double as stable machine-readable codes (see [`Error::code`]),
/// which the CLI and the HTTP service surface verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    // categories schema
    #[error("unknown tag kind keyword {0:?}")]
    UnknownKindKeyword(String),
    #[error("duplicate tag name {0:?}")]
    DuplicateTagName(String),
    #[error("duplicate option {option:?} in tag {tag:?}")]
    DuplicateOption { tag: String, option: String },
    #[error("option {option:?} in tag {tag:?} contains the ';' separator")]
    OptionContainsSeparator { tag: String, option: String },
    #[error("option {option:?} in tag {tag:?} is reserved")]
    ReservedOption { tag: String, option: String },
    #[error("selection tag {0:?} has no options")]
    MissingOptions(String),
    #[error("tag {0:?} does not take options but has values below its kind row")]
    NonBlankOptionRow(String),
    #[error("group {0:?} is declared more than once")]
    DuplicateGroupName(String),
    #[error("group {0:?} defines no tags")]
    EmptyGroup(String),
    #[error("group {0:?} needs a tag-name row and a kind row")]
    TooFewRows(String),
    #[error("column {column} of group {group:?} has values but no tag name")]
    MissingTagName { group: String, column: usize },
    #[error("invalid tag name {0:?}")]
    InvalidTagName(String),
    #[error("invalid group name {0:?}")]
    InvalidGroupName(String),
    #[error("schema defines no tags")]
    NoTags,
    #[error("cannot read workbook: {0}")]
    Workbook(String),

    // citations
    #[error("missing required column {0:?}")]
    MissingRequiredColumn(String),
    #[error("key {key:?} appears on rows {rows:?}")]
    DuplicateKey { key: String, rows: Vec<usize> },
    #[error("malformed CSV at row {row}: {detail}")]
    MalformedCsv { row: usize, detail: String },
    #[error("signature {signature:?} is shared by {keys:?}")]
    AmbiguousSignature { signature: String, keys: Vec<String> },

    // database
    #[error("tag name {0:?} collides with a citation column")]
    ColumnNameCollision(String),
    #[error("database file has no \"Key\" column")]
    MissingKeyColumn,
    #[error("column {0:?} appears more than once")]
    DuplicateColumn(String),
    #[error("base name {0:?} must be non-empty and free of path separators")]
    InvalidBaseName(String),
    #[error("invalid value {value:?} for tag {tag:?} on key {key:?}")]
    InvalidCell { key: String, tag: String, value: String },

    // tagging
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("tag {tag:?} cannot hold a {got} value")]
    KindMismatch { tag: String, got: String },
    #[error("{option:?} is not an option of tag {tag:?}")]
    UnknownOption { tag: String, option: String },
    #[error("{0:?} is not a valid option string")]
    InvalidOption(String),
    #[error("invalid value {value:?} for tag {tag:?}: {reason}")]
    InvalidValue { tag: String, value: String, reason: String },

    // reconcile
    #[error("databases do not share a column set: {0}")]
    ColumnSetMismatch(String),
    #[error("conflicting rows for keys {0:?}")]
    DuplicateKeyConflict(Vec<String>),
    #[error("merge needs at least two databases")]
    NotEnoughDatabases,

    // query
    #[error("parse error at {position}: expected one of {expected:?}")]
    ParseError { position: usize, expected: Vec<String> },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("tag {0:?} is not a selection tag")]
    KindNotTabulable(String),

    // report
    #[error("unknown note field {0:?}")]
    UnknownNote(String),
}

impl Error {
    /// The variant name, used as the error code in CLI and HTTP output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownKindKeyword(_) => "UnknownKindKeyword",
            Error::DuplicateTagName(_) => "DuplicateTagName",
            Error::DuplicateOption { .. } => "DuplicateOption",
            Error::OptionContainsSeparator { .. } => "OptionContainsSeparator",
            Error::ReservedOption { .. } => "ReservedOption",
            Error::MissingOptions(_) => "MissingOptions",
            Error::NonBlankOptionRow(_) => "NonBlankOptionRow",
            Error::DuplicateGroupName(_) => "DuplicateGroupName",
            Error::EmptyGroup(_) => "EmptyGroup",
            Error::TooFewRows(_) => "TooFewRows",
            Error::MissingTagName { .. } => "MissingTagName",
            Error::InvalidTagName(_) => "InvalidTagName",
            Error::InvalidGroupName(_) => "InvalidGroupName",
            Error::NoTags => "NoTags",
            Error::Workbook(_) => "Workbook",
            Error::MissingRequiredColumn(_) => "MissingRequiredColumn",
            Error::DuplicateKey { .. } => "DuplicateKey",
            Error::MalformedCsv { .. } => "MalformedCsv",
            Error::AmbiguousSignature { .. } => "AmbiguousSignature",
            Error::ColumnNameCollision(_) => "ColumnNameCollision",
            Error::MissingKeyColumn => "MissingKeyColumn",
            Error::DuplicateColumn(_) => "DuplicateColumn",
            Error::InvalidBaseName(_) => "InvalidBaseName",
            Error::InvalidCell { .. } => "InvalidCell",
            Error::UnknownKey(_) => "UnknownKey",
            Error::UnknownTag(_) => "UnknownTag",
            Error::KindMismatch { .. } => "KindMismatch",
            Error::UnknownOption { .. } => "UnknownOption",
            Error::InvalidOption(_) => "InvalidOption",
            Error::InvalidValue { .. } => "InvalidValue",
            Error::ColumnSetMismatch(_) => "ColumnSetMismatch",
            Error::DuplicateKeyConflict(_) => "DuplicateKeyConflict",
            Error::NotEnoughDatabases => "NotEnoughDatabases",
            Error::ParseError { .. } => "ParseError",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::KindNotTabulable(_) => "KindNotTabulable",
            Error::UnknownNote(_) => "UnknownNote",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn csv_error(err: csv::Error) -> Error {
    let row = err.position().map(|p| p.record() as usize + 1).unwrap_or(0);
    Error::MalformedCsv { row, detail: err.to_string() }
}
