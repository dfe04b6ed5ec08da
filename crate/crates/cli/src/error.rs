use std::fmt;

/// Broad failure class; each maps to one process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, config file or preset.
    Config,
    /// Missing, malformed or too-short input data.
    Data,
    /// Numerical failure during computation.
    Compute,
    /// Filesystem errors on outputs.
    Io,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Io => 1,
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Compute => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Kind::Data, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<stcorr::Error> for CliError {
    fn from(e: stcorr::Error) -> Self {
        use stcorr::Error as E;
        let kind = match &e {
            E::Config(_) => Kind::Config,
            E::Partition(_) | E::NonFiniteLoss { .. } | E::UndefinedMetric(_) => Kind::Compute,
            E::Io(_) => Kind::Io,
            _ => Kind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Kind::Io, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(Kind::Io, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
