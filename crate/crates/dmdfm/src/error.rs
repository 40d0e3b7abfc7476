use std::fmt;
use std::io;
use std::path::Path;

/// Failure classes the command line maps onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Data,
    Numerical,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 1,
            Category::Data => 2,
            Category::Numerical => 3,
        }
    }
}

/// An error with a stable machine-readable kind.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub category: Category,
    pub kind: String,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn new(category: Category, kind: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            category,
            kind: kind.into(),
            message: message.to_string(),
        }
    }

    pub fn usage(message: impl fmt::Display) -> Self {
        Self::new(Category::Usage, "Usage", message)
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self::new(Category::Data, "Io", format_args!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.category.exit_code()
    }

    /// One-line diagnostic: `error kind=<kind> message="<escaped message>"`.
    pub fn diagnostic_line(&self) -> String {
        let mut escaped = String::with_capacity(self.message.len());
        for c in self.message.chars() {
            match c {
                '"' => escaped.push_str("\\\""),
                '\\' => escaped.push_str("\\\\"),
                '\n' => escaped.push_str("\\n"),
                '\r' => escaped.push_str("\\r"),
                c => escaped.push(c),
            }
        }
        format!("error kind={} message=\"{escaped}\"", self.kind)
    }
}

impl From<dmdfm_core::Error> for CliError {
    fn from(err: dmdfm_core::Error) -> Self {
        let category = match &err {
            e if e.is_numerical() => Category::Numerical,
            dmdfm_core::Error::InvalidConfig(_) => Category::Usage,
            _ => Category::Data,
        };
        Self::new(category, err.kind(), &err)
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        Self::new(Category::Data, "Csv", err)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        Self::new(Category::Data, "Json", err)
    }
}
