//! Error categories shared by every module, used for CLI exit codes.

use std::fmt;

/// Coarse classification of failures. Each category maps to a stable process
/// exit code so scripts can branch on the kind of failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCategory {
    /// Malformed input values (out-of-range classes, bad parameters).
    Validation,
    /// Malformed files: CSV rows, scenario or belief documents.
    Parse,
    /// Contract rule violations and aborted federations.
    Ledger,
    /// A reveal that does not match its commitment.
    Rejected,
    /// Filesystem failures.
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation => 3,
            ErrorCategory::Parse => 4,
            ErrorCategory::Ledger => 5,
            ErrorCategory::Rejected => 6,
            ErrorCategory::Io => 7,
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Parse => "parse",
            ErrorCategory::Ledger => "ledger",
            ErrorCategory::Rejected => "rejected",
            ErrorCategory::Io => "io",
        };
        f.write_str(name)
    }
}
