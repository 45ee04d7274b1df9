//! Diagnostics shared by the parser and the static validator.

use std::fmt;

/// Severity of a diagnostic. Errors make a model unusable, warnings do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => write!(f, "warning"),
            Severity::Error => write!(f, "error"),
        }
    }
}

/// Source position, 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Source position attached to AST nodes. Compares equal to any other
/// position so that a parse -> pretty-print -> parse round trip yields a
/// structurally equal tree.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodePos(pub Pos);

impl PartialEq for NodePos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl From<Pos> for NodePos {
    fn from(p: Pos) -> Self {
        NodePos(p)
    }
}

impl NodePos {
    pub fn pos(&self) -> Pos {
        self.0
    }
}

/// A single parser or validator finding.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    /// Position in the source, when known. Validator diagnostics that refer
    /// to a whole definition carry the definition's position.
    pub pos: Option<Pos>,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>, pos: Option<Pos>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            pos,
        }
    }

    pub fn warning(message: impl Into<String>, pos: Option<Pos>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            message: message.into(),
            pos,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(pos) => write!(f, "{}: {}: {}", pos, self.severity, self.message),
            None => write!(f, "{}: {}", self.severity, self.message),
        }
    }
}

/// True iff no error-level diagnostic is present.
pub fn all_clear(diags: &[Diagnostic]) -> bool {
    !diags.iter().any(Diagnostic::is_error)
}
