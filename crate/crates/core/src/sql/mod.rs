//! SQL frontend: lexer, recursive-descent parser and lowering of the
//! supported subset to [`LogicalPlan`].
//!
//! Column references are attributed to FROM relations during lowering, so
//! parsing needs the schemas of the referenced tables.

pub mod ast;
mod lexer;
mod lower;
mod parser;

use std::fmt;

use crate::plan::LogicalPlan;
use crate::relmodel::Catalog;

pub use ast::Query;
pub use parser::parse_query;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagCategory {
    Syntax,
    /// Valid SQL outside the supported subset. The message names the
    /// construct.
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiag {
    pub span: Span,
    pub message: String,
    pub category: DiagCategory,
}

impl ParseDiag {
    pub fn new(span: Span, category: DiagCategory, message: impl Into<String>) -> ParseDiag {
        ParseDiag {
            span,
            message: message.into(),
            category,
        }
    }

    pub fn is_unsupported(&self) -> bool {
        self.category == DiagCategory::Unsupported
    }
}

impl fmt::Display for ParseDiag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.category {
            DiagCategory::Syntax => write!(f, "error at {}: {}", self.span, self.message),
            DiagCategory::Unsupported => write!(f, "unsupported at {}: {}", self.span, self.message),
        }
    }
}

impl std::error::Error for ParseDiag {}

/// Parses `sql` and lowers it to a validated plan over `catalog`.
pub fn parse(sql: &str, catalog: &dyn Catalog) -> Result<LogicalPlan, ParseDiag> {
    lower_query(&parse_query(sql)?, catalog)
}

/// Lowers an already parsed statement.
pub fn lower_query(query: &Query, catalog: &dyn Catalog) -> Result<LogicalPlan, ParseDiag> {
    lower::lower(query, catalog)
}

#[cfg(test)]
mod tests;
