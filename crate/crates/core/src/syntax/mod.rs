//! Front end for the MiniML exercise language: tokens, syntax tree,
//! parser, pretty-printer and free-name analysis.
//!
//! The language is dynamically typed, curried and expression-oriented.
//! Gating (arrays, loops, natives) is not the parser's concern: every
//! construct is representable and the feature gate decides what is allowed.

mod ast;
mod lexer;
mod names;
mod parser;
mod pretty;

use std::fmt;

pub use ast::*;
pub use lexer::{tokenize, Kw, Sym, Tok, Token};
pub use names::{free_names, free_names_expr};
pub use parser::{parse, parse_expr, MAX_HEIGHT};
pub use pretty::{pretty_expr, pretty_pattern, pretty_program};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntaxErrorKind {
    Lex,
    Parse,
}

/// Lexing or parsing failure, located in the source it came from.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct SyntaxError {
    pub kind: SyntaxErrorKind,
    pub span: Span,
    pub message: String,
}

impl SyntaxError {
    pub fn lex(span: Span, message: impl Into<String>) -> Self {
        SyntaxError { kind: SyntaxErrorKind::Lex, span, message: message.into() }
    }

    pub fn parse(span: Span, message: impl Into<String>) -> Self {
        SyntaxError { kind: SyntaxErrorKind::Parse, span, message: message.into() }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            SyntaxErrorKind::Lex => "lexical error",
            SyntaxErrorKind::Parse => "syntax error",
        };
        write!(f, "{}: {what}: {}", self.span, self.message)
    }
}
