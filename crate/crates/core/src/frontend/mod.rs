//! Tokenizer and parser for the supported Java subset.

mod lexer;
mod parser;

pub use lexer::{tokenize, ParseDiagnostic, Severity, Token, TokenKind};
pub use parser::{parse, parse_source, NodeKind, SyntaxNode, SyntaxTree};
