//! Tokenizer for the supported Java subset.
//!
//! Comments are stripped; every other character of the source ends up in
//! exactly one token. Identifiers are single tokens even when they contain
//! underscores, so names like `LF_NORMAL` survive intact.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Keyword,
    Identifier,
    Literal,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// 1-based source line.
    pub line: usize,
    /// 1-based source column (in characters).
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// A lexing or parsing problem with its source location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub message: String,
    pub line: usize,
    pub col: usize,
    pub severity: Severity,
}

impl ParseDiagnostic {
    pub fn error(message: impl Into<String>, line: usize, col: usize) -> Self {
        ParseDiagnostic {
            message: message.into(),
            line,
            col,
            severity: Severity::Error,
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

const KEYWORDS: &[&str] = &[
    "abstract", "boolean", "break", "byte", "case", "char", "class", "continue", "default", "do",
    "double", "else", "final", "float", "for", "if", "int", "long", "new", "package", "private",
    "protected", "public", "return", "short", "static", "switch", "synchronized", "this", "throw",
    "throws", "try", "void", "while",
];

/// Multi-character operators, longest first so max-munch works by scan order.
const OPERATORS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "++", "--", "<<", ">>", "=",
    "+", "-", "*", "/", "%", "<", ">", "!", "&", "|", "^", "~", "?",
];

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    source: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str) -> Self {
        Lexer {
            chars: source.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
            source,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars()
            .enumerate()
            .all(|(i, c)| self.peek_at(i) == Some(c))
    }
}

/// Lex `source` into tokens, stripping comments.
///
/// Unterminated string/char literals and block comments produce an error
/// diagnostic pointing at the opening delimiter.
pub fn tokenize(source: &str) -> std::result::Result<Vec<Token>, ParseDiagnostic> {
    let mut lx = Lexer::new(source);
    let mut tokens = Vec::new();

    while let Some(c) = lx.peek() {
        if c.is_whitespace() {
            lx.bump();
            continue;
        }
        // Line comment.
        if lx.starts_with("//") {
            while let Some(c) = lx.peek() {
                if c == '\n' {
                    break;
                }
                lx.bump();
            }
            continue;
        }
        // Block comment. Java block comments do not nest.
        if lx.starts_with("/*") {
            let (line, col) = (lx.line, lx.col);
            lx.bump();
            lx.bump();
            let mut closed = false;
            while lx.peek().is_some() {
                if lx.starts_with("*/") {
                    lx.bump();
                    lx.bump();
                    closed = true;
                    break;
                }
                lx.bump();
            }
            if !closed {
                return Err(ParseDiagnostic::error("unterminated block comment", line, col));
            }
            continue;
        }

        let (line, col) = (lx.line, lx.col);

        if is_ident_start(c) {
            let mut text = String::new();
            while let Some(c) = lx.peek() {
                if !is_ident_continue(c) {
                    break;
                }
                text.push(c);
                lx.bump();
            }
            let kind = if KEYWORDS.contains(&text.as_str()) {
                TokenKind::Keyword
            } else if text == "true" || text == "false" || text == "null" {
                TokenKind::Literal
            } else {
                TokenKind::Identifier
            };
            tokens.push(Token { text, kind, line, col });
            continue;
        }

        if c.is_ascii_digit() {
            let mut text = String::new();
            while let Some(c) = lx.peek() {
                if !c.is_ascii_digit() {
                    break;
                }
                text.push(c);
                lx.bump();
            }
            // Fractional part; a bare trailing '.' stays a separate token.
            if lx.peek() == Some('.') && lx.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
                text.push('.');
                lx.bump();
                while let Some(c) = lx.peek() {
                    if !c.is_ascii_digit() {
                        break;
                    }
                    text.push(c);
                    lx.bump();
                }
            }
            // Numeric suffix (1L, 2.5f, ...).
            if let Some(s) = lx.peek() {
                if matches!(s, 'l' | 'L' | 'f' | 'F' | 'd' | 'D') {
                    text.push(s);
                    lx.bump();
                }
            }
            tokens.push(Token {
                text,
                kind: TokenKind::Literal,
                line,
                col,
            });
            continue;
        }

        if c == '"' || c == '\'' {
            let quote = c;
            let mut text = String::new();
            text.push(quote);
            lx.bump();
            let mut closed = false;
            while let Some(c) = lx.peek() {
                if c == '\n' {
                    break;
                }
                if c == '\\' {
                    text.push(c);
                    lx.bump();
                    if let Some(e) = lx.peek() {
                        if e != '\n' {
                            text.push(e);
                            lx.bump();
                        }
                    }
                    continue;
                }
                text.push(c);
                lx.bump();
                if c == quote {
                    closed = true;
                    break;
                }
            }
            if !closed {
                let what = if quote == '"' { "string" } else { "char" };
                return Err(ParseDiagnostic::error(
                    format!("unterminated {what} literal"),
                    line,
                    col,
                ));
            }
            tokens.push(Token {
                text,
                kind: TokenKind::Literal,
                line,
                col,
            });
            continue;
        }

        if matches!(c, '(' | ')' | '{' | '}' | '[' | ']' | ';' | ',' | '.' | ':' | '@') {
            tokens.push(Token {
                text: c.to_string(),
                kind: TokenKind::Punctuation,
                line,
                col,
            });
            lx.bump();
            continue;
        }

        if let Some(op) = OPERATORS.iter().find(|op| lx.starts_with(op)) {
            for _ in 0..op.chars().count() {
                lx.bump();
            }
            tokens.push(Token {
                text: (*op).to_string(),
                kind: TokenKind::Operator,
                line,
                col,
            });
            continue;
        }

        return Err(ParseDiagnostic::error(
            format!("unexpected character '{c}'"),
            line,
            col,
        ));
    }

    debug_assert!(tokens.windows(2).all(|w| (w[0].line, w[0].col) < (w[1].line, w[1].col)));
    let _ = lx.source;
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        tokenize(src).unwrap().into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn splits_declaration_into_expected_tokens() {
        assert_eq!(texts("int result = 1;"), vec!["int", "result", "=", "1", ";"]);
    }

    #[test]
    fn underscored_identifier_is_one_token() {
        let toks = tokenize("LF_NORMAL").unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].text, "LF_NORMAL");
        assert_eq!(toks[0].kind, TokenKind::Identifier);
    }

    #[test]
    fn empty_input_yields_no_tokens() {
        assert_eq!(tokenize("").unwrap(), vec![]);
    }

    #[test]
    fn comments_are_stripped() {
        assert_eq!(texts("int x; // trailing\n/* block */ int y;"), vec![
            "int", "x", ";", "int", "y", ";"
        ]);
    }

    #[test]
    fn string_literal_is_one_token_with_quotes() {
        let toks = tokenize("String p = \"hunter_2\";").unwrap();
        assert_eq!(toks[3].text, "\"hunter_2\"");
        assert_eq!(toks[3].kind, TokenKind::Literal);
    }

    #[test]
    fn escaped_quote_inside_string() {
        let toks = tokenize(r#"x = "a\"b";"#).unwrap();
        assert_eq!(toks[2].text, r#""a\"b""#);
    }

    #[test]
    fn unterminated_string_reports_location() {
        let err = tokenize("int x = \"abc").unwrap_err();
        assert_eq!(err.severity, Severity::Error);
        assert_eq!((err.line, err.col), (1, 9));
        assert!(err.message.contains("unterminated string"));
    }

    #[test]
    fn unterminated_block_comment_reports_location() {
        let err = tokenize("int x;\n/* oops").unwrap_err();
        assert_eq!((err.line, err.col), (2, 1));
        assert!(err.message.contains("block comment"));
    }

    #[test]
    fn max_munch_operators() {
        assert_eq!(texts("i++ <= j--"), vec!["i", "++", "<=", "j", "--"]);
        assert_eq!(texts("a==b!=c"), vec!["a", "==", "b", "!=", "c"]);
    }

    #[test]
    fn positions_are_one_based_and_increasing() {
        let toks = tokenize("int a;\n  a = 1;").unwrap();
        assert_eq!((toks[0].line, toks[0].col), (1, 1));
        assert_eq!((toks[3].line, toks[3].col), (2, 3));
        for w in toks.windows(2) {
            assert!((w[0].line, w[0].col) < (w[1].line, w[1].col));
        }
    }

    #[test]
    fn unknown_character_is_diagnosed() {
        let err = tokenize("int x = `1`;").unwrap_err();
        assert!(err.message.contains("unexpected character"));
    }

    #[test]
    fn float_literals_and_suffixes() {
        assert_eq!(texts("2.5f + 10L"), vec!["2.5f", "+", "10L"]);
    }
}
