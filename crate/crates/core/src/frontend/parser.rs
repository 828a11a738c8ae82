//! Recursive-descent parser for the supported Java subset.
//!
//! Supported constructs: classes, methods, parameters, local variable
//! declarations, assignments, binary/unary expressions, method calls,
//! literals, `if/else`, `for`, `while`, `switch/case`, `return`, plus
//! `break`/`continue` as plain statements. Anything else produces an
//! error diagnostic with a location, never a silent misparse.
//!
//! Trees are numbered in pre-order, so every child id is greater than its
//! parent's id and sibling spans appear in source order. Every token of the
//! input is owned by exactly one leaf node.

use super::lexer::{ParseDiagnostic, Token, TokenKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    CompilationUnit,
    ClassDecl,
    MethodDecl,
    Param,
    Block,
    VarDeclStmt,
    ExprStmt,
    IfStmt,
    ForStmt,
    WhileStmt,
    SwitchStmt,
    CaseClause,
    ReturnStmt,
    CallExpr,
    BinaryExpr,
    AssignExpr,
    Identifier,
    Literal,
    TokenLeaf,
}

impl NodeKind {
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            NodeKind::VarDeclStmt
                | NodeKind::ExprStmt
                | NodeKind::IfStmt
                | NodeKind::ForStmt
                | NodeKind::WhileStmt
                | NodeKind::SwitchStmt
                | NodeKind::ReturnStmt
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxNode {
    /// Dense pre-order index into [`SyntaxTree::nodes`].
    pub id: usize,
    pub kind: NodeKind,
    pub children: Vec<usize>,
    /// Inclusive token index range covered by this node.
    pub token_span: (usize, usize),
}

impl SyntaxNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxTree {
    pub nodes: Vec<SyntaxNode>,
    pub root: usize,
    pub tokens: Vec<Token>,
}

impl SyntaxTree {
    pub fn node(&self, id: usize) -> &SyntaxNode {
        &self.nodes[id]
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &SyntaxNode> {
        self.nodes[id].children.iter().map(move |&c| &self.nodes[c])
    }

    /// Ids of all nodes of the given kind, in pre-order.
    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.kind == kind)
            .map(|n| n.id)
            .collect()
    }

    /// Token text for a leaf node.
    pub fn leaf_text(&self, id: usize) -> &str {
        &self.tokens[self.nodes[id].token_span.0].text
    }

    /// Source text of a span, token texts joined with single spaces.
    pub fn span_text(&self, span: (usize, usize)) -> String {
        self.tokens[span.0..=span.1]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Human-readable indented dump, one node per line.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        self.pretty_rec(self.root, 0, &mut out);
        out
    }

    fn pretty_rec(&self, id: usize, depth: usize, out: &mut String) {
        let n = &self.nodes[id];
        let indent = "  ".repeat(depth);
        if n.is_leaf() {
            out.push_str(&format!(
                "{indent}{} {:?} '{}' [{},{}]\n",
                n.id,
                n.kind,
                self.tokens[n.token_span.0].text,
                n.token_span.0,
                n.token_span.1
            ));
        } else {
            out.push_str(&format!(
                "{indent}{} {:?} [{},{}]\n",
                n.id, n.kind, n.token_span.0, n.token_span.1
            ));
            for &c in &n.children {
                self.pretty_rec(c, depth + 1, out);
            }
        }
    }
}

/// Tree under construction; flattened into pre-order ids at the end.
struct RawNode {
    kind: NodeKind,
    children: Vec<RawNode>,
    /// Set for leaves only: the single owned token index.
    token: Option<usize>,
}

impl RawNode {
    fn internal(kind: NodeKind) -> Self {
        RawNode {
            kind,
            children: Vec::new(),
            token: None,
        }
    }

    fn leaf(kind: NodeKind, token: usize) -> Self {
        RawNode {
            kind,
            children: Vec::new(),
            token: Some(token),
        }
    }

    fn push(&mut self, child: RawNode) {
        self.children.push(child);
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = std::result::Result<T, ParseDiagnostic>;

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&Token> {
        self.tokens.get(self.pos + off)
    }

    fn is(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text)
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseDiagnostic {
        match self.peek() {
            Some(t) => ParseDiagnostic::error(msg, t.line, t.col),
            None => {
                let (line, col) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.col + t.text.chars().count()))
                    .unwrap_or((1, 1));
                ParseDiagnostic::error(msg, line, col)
            }
        }
    }

    /// Consume the current token as a TokenLeaf.
    fn bump_leaf(&mut self) -> RawNode {
        let idx = self.pos;
        self.pos += 1;
        RawNode::leaf(NodeKind::TokenLeaf, idx)
    }

    fn expect(&mut self, text: &str) -> PResult<RawNode> {
        if self.is(text) {
            Ok(self.bump_leaf())
        } else {
            Err(self.err_here(format!(
                "expected '{text}'{}",
                self.peek()
                    .map(|t| format!(", found '{}'", t.text))
                    .unwrap_or_else(|| ", found end of input".into())
            )))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<RawNode> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => Ok(self.bump_leaf()),
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn at_modifier(&self) -> bool {
        self.peek().is_some_and(|t| {
            matches!(
                t.text.as_str(),
                "public" | "private" | "protected" | "static" | "final" | "abstract" | "synchronized"
            )
        })
    }

    fn at_type_name(&self, off: usize) -> bool {
        self.peek_at(off).is_some_and(|t| {
            t.kind == TokenKind::Identifier
                || matches!(
                    t.text.as_str(),
                    "int" | "long" | "short" | "byte" | "char" | "boolean" | "float" | "double" | "void"
                )
        })
    }

    // ---- declarations ----

    fn compilation_unit(&mut self) -> PResult<RawNode> {
        if self.peek().is_none() {
            return Err(self.err_here("empty input"));
        }
        let mut unit = RawNode::internal(NodeKind::CompilationUnit);
        // Peek past modifiers to decide between class files and bare-method snippets.
        let mut look = 0;
        while self.peek_at(look).is_some_and(|t| {
            matches!(
                t.text.as_str(),
                "public" | "private" | "protected" | "static" | "final" | "abstract" | "synchronized"
            )
        }) {
            look += 1;
        }
        if self.peek_at(look).is_some_and(|t| t.text == "class") {
            while self.peek().is_some() {
                unit.push(self.class_decl()?);
            }
        } else {
            unit.push(self.method_decl()?);
            if let Some(t) = self.peek() {
                return Err(ParseDiagnostic::error(
                    format!("unexpected trailing token '{}'", t.text),
                    t.line,
                    t.col,
                ));
            }
        }
        Ok(unit)
    }

    fn class_decl(&mut self) -> PResult<RawNode> {
        let mut class = RawNode::internal(NodeKind::ClassDecl);
        while self.at_modifier() {
            class.push(self.bump_leaf());
        }
        class.push(self.expect("class")?);
        class.push(self.expect_ident("class name")?);
        class.push(self.expect("{")?);
        while !self.is("}") {
            if self.peek().is_none() {
                return Err(self.err_here("unbalanced braces: expected '}'"));
            }
            class.push(self.method_decl()?);
        }
        class.push(self.expect("}")?);
        Ok(class)
    }

    fn method_decl(&mut self) -> PResult<RawNode> {
        let mut method = RawNode::internal(NodeKind::MethodDecl);
        while self.at_modifier() {
            method.push(self.bump_leaf());
        }
        if !self.at_type_name(0) {
            return Err(self.err_here("expected return type"));
        }
        method.push(self.bump_leaf());
        if self.is("[") {
            return Err(self.err_here("unsupported construct: array type"));
        }
        method.push(self.expect_ident("method name")?);
        method.push(self.expect("(")?);
        if !self.is(")") {
            loop {
                method.push(self.param()?);
                if self.is(",") {
                    method.push(self.bump_leaf());
                } else {
                    break;
                }
            }
        }
        method.push(self.expect(")")?);
        if self.is("throws") {
            method.push(self.bump_leaf());
            method.push(self.expect_ident("exception name")?);
            while self.is(",") {
                method.push(self.bump_leaf());
                method.push(self.expect_ident("exception name")?);
            }
        }
        // Field declarations reach here as `type name ;` — reject cleanly.
        if self.is(";") || self.is("=") {
            return Err(self.err_here("unsupported construct: field declaration"));
        }
        method.push(self.block()?);
        Ok(method)
    }

    fn param(&mut self) -> PResult<RawNode> {
        let mut param = RawNode::internal(NodeKind::Param);
        if !self.at_type_name(0) {
            return Err(self.err_here("expected parameter type"));
        }
        param.push(self.bump_leaf());
        if self.is("[") {
            return Err(self.err_here("unsupported construct: array type"));
        }
        param.push(self.expect_ident("parameter name")?);
        Ok(param)
    }

    // ---- statements ----

    fn block(&mut self) -> PResult<RawNode> {
        let mut block = RawNode::internal(NodeKind::Block);
        block.push(self.expect("{")?);
        while !self.is("}") {
            if self.peek().is_none() {
                return Err(self.err_here("unbalanced braces: expected '}'"));
            }
            block.push(self.statement()?);
        }
        block.push(self.expect("}")?);
        Ok(block)
    }

    fn statement(&mut self) -> PResult<RawNode> {
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected statement"));
        };
        match t.text.as_str() {
            "{" => self.block(),
            "if" => self.if_stmt(),
            "for" => self.for_stmt(),
            "while" => self.while_stmt(),
            "switch" => self.switch_stmt(),
            "return" => self.return_stmt(),
            "break" | "continue" => {
                // Plain statements in this subset; no jump-edge modeling.
                let mut stmt = RawNode::internal(NodeKind::ExprStmt);
                stmt.push(self.bump_leaf());
                stmt.push(self.expect(";")?);
                Ok(stmt)
            }
            "new" | "try" | "throw" | "do" | "this" | "package" | "class" => {
                Err(self.err_here(format!("unsupported construct: '{}'", t.text)))
            }
            "@" => Err(self.err_here("unsupported construct: annotation")),
            _ => {
                if self.at_var_decl() {
                    self.var_decl_stmt()
                } else {
                    let mut stmt = RawNode::internal(NodeKind::ExprStmt);
                    stmt.push(self.expression()?);
                    stmt.push(self.expect(";")?);
                    Ok(stmt)
                }
            }
        }
    }

    /// `type name (= | ;)` lookahead distinguishes declarations from
    /// expression statements like `a.b();`.
    fn at_var_decl(&self) -> bool {
        self.at_type_name(0)
            && self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Identifier)
            && self.peek_at(2).is_some_and(|t| t.text == "=" || t.text == ";")
    }

    fn var_decl_stmt(&mut self) -> PResult<RawNode> {
        let mut stmt = RawNode::internal(NodeKind::VarDeclStmt);
        stmt.push(self.bump_leaf()); // type
        stmt.push(self.expect_ident("variable name")?);
        if self.is("=") {
            stmt.push(self.bump_leaf());
            stmt.push(self.expression()?);
        }
        stmt.push(self.expect(";")?);
        Ok(stmt)
    }

    fn if_stmt(&mut self) -> PResult<RawNode> {
        let mut stmt = RawNode::internal(NodeKind::IfStmt);
        stmt.push(self.expect("if")?);
        stmt.push(self.expect("(")?);
        stmt.push(self.expression()?);
        stmt.push(self.expect(")")?);
        stmt.push(self.statement()?);
        if self.is("else") {
            stmt.push(self.bump_leaf());
            stmt.push(self.statement()?);
        }
        Ok(stmt)
    }

    fn for_stmt(&mut self) -> PResult<RawNode> {
        let mut stmt = RawNode::internal(NodeKind::ForStmt);
        stmt.push(self.expect("for")?);
        stmt.push(self.expect("(")?);
        // init: declaration, expression statement, or bare ';'
        if self.is(";") {
            stmt.push(self.bump_leaf());
        } else if self.at_var_decl() {
            stmt.push(self.var_decl_stmt()?);
        } else {
            let mut init = RawNode::internal(NodeKind::ExprStmt);
            init.push(self.expression()?);
            init.push(self.expect(";")?);
            stmt.push(init);
        }
        if !self.is(";") {
            stmt.push(self.expression()?);
        }
        stmt.push(self.expect(";")?);
        if !self.is(")") {
            stmt.push(self.expression()?);
        }
        stmt.push(self.expect(")")?);
        stmt.push(self.statement()?);
        Ok(stmt)
    }

    fn while_stmt(&mut self) -> PResult<RawNode> {
        let mut stmt = RawNode::internal(NodeKind::WhileStmt);
        stmt.push(self.expect("while")?);
        stmt.push(self.expect("(")?);
        stmt.push(self.expression()?);
        stmt.push(self.expect(")")?);
        stmt.push(self.statement()?);
        Ok(stmt)
    }

    fn switch_stmt(&mut self) -> PResult<RawNode> {
        let mut stmt = RawNode::internal(NodeKind::SwitchStmt);
        stmt.push(self.expect("switch")?);
        stmt.push(self.expect("(")?);
        stmt.push(self.expression()?);
        stmt.push(self.expect(")")?);
        stmt.push(self.expect("{")?);
        while self.is("case") || self.is("default") {
            stmt.push(self.case_clause()?);
        }
        stmt.push(self.expect("}")?);
        Ok(stmt)
    }

    fn case_clause(&mut self) -> PResult<RawNode> {
        let mut clause = RawNode::internal(NodeKind::CaseClause);
        if self.is("case") {
            clause.push(self.bump_leaf());
            clause.push(self.expression()?);
        } else {
            clause.push(self.expect("default")?);
        }
        clause.push(self.expect(":")?);
        while !self.is("case") && !self.is("default") && !self.is("}") {
            if self.peek().is_none() {
                return Err(self.err_here("unbalanced braces: expected '}'"));
            }
            clause.push(self.statement()?);
        }
        Ok(clause)
    }

    fn return_stmt(&mut self) -> PResult<RawNode> {
        let mut stmt = RawNode::internal(NodeKind::ReturnStmt);
        stmt.push(self.expect("return")?);
        if !self.is(";") {
            stmt.push(self.expression()?);
        }
        stmt.push(self.expect(";")?);
        Ok(stmt)
    }

    // ---- expressions ----

    fn expression(&mut self) -> PResult<RawNode> {
        self.assignment()
    }

    fn assignment(&mut self) -> PResult<RawNode> {
        let lhs = self.binary(0)?;
        if self.peek().is_some_and(|t| {
            matches!(t.text.as_str(), "=" | "+=" | "-=" | "*=" | "/=" | "%=")
        }) {
            let mut assign = RawNode::internal(NodeKind::AssignExpr);
            assign.push(lhs);
            assign.push(self.bump_leaf());
            assign.push(self.assignment()?);
            return Ok(assign);
        }
        Ok(lhs)
    }

    /// Binary operator precedence tiers, loosest first.
    const TIERS: &'static [&'static [&'static str]] = &[
        &["||"],
        &["&&"],
        &["|"],
        &["^"],
        &["&"],
        &["==", "!="],
        &["<", ">", "<=", ">="],
        &["<<", ">>"],
        &["+", "-"],
        &["*", "/", "%"],
    ];

    fn binary(&mut self, tier: usize) -> PResult<RawNode> {
        if tier >= Self::TIERS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(tier + 1)?;
        while self
            .peek()
            .is_some_and(|t| Self::TIERS[tier].contains(&t.text.as_str()))
        {
            let mut bin = RawNode::internal(NodeKind::BinaryExpr);
            bin.push(lhs);
            bin.push(self.bump_leaf());
            bin.push(self.binary(tier + 1)?);
            lhs = bin;
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<RawNode> {
        if let Some(t) = self.peek() {
            match t.text.as_str() {
                // Prefix increment/decrement writes its operand, so it is
                // represented as an assignment.
                "++" | "--" => {
                    let mut assign = RawNode::internal(NodeKind::AssignExpr);
                    assign.push(self.bump_leaf());
                    assign.push(self.unary()?);
                    return Ok(assign);
                }
                "!" | "-" | "+" | "~" => {
                    let mut un = RawNode::internal(NodeKind::BinaryExpr);
                    un.push(self.bump_leaf());
                    un.push(self.unary()?);
                    return Ok(un);
                }
                _ => {}
            }
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<RawNode> {
        let mut expr = self.primary()?;
        loop {
            if self.is("(") {
                // Call with the expression parsed so far as the callee.
                let mut call = RawNode::internal(NodeKind::CallExpr);
                call.push(expr);
                call.push(self.bump_leaf());
                if !self.is(")") {
                    loop {
                        call.push(self.expression()?);
                        if self.is(",") {
                            call.push(self.bump_leaf());
                        } else {
                            break;
                        }
                    }
                }
                call.push(self.expect(")")?);
                expr = call;
            } else if self.is(".") {
                // Dotted chains are only valid when they end in a call.
                let mut segments = Vec::new();
                loop {
                    let dot = self.bump_leaf();
                    let name = self.expect_ident("member name")?;
                    segments.push(dot);
                    segments.push(name);
                    if !self.is(".") {
                        break;
                    }
                }
                if !self.is("(") {
                    return Err(self.err_here("unsupported construct: field access"));
                }
                let mut call = RawNode::internal(NodeKind::CallExpr);
                call.push(expr);
                for seg in segments {
                    call.push(seg);
                }
                call.push(self.bump_leaf()); // '('
                if !self.is(")") {
                    loop {
                        call.push(self.expression()?);
                        if self.is(",") {
                            call.push(self.bump_leaf());
                        } else {
                            break;
                        }
                    }
                }
                call.push(self.expect(")")?);
                expr = call;
            } else if self.is("++") || self.is("--") {
                let mut assign = RawNode::internal(NodeKind::AssignExpr);
                assign.push(expr);
                assign.push(self.bump_leaf());
                expr = assign;
            } else {
                break;
            }
        }
        Ok(expr)
    }

    fn primary(&mut self) -> PResult<RawNode> {
        let Some(t) = self.peek() else {
            return Err(self.err_here("expected expression"));
        };
        match t.kind {
            TokenKind::Literal => Ok(self.leaf_expr(NodeKind::Literal)),
            TokenKind::Identifier => Ok(self.leaf_expr(NodeKind::Identifier)),
            _ if t.text == "(" => {
                let open = self.bump_leaf();
                let inner = self.expression()?;
                let close = self.expect(")")?;
                Ok(wrap_parens(open, inner, close))
            }
            _ if t.text == "[" => Err(self.err_here("unsupported construct: array access")),
            _ if t.text == "new" => Err(self.err_here("unsupported construct: 'new'")),
            _ => Err(self.err_here(format!("expected expression, found '{}'", t.text))),
        }
    }

    fn leaf_expr(&mut self, kind: NodeKind) -> RawNode {
        let idx = self.pos;
        self.pos += 1;
        RawNode::leaf(kind, idx)
    }
}

/// Attach parenthesis tokens to the wrapped expression. Leaf expressions
/// are promoted to internal nodes of the same kind so the parens have a
/// home and every token still belongs to exactly one leaf.
fn wrap_parens(open: RawNode, mut inner: RawNode, close: RawNode) -> RawNode {
    if let Some(tok) = inner.token.take() {
        let kind = inner.kind;
        let mut promoted = RawNode::internal(kind);
        promoted.push(RawNode::leaf(kind, tok));
        inner = promoted;
    }
    inner.children.insert(0, open);
    inner.push(close);
    inner
}

/// Parse a token stream into a [`SyntaxTree`].
pub fn parse(tokens: Vec<Token>) -> std::result::Result<SyntaxTree, ParseDiagnostic> {
    let mut parser = Parser { tokens, pos: 0 };
    let raw = parser.compilation_unit()?;
    if let Some(t) = parser.peek() {
        return Err(ParseDiagnostic::error(
            format!("unexpected trailing token '{}'", t.text),
            t.line,
            t.col,
        ));
    }
    let tokens = parser.tokens;
    let mut nodes = Vec::new();
    flatten(&raw, &mut nodes);
    Ok(SyntaxTree {
        nodes,
        root: 0,
        tokens,
    })
}

/// Convenience: tokenize then parse.
pub fn parse_source(source: &str) -> std::result::Result<SyntaxTree, ParseDiagnostic> {
    parse(super::lexer::tokenize(source)?)
}

fn flatten(raw: &RawNode, nodes: &mut Vec<SyntaxNode>) -> usize {
    let id = nodes.len();
    nodes.push(SyntaxNode {
        id,
        kind: raw.kind,
        children: Vec::new(),
        token_span: (usize::MAX, 0),
    });
    if let Some(tok) = raw.token {
        nodes[id].token_span = (tok, tok);
        return id;
    }
    let mut child_ids = Vec::with_capacity(raw.children.len());
    let mut span = (usize::MAX, 0usize);
    for child in &raw.children {
        let cid = flatten(child, nodes);
        span.0 = span.0.min(nodes[cid].token_span.0);
        span.1 = span.1.max(nodes[cid].token_span.1);
        child_ids.push(cid);
    }
    nodes[id].children = child_ids;
    nodes[id].token_span = span;
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::lexer::tokenize;

    pub const SQUARE_SNIPPET: &str = "public int square(int n) {\n    int result = 1;\n    for (int i = 0; i < n; i++) {\n        result *= 2;\n    }\n    return result;\n}\n";

    fn parse_str(src: &str) -> SyntaxTree {
        parse(tokenize(src).unwrap()).unwrap()
    }

    #[test]
    fn square_method_has_expected_statement_kinds() {
        let tree = parse_str(SQUARE_SNIPPET);
        let methods = tree.nodes_of_kind(NodeKind::MethodDecl);
        assert_eq!(methods.len(), 1);
        assert_eq!(tree.nodes_of_kind(NodeKind::VarDeclStmt).len(), 2); // result, i
        assert_eq!(tree.nodes_of_kind(NodeKind::ForStmt).len(), 1);
        assert_eq!(tree.nodes_of_kind(NodeKind::ReturnStmt).len(), 1);
    }

    #[test]
    fn single_var_decl_owns_its_tokens_as_leaves() {
        let tree = parse_str("void m() { int x = 0; }");
        let decl = tree.nodes_of_kind(NodeKind::VarDeclStmt)[0];
        let leaf_texts: Vec<&str> = tree
            .children(decl)
            .filter(|c| c.is_leaf())
            .map(|c| tree.leaf_text(c.id))
            .collect();
        assert_eq!(leaf_texts, vec!["int", "x", "=", "0", ";"]);
        let kinds: Vec<NodeKind> = tree.children(decl).map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![
                NodeKind::TokenLeaf,
                NodeKind::TokenLeaf,
                NodeKind::TokenLeaf,
                NodeKind::Literal,
                NodeKind::TokenLeaf
            ]
        );
    }

    /// Hand-enumerated node listing for a three-statement method, frozen
    /// before the parser was written.
    #[test]
    fn three_statement_method_matches_hand_enumerated_listing() {
        let tree = parse_str("int f(int a) {\n    int b = a;\n    b = b + 1;\n    return b;\n}");

        use NodeKind::*;
        #[rustfmt::skip]
        let expected: Vec<(usize, NodeKind, (usize, usize))> = vec![
            (0, CompilationUnit, (0, 21)),
            (1, MethodDecl, (0, 21)),
            (2, TokenLeaf, (0, 0)),    // int
            (3, TokenLeaf, (1, 1)),    // f
            (4, TokenLeaf, (2, 2)),    // (
            (5, Param, (3, 4)),
            (6, TokenLeaf, (3, 3)),    // int
            (7, TokenLeaf, (4, 4)),    // a
            (8, TokenLeaf, (5, 5)),    // )
            (9, Block, (6, 21)),
            (10, TokenLeaf, (6, 6)),   // {
            (11, VarDeclStmt, (7, 11)),
            (12, TokenLeaf, (7, 7)),   // int
            (13, TokenLeaf, (8, 8)),   // b
            (14, TokenLeaf, (9, 9)),   // =
            (15, Identifier, (10, 10)),
            (16, TokenLeaf, (11, 11)), // ;
            (17, ExprStmt, (12, 17)),
            (18, AssignExpr, (12, 16)),
            (19, Identifier, (12, 12)),
            (20, TokenLeaf, (13, 13)), // =
            (21, BinaryExpr, (14, 16)),
            (22, Identifier, (14, 14)),
            (23, TokenLeaf, (15, 15)), // +
            (24, Literal, (16, 16)),
            (25, TokenLeaf, (17, 17)), // ;
            (26, ReturnStmt, (18, 20)),
            (27, TokenLeaf, (18, 18)), // return
            (28, Identifier, (19, 19)),
            (29, TokenLeaf, (20, 20)), // ;
            (30, TokenLeaf, (21, 21)), // }
        ];
        let actual: Vec<(usize, NodeKind, (usize, usize))> = tree
            .nodes
            .iter()
            .map(|n| (n.id, n.kind, n.token_span))
            .collect();
        assert_eq!(actual, expected);
    }

    #[test]
    fn preorder_ids_strictly_increase_down_the_tree() {
        let tree = parse_str("int f(int a) { int b = a; b = b + 1; return b; }");
        for node in &tree.nodes {
            for &c in &node.children {
                assert!(c > node.id, "child {} not greater than parent {}", c, node.id);
            }
        }
    }

    #[test]
    fn every_token_in_exactly_one_leaf_span() {
        for src in [
            SQUARE_SNIPPET,
            "class A { void m(int x) { if (x > 0) { x--; } else { x++; } } }",
            "void m() { switch (k) { case 1: f(); break; default: g(); } }",
            "void m() { int y = (a + b) * c; obj.call(y, \"s\"); }",
            "void m() { while (i < 10) i += 2; }",
        ] {
            let tree = parse_str(src);
            let mut owned = vec![0usize; tree.tokens.len()];
            for n in &tree.nodes {
                if n.is_leaf() {
                    assert_eq!(n.token_span.0, n.token_span.1);
                    owned[n.token_span.0] += 1;
                }
            }
            assert!(owned.iter().all(|&c| c == 1), "token ownership {owned:?} for {src}");
        }
    }

    #[test]
    fn parent_span_covers_children() {
        let tree = parse_str(SQUARE_SNIPPET);
        for n in &tree.nodes {
            for &c in &n.children {
                let cs = tree.nodes[c].token_span;
                assert!(n.token_span.0 <= cs.0 && cs.1 <= n.token_span.1);
            }
        }
    }

    #[test]
    fn parse_is_deterministic() {
        let a = parse_str(SQUARE_SNIPPET);
        let b = parse_str(SQUARE_SNIPPET);
        assert_eq!(a, b);
    }

    #[test]
    fn unbalanced_braces_error() {
        let err = parse(tokenize("void m() { int x = 1; ").unwrap()).unwrap_err();
        assert!(err.message.contains("unbalanced braces") || err.message.contains("expected"));
    }

    #[test]
    fn unsupported_constructs_are_clean_errors() {
        for src in [
            "void m() { Foo f = new Foo(); }",
            "void m() { try { f(); } catch (E e) {} }",
            "void m() { int[] a; }",
            "void m() { x = a.b; }",
        ] {
            let toks = tokenize(src);
            match toks {
                Ok(toks) => {
                    let err = parse(toks).unwrap_err();
                    assert_eq!(err.severity, crate::frontend::Severity::Error, "{src}");
                }
                Err(_) => {}
            }
        }
    }

    #[test]
    fn class_with_two_methods_parses() {
        let tree = parse_str("class A { int f() { return 1; } int g() { return 2; } }");
        assert_eq!(tree.nodes_of_kind(NodeKind::MethodDecl).len(), 2);
        assert_eq!(tree.nodes_of_kind(NodeKind::ClassDecl).len(), 1);
    }

    #[test]
    fn dotted_call_and_nested_calls() {
        let tree = parse_str("void m() { System.out.println(f(x) + 1); }");
        assert!(tree.nodes_of_kind(NodeKind::CallExpr).len() >= 2);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(parse(vec![]).is_err());
    }
}
