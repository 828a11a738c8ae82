//! DOT interchange for view graphs.
//!
//! The accepted subset is `digraph { ... }` with edge statements of the
//! form `nI -> nJ;` and optional node label lines `nI [label="..."];`.
//! Other attributes are ignored. Node count is one past the largest node
//! index mentioned anywhere.

use super::{ViewGraph, ViewKind};
use crate::error::{Error, Result};
use std::fmt::Write as _;

fn escape(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            _ => out.push(c),
        }
    }
    out
}

/// Emit the graph in the exact subset [`import_dot`] accepts: one label
/// line per node, then edges in row-major scan order.
pub fn export_dot(g: &ViewGraph) -> String {
    let mut out = String::from("digraph {\n");
    for (i, label) in g.node_labels.iter().enumerate() {
        let _ = writeln!(out, "n{i} [label=\"{}\"];", escape(label));
    }
    for (f, t) in g.edges() {
        let _ = writeln!(out, "n{f} -> n{t};");
    }
    out.push_str("}\n");
    out
}

fn dot_err(line: usize, message: impl Into<String>) -> Error {
    Error::Dot {
        line,
        message: message.into(),
    }
}

fn parse_node_ref(s: &str, line: usize) -> Result<usize> {
    let s = s.trim();
    let Some(rest) = s.strip_prefix('n') else {
        return Err(dot_err(line, format!("expected node reference 'n<uint>', got '{s}'")));
    };
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return Err(dot_err(line, format!("invalid node index '{rest}'")));
    }
    rest.parse()
        .map_err(|_| dot_err(line, format!("node index '{rest}' out of range")))
}

/// Extract the quoted value of `label="..."` from a bracket body,
/// honoring backslash escapes. Returns None when no label attribute exists.
fn parse_label(body: &str, line: usize) -> Result<Option<String>> {
    let Some(start) = body.find("label=\"") else {
        return Ok(None);
    };
    let rest = &body[start + "label=\"".len()..];
    let mut out = String::new();
    let mut chars = rest.chars();
    loop {
        match chars.next() {
            Some('\\') => match chars.next() {
                Some(c) => out.push(c),
                None => return Err(dot_err(line, "unterminated label escape")),
            },
            Some('"') => return Ok(Some(out)),
            Some(c) => out.push(c),
            None => return Err(dot_err(line, "unterminated label string")),
        }
    }
}

struct Scanner<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner {
            chars: text.chars().peekable(),
            line: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.chars.peek().is_some_and(|c| c.is_whitespace()) {
            self.bump();
        }
    }

    /// Next run of non-whitespace, non-special characters.
    fn word(&mut self) -> String {
        let mut out = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() || matches!(c, '{' | '}' | '[' | ']' | ';') {
                break;
            }
            out.push(c);
            self.bump();
        }
        out
    }

    fn eat(&mut self, expected: char) -> bool {
        if self.chars.peek() == Some(&expected) {
            self.bump();
            true
        } else {
            false
        }
    }

    /// Bracket body up to the matching ']', quote-aware.
    fn bracket_body(&mut self) -> Result<String> {
        let start = self.line;
        let mut out = String::new();
        let mut in_quotes = false;
        loop {
            match self.bump() {
                Some('"') => {
                    in_quotes = !in_quotes;
                    out.push('"');
                }
                Some('\\') if in_quotes => {
                    out.push('\\');
                    if let Some(c) = self.bump() {
                        out.push(c);
                    }
                }
                Some(']') if !in_quotes => return Ok(out),
                Some(c) => out.push(c),
                None => return Err(dot_err(start, "unterminated attribute bracket")),
            }
        }
    }
}

/// Parse a DOT digraph in the supported subset into a view graph. The
/// imported graph is tagged [`ViewKind::Ast`]; use
/// [`ViewGraph::with_kind`] to re-tag.
pub fn import_dot(text: &str) -> Result<ViewGraph> {
    let mut sc = Scanner::new(text);
    sc.skip_ws();
    let kw = sc.word();
    if kw != "digraph" {
        return Err(dot_err(sc.line, "expected 'digraph {'"));
    }
    sc.skip_ws();
    // Optional graph name.
    if sc.chars.peek() != Some(&'{') {
        let name = sc.word();
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(dot_err(sc.line, "malformed digraph header"));
        }
        sc.skip_ws();
    }
    if !sc.eat('{') {
        return Err(dot_err(sc.line, "expected '{'"));
    }

    let mut max_index: Option<usize> = None;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut labels: Vec<(usize, String)> = Vec::new();

    loop {
        sc.skip_ws();
        if sc.eat('}') {
            break;
        }
        if sc.chars.peek().is_none() {
            return Err(dot_err(sc.line, "missing closing '}'"));
        }
        let line_no = sc.line;
        let head = sc.word();
        if head.is_empty() {
            return Err(dot_err(sc.line, "malformed statement"));
        }
        // An edge may be written `n0 -> n1`, `n0->n1`, or any mix.
        if let Some((lhs, rhs)) = head.split_once("->") {
            let from = parse_node_ref(lhs, line_no)?;
            let rhs = if rhs.is_empty() {
                sc.skip_ws();
                sc.word()
            } else {
                rhs.to_string()
            };
            let to = parse_node_ref(&rhs, line_no)?;
            record_edge(from, to, line_no, &mut max_index, &mut edges)?;
            sc.skip_ws();
            sc.eat(';');
            continue;
        }
        let idx = parse_node_ref(&head, line_no)?;
        sc.skip_ws();
        if sc.chars.peek() == Some(&'[') {
            sc.bump();
            let body = sc.bracket_body()?;
            max_index = Some(max_index.map_or(idx, |m| m.max(idx)));
            if let Some(label) = parse_label(&body, line_no)? {
                labels.push((idx, label));
            }
            sc.skip_ws();
            sc.eat(';');
            continue;
        }
        // Must be `nI -> nJ` with spacing around the arrow.
        let arrow = sc.word();
        if arrow != "->" {
            return Err(dot_err(line_no, format!("malformed statement near 'n{idx}'")));
        }
        sc.skip_ws();
        let to = parse_node_ref(&sc.word(), line_no)?;
        record_edge(idx, to, line_no, &mut max_index, &mut edges)?;
        sc.skip_ws();
        sc.eat(';');
    }
    sc.skip_ws();
    if sc.chars.peek().is_some() {
        return Err(dot_err(sc.line, "text after closing '}'"));
    }

    let Some(max_index) = max_index else {
        return Err(dot_err(sc.line, "no nodes"));
    };

    let n = max_index + 1;
    let mut g = ViewGraph::new(ViewKind::Ast, n, vec![String::new(); n]);
    for (idx, label) in labels {
        g.node_labels[idx] = label;
    }
    for (f, t) in edges {
        g.add_edge(f, t);
    }
    Ok(g)
}

fn record_edge(
    from: usize,
    to: usize,
    line_no: usize,
    max_index: &mut Option<usize>,
    edges: &mut Vec<(usize, usize)>,
) -> Result<()> {
    if from == to {
        return Err(dot_err(line_no, format!("self-loop on node {from}")));
    }
    *max_index = Some(max_index.map_or(from.max(to), |m| m.max(from).max(to)));
    edges.push((from, to));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_node_edge() {
        let g = import_dot("digraph { n0 -> n1; }").unwrap();
        assert_eq!(g.n, 2);
        assert!(g.has_edge(0, 1));
        assert!(!g.has_edge(1, 0));
    }

    #[test]
    fn empty_digraph_is_no_nodes_error() {
        let err = import_dot("digraph { }").unwrap_err();
        assert!(err.to_string().contains("no nodes"));
    }

    /// Hand-transcribed 4x4 adjacency for four edges over n0..n3.
    #[test]
    fn four_edges_match_hand_written_matrix() {
        let g = import_dot("digraph {\nn0 -> n1;\nn0 -> n2;\nn2 -> n3;\nn3 -> n1;\n}").unwrap();
        #[rustfmt::skip]
        let expected: &[u8] = &[
            0, 1, 1, 0,
            0, 0, 0, 0,
            0, 0, 0, 1,
            0, 1, 0, 0,
        ];
        assert_eq!(g.matrix(), expected);
    }

    #[test]
    fn labels_are_retained_and_unescaped() {
        let g = import_dot("digraph {\nn0 [label=\"say \\\"hi\\\"\"];\nn0 -> n1;\n}").unwrap();
        assert_eq!(g.node_labels[0], "say \"hi\"");
        assert_eq!(g.node_labels[1], "");
    }

    #[test]
    fn label_only_nodes_extend_node_count() {
        let g = import_dot("digraph {\nn0 -> n1;\nn5 [label=\"x\"];\n}").unwrap();
        assert_eq!(g.n, 6);
    }

    #[test]
    fn other_attributes_are_ignored() {
        let g = import_dot("digraph {\nn0 [shape=box];\nn0 -> n1;\n}").unwrap();
        assert_eq!(g.n, 2);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        for (text, want_line) in [
            ("digraph {\nn0 -> x1;\n}", 2),
            ("digraph {\nn0 -> n-1;\n}", 2),
            ("digraph {\nn0 -> n1;\nbogus\n}", 3),
            ("digraph {\nn0 -> n0;\n}", 2),
        ] {
            match import_dot(text) {
                Err(Error::Dot { line, .. }) => assert_eq!(line, want_line, "{text}"),
                other => panic!("expected dot error for {text}, got {other:?}"),
            }
        }
    }

    #[test]
    fn export_emits_named_edge_line() {
        let mut g = ViewGraph::new(ViewKind::Ast, 2, vec!["a".into(), "b".into()]);
        g.add_edge(0, 1);
        let dot = export_dot(&g);
        assert!(dot.contains("n0 -> n1;"));
        assert!(dot.contains("n0 [label=\"a\"];"));
    }

    #[test]
    fn single_node_export_has_label_but_no_edges() {
        let g = ViewGraph::new(ViewKind::Cfg, 1, vec!["only".into()]);
        let dot = export_dot(&g);
        assert!(dot.contains("n0 [label=\"only\"];"));
        assert!(!dot.contains("->"));
        assert!(import_dot(&dot).unwrap().structural_eq(&g));
    }

    proptest! {
        #[test]
        fn roundtrip_random_graphs(n in 1usize..8, seed in any::<u64>(), label in "[ -~]{0,12}") {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<String> = (0..n).map(|i| format!("{label}#{i}\"\\")).collect();
            let mut g = ViewGraph::new(ViewKind::Dfg, n, labels);
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random_bool(0.4) {
                        g.add_edge(i, j);
                    }
                }
            }
            let back = import_dot(&export_dot(&g)).unwrap();
            prop_assert!(back.structural_eq(&g));
        }
    }
}
