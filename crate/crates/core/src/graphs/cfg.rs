//! Statement-level control flow graph with a unique entry and exit.
//!
//! The entry block is the method signature; every statement becomes one
//! block (branch headers like `for(...)` are a single block); a synthetic
//! exit block terminates every path. Branch nodes get one out-edge per
//! outcome, loop bodies edge back to their header, and `return` statements
//! edge straight to the exit.

use super::{ViewGraph, ViewKind};
use crate::error::{Error, Result};
use crate::frontend::{NodeKind, SyntaxTree};
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Entry,
    Exit,
    Branch,
    Plain,
}

/// Statement blocks of a single-method tree, shared by the control-flow
/// and data-flow builders so both views index the same node universe.
pub(crate) struct MethodBlocks<'t> {
    pub tree: &'t SyntaxTree,
    pub method: usize,
    /// Statement tree ids in pre-order; block index = position + 1.
    pub stmts: Vec<usize>,
    /// Loops as (block index of the header, inclusive block range of the body).
    pub loops: Vec<(usize, usize, usize)>,
    block_of: HashMap<usize, usize>,
}

impl<'t> MethodBlocks<'t> {
    pub fn build(tree: &'t SyntaxTree) -> Result<Self> {
        let methods = tree.nodes_of_kind(NodeKind::MethodDecl);
        if methods.len() != 1 {
            return Err(Error::graph(format!(
                "method-level CFG requires exactly one method, found {}",
                methods.len()
            )));
        }
        let method = methods[0];
        let body = *tree.nodes[method]
            .children
            .last()
            .expect("method has a body block");
        let mut blocks = MethodBlocks {
            tree,
            method,
            stmts: Vec::new(),
            loops: Vec::new(),
            block_of: HashMap::new(),
        };
        let items = blocks.seq_items(body);
        blocks.collect_seq(&items);
        for (pos, &s) in blocks.stmts.iter().enumerate() {
            blocks.block_of.insert(s, pos + 1);
        }
        // Body statement positions were recorded 0-based; shift to block space.
        for l in &mut blocks.loops {
            l.0 += 1;
            l.1 += 1;
            l.2 += 1;
        }
        Ok(blocks)
    }

    /// Total block count: entry + statements + exit.
    pub fn n(&self) -> usize {
        self.stmts.len() + 2
    }

    pub fn entry(&self) -> usize {
        0
    }

    pub fn exit(&self) -> usize {
        self.n() - 1
    }

    pub fn block_of(&self, stmt: usize) -> usize {
        self.block_of[&stmt]
    }

    /// Statement-or-block children of a sequence owner, with nested bare
    /// blocks spliced inline.
    pub fn seq_items(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &c in &self.tree.nodes[id].children {
            match self.tree.nodes[c].kind {
                NodeKind::Block => out.extend(self.seq_items(c)),
                k if k.is_statement() => out.push(c),
                _ => {}
            }
        }
        out
    }

    /// Branch bodies: then/else arms of an `if`, or the body of a loop.
    fn arms(&self, id: usize) -> Vec<usize> {
        self.tree.nodes[id]
            .children
            .iter()
            .copied()
            .filter(|&c| {
                let k = self.tree.nodes[c].kind;
                k == NodeKind::Block || k.is_statement()
            })
            .collect()
    }

    fn case_clauses(&self, switch_id: usize) -> Vec<usize> {
        self.tree.nodes[switch_id]
            .children
            .iter()
            .copied()
            .filter(|&c| self.tree.nodes[c].kind == NodeKind::CaseClause)
            .collect()
    }

    fn collect_seq(&mut self, items: &[usize]) {
        for &s in items {
            self.collect_stmt(s);
        }
    }

    fn collect_stmt(&mut self, s: usize) {
        let idx = self.stmts.len();
        self.stmts.push(s);
        match self.tree.nodes[s].kind {
            NodeKind::IfStmt => {
                for arm in self.arms(s) {
                    let items = self.body_items(arm);
                    self.collect_seq(&items);
                }
            }
            NodeKind::ForStmt | NodeKind::WhileStmt => {
                let body = *self.arms(s).last().expect("loop has a body");
                let start = self.stmts.len();
                let items = self.body_items(body);
                self.collect_seq(&items);
                if self.stmts.len() > start {
                    self.loops.push((idx, start, self.stmts.len() - 1));
                }
            }
            NodeKind::SwitchStmt => {
                for clause in self.case_clauses(s) {
                    let items = self.seq_items(clause);
                    self.collect_seq(&items);
                }
            }
            _ => {}
        }
    }

    fn body_items(&self, arm: usize) -> Vec<usize> {
        if self.tree.nodes[arm].kind == NodeKind::Block {
            self.seq_items(arm)
        } else {
            vec![arm]
        }
    }

    /// `if` arms as statement-or-block node ids, excluding loop bodies. A
    /// `ForStmt` init statement never appears here because it sits before
    /// the `)` leaf while arms come after.
    fn if_arms(&self, id: usize) -> (usize, Option<usize>) {
        let arms = self.arms(id);
        (arms[0], arms.get(1).copied())
    }

    pub fn role(&self, block: usize) -> NodeRole {
        if block == self.entry() {
            NodeRole::Entry
        } else if block == self.exit() {
            NodeRole::Exit
        } else {
            match self.tree.nodes[self.stmts[block - 1]].kind {
                NodeKind::IfStmt
                | NodeKind::ForStmt
                | NodeKind::WhileStmt
                | NodeKind::SwitchStmt => NodeRole::Branch,
                _ => NodeRole::Plain,
            }
        }
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.n());
        let mnode = &self.tree.nodes[self.method];
        let body = *mnode.children.last().unwrap();
        let sig_end = self.tree.nodes[body].token_span.0 - 1;
        labels.push(self.tree.span_text((mnode.token_span.0, sig_end)));
        for &s in &self.stmts {
            labels.push(self.stmt_label(s));
        }
        labels.push("EXIT".to_string());
        labels
    }

    fn stmt_label(&self, s: usize) -> String {
        let node = &self.tree.nodes[s];
        match node.kind {
            NodeKind::IfStmt | NodeKind::ForStmt | NodeKind::WhileStmt | NodeKind::SwitchStmt => {
                // Header only: tokens up to the `)` that closes it.
                let close = node
                    .children
                    .iter()
                    .find(|&&c| {
                        self.tree.nodes[c].kind == NodeKind::TokenLeaf
                            && self.tree.leaf_text(c) == ")"
                    })
                    .expect("branch header has a closing paren");
                self.tree
                    .span_text((node.token_span.0, self.tree.nodes[*close].token_span.0))
            }
            _ => {
                let (start, mut end) = node.token_span;
                if self.tree.tokens[end].text == ";" && end > start {
                    end -= 1;
                }
                self.tree.span_text((start, end))
            }
        }
    }
}

struct Wiring<'a, 't> {
    blocks: &'a MethodBlocks<'t>,
    edges: BTreeSet<(usize, usize)>,
}

impl<'a, 't> Wiring<'a, 't> {
    fn wire_seq(&mut self, items: &[usize], mut preds: Vec<usize>) -> Vec<usize> {
        for &s in items {
            preds = self.wire_stmt(s, preds);
        }
        preds
    }

    fn wire_body(&mut self, arm: usize, preds: Vec<usize>) -> Vec<usize> {
        let items = self.blocks.body_items(arm);
        self.wire_seq(&items, preds)
    }

    fn wire_stmt(&mut self, s: usize, preds: Vec<usize>) -> Vec<usize> {
        let b = self.blocks.block_of(s);
        for p in preds {
            self.edges.insert((p, b));
        }
        match self.blocks.tree.nodes[s].kind {
            NodeKind::ReturnStmt => {
                self.edges.insert((b, self.blocks.exit()));
                vec![]
            }
            NodeKind::IfStmt => {
                let (then_arm, else_arm) = self.blocks.if_arms(s);
                let mut out = self.wire_body(then_arm, vec![b]);
                match else_arm {
                    Some(e) => {
                        let tails = self.wire_body(e, vec![b]);
                        extend_unique(&mut out, tails);
                    }
                    None => push_unique(&mut out, b),
                }
                out
            }
            NodeKind::ForStmt | NodeKind::WhileStmt => {
                let body = *self.blocks.arms(s).last().expect("loop has a body");
                let tails = self.wire_body(body, vec![b]);
                for t in tails {
                    self.edges.insert((t, b));
                }
                vec![b]
            }
            NodeKind::SwitchStmt => {
                let clauses = self.blocks.case_clauses(s);
                if clauses.is_empty() {
                    return vec![b];
                }
                let mut out = Vec::new();
                let mut has_default = false;
                for clause in clauses {
                    let first = self.blocks.tree.nodes[clause].children[0];
                    if self.blocks.tree.leaf_text(first) == "default" {
                        has_default = true;
                    }
                    let items = self.blocks.seq_items(clause);
                    let tails = self.wire_seq(&items, vec![b]);
                    extend_unique(&mut out, tails);
                }
                if !has_default {
                    push_unique(&mut out, b);
                }
                out
            }
            _ => vec![b],
        }
    }
}

fn push_unique(v: &mut Vec<usize>, x: usize) {
    if !v.contains(&x) {
        v.push(x);
    }
}

fn extend_unique(v: &mut Vec<usize>, xs: Vec<usize>) {
    for x in xs {
        push_unique(v, x);
    }
}

/// Build the control flow graph of a single-method tree.
pub fn build_cfg(tree: &SyntaxTree) -> Result<ViewGraph> {
    Ok(build_cfg_with_roles(tree)?.0)
}

/// As [`build_cfg`], also returning the role of every block.
pub fn build_cfg_with_roles(tree: &SyntaxTree) -> Result<(ViewGraph, Vec<NodeRole>)> {
    let blocks = MethodBlocks::build(tree)?;
    let mut wiring = Wiring {
        blocks: &blocks,
        edges: BTreeSet::new(),
    };
    let body = *tree.nodes[blocks.method].children.last().unwrap();
    let items = blocks.seq_items(body);
    let entry = blocks.entry();
    let tails = wiring.wire_seq(&items, vec![entry]);
    let exit = blocks.exit();
    for t in tails {
        wiring.edges.insert((t, exit));
    }
    if items.is_empty() {
        wiring.edges.insert((entry, exit));
    }

    let mut g = ViewGraph::new(ViewKind::Cfg, blocks.n(), blocks.labels());
    for (f, t) in wiring.edges {
        g.add_edge(f, t);
    }
    let roles = (0..blocks.n()).map(|b| blocks.role(b)).collect();
    Ok((g, roles))
}
