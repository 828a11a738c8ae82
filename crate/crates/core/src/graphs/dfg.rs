//! Statement-level data flow graph: def-use chains over the same blocks as
//! the control flow graph.
//!
//! The chain approximation is flow-insensitive within branches: statements
//! are ordered by pre-order position, and each definition connects to every
//! subsequent use or redefinition of the same variable up to (and
//! including) the next redefinition. Definitions inside a loop body also
//! connect back to uses earlier in the same body, a one-back-iteration
//! approximation of loop-carried flow. Self-edges are dropped because the
//! adjacency matrix has no diagonal.

use super::cfg::MethodBlocks;
use super::{ViewGraph, ViewKind};
use crate::error::Result;
use crate::frontend::{NodeKind, SyntaxTree};
use std::collections::{BTreeMap, BTreeSet};

/// Variables written and read by one statement block, header expressions
/// only for branch statements.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(crate) struct VarEffects {
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

pub(crate) fn block_effects(blocks: &MethodBlocks<'_>) -> Vec<VarEffects> {
    let tree = blocks.tree;
    let mut out = Vec::with_capacity(blocks.n());

    // Entry defines the parameters.
    let mut entry = VarEffects::default();
    for &c in &tree.nodes[blocks.method].children {
        if tree.nodes[c].kind == NodeKind::Param {
            let name = tree.nodes[c].children[1];
            entry.defs.insert(tree.leaf_text(name).to_string());
        }
    }
    out.push(entry);

    for &s in &blocks.stmts {
        out.push(stmt_effects(tree, s));
    }
    out.push(VarEffects::default()); // exit
    out
}

fn stmt_effects(tree: &SyntaxTree, s: usize) -> VarEffects {
    let mut fx = VarEffects::default();
    let node = &tree.nodes[s];
    match node.kind {
        NodeKind::VarDeclStmt => {
            fx.defs.insert(tree.leaf_text(node.children[1]).to_string());
            for &c in &node.children[2..] {
                walk_expr(tree, c, &mut fx);
            }
        }
        NodeKind::ExprStmt | NodeKind::ReturnStmt => {
            for &c in &node.children {
                walk_expr(tree, c, &mut fx);
            }
        }
        NodeKind::IfStmt | NodeKind::WhileStmt | NodeKind::SwitchStmt => {
            // Header expression only; arm statements are their own blocks.
            for &c in &node.children {
                let k = tree.nodes[c].kind;
                if k != NodeKind::Block && !k.is_statement() {
                    walk_expr(tree, c, &mut fx);
                }
            }
        }
        NodeKind::ForStmt => {
            for &c in &node.children {
                let k = tree.nodes[c].kind;
                match k {
                    NodeKind::VarDeclStmt | NodeKind::ExprStmt => {
                        let inner = stmt_effects(tree, c);
                        fx.defs.extend(inner.defs);
                        fx.uses.extend(inner.uses);
                    }
                    NodeKind::Block => {}
                    k if k.is_statement() => {}
                    _ => walk_expr(tree, c, &mut fx),
                }
            }
        }
        _ => {}
    }
    fx
}

/// Accumulate reads and writes from an expression subtree.
fn walk_expr(tree: &SyntaxTree, id: usize, fx: &mut VarEffects) {
    let node = &tree.nodes[id];
    match node.kind {
        NodeKind::Identifier if node.is_leaf() => {
            fx.uses.insert(tree.leaf_text(id).to_string());
        }
        NodeKind::TokenLeaf | NodeKind::Literal => {}
        NodeKind::AssignExpr => {
            let kids = &node.children;
            let first_text = leaf_text_of(tree, kids[0]);
            if matches!(first_text.as_deref(), Some("++") | Some("--")) {
                // Prefix increment: read and write the operand.
                mark_write_read(tree, kids[1], fx);
            } else if kids.len() == 2 {
                // Postfix increment.
                mark_write_read(tree, kids[0], fx);
            } else {
                let op = leaf_text_of(tree, kids[1]).unwrap_or_default();
                let lhs = kids[0];
                if tree.nodes[lhs].kind == NodeKind::Identifier && tree.nodes[lhs].is_leaf() {
                    let name = tree.leaf_text(lhs).to_string();
                    if op != "=" {
                        fx.uses.insert(name.clone());
                    }
                    fx.defs.insert(name);
                } else {
                    walk_expr(tree, lhs, fx);
                }
                for &c in &kids[2..] {
                    walk_expr(tree, c, fx);
                }
            }
        }
        NodeKind::CallExpr => {
            // Skip the method-name identifier right before the '(' leaf.
            let open = node
                .children
                .iter()
                .position(|&c| {
                    tree.nodes[c].kind == NodeKind::TokenLeaf && tree.leaf_text(c) == "("
                })
                .unwrap_or(node.children.len());
            for (i, &c) in node.children.iter().enumerate() {
                if i + 1 == open {
                    continue;
                }
                walk_expr(tree, c, fx);
            }
        }
        _ => {
            for &c in &node.children {
                walk_expr(tree, c, fx);
            }
        }
    }
}

fn leaf_text_of(tree: &SyntaxTree, id: usize) -> Option<String> {
    let n = &tree.nodes[id];
    if n.is_leaf() {
        Some(tree.tokens[n.token_span.0].text.clone())
    } else {
        None
    }
}

fn mark_write_read(tree: &SyntaxTree, id: usize, fx: &mut VarEffects) {
    if tree.nodes[id].kind == NodeKind::Identifier && tree.nodes[id].is_leaf() {
        let name = tree.leaf_text(id).to_string();
        fx.uses.insert(name.clone());
        fx.defs.insert(name);
    } else {
        walk_expr(tree, id, fx);
    }
}

/// Build the data flow graph of a single-method tree.
pub fn build_dfg(tree: &SyntaxTree) -> Result<ViewGraph> {
    let blocks = MethodBlocks::build(tree)?;
    let effects = block_effects(&blocks);
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();

    // Forward def-use chains over the pre-order block sequence.
    let mut last_def: BTreeMap<&str, usize> = BTreeMap::new();
    for (b, fx) in effects.iter().enumerate() {
        for v in &fx.uses {
            if let Some(&d) = last_def.get(v.as_str()) {
                if d != b {
                    edges.insert((d, b));
                }
            }
        }
        for v in &fx.defs {
            if let Some(&d) = last_def.get(v.as_str()) {
                if d != b {
                    edges.insert((d, b));
                }
            }
            last_def.insert(v, b);
        }
    }

    // Loop-carried flow: a definition in a loop body reaches uses earlier
    // in the same body on the next iteration.
    for &(_, start, end) in &blocks.loops {
        for def_b in start..=end {
            for v in &effects[def_b].defs {
                for use_b in start..def_b {
                    if effects[use_b].uses.contains(v) {
                        edges.insert((def_b, use_b));
                    }
                }
            }
        }
    }

    let mut g = ViewGraph::new(ViewKind::Dfg, blocks.n(), blocks.labels());
    for (f, t) in edges {
        g.add_edge(f, t);
    }
    Ok(g)
}
