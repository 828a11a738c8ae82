//! Structural views of a snippet: syntax-tree, control-flow, and data-flow
//! graphs as binary adjacency matrices, plus MetaPath reverse-edge
//! augmentation and DOT interchange.

mod cfg;
mod dfg;
mod dot;

pub use cfg::{build_cfg, NodeRole};
pub use dfg::build_dfg;
pub use dot::{export_dot, import_dot};

use crate::frontend::SyntaxTree;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewKind {
    Ast,
    Cfg,
    Dfg,
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViewKind::Ast => "ast",
            ViewKind::Cfg => "cfg",
            ViewKind::Dfg => "dfg",
        })
    }
}

/// One structural view: an n-node directed graph stored as a dense binary
/// adjacency matrix with per-node labels. No self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewGraph {
    pub kind: ViewKind,
    pub n: usize,
    adjacency: Vec<u8>,
    pub node_labels: Vec<String>,
}

impl ViewGraph {
    pub fn new(kind: ViewKind, n: usize, node_labels: Vec<String>) -> Self {
        assert!(n >= 1, "a view graph needs at least one node");
        assert_eq!(node_labels.len(), n);
        ViewGraph {
            kind,
            n,
            adjacency: vec![0; n * n],
            node_labels,
        }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.n + to] == 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        assert!(from != to, "self-loops are not representable");
        self.adjacency[from * self.n + to] = 1;
    }

    /// Edges in row-major scan order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|&b| b as usize).sum()
    }

    /// Row-major 0/1 entries.
    pub fn matrix(&self) -> &[u8] {
        &self.adjacency
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.has_edge(i, j) == self.has_edge(j, i)))
    }

    /// Equality of node count, adjacency, and labels. The view kind is not
    /// representable in DOT, so round-trip comparisons use this.
    pub fn structural_eq(&self, other: &ViewGraph) -> bool {
        self.n == other.n
            && self.adjacency == other.adjacency
            && self.node_labels == other.node_labels
    }

    pub fn with_kind(mut self, kind: ViewKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Add the reverse of every edge: `M' = M or M^T`. Node count and labels
/// are unchanged; the result is symmetric and idempotent under repetition.
pub fn apply_metapath(g: &ViewGraph) -> ViewGraph {
    let mut out = g.clone();
    for i in 0..g.n {
        for j in 0..g.n {
            if g.has_edge(i, j) {
                out.adjacency[j * g.n + i] = 1;
            }
        }
    }
    out
}

/// One graph node per syntax node, token leaves included; a directed edge
/// for every parent-to-child tree edge. Labels carry the node kind, plus
/// the token text for leaves.
pub fn build_ast_graph(tree: &SyntaxTree) -> ViewGraph {
    let n = tree.nodes.len();
    let labels = tree
        .nodes
        .iter()
        .map(|node| {
            if node.is_leaf() {
                format!("{:?}:{}", node.kind, tree.tokens[node.token_span.0].text)
            } else {
                format!("{:?}", node.kind)
            }
        })
        .collect();
    let mut g = ViewGraph::new(ViewKind::Ast, n, labels);
    for node in &tree.nodes {
        for &c in &node.children {
            g.add_edge(node.id, c);
        }
    }
    g
}

#[cfg(test)]
pub(crate) mod test_support {
    /// The worked loop example used throughout the golden tests.
    pub const SQUARE: &str = "public int square(int n) {\n    int result = 1;\n    for (int i = 0; i < n; i++) {\n        result *= 2;\n    }\n    return result;\n}\n";
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use proptest::prelude::*;

    #[test]
    fn ast_graph_statement_links_to_its_token_leaves() {
        let tree = parse_source("void m() { int result = 1; }").unwrap();
        let g = build_ast_graph(&tree);
        let decl = tree.nodes_of_kind(crate::frontend::NodeKind::VarDeclStmt)[0];
        let leaf_targets: Vec<&str> = g
            .edges()
            .iter()
            .filter(|(f, _)| *f == decl)
            .map(|(_, t)| g.node_labels[*t].as_str())
            .collect();
        assert_eq!(
            leaf_targets,
            vec![
                "TokenLeaf:int",
                "TokenLeaf:result",
                "TokenLeaf:=",
                "Literal:1",
                "TokenLeaf:;"
            ]
        );
    }

    #[test]
    fn single_node_tree_gives_zero_matrix() {
        let g = ViewGraph::new(ViewKind::Ast, 1, vec!["root".into()]);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.matrix(), &[0]);
    }

    /// Hand count for the square method: a tree with N nodes has N-1 edges.
    #[test]
    fn square_ast_edge_count_is_node_count_minus_one() {
        let tree = parse_source(test_support::SQUARE).unwrap();
        let g = build_ast_graph(&tree);
        assert_eq!(g.edge_count(), g.n - 1);
        // Before augmentation every node has at most one parent.
        for j in 0..g.n {
            let col_sum: usize = (0..g.n).filter(|&i| g.has_edge(i, j)).count();
            assert!(col_sum <= 1);
        }
    }

    #[test]
    fn metapath_adds_reverse_edge() {
        let mut g = ViewGraph::new(ViewKind::Cfg, 2, vec!["a".into(), "b".into()]);
        g.add_edge(0, 1);
        let aug = apply_metapath(&g);
        assert!(aug.has_edge(0, 1) && aug.has_edge(1, 0));
    }

    #[test]
    fn metapath_on_zero_matrix_is_zero() {
        let g = ViewGraph::new(ViewKind::Cfg, 3, vec![String::new(); 3]);
        assert_eq!(apply_metapath(&g).edge_count(), 0);
    }

    proptest! {
        #[test]
        fn metapath_symmetric_superset_idempotent(n in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut g = ViewGraph::new(ViewKind::Dfg, n, vec![String::new(); n]);
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random_bool(0.3) {
                        g.add_edge(i, j);
                    }
                }
            }
            let aug = apply_metapath(&g);
            prop_assert!(aug.is_symmetric());
            for (i, j) in g.edges() {
                prop_assert!(aug.has_edge(i, j));
            }
            let again = apply_metapath(&aug);
            prop_assert!(again.structural_eq(&aug) && again.kind == aug.kind);
        }
    }
}
