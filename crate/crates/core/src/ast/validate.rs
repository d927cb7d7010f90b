use std::fmt;

use super::Ast;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    EmptyTree,
    IdMismatch,
    DanglingReference,
    LinkMismatch,
    RootMismatch,
    Unreachable,
    NotPreorder,
}

/// A single invariant violation, anchored at a node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub node_id: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {}", self.node_id, self.message)
    }
}

fn diag(node_id: usize, kind: DiagnosticKind, message: String) -> Diagnostic {
    Diagnostic {
        node_id,
        kind,
        message,
    }
}

/// Checks every [`Ast`] invariant. Returns an empty list iff the tree is valid.
///
/// Checks run in stages (ids and links, then rooting and reachability, then
/// pre-order numbering); a later stage only runs when the earlier ones pass,
/// so one broken link is reported once rather than through its consequences.
pub fn validate_ast(ast: &Ast) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let n = ast.nodes.len();
    if n == 0 {
        return vec![diag(0, EmptyTree, "tree has no nodes".into())];
    }

    let mut out = Vec::new();
    let mut claimed: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in ast.nodes.iter().enumerate() {
        if node.node_id != i {
            out.push(diag(
                i,
                IdMismatch,
                format!("stored id {} at index {i}", node.node_id),
            ));
        }
        if let Some(p) = node.parent {
            if p >= n {
                out.push(diag(i, DanglingReference, format!("parent {p} does not exist")));
            }
        }
        for &c in &node.children {
            if c >= n {
                out.push(diag(i, DanglingReference, format!("child {c} does not exist")));
            } else {
                claimed[c].push(i);
            }
        }
    }
    if !out.is_empty() {
        return out;
    }

    for (i, node) in ast.nodes.iter().enumerate() {
        let expected: Vec<usize> = node.parent.into_iter().collect();
        if claimed[i] != expected {
            out.push(diag(
                i,
                LinkMismatch,
                format!(
                    "parent link {:?} but listed as a child of {:?}",
                    node.parent, claimed[i]
                ),
            ));
        }
    }
    if !out.is_empty() {
        return out;
    }

    for (i, node) in ast.nodes.iter().enumerate() {
        match (i, node.parent) {
            (0, Some(p)) => out.push(diag(0, RootMismatch, format!("root has parent {p}"))),
            (i, None) if i != 0 => {
                out.push(diag(i, RootMismatch, "second parentless node".into()))
            }
            _ => {}
        }
    }
    if !out.is_empty() {
        return out;
    }

    // Links are consistent and single-parented, so this walk cannot revisit.
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        order.push(v);
        stack.extend(ast.nodes[v].children.iter().rev());
    }
    if order.len() < n {
        let mut seen = vec![false; n];
        for &v in &order {
            seen[v] = true;
        }
        for (i, s) in seen.iter().enumerate() {
            if !s {
                out.push(diag(i, Unreachable, "not reachable from the root".into()));
            }
        }
        return out;
    }

    if let Some((pos, &id)) = order.iter().enumerate().find(|(pos, &id)| *pos != id) {
        out.push(diag(
            id,
            NotPreorder,
            format!("visited at pre-order position {pos}"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{parse_source, AstNode};

    fn t0() -> Ast {
        parse_source("fn f(a) { a = 1; return a; }").unwrap()
    }

    #[test]
    fn valid_tree_has_no_diagnostics() {
        let ast = parse_source("fn f() { return 1; }").unwrap();
        assert_eq!(ast.len(), 4);
        assert!(validate_ast(&ast).is_empty());
        assert!(validate_ast(&t0()).is_empty());
    }

    #[test]
    fn parent_pointing_at_non_child() {
        // 0 FunctionDef(1 Param, 2 Block(3 Assign(..), ..)); re-point 3 at 1.
        let mut ast = t0();
        assert_eq!(ast.nodes[3].label, "Assign");
        ast.nodes[3].parent = Some(1);
        let d = validate_ast(&ast);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!((d[0].node_id, d[0].kind), (3, DiagnosticKind::LinkMismatch));
    }

    #[test]
    fn out_of_order_ids() {
        // Root with children [2, 1]: both leaves, ids valid but not pre-order.
        let leaf = |id| AstNode {
            node_id: id,
            label: "L".into(),
            value: None,
            parent: Some(0),
            children: vec![],
        };
        let ast = Ast {
            nodes: vec![
                AstNode {
                    node_id: 0,
                    label: "R".into(),
                    value: None,
                    parent: None,
                    children: vec![2, 1],
                },
                leaf(1),
                leaf(2),
            ],
        };
        let d = validate_ast(&ast);
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].node_id, d[0].kind), (2, DiagnosticKind::NotPreorder));
    }

    #[test]
    fn empty_and_dangling() {
        assert_eq!(validate_ast(&Ast::default())[0].kind, DiagnosticKind::EmptyTree);
        let mut ast = t0();
        ast.nodes[2].children.push(99);
        assert_eq!(validate_ast(&ast)[0].kind, DiagnosticKind::DanglingReference);
    }

    #[test]
    fn detached_cycle_is_unreachable() {
        let mut ast = t0();
        // Detach node 1 (Param) from root and make it its own parent.
        ast.nodes[0].children.retain(|&c| c != 1);
        ast.nodes[1].parent = Some(1);
        ast.nodes[1].children = vec![1];
        let d = validate_ast(&ast);
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].node_id, d[0].kind), (1, DiagnosticKind::Unreachable));
    }
}
