//! Ancestor-descendant and sibling distance matrices over a pre-order
//! sequence, and the per-head attention patterns derived from them.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{Ast, AstTree};
use crate::linearize::{LinearSeq, Traversal};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelationError {
    #[error("relation matrices need a POT sequence, got {0:?}")]
    KindMismatch(Traversal),
    #[error("sequence length {seq} does not match tree size {tree}")]
    LengthMismatch { seq: usize, tree: usize },
    #[error("invalid head layout: {0}")]
    Config(String),
}

/// Square matrix of optional signed distances; `None` means the pair is
/// unrelated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistMatrix {
    n: usize,
    data: Vec<Option<i32>>,
}

impl DistMatrix {
    fn new(n: usize) -> Self {
        DistMatrix {
            n,
            data: vec![None; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<i32> {
        self.data[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, d: i32) {
        self.data[i * self.n + j] = Some(d);
    }

    pub fn rows(&self) -> Vec<Vec<Option<i32>>> {
        self.data.chunks(self.n.max(1)).map(<[_]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMatrices {
    /// `A[i][j] = +k` if `j` is the k-th ancestor of `i`, `-k` if `j` is a
    /// descendant of `i` at depth k below it.
    pub ancestor: DistMatrix,
    /// `S[i][j] = pos(j) - pos(i)` among the children of a shared parent.
    pub sibling: DistMatrix,
}

impl RelationMatrices {
    pub fn new(ast: &Ast, seq: &LinearSeq) -> Result<Self, RelationError> {
        Ok(RelationMatrices {
            ancestor: ancestor_matrix(ast, seq)?,
            sibling: sibling_matrix(ast, seq)?,
        })
    }

    pub fn n(&self) -> usize {
        self.ancestor.n
    }
}

fn check_pot(ast: &Ast, seq: &LinearSeq) -> Result<(), RelationError> {
    if seq.kind != Traversal::Pot {
        return Err(RelationError::KindMismatch(seq.kind));
    }
    if seq.len() != ast.len() {
        return Err(RelationError::LengthMismatch {
            seq: seq.len(),
            tree: ast.len(),
        });
    }
    Ok(())
}

pub fn ancestor_matrix(ast: &Ast, seq: &LinearSeq) -> Result<DistMatrix, RelationError> {
    check_pot(ast, seq)?;
    let n = ast.len();
    let mut a = DistMatrix::new(n);
    for i in 0..n {
        a.set(i, i, 0);
        let mut k = 0;
        let mut cur = i;
        while let Some(p) = ast.parent(cur) {
            k += 1;
            a.set(i, p, k);
            a.set(p, i, -k);
            cur = p;
        }
    }
    Ok(a)
}

pub fn sibling_matrix(ast: &Ast, seq: &LinearSeq) -> Result<DistMatrix, RelationError> {
    check_pot(ast, seq)?;
    let n = ast.len();
    let mut s = DistMatrix::new(n);
    for i in 0..n {
        s.set(i, i, 0);
    }
    for node in &ast.nodes {
        let kids = &node.children;
        for (pi, &ci) in kids.iter().enumerate() {
            for (pj, &cj) in kids.iter().enumerate() {
                if pi != pj {
                    s.set(ci, cj, pj as i32 - pi as i32);
                }
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Ancestor,
    Sibling,
}

/// How encoder heads are split between the two relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadLayout {
    pub heads: usize,
    pub delta_anc: usize,
    pub delta_sib: usize,
}

impl HeadLayout {
    pub fn validate(&self) -> Result<(), RelationError> {
        if self.heads == 0 || self.heads % 2 != 0 {
            return Err(RelationError::Config(format!(
                "head count must be even and positive, got {}",
                self.heads
            )));
        }
        if self.delta_anc < 1 || self.delta_sib < 1 {
            return Err(RelationError::Config(format!(
                "distance thresholds must be >= 1, got anc={} sib={}",
                self.delta_anc, self.delta_sib
            )));
        }
        Ok(())
    }

    /// First half of the heads follow ancestry, second half siblings.
    pub fn relation(&self, head: usize) -> Relation {
        if head < self.heads / 2 {
            Relation::Ancestor
        } else {
            Relation::Sibling
        }
    }

    pub fn delta(&self, relation: Relation) -> usize {
        match relation {
            Relation::Ancestor => self.delta_anc,
            Relation::Sibling => self.delta_sib,
        }
    }

    /// Size of one head's relative-bias table: `2δ + 2`.
    pub fn bias_table_len(&self, head: usize) -> usize {
        2 * self.delta(self.relation(head)) + 2
    }
}

/// Allowed key positions and bias-table indices for one head.
///
/// For an allowed off-diagonal pair at signed distance `d`, the bias index is
/// `d + δ`; the diagonal uses `2δ + 1`; disallowed pairs carry `2δ + 2`, which
/// is outside the table and never looked up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionPattern {
    pub head: usize,
    pub relation: Relation,
    pub delta: usize,
    pub n: usize,
    pub allow: Arc<[bool]>,
    pub bias_index: Arc<[usize]>,
}

impl AttentionPattern {
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allow[i * self.n + j]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        self.bias_index[i * self.n + j]
    }

    pub fn allowed_count(&self) -> usize {
        self.allow.iter().filter(|&&a| a).count()
    }

    pub fn self_index(&self) -> usize {
        2 * self.delta + 1
    }

    pub fn pad_index(&self) -> usize {
        2 * self.delta + 2
    }
}

fn pattern(head: usize, relation: Relation, delta: usize, dist: &DistMatrix) -> AttentionPattern {
    let n = dist.n();
    let mut allow = vec![false; n * n];
    let mut index = vec![2 * delta + 2; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            if i == j {
                allow[k] = true;
                index[k] = 2 * delta + 1;
            } else if let Some(d) = dist.get(i, j) {
                if d.unsigned_abs() as usize <= delta {
                    allow[k] = true;
                    index[k] = (d + delta as i32) as usize;
                }
            }
        }
    }
    AttentionPattern {
        head,
        relation,
        delta,
        n,
        allow: allow.into(),
        bias_index: index.into(),
    }
}

pub fn build_head_masks(
    rel: &RelationMatrices,
    layout: &HeadLayout,
) -> Result<Vec<AttentionPattern>, RelationError> {
    layout.validate()?;
    let anc = pattern(0, Relation::Ancestor, layout.delta_anc, &rel.ancestor);
    let sib = pattern(0, Relation::Sibling, layout.delta_sib, &rel.sibling);
    Ok((0..layout.heads)
        .map(|h| {
            let base = match layout.relation(h) {
                Relation::Ancestor => &anc,
                Relation::Sibling => &sib,
            };
            AttentionPattern {
                head: h,
                ..base.clone()
            }
        })
        .collect())
}

/// Patterns for a tree in one call: POT, relation matrices, head masks.
pub fn patterns_for(ast: &Ast, layout: &HeadLayout) -> Result<Vec<AttentionPattern>, RelationError> {
    let seq = crate::linearize::preorder(ast);
    build_head_masks(&RelationMatrices::new(ast, &seq)?, layout)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub n: usize,
    pub per_head: Vec<usize>,
    pub total: usize,
    /// `total / (H · n²)`.
    pub ratio: f64,
}

pub fn sparsity_report(patterns: &[AttentionPattern]) -> SparsityReport {
    let n = patterns.first().map_or(0, |p| p.n);
    let per_head: Vec<usize> = patterns.iter().map(AttentionPattern::allowed_count).collect();
    let total: usize = per_head.iter().sum();
    let denom = patterns.len() * n * n;
    SparsityReport {
        n,
        per_head,
        total,
        ratio: if denom == 0 { 0.0 } else { total as f64 / denom as f64 },
    }
}

/// Perfect binary tree with `depth` levels (`2^depth - 1` nodes).
pub fn perfect_binary_tree(depth: usize) -> Ast {
    fn build(level: usize, depth: usize) -> AstTree {
        AstTree {
            label: "Node".into(),
            value: None,
            children: if level + 1 < depth {
                vec![build(level + 1, depth), build(level + 1, depth)]
            } else {
                vec![]
            },
        }
    }
    assert!(depth >= 1, "a tree has at least one level");
    Ast::from_tree(&build(0, depth))
}

/// One row of the sparsity benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub depth: usize,
    pub n: usize,
    pub n2: usize,
    pub ancestor: usize,
    pub sibling: usize,
    pub ancestor_ratio: f64,
    pub sibling_ratio: f64,
}

/// Allowed-pair counts on a perfect binary tree with thresholds large enough
/// that no related pair is cut off.
pub fn bench_row(depth: usize) -> BenchRow {
    let ast = perfect_binary_tree(depth);
    let n = ast.len();
    let layout = HeadLayout {
        heads: 2,
        delta_anc: n,
        delta_sib: n,
    };
    let pats = patterns_for(&ast, &layout).expect("layout is valid");
    let (ancestor, sibling) = (pats[0].allowed_count(), pats[1].allowed_count());
    let n2 = n * n;
    BenchRow {
        depth,
        n,
        n2,
        ancestor,
        sibling,
        ancestor_ratio: ancestor as f64 / n2 as f64,
        sibling_ratio: sibling as f64 / n2 as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse_source;
    use crate::linearize::{preorder, sbt};

    /// 0 FunctionDef -> (1 Param, 2 Block); 2 -> (3 Assign, 4 Return)
    fn t0() -> Ast {
        let ast = crate::ast::ast_from_json(
            r#"{"label":"FunctionDef","value":null,"children":[
                {"label":"Param","value":null,"children":[]},
                {"label":"Block","value":null,"children":[
                    {"label":"Assign","value":null,"children":[]},
                    {"label":"Return","value":null,"children":[]}]}]}"#,
        )
        .unwrap();
        assert_eq!(ast.len(), 5);
        ast
    }

    fn rel(ast: &Ast) -> RelationMatrices {
        RelationMatrices::new(ast, &preorder(ast)).unwrap()
    }

    #[test]
    fn ancestor_entries() {
        let r = rel(&t0());
        for i in 0..5 {
            assert_eq!(r.ancestor.get(i, i), Some(0));
        }
        assert_eq!(r.ancestor.get(3, 0), Some(2));
        assert_eq!(r.ancestor.get(0, 3), Some(-2));
        assert_eq!(r.ancestor.get(3, 2), Some(1));
        assert_eq!(r.ancestor.get(1, 2), None);
    }

    #[test]
    fn sibling_entries() {
        let r = rel(&t0());
        assert_eq!(r.sibling.get(1, 2), Some(1));
        assert_eq!(r.sibling.get(2, 1), Some(-1));
        assert_eq!(r.sibling.get(3, 4), Some(1));
        assert_eq!(r.sibling.get(1, 3), None);
        assert_eq!(r.sibling.get(0, 0), Some(0));
    }

    #[test]
    fn sbt_sequence_is_rejected() {
        let ast = t0();
        assert_eq!(
            ancestor_matrix(&ast, &sbt(&ast)),
            Err(RelationError::KindMismatch(Traversal::Sbt))
        );
        assert!(sibling_matrix(&ast, &sbt(&ast)).is_err());
    }

    #[test]
    fn head_masks_on_t0() {
        let layout = HeadLayout {
            heads: 4,
            delta_anc: 2,
            delta_sib: 3,
        };
        let pats = build_head_masks(&rel(&t0()), &layout).unwrap();
        assert_eq!(pats.len(), 4);
        assert_eq!(pats[1].relation, Relation::Ancestor);
        assert_eq!(pats[2].relation, Relation::Sibling);
        assert!(pats[0].allowed(3, 0));
        assert_eq!(pats[0].index(3, 0), 2 + 2);
        assert_eq!(pats[0].index(0, 3), 0);
        assert_eq!(pats[0].index(3, 3), 5);
        assert!(!pats[2].allowed(3, 0));
        assert!(pats[2].allowed(3, 3));
        assert!(pats[2].allowed(1, 2));
        assert_eq!(pats[2].index(1, 2), 3 + 1);
        assert_eq!(pats[2].index(3, 0), pats[2].pad_index());
    }

    #[test]
    fn threshold_cuts_far_ancestors() {
        let layout = HeadLayout {
            heads: 2,
            delta_anc: 1,
            delta_sib: 1,
        };
        let pats = build_head_masks(&rel(&t0()), &layout).unwrap();
        assert!(!pats[0].allowed(3, 0));
        assert!(pats[0].allowed(3, 2));
    }

    #[test]
    fn layout_errors() {
        let r = rel(&t0());
        let odd = HeadLayout {
            heads: 3,
            delta_anc: 5,
            delta_sib: 5,
        };
        assert!(matches!(build_head_masks(&r, &odd), Err(RelationError::Config(_))));
        let zero = HeadLayout {
            heads: 2,
            delta_anc: 0,
            delta_sib: 5,
        };
        assert!(build_head_masks(&r, &zero).is_err());
    }

    #[test]
    fn perfect_binary_counts() {
        let row = bench_row(3);
        assert_eq!((row.n, row.n2, row.ancestor, row.sibling), (7, 49, 27, 13));
        let one = bench_row(1);
        assert_eq!((one.n, one.ancestor, one.sibling), (1, 1, 1));
    }

    #[test]
    fn report_totals() {
        let ast = parse_source("fn f(a, b) { return a; }").unwrap();
        let layout = HeadLayout {
            heads: 2,
            delta_anc: 5,
            delta_sib: 5,
        };
        let pats = patterns_for(&ast, &layout).unwrap();
        let rep = sparsity_report(&pats);
        let n = ast.len();
        assert_eq!(rep.n, n);
        assert_eq!(rep.total, rep.per_head.iter().sum::<usize>());
        assert!(rep.per_head.iter().all(|&c| c <= n * n && c >= n));
        assert!((rep.ratio - rep.total as f64 / (2 * n * n) as f64).abs() < 1e-15);
    }
}
