//! ListOps reasoning trees: construction, evaluation and prefix notation.
//!
//! A tree is made of integer atoms and operator nodes. Operator nodes carry a
//! post-order `node_id` (1-based, operators only) which the narrative pipeline
//! uses to key anchors, beats and diagnostics.

mod parse;
mod sample;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::AtomScalar;

pub use parse::{parse_prefix, ParseError, ParseErrorKind};
pub use sample::{sample_ast, ShapeError, TreeShapeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NumericOp {
    Sum,
    Max,
    Min,
    Med,
}

impl NumericOp {
    pub const ALL: [NumericOp; 4] = [
        NumericOp::Sum,
        NumericOp::Max,
        NumericOp::Min,
        NumericOp::Med,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NumericOp::Sum => "SUM",
            NumericOp::Max => "MAX",
            NumericOp::Min => "MIN",
            NumericOp::Med => "MED",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Human label used in prompts.
    pub fn label(self) -> &'static str {
        match self {
            NumericOp::Sum => "SUM (total of all inputs)",
            NumericOp::Max => "MAX (largest input)",
            NumericOp::Min => "MIN (smallest input)",
            NumericOp::Med => "MEDIAN (middle input; lower middle when the count is even)",
        }
    }

    /// Applies the operator to already-evaluated child values.
    ///
    /// `values` must be non-empty; it is reordered for MED.
    pub fn apply<T: AtomScalar>(self, values: &mut [T]) -> T {
        debug_assert!(!values.is_empty());
        match self {
            NumericOp::Sum => values.iter().copied().sum(),
            NumericOp::Max => values.iter().copied().max().unwrap_or_else(T::zero),
            NumericOp::Min => values.iter().copied().min().unwrap_or_else(T::zero),
            NumericOp::Med => {
                // lower middle for even counts
                values.sort_unstable();
                values[(values.len() - 1) / 2]
            }
        }
    }
}

impl fmt::Display for NumericOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpNode<T> {
    pub op: NumericOp,
    pub children: Vec<AstNode<T>>,
    pub node_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AstNode<T> {
    Atom(T),
    Op(OpNode<T>),
}

/// An operator node visited in post-order, with its depth (root = 0).
#[derive(Debug, Clone, Copy)]
pub struct VisitedOp<'a, T> {
    pub node: &'a OpNode<T>,
    pub depth: usize,
}

impl<T: AtomScalar> OpNode<T> {
    pub fn new(op: NumericOp, children: Vec<AstNode<T>>) -> Self {
        OpNode {
            op,
            children,
            node_id: 0,
            anchor_name: None,
        }
    }

    pub fn eval(&self) -> T {
        let mut values: Vec<T> = self.children.iter().map(AstNode::eval).collect();
        self.op.apply(&mut values)
    }

    /// Atom children in order.
    pub fn atom_children(&self) -> impl Iterator<Item = T> + '_ {
        self.children.iter().filter_map(|c| match c {
            AstNode::Atom(v) => Some(*v),
            AstNode::Op(_) => None,
        })
    }

    /// Operator children in order.
    pub fn op_children(&self) -> impl Iterator<Item = &OpNode<T>> + '_ {
        self.children.iter().filter_map(|c| match c {
            AstNode::Op(n) => Some(n),
            AstNode::Atom(_) => None,
        })
    }
}

impl<T: AtomScalar> AstNode<T> {
    pub fn atom(value: T) -> Self {
        AstNode::Atom(value)
    }

    /// Builds an operator node and renumbers the whole subtree in post-order.
    pub fn op(op: NumericOp, children: Vec<AstNode<T>>) -> Self {
        let mut node = AstNode::Op(OpNode::new(op, children));
        node.assign_post_order_ids();
        node
    }

    pub fn eval(&self) -> T {
        match self {
            AstNode::Atom(v) => *v,
            AstNode::Op(n) => n.eval(),
        }
    }

    pub fn count_ops(&self) -> usize {
        match self {
            AstNode::Atom(_) => 0,
            AstNode::Op(n) => 1 + n.children.iter().map(AstNode::count_ops).sum::<usize>(),
        }
    }

    pub fn to_prefix(&self) -> String {
        self.to_string()
    }

    pub fn as_op(&self) -> Option<&OpNode<T>> {
        match self {
            AstNode::Op(n) => Some(n),
            AstNode::Atom(_) => None,
        }
    }

    /// Renumbers operator nodes 1..=count_ops in post-order.
    pub fn assign_post_order_ids(&mut self) {
        fn walk<T>(node: &mut AstNode<T>, next: &mut usize) {
            if let AstNode::Op(n) = node {
                for c in &mut n.children {
                    walk(c, next);
                }
                *next += 1;
                n.node_id = *next;
            }
        }
        let mut next = 0;
        walk(self, &mut next);
    }

    /// Operator nodes in post-order (children before parents).
    pub fn ops_post_order(&self) -> Vec<VisitedOp<'_, T>> {
        fn walk<'a, T>(node: &'a AstNode<T>, depth: usize, out: &mut Vec<VisitedOp<'a, T>>) {
            if let AstNode::Op(n) = node {
                for c in &n.children {
                    walk(c, depth + 1, out);
                }
                out.push(VisitedOp { node: n, depth });
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut out);
        out
    }

    pub fn find_op(&self, node_id: usize) -> Option<&OpNode<T>> {
        self.ops_post_order()
            .into_iter()
            .map(|v| v.node)
            .find(|n| n.node_id == node_id)
    }

    /// Sets `anchor_name` on every operator node present in `names`.
    pub fn set_anchor_names(&mut self, names: &std::collections::BTreeMap<usize, String>) {
        if let AstNode::Op(n) = self {
            if let Some(name) = names.get(&n.node_id) {
                n.anchor_name = Some(name.clone());
            }
            for c in &mut n.children {
                c.set_anchor_names(names);
            }
        }
    }

    /// Checks every tree invariant against `shape`; returns the first violation.
    pub fn check_shape(&self, shape: &TreeShapeConfig<T>) -> Result<(), String> {
        if self.count_ops() > shape.max_ops {
            return Err(format!(
                "{} operators exceed max_ops {}",
                self.count_ops(),
                shape.max_ops
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, v) in self.ops_post_order().iter().enumerate() {
            let n = v.node;
            if !(shape.min_arity..=shape.max_branch).contains(&n.children.len()) {
                return Err(format!("node {} has arity {}", n.node_id, n.children.len()));
            }
            if !seen.insert(n.node_id) {
                return Err(format!("duplicate node_id {}", n.node_id));
            }
            if n.node_id != i + 1 {
                return Err(format!(
                    "node_id {} is not post-order position {}",
                    n.node_id,
                    i + 1
                ));
            }
            for a in n.atom_children() {
                if a < shape.min_atom_val || a > shape.max_atom_val {
                    return Err(format!(
                        "atom {a} outside [{}, {}]",
                        shape.min_atom_val, shape.max_atom_val
                    ));
                }
            }
        }
        if let AstNode::Atom(a) = self {
            if *a < shape.min_atom_val || *a > shape.max_atom_val {
                return Err(format!("atom {a} out of range"));
            }
        }
        Ok(())
    }
}

impl<T: fmt::Display> fmt::Display for AstNode<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AstNode::Atom(v) => write!(f, "{v}"),
            AstNode::Op(n) => {
                write!(f, "[{}", n.op)?;
                for c in &n.children {
                    write!(f, " {c}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Ast;

    fn a(v: i64) -> Ast {
        AstNode::atom(v)
    }

    #[test]
    fn eval_examples() {
        let t = parse_prefix::<i64>("[MAX 3 7 [MIN 1 9 5] 2]").unwrap();
        assert_eq!(t.eval(), 7);
        let t = AstNode::op(
            NumericOp::Max,
            vec![AstNode::op(NumericOp::Sum, vec![a(2), a(1)]), a(4)],
        );
        assert_eq!(t.eval(), 4);
        assert_eq!(a(5).eval(), 5);
        let med = AstNode::op(NumericOp::Med, vec![a(2), a(30), a(4), a(6)]);
        assert_eq!(med.eval(), 4);
    }

    #[test]
    fn med_odd_arity_is_true_median() {
        let med = AstNode::op(NumericOp::Med, vec![a(9), a(1), a(5)]);
        assert_eq!(med.eval(), 5);
    }

    #[test]
    fn prefix_printing() {
        assert_eq!(a(7).to_prefix(), "7");
        assert_eq!(
            AstNode::op(NumericOp::Max, vec![a(3), a(4)]).to_prefix(),
            "[MAX 3 4]"
        );
        let nested = AstNode::op(
            NumericOp::Max,
            vec![
                a(3),
                a(7),
                AstNode::op(NumericOp::Min, vec![a(1), a(9), a(5)]),
                a(2),
            ],
        );
        assert_eq!(nested.to_prefix(), "[MAX 3 7 [MIN 1 9 5] 2]");
    }

    #[test]
    fn count_ops_examples() {
        assert_eq!(a(3).count_ops(), 0);
        assert_eq!(
            parse_prefix::<i64>("[MAX 3 7 [MIN 1 9 5] 2]")
                .unwrap()
                .count_ops(),
            2
        );
        let mut chain = a(1);
        for _ in 0..8 {
            chain = AstNode::op(NumericOp::Sum, vec![chain, a(1)]);
        }
        assert_eq!(chain.count_ops(), 8);
    }

    #[test]
    fn post_order_ids_and_depths() {
        let t = parse_prefix::<i64>("[SUM [MAX 1 2] [MIN 3 [MED 4 5 6]]]").unwrap();
        let visited: Vec<(usize, &str, usize)> = t
            .ops_post_order()
            .iter()
            .map(|v| (v.node.node_id, v.node.op.name(), v.depth))
            .collect();
        assert_eq!(
            visited,
            vec![(1, "MAX", 1), (2, "MED", 2), (3, "MIN", 1), (4, "SUM", 0)]
        );
    }

    #[test]
    fn narrower_scalar_works() {
        let t = parse_prefix::<i32>("[SUM 30 30 [MED 1 2 3 4]]").unwrap();
        assert_eq!(t.eval(), 62);
    }
}
