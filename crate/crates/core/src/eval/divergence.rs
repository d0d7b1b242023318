//! Where does a model's chain of intermediate results first go wrong?

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::ast::AstNode;
use crate::dataset::{ResearcherRecord, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCheck {
    pub node_id: usize,
    /// Root is depth 0.
    pub depth: usize,
    pub expected: i64,
    pub model_claim: Option<i64>,
    #[serde(rename = "match")]
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub id: String,
    pub first_divergence_node: Option<usize>,
    pub per_node: Vec<NodeCheck>,
}

impl StepDiagnostic {
    pub fn first_divergence_depth(&self) -> Option<usize> {
        let id = self.first_divergence_node?;
        self.per_node
            .iter()
            .find(|c| c.node_id == id)
            .map(|c| c.depth)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlignmentError {
    #[error("trace has {claims} values but the tree has {nodes} operations")]
    TraceTooLong { claims: usize, nodes: usize },
    #[error(transparent)]
    Record(#[from] ViolationError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ViolationError(pub String);

impl From<Violation> for AlignmentError {
    fn from(v: Violation) -> Self {
        AlignmentError::Record(ViolationError(v.to_string()))
    }
}

/// Aligns `trace[i]` with the i-th operation in post-order. Nodes past the
/// end of a short trace have no claim and count as diverged.
pub fn diagnose(
    id: &str,
    ast: &AstNode<i64>,
    trace: &[i64],
) -> Result<StepDiagnostic, AlignmentError> {
    let ops = ast.ops_post_order();
    if trace.len() > ops.len() {
        return Err(AlignmentError::TraceTooLong {
            claims: trace.len(),
            nodes: ops.len(),
        });
    }
    let per_node: Vec<NodeCheck> = ops
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let expected = v.node.eval();
            let model_claim = trace.get(i).copied();
            NodeCheck {
                node_id: v.node.node_id,
                depth: v.depth,
                expected,
                model_claim,
                matched: model_claim == Some(expected),
            }
        })
        .collect();
    let first_divergence_node = per_node.iter().find(|c| !c.matched).map(|c| c.node_id);
    Ok(StepDiagnostic {
        id: id.to_string(),
        first_divergence_node,
        per_node,
    })
}

/// Expected values are recomputed from the record's tree, never read from
/// stored text.
pub fn step_divergence(
    record: &ResearcherRecord,
    trace: &[i64],
) -> Result<StepDiagnostic, AlignmentError> {
    let ast = record.sample.parse_ast()?;
    diagnose(&record.sample.id, &ast, trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub nodes: usize,
    pub mismatches: usize,
    pub first_divergences: usize,
}

impl DepthRow {
    pub fn mismatch_rate(&self) -> f64 {
        self.mismatches as f64 / self.nodes as f64
    }

    pub fn first_divergence_rate(&self) -> f64 {
        self.first_divergences as f64 / self.nodes as f64
    }
}

/// Per-depth tallies over a corpus, shallowest first.
pub fn divergence_by_depth(diags: &[StepDiagnostic]) -> Vec<DepthRow> {
    let mut rows: BTreeMap<usize, DepthRow> = BTreeMap::new();
    for d in diags {
        for c in &d.per_node {
            let row = rows.entry(c.depth).or_insert(DepthRow {
                depth: c.depth,
                nodes: 0,
                mismatches: 0,
                first_divergences: 0,
            });
            row.nodes += 1;
            row.mismatches += usize::from(!c.matched);
            row.first_divergences += usize::from(d.first_divergence_node == Some(c.node_id));
        }
    }
    rows.into_values().collect()
}

pub fn divergence_csv(rows: &[DepthRow]) -> String {
    let mut out = String::from(
        "depth,nodes,mismatches,mismatch_rate,first_divergences,first_divergence_rate\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{},{:.6}",
            r.depth,
            r.nodes,
            r.mismatches,
            r.mismatch_rate(),
            r.first_divergences,
            r.first_divergence_rate()
        )
        .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse_prefix;

    // post-order: MIN=1 (depth 1), SUM=2 (depth 1), MAX=3 (depth 0)
    const SRC: &str = "[MAX [MIN 4 9] [SUM 10 20] 7]";

    #[test]
    fn faithful_trace_has_no_divergence() {
        let ast: AstNode<i64> = parse_prefix(SRC).unwrap();
        let d = diagnose("s", &ast, &[4, 30, 30]).unwrap();
        assert_eq!(d.first_divergence_node, None);
        assert!(d.per_node.iter().all(|c| c.matched));
    }

    #[test]
    fn first_node_wrong() {
        let ast: AstNode<i64> = parse_prefix(SRC).unwrap();
        let d = diagnose("s", &ast, &[5, 30, 30]).unwrap();
        assert_eq!(d.first_divergence_node, Some(1));
        assert_eq!(d.first_divergence_depth(), Some(1));
    }

    #[test]
    fn short_and_long_traces() {
        let ast: AstNode<i64> = parse_prefix(SRC).unwrap();
        let d = diagnose("s", &ast, &[4]).unwrap();
        assert_eq!(d.first_divergence_node, Some(2));
        assert_eq!(d.per_node[2].model_claim, None);
        assert_eq!(
            diagnose("s", &ast, &[4, 30, 30, 1]),
            Err(AlignmentError::TraceTooLong {
                claims: 4,
                nodes: 3
            })
        );
    }

    #[test]
    fn depth_table() {
        let ast: AstNode<i64> = parse_prefix(SRC).unwrap();
        let diags = vec![
            diagnose("a", &ast, &[4, 31, 31]).unwrap(),
            diagnose("b", &ast, &[4, 30, 30]).unwrap(),
        ];
        let rows = divergence_by_depth(&diags);
        assert_eq!(rows.len(), 2);
        assert_eq!(
            (
                rows[0].depth,
                rows[0].nodes,
                rows[0].mismatches,
                rows[0].first_divergences
            ),
            (0, 2, 1, 0)
        );
        assert_eq!(
            (
                rows[1].depth,
                rows[1].nodes,
                rows[1].mismatches,
                rows[1].first_divergences
            ),
            (1, 4, 1, 1)
        );
        let csv = divergence_csv(&rows);
        assert_eq!(csv.lines().nth(2).unwrap(), "1,4,1,0.250000,1,0.250000");
    }
}
