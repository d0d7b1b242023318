//! JSONL dataset tiers: researcher detail, eval-ready and final cleaned.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ast::{parse_prefix, AstNode};
use crate::forge::{
    AnchorTable, GeneratedSample, GenerationMetadata, RevisionEntry, SceneKind, SceneRecord,
    WorldMeta,
};
use crate::numtext::ValidationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    ResearcherDetail,
    EvalReady,
    FinalCleaned,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::ResearcherDetail, Tier::EvalReady, Tier::FinalCleaned];

    pub fn prefix(self) -> &'static str {
        match self {
            Tier::ResearcherDetail => "[1_RESEARCHER_DETAIL]",
            Tier::EvalReady => "[2_EVAL_READY]",
            Tier::FinalCleaned => "[4_FINAL_EVAL_CLEANED]",
        }
    }

    pub fn file_name(self, timestamp: &str) -> String {
        format!("{}_DATASET_{timestamp}.jsonl", self.prefix())
    }

    /// Tier implied by a file name, if it follows the naming convention.
    pub fn from_path(path: &Path) -> Option<Tier> {
        let name = path.file_name()?.to_str()?;
        Tier::ALL.into_iter().find(|t| name.starts_with(t.prefix()))
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::ResearcherDetail => "researcher_detail",
            Tier::EvalReady => "eval_ready",
            Tier::FinalCleaned => "final_cleaned",
        })
    }
}

/// A broken record invariant. `invariant` is a stable identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

pub mod invariant {
    pub const UNIQUE_ID: &str = "unique_id";
    pub const AST_PARSES: &str = "ast_str_parses";
    pub const NUM_OPERATIONS: &str = "num_operations_matches";
    pub const GROUND_TRUTH: &str = "ground_truth_matches";
    pub const SCENE_ORDER: &str = "scenes_match_narrative";
    pub const ANCHORS_PRESENT: &str = "anchors_appear_in_scenes";
}

/// The evaluation-facing record, shared by the eval-ready and cleaned tiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub full_text_for_eval: String,
    pub ground_truth_value: i64,
    pub ast_str: String,
    pub num_operations: usize,
    pub token_count_narrative: usize,
}

impl SampleRecord {
    pub fn parse_ast(&self) -> Result<AstNode<i64>, Violation> {
        parse_prefix(&self.ast_str).map_err(|e| Violation {
            invariant: invariant::AST_PARSES,
            detail: e.to_string(),
        })
    }

    pub fn check(&self) -> Result<(), Violation> {
        let ast = self.parse_ast()?;
        let ops = ast.count_ops();
        if ops != self.num_operations {
            return Err(Violation {
                invariant: invariant::NUM_OPERATIONS,
                detail: format!(
                    "num_operations is {} but the tree has {ops}",
                    self.num_operations
                ),
            });
        }
        let v = ast.eval();
        if v != self.ground_truth_value {
            return Err(Violation {
                invariant: invariant::GROUND_TRUTH,
                detail: format!(
                    "ground_truth_value is {} but the tree evaluates to {v}",
                    self.ground_truth_value
                ),
            });
        }
        Ok(())
    }
}

impl From<&GeneratedSample> for SampleRecord {
    fn from(s: &GeneratedSample) -> Self {
        SampleRecord {
            id: s.id.clone(),
            full_text_for_eval: s.full_text_for_eval.clone(),
            ground_truth_value: s.ground_truth_value,
            ast_str: s.ast_str.clone(),
            num_operations: s.num_operations,
            token_count_narrative: s.token_count_narrative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearcherRecord {
    #[serde(flatten)]
    pub sample: SampleRecord,
    pub world_data: WorldMeta,
    /// Scenes in narrative order; revision logs live in `beat_revision_details`.
    pub scenes_detail: Vec<SceneRecord>,
    /// node_id -> anchor name
    pub conceptual_references: AnchorTable,
    pub beat_revision_details: BTreeMap<usize, Vec<RevisionEntry>>,
    pub generation_metadata: GenerationMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holistic_report: Option<ValidationReport>,
}

impl ResearcherRecord {
    /// The body and question joined the way the generator joins them.
    pub fn reassemble_text(&self) -> String {
        let mut body = Vec::new();
        let mut question = "";
        for s in &self.scenes_detail {
            if s.kind == SceneKind::Question {
                question = &s.text;
            } else {
                body.push(s.text.as_str());
            }
        }
        format!("{}{question}", body.join("\n\n"))
    }

    pub fn check(&self) -> Result<(), Violation> {
        self.sample.check()?;
        if self.reassemble_text() != self.sample.full_text_for_eval {
            return Err(Violation {
                invariant: invariant::SCENE_ORDER,
                detail: "scenes_detail does not reassemble into full_text_for_eval".into(),
            });
        }
        // Non-root anchors are required by their parent's beat; the root's
        // name is only ever a label and may legitimately go unmentioned.
        let text = self.sample.full_text_for_eval.to_lowercase();
        for (id, name) in &self.conceptual_references {
            if *id != self.sample.num_operations && !text.contains(&name.to_lowercase()) {
                return Err(Violation {
                    invariant: invariant::ANCHORS_PRESENT,
                    detail: format!("anchor \"{name}\" of node {id} appears in no scene"),
                });
            }
        }
        Ok(())
    }
}

impl From<GeneratedSample> for ResearcherRecord {
    fn from(s: GeneratedSample) -> Self {
        let sample = SampleRecord::from(&s);
        let mut beat_revision_details = BTreeMap::new();
        let scenes_detail = s
            .scenes
            .into_iter()
            .map(|mut sc| {
                if let Some(id) = sc.node_id {
                    beat_revision_details.insert(id, std::mem::take(&mut sc.revision_log));
                }
                sc
            })
            .collect();
        ResearcherRecord {
            sample,
            world_data: s.world,
            scenes_detail,
            conceptual_references: s.anchors,
            beat_revision_details,
            generation_metadata: s.metadata,
            holistic_report: s.holistic_report,
        }
    }
}

/// Record types that can live in a tier file.
pub trait TierRecord: Serialize + DeserializeOwned {
    fn id(&self) -> &str;
    fn check(&self) -> Result<(), Violation>;
    fn belongs_to(tier: Tier) -> bool;
}

impl TierRecord for SampleRecord {
    fn id(&self) -> &str {
        &self.id
    }
    fn check(&self) -> Result<(), Violation> {
        SampleRecord::check(self)
    }
    fn belongs_to(tier: Tier) -> bool {
        matches!(tier, Tier::EvalReady | Tier::FinalCleaned)
    }
}

impl TierRecord for ResearcherRecord {
    fn id(&self) -> &str {
        &self.sample.id
    }
    fn check(&self) -> Result<(), Violation> {
        ResearcherRecord::check(self)
    }
    fn belongs_to(tier: Tier) -> bool {
        tier == Tier::ResearcherDetail
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("this record type cannot be stored in the {0} tier")]
    WrongTier(Tier),
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refusal {
    pub id: String,
    pub violation: Violation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WriteReport {
    pub written: usize,
    pub refused: Vec<Refusal>,
}

/// Writes every record that passes its checks, one JSON object per line.
/// Failing records are skipped and listed in the report.
pub fn write_tier<R: TierRecord>(
    records: &[R],
    tier: Tier,
    path: &Path,
) -> Result<WriteReport, DatasetError> {
    if !R::belongs_to(tier) {
        return Err(DatasetError::WrongTier(tier));
    }
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut seen = HashSet::new();
    let mut report = WriteReport::default();
    for r in records {
        let verdict = r.check().and_then(|_| {
            if seen.insert(r.id().to_string()) {
                Ok(())
            } else {
                Err(Violation {
                    invariant: invariant::UNIQUE_ID,
                    detail: format!("duplicate id {}", r.id()),
                })
            }
        });
        if let Err(violation) = verdict {
            log::warn!("{}: refused {}: {violation}", path.display(), r.id());
            report.refused.push(Refusal {
                id: r.id().to_string(),
                violation,
            });
            continue;
        }
        serde_json::to_writer(&mut out, r).map_err(|e| io_err(path)(e.into()))?;
        out.write_all(b"\n").map_err(io_err(path))?;
        report.written += 1;
    }
    out.flush().map_err(io_err(path))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// Skip bad lines and report them.
    #[default]
    Lenient,
    /// Fail on the first bad line.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Debug)]
pub struct TierContents<R> {
    pub records: Vec<R>,
    pub diagnostics: Vec<LineDiagnostic>,
}

pub fn read_tier<R: TierRecord>(
    path: &Path,
    tier: Tier,
    mode: ReadMode,
) -> Result<TierContents<R>, DatasetError> {
    if !R::belongs_to(tier) {
        return Err(DatasetError::WrongTier(tier));
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<R>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                r.check().map_err(|v| v.to_string())?;
                if !seen.insert(r.id().to_string()) {
                    return Err(format!("{}: duplicate id {}", invariant::UNIQUE_ID, r.id()));
                }
                Ok(r)
            });
        match parsed {
            Ok(r) => records.push(r),
            Err(message) if mode == ReadMode::Strict => {
                return Err(DatasetError::Line {
                    path: path.to_path_buf(),
                    line: line_no,
                    message,
                })
            }
            Err(message) => {
                log::warn!("{}:{line_no}: {message}", path.display());
                diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message,
                });
            }
        }
    }
    Ok(TierContents {
        records,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, ast: &str) -> SampleRecord {
        let tree: AstNode<i64> = parse_prefix(ast).unwrap();
        SampleRecord {
            id: id.into(),
            full_text_for_eval: format!("story {id}"),
            ground_truth_value: tree.eval(),
            ast_str: ast.into(),
            num_operations: tree.count_ops(),
            token_count_narrative: 2,
        }
    }

    #[test]
    fn file_names() {
        assert_eq!(
            Tier::EvalReady.file_name("20250101"),
            "[2_EVAL_READY]_DATASET_20250101.jsonl"
        );
        assert_eq!(
            Tier::from_path(Path::new("/x/[4_FINAL_EVAL_CLEANED]_DATASET_1.jsonl")),
            Some(Tier::FinalCleaned)
        );
        assert_eq!(Tier::from_path(Path::new("data.jsonl")), None);
    }

    #[test]
    fn invariants_named() {
        let mut r = rec("a", "[SUM 1 2]");
        assert!(r.check().is_ok());
        r.ground_truth_value = 4;
        assert_eq!(r.check().unwrap_err().invariant, invariant::GROUND_TRUTH);
        r.num_operations = 2;
        assert_eq!(r.check().unwrap_err().invariant, invariant::NUM_OPERATIONS);
        r.ast_str = "[SUM 1".into();
        assert_eq!(r.check().unwrap_err().invariant, invariant::AST_PARSES);
    }

    #[test]
    fn wrong_tier_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let err = write_tier(&[rec("a", "[MIN 3 4]")], Tier::ResearcherDetail, &p).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::WrongTier(Tier::ResearcherDetail)
        ));
    }
}
