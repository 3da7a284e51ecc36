//! Distillation-set construction: teacher judgments in, training JSONL out.
//!
//! Teacher records are parsed with [`crate::verdictparse`], reduced to
//! [`TrainingCandidate`]s, sampled to exact per-label (and per-source)
//! targets, and exported as chat-style training records.

mod flow;
mod sampling;
mod synth;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::datamodel::{
    sha256_hex, CandidateResponse, ChartSample, CriteriaMode, Criterion, EvalMode, GoldLabel, JudgmentSpec,
    RawJudgment, Source, VerdictValue,
};
use crate::promptforge::{PromptError, PromptForge};
use crate::verdictparse::{canonical_payload, extract_payload, parse_label};

pub use sampling::{sample_to_schema, Dataset, InsufficientCell};
pub use synth::{first_question_line, synthesize_questions, SynthError};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("pool cannot fill the schema: {}", describe(.0))]
    InsufficientPool(Vec<InsufficientCell>),
    #[error(transparent)]
    Schema(#[from] crate::datamodel::SchemaError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

fn describe(cells: &[InsufficientCell]) -> String {
    cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ")
}

/// One teacher judgment together with the inputs it was made on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRecord {
    pub sample: ChartSample,
    /// One response for pointwise, two (underlying order) for pairwise.
    pub responses: Vec<CandidateResponse>,
    pub judgment: RawJudgment,
}

/// A training example: the student prompt and the teacher's reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCandidate {
    pub id: String,
    pub sample: ChartSample,
    pub spec: JudgmentSpec,
    pub teacher_model: String,
    pub prompt_text: String,
    /// Canonical JSON of the teacher verdict, explanations included.
    pub target: String,
    /// Label of the first requested criterion, in presentation space for
    /// pairwise records. Schema cells are keyed by it.
    pub label: GoldLabel,
    pub rationale: String,
}

impl TrainingCandidate {
    pub fn source(&self) -> Source {
        self.sample.source
    }

    pub fn eval_mode(&self) -> EvalMode {
        self.spec.eval_mode
    }

    pub fn criteria_mode(&self) -> CriteriaMode {
        self.spec.criteria_mode()
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.spec.criteria
    }
}

/// A teacher model that is also used as an evaluation reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecouplingViolation {
    pub model_id: String,
}

impl std::fmt::Display for DecouplingViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "teacher {} is also an evaluation judge", self.model_id)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    #[serde(skip)]
    pub pool: Vec<TrainingCandidate>,
    pub kept: usize,
    /// Unparseable teacher replies.
    pub dropped_failed: usize,
    /// Parsed replies whose criteria were duplicated, missing, or salvaged.
    pub dropped_degenerate: usize,
    /// Replies whose label names neither slot, or whose inputs do not render.
    pub dropped_invalid: usize,
    /// (sample id, raw text) of every dropped record.
    pub dropped_raw: Vec<(String, String)>,
    pub warnings: Vec<DecouplingViolation>,
}

enum DropReason {
    Failed,
    Degenerate,
    Invalid,
}

impl IngestReport {
    fn drop(&mut self, record: &TeacherRecord, why: DropReason) {
        let counter = match why {
            DropReason::Failed => &mut self.dropped_failed,
            DropReason::Degenerate => &mut self.dropped_degenerate,
            DropReason::Invalid => &mut self.dropped_invalid,
        };
        *counter += 1;
        log::info!("dropping teacher record {}", record.judgment.sample_id);
        self.dropped_raw
            .push((record.judgment.sample_id.clone(), record.judgment.raw_text.clone()));
    }

    pub fn dropped(&self) -> usize {
        self.dropped_failed + self.dropped_degenerate + self.dropped_invalid
    }
}

/// Parses teacher records into training candidates.
pub fn ingest_teacher_judgments(records: &[TeacherRecord], eval_judges: &[String], forge: &PromptForge) -> IngestReport {
    let mut report = IngestReport::default();
    for record in records {
        let teacher = &record.judgment.spec.judge_model;
        if eval_judges.contains(teacher) && !report.warnings.iter().any(|w| &w.model_id == teacher) {
            let v = DecouplingViolation {
                model_id: teacher.clone(),
            };
            log::warn!("{v}");
            report.warnings.push(v);
        }
        let spec = &record.judgment.spec;
        let verdict = extract_payload(&record.judgment.raw_text, spec);
        if verdict.is_failed() {
            report.drop(record, DropReason::Failed);
            continue;
        }
        if verdict.degenerate {
            report.drop(record, DropReason::Degenerate);
            continue;
        }
        let first = &spec.criteria[0];
        let label = match verdict.per_criterion.get(first).map(|e| &e.value) {
            Some(VerdictValue::Score(s)) => Some(GoldLabel::Score(*s)),
            Some(VerdictValue::Label(l)) => parse_label(l).ok().map(GoldLabel::Preference),
            None => None,
        };
        let labels_ok = verdict
            .per_criterion
            .values()
            .all(|e| e.value.label().map_or(true, |l| parse_label(l).is_ok()));
        let prompt = render(forge, record);
        let (Some(label), true, Some(prompt)) = (label, labels_ok, prompt) else {
            report.drop(record, DropReason::Invalid);
            continue;
        };
        let rationale = spec
            .criteria
            .iter()
            .filter_map(|c| verdict.per_criterion.get(c).map(|e| e.explanation.clone()))
            .collect::<Vec<_>>()
            .join("\n");
        let models: Vec<&str> = record.responses.iter().map(|r| r.model_id.as_str()).collect();
        let criteria: Vec<&str> = spec.criteria.iter().map(|c| c.name()).collect();
        let id = format!(
            "{}|{}|{}|{}|{}|{}|{:?}",
            record.sample.id,
            spec.eval_mode,
            spec.reference_mode,
            criteria.join("+"),
            models.join("+"),
            teacher,
            spec.effective_order()
        );
        report.pool.push(TrainingCandidate {
            id,
            sample: record.sample.clone(),
            spec: spec.clone(),
            teacher_model: teacher.clone(),
            prompt_text: prompt,
            target: canonical_payload(&verdict, spec),
            label,
            rationale,
        });
    }
    report.kept = report.pool.len();
    report
}

fn render(forge: &PromptForge, record: &TeacherRecord) -> Option<String> {
    let spec = &record.judgment.spec;
    let rendered = match (spec.eval_mode, record.responses.as_slice()) {
        (EvalMode::Pointwise, [r]) => forge.render_pointwise(&record.sample, r, spec),
        (EvalMode::Pairwise, [a, b]) => forge.render_pairwise(&record.sample, a, b, spec),
        _ => return None,
    };
    match rendered {
        Ok(p) => Some(p.text),
        Err(e) => {
            log::info!("cannot render teacher record {}: {e}", record.judgment.sample_id);
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub n_records: usize,
    pub sha256: String,
}

/// One training line: user turn with prompt text and image, assistant turn
/// with the teacher reply.
pub fn training_record(c: &TrainingCandidate) -> serde_json::Value {
    json!({
        "id": c.id,
        "messages": [
            {"role": "user", "content": [
                {"type": "text", "text": c.prompt_text},
                {"type": "image", "image": c.sample.image.uri, "sha256": c.sample.image.sha256},
            ]},
            {"role": "assistant", "content": [
                {"type": "text", "text": c.target},
            ]},
        ],
    })
}

/// Writes the dataset as training JSONL, ordered by sample id then
/// candidate id, and returns the line count and file digest.
pub fn export_training_jsonl(dataset: &Dataset, path: &Path) -> Result<ExportSummary, BuildError> {
    if dataset.items.is_empty() {
        return Err(BuildError::EmptyDataset);
    }
    let mut items: Vec<&TrainingCandidate> = dataset.items.iter().collect();
    items.sort_by(|a, b| (&a.sample.id, &a.id).cmp(&(&b.sample.id, &b.id)));
    let mut bytes = Vec::new();
    for c in &items {
        serde_json::to_writer(&mut bytes, &training_record(c)).expect("json values serialize");
        bytes.push(b'\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(ExportSummary {
        n_records: items.len(),
        sha256: sha256_hex(&bytes),
    })
}

/// Count of dataset items per chart type; items without one are counted
/// under `"unknown"`.
pub fn chart_type_marginals(dataset: &Dataset) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for c in &dataset.items {
        let key = c.sample.chart_type.map_or_else(
            || "unknown".to_string(),
            |t| serde_json::to_value(t).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        );
        *out.entry(key).or_insert(0) += 1;
    }
    out
}

/// Count of dataset items per (eval mode, label) cell.
pub fn label_counts(dataset: &Dataset) -> BTreeMap<(EvalMode, GoldLabel), u64> {
    let mut out = BTreeMap::new();
    for c in &dataset.items {
        *out.entry((c.eval_mode(), c.label)).or_insert(0) += 1;
    }
    out
}

/// Count of dataset items per source.
pub fn source_counts(dataset: &Dataset) -> BTreeMap<Source, u64> {
    let mut out = BTreeMap::new();
    for c in &dataset.items {
        *out.entry(c.source()).or_insert(0) += 1;
    }
    out
}
