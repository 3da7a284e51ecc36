//! Domain types shared by every stage of the harness.
//!
//! All types are plain values (`Clone + Send + Sync`) and serialize to the
//! snake_case JSONL forms used on disk.

mod judgment;
mod jsonl;
mod report;
mod sample;
mod schema;
mod verdict;

pub use judgment::{
    CriteriaMode, Criterion, EvalMode, GenerationParams, JudgmentSpec, Order, RawJudgment,
    ReferenceMode, SpecError,
};
pub use jsonl::{read_jsonl, to_jsonl_string, write_jsonl, JsonlError};
pub use report::{CellKey, MetricReport};
pub use sample::{
    sha256_hex, validate_sample, CandidateResponse, ChartSample, ChartType, Complexity, ImageRef,
    Source, TaskKind, Violation,
};
pub use schema::{DistributionSchema, LabelTarget, SchemaError, SourceTarget};
pub use verdict::{
    Adherence, CandidateRef, GoldLabel, JudgmentRecord, ParsedVerdict, Preference, Score,
    ScoreOutOfRange, VerdictEntry, VerdictItem, VerdictValue,
};
