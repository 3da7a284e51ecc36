use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::judgment::{CriteriaMode, EvalMode};
use super::sample::Source;
use super::verdict::{GoldLabel, Preference, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTarget {
    pub eval_mode: EvalMode,
    pub label: GoldLabel,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTarget {
    pub source: Source,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("label {label:?} does not belong to {eval_mode} evaluation")]
    LabelModeMismatch { eval_mode: EvalMode, label: GoldLabel },
    #[error("cell ({eval_mode}, {label:?}) listed twice")]
    DuplicateCell { eval_mode: EvalMode, label: GoldLabel },
    #[error("source {0} listed twice")]
    DuplicateSource(Source),
    #[error("source targets sum to {source_total} but label targets sum to {label_total}")]
    InconsistentMarginals { source_total: u64, label_total: u64 },
}

/// Target counts for a distillation set.
///
/// Label cells are exact targets. Source targets, when present, are a second
/// marginal that the sampler must meet at the same time; the joint
/// source-by-label split is left to the sampler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionSchema {
    pub criteria_mode: CriteriaMode,
    pub labels: Vec<LabelTarget>,
    #[serde(default)]
    pub sources: Vec<SourceTarget>,
}

fn pointwise(counts: [u64; 5]) -> impl Iterator<Item = LabelTarget> {
    counts.into_iter().enumerate().map(|(i, count)| LabelTarget {
        eval_mode: EvalMode::Pointwise,
        label: GoldLabel::Score(Score::new(i as i64 + 1).expect("1..=5")),
        count,
    })
}

fn pairwise(tie: u64, a: u64, b: u64) -> impl Iterator<Item = LabelTarget> {
    [(Preference::Tie, tie), (Preference::ModelA, a), (Preference::ModelB, b)]
        .into_iter()
        .map(|(p, count)| LabelTarget {
            eval_mode: EvalMode::Pairwise,
            label: GoldLabel::Preference(p),
            count,
        })
}

impl DistributionSchema {
    /// Single-criterion distillation set: 9,725 records.
    pub fn table1_single_criterion() -> Self {
        Self {
            criteria_mode: CriteriaMode::SingleCriterion,
            labels: pointwise([801, 1000, 1000, 1000, 1000])
                .chain(pairwise(2000, 1500, 1424))
                .collect(),
            sources: vec![
                SourceTarget { source: Source::Statista, count: 6898 },
                SourceTarget { source: Source::Pew, count: 2827 },
            ],
        }
    }

    /// Multi-criteria distillation set, Pew only.
    ///
    /// As published, the source row (2,827) exceeds the label cells
    /// (1,764 + 1,062 = 2,826) by one, so [`validate`](Self::validate)
    /// rejects this schema. [`labels_only`](Self::labels_only) drops the
    /// source marginal.
    pub fn table1_multi_criteria() -> Self {
        Self {
            criteria_mode: CriteriaMode::MultiCriteria,
            labels: pointwise([510, 548, 414, 179, 113])
                .chain(pairwise(268, 568, 226))
                .collect(),
            sources: vec![SourceTarget { source: Source::Pew, count: 2827 }],
        }
    }

    pub fn labels_only(mut self) -> Self {
        self.sources.clear();
        self
    }

    /// Restricts sampling to `source` with a target equal to the label total.
    pub fn restricted_to(mut self, source: Source) -> Self {
        let total = self.total();
        self.sources = vec![SourceTarget { source, count: total }];
        self
    }

    pub fn total(&self) -> u64 {
        self.labels.iter().map(|t| t.count).sum()
    }

    pub fn label_map(&self) -> BTreeMap<(EvalMode, GoldLabel), u64> {
        self.labels
            .iter()
            .map(|t| ((t.eval_mode, t.label), t.count))
            .collect()
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen = BTreeMap::new();
        for t in &self.labels {
            let ok = matches!(
                (t.eval_mode, t.label),
                (EvalMode::Pointwise, GoldLabel::Score(_)) | (EvalMode::Pairwise, GoldLabel::Preference(_))
            );
            if !ok {
                return Err(SchemaError::LabelModeMismatch {
                    eval_mode: t.eval_mode,
                    label: t.label,
                });
            }
            if seen.insert((t.eval_mode, t.label), ()).is_some() {
                return Err(SchemaError::DuplicateCell {
                    eval_mode: t.eval_mode,
                    label: t.label,
                });
            }
        }
        let mut sources = Vec::new();
        for s in &self.sources {
            if sources.contains(&s.source) {
                return Err(SchemaError::DuplicateSource(s.source));
            }
            sources.push(s.source);
        }
        if !self.sources.is_empty() {
            let source_total: u64 = self.sources.iter().map(|s| s.count).sum();
            let label_total = self.total();
            if source_total != label_total {
                return Err(SchemaError::InconsistentMarginals {
                    source_total,
                    label_total,
                });
            }
        }
        Ok(())
    }
}
