use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::judgment::{Criterion, RawJudgment};

/// A pointwise rating. Only 1 through 5 are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Score(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("score {0} outside 1..=5")]
pub struct ScoreOutOfRange(pub i64);

impl Score {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(value: i64) -> Result<Self, ScoreOutOfRange> {
        if (i64::from(Self::MIN)..=i64::from(Self::MAX)).contains(&value) {
            Ok(Score(value as u8))
        } else {
            Err(ScoreOutOfRange(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for Score {
    type Error = ScoreOutOfRange;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Score::new(v)
    }
}

impl From<Score> for u8 {
    fn from(s: Score) -> u8 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Pairwise outcome. Depending on context this is either a presentation
/// label (the slot the judge named) or an underlying model (the response
/// that was passed as `response_a` / `response_b`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    ModelA,
    ModelB,
    Tie,
}

impl Preference {
    pub fn swapped(self) -> Self {
        match self {
            Preference::ModelA => Preference::ModelB,
            Preference::ModelB => Preference::ModelA,
            Preference::Tie => Preference::Tie,
        }
    }

    /// Reply-contract spelling.
    pub fn label(self) -> &'static str {
        match self {
            Preference::ModelA => "Model A",
            Preference::ModelB => "Model B",
            Preference::Tie => "Tie",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preference::ModelA => "model_a",
            Preference::ModelB => "model_b",
            Preference::Tie => "tie",
        }
    }
}

/// One verdict value as emitted by the judge. Pairwise labels are kept
/// verbatim so that unresolvable answers survive until resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictValue {
    Label(String),
    Score(Score),
}

impl VerdictValue {
    pub fn score(&self) -> Option<Score> {
        match self {
            VerdictValue::Score(s) => Some(*s),
            VerdictValue::Label(_) => None,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            VerdictValue::Label(l) => Some(l),
            VerdictValue::Score(_) => None,
        }
    }
}

/// One object of the judge's reply payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictItem {
    pub value: VerdictValue,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub value: VerdictValue,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adherence {
    Strict,
    Repaired,
    Failed,
}

/// Structured verdict extracted from a raw judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedVerdict {
    /// Every payload object recovered, in reply order.
    pub items: Vec<VerdictItem>,
    /// Assignment of items to requested criteria (first claim wins).
    pub per_criterion: BTreeMap<Criterion, VerdictEntry>,
    pub adherence: Adherence,
    #[serde(default)]
    pub repair_trace: Vec<String>,
    /// Set when criteria were claimed twice, omitted, or objects were dropped.
    #[serde(default)]
    pub degenerate: bool,
}

impl ParsedVerdict {
    pub fn failed() -> Self {
        Self {
            items: Vec::new(),
            per_criterion: BTreeMap::new(),
            adherence: Adherence::Failed,
            repair_trace: Vec::new(),
            degenerate: false,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.adherence == Adherence::Failed
    }
}

/// Reference judgment for one criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoldLabel {
    Preference(Preference),
    Score(Score),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRef {
    pub model_id: String,
    pub char_length: usize,
}

/// One line of the judgment archive: raw output, its parse, and the gold
/// labels it is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub dataset: String,
    pub judgment: RawJudgment,
    pub verdict: ParsedVerdict,
    /// Candidates in underlying order (`response_a` first).
    pub candidates: Vec<CandidateRef>,
    #[serde(default)]
    pub gold: BTreeMap<Criterion, GoldLabel>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_domain_is_one_to_five() {
        assert!(Score::new(0).is_err());
        assert!(Score::new(6).is_err());
        assert_eq!(Score::new(3).unwrap().get(), 3);
        assert!(serde_json::from_str::<Score>("6").is_err());
        assert_eq!(serde_json::from_str::<Score>("5").unwrap().get(), 5);
    }

    #[test]
    fn gold_label_is_untagged() {
        let g: GoldLabel = serde_json::from_str("\"tie\"").unwrap();
        assert_eq!(g, GoldLabel::Preference(Preference::Tie));
        let g: GoldLabel = serde_json::from_str("4").unwrap();
        assert_eq!(g, GoldLabel::Score(Score::new(4).unwrap()));
    }
}
