use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Pairwise,
    Pointwise,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Pairwise => "pairwise",
            EvalMode::Pointwise => "pointwise",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    WithReference,
    WithoutReference,
}

impl ReferenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceMode::WithReference => "with_reference",
            ReferenceMode::WithoutReference => "without_reference",
        }
    }
}

impl fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evaluation criterion. Unknown names are carried through `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Criterion {
    FactualCorrectness,
    Informativeness,
    Relevance,
    Multidimensional,
    Other(String),
}

impl Criterion {
    pub fn name(&self) -> &str {
        match self {
            Criterion::FactualCorrectness => "factual_correctness",
            Criterion::Informativeness => "informativeness",
            Criterion::Relevance => "relevance",
            Criterion::Multidimensional => "multidimensional",
            Criterion::Other(s) => s,
        }
    }

    /// Lower-case, space-separated form used as the `Type` value in replies.
    pub fn type_label(&self) -> String {
        self.name().replace('_', " ")
    }

    /// Title-case form used in instruction headers.
    pub fn title(&self) -> String {
        self.type_label()
            .split(' ')
            .map(|w| {
                let mut c = w.chars();
                match c.next() {
                    Some(first) => first.to_uppercase().chain(c).collect(),
                    None => String::new(),
                }
            })
            .collect::<Vec<String>>()
            .join(" ")
    }

    /// Column abbreviation used in report tables.
    pub fn abbrev(&self) -> String {
        match self {
            Criterion::FactualCorrectness => "FC".into(),
            Criterion::Informativeness => "I".into(),
            Criterion::Relevance => "R".into(),
            Criterion::Multidimensional => "MD".into(),
            Criterion::Other(s) => s.clone(),
        }
    }
}

impl From<String> for Criterion {
    fn from(s: String) -> Self {
        match s.as_str() {
            "factual_correctness" => Criterion::FactualCorrectness,
            "informativeness" => Criterion::Informativeness,
            "relevance" => Criterion::Relevance,
            "multidimensional" => Criterion::Multidimensional,
            _ => Criterion::Other(s),
        }
    }
}

impl From<&str> for Criterion {
    fn from(s: &str) -> Self {
        Criterion::from(s.to_string())
    }
}

impl From<Criterion> for String {
    fn from(c: Criterion) -> Self {
        c.name().to_string()
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Presentation order of the two candidates in a pairwise prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Order {
    #[default]
    AB,
    BA,
}

impl Order {
    pub fn flipped(self) -> Self {
        match self {
            Order::AB => Order::BA,
            Order::BA => Order::AB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriteriaMode {
    SingleCriterion,
    MultiCriteria,
}

impl CriteriaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CriteriaMode::SingleCriterion => "single_criterion",
            CriteriaMode::MultiCriteria => "multi_criteria",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("criteria set is empty")]
    EmptyCriteria,
    #[error("criterion {0} listed more than once")]
    DuplicateCriterion(Criterion),
    #[error("multidimensional is a single-criterion request and cannot be combined")]
    MultidimensionalCombined,
}

/// What to ask a judge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JudgmentSpec {
    pub eval_mode: EvalMode,
    pub reference_mode: ReferenceMode,
    pub criteria: Vec<Criterion>,
    /// Ignored for pointwise requests.
    #[serde(default)]
    pub order: Order,
    pub judge_model: String,
}

impl JudgmentSpec {
    pub fn new(
        eval_mode: EvalMode,
        reference_mode: ReferenceMode,
        criteria: Vec<Criterion>,
        judge_model: impl Into<String>,
    ) -> Result<Self, SpecError> {
        let spec = Self {
            eval_mode,
            reference_mode,
            criteria,
            order: Order::AB,
            judge_model: judge_model.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_order(mut self, order: Order) -> Self {
        self.order = order;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.criteria.is_empty() {
            return Err(SpecError::EmptyCriteria);
        }
        for (i, c) in self.criteria.iter().enumerate() {
            if self.criteria[..i].contains(c) {
                return Err(SpecError::DuplicateCriterion(c.clone()));
            }
        }
        if self.criteria.len() > 1 && self.criteria.contains(&Criterion::Multidimensional) {
            return Err(SpecError::MultidimensionalCombined);
        }
        Ok(())
    }

    pub fn is_multi_criteria(&self) -> bool {
        self.criteria.len() >= 2
    }

    pub fn criteria_mode(&self) -> CriteriaMode {
        if self.is_multi_criteria() {
            CriteriaMode::MultiCriteria
        } else {
            CriteriaMode::SingleCriterion
        }
    }

    /// Order that actually applies: pointwise requests are always `AB`.
    pub fn effective_order(&self) -> Order {
        match self.eval_mode {
            EvalMode::Pairwise => self.order,
            EvalMode::Pointwise => Order::AB,
        }
    }
}

/// Decoding settings sent with every judge request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_output_tokens: 300,
        }
    }
}

/// The judge's untouched output plus telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawJudgment {
    pub spec: JudgmentSpec,
    pub sample_id: String,
    pub raw_text: String,
    pub prompt_digest: String,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out: Option<u64>,
    /// True when `tokens_out` is a whitespace estimate, not endpoint-reported.
    #[serde(default)]
    pub tokens_estimated: bool,
    #[serde(default)]
    pub retrieved_from_cache: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_count_decides_mode() {
        let multi = JudgmentSpec::new(
            EvalMode::Pointwise,
            ReferenceMode::WithReference,
            vec![Criterion::FactualCorrectness, Criterion::Informativeness],
            "j",
        )
        .unwrap();
        assert!(multi.is_multi_criteria());
        assert_eq!(multi.criteria_mode(), CriteriaMode::MultiCriteria);

        let single = JudgmentSpec::new(
            EvalMode::Pointwise,
            ReferenceMode::WithReference,
            vec![Criterion::Informativeness],
            "j",
        )
        .unwrap();
        assert_eq!(single.criteria_mode(), CriteriaMode::SingleCriterion);
    }

    #[test]
    fn rejects_bad_criteria_sets() {
        let mk = |c: Vec<Criterion>| {
            JudgmentSpec::new(EvalMode::Pairwise, ReferenceMode::WithoutReference, c, "j")
        };
        assert_eq!(mk(vec![]), Err(SpecError::EmptyCriteria));
        assert!(matches!(
            mk(vec![Criterion::Relevance, Criterion::Relevance]),
            Err(SpecError::DuplicateCriterion(_))
        ));
        assert_eq!(
            mk(vec![Criterion::Multidimensional, Criterion::Relevance]),
            Err(SpecError::MultidimensionalCombined)
        );
    }

    #[test]
    fn criterion_names() {
        assert_eq!(Criterion::FactualCorrectness.type_label(), "factual correctness");
        assert_eq!(Criterion::FactualCorrectness.title(), "Factual Correctness");
        assert_eq!(Criterion::from("conciseness"), Criterion::Other("conciseness".into()));
        let json = serde_json::to_string(&Criterion::Informativeness).unwrap();
        assert_eq!(json, "\"informativeness\"");
    }

    #[test]
    fn pointwise_ignores_order() {
        let spec = JudgmentSpec::new(
            EvalMode::Pointwise,
            ReferenceMode::WithoutReference,
            vec![Criterion::Relevance],
            "j",
        )
        .unwrap()
        .with_order(Order::BA);
        assert_eq!(spec.effective_order(), Order::AB);
    }
}
