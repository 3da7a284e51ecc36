use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Criterion, JudgmentSpec, Order, ParsedVerdict, Preference};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unresolvable pairwise label {0:?}")]
    UnresolvableLabel(String),
    #[error("verdict carries a score where a pairwise label was expected")]
    NotPairwise,
}

/// How payload objects were matched to requested criteria.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentReport {
    /// Criterion to index into `ParsedVerdict::items`.
    pub assigned: BTreeMap<Criterion, usize>,
    /// Criteria claimed by more than one object (the first claim is kept).
    pub duplicates: Vec<Criterion>,
    /// Requested criteria that no object claimed.
    pub omissions: Vec<Criterion>,
    /// Objects whose `Type` names no requested criterion.
    pub unmatched: Vec<usize>,
    pub degenerate: bool,
}

/// Canonical form of a `Type` value: lower case, punctuation dropped,
/// underscores and hyphens read as spaces, whitespace collapsed.
pub fn normalize_type(raw: &str) -> String {
    let mapped: String = raw
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Matches payload objects to the criteria of `spec`.
///
/// Single-criterion requests need no `Type`: the first object answers the
/// one criterion.
pub fn resolve_multicriteria(verdict: &ParsedVerdict, spec: &JudgmentSpec) -> AssignmentReport {
    let mut report = AssignmentReport::default();
    if verdict.items.is_empty() {
        report.omissions = spec.criteria.clone();
        report.degenerate = !verdict.is_failed();
        return report;
    }
    if !spec.is_multi_criteria() {
        report.assigned.insert(spec.criteria[0].clone(), 0);
        report.degenerate = verdict.degenerate;
        return report;
    }
    let wanted: Vec<(String, &Criterion)> = spec.criteria.iter().map(|c| (normalize_type(&c.type_label()), c)).collect();
    for (idx, item) in verdict.items.iter().enumerate() {
        let key = item.type_label.as_deref().map(normalize_type).unwrap_or_default();
        match wanted.iter().find(|(w, _)| *w == key) {
            Some((_, criterion)) => {
                if report.assigned.contains_key(*criterion) {
                    if !report.duplicates.contains(criterion) {
                        report.duplicates.push((*criterion).clone());
                    }
                } else {
                    report.assigned.insert((*criterion).clone(), idx);
                }
            }
            None => report.unmatched.push(idx),
        }
    }
    report.omissions = spec
        .criteria
        .iter()
        .filter(|c| !report.assigned.contains_key(*c))
        .cloned()
        .collect();
    report.degenerate = verdict.degenerate
        || !report.duplicates.is_empty()
        || !report.omissions.is_empty()
        || !report.unmatched.is_empty();
    report
}

/// Reads a reply label. Accepts `Model A`, `model a`, `ModelA`, `model_a`,
/// bare `A`, and `Tie`, ignoring case and surrounding punctuation.
pub fn parse_label(label: &str) -> Result<Preference, ResolveError> {
    let squashed: String = label
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    match squashed.as_str() {
        "modela" | "a" => Ok(Preference::ModelA),
        "modelb" | "b" => Ok(Preference::ModelB),
        "tie" => Ok(Preference::Tie),
        _ => Err(ResolveError::UnresolvableLabel(label.to_string())),
    }
}

/// Maps a presentation label to the underlying model given the order the
/// candidates were shown in.
pub fn resolve_label(label: &str, order: Order) -> Result<Preference, ResolveError> {
    let slot = parse_label(label)?;
    Ok(match order {
        Order::AB => slot,
        Order::BA => slot.swapped(),
    })
}

/// Per-criterion preference over underlying models (`ModelA` is the
/// response passed as `response_a`, regardless of where it was shown).
pub fn resolve_pairwise(verdict: &ParsedVerdict, order: Order) -> Result<BTreeMap<Criterion, Preference>, ResolveError> {
    let mut out = BTreeMap::new();
    for (criterion, entry) in &verdict.per_criterion {
        let label = entry.value.label().ok_or(ResolveError::NotPairwise)?;
        out.insert(criterion.clone(), resolve_label(label, order)?);
    }
    Ok(out)
}
