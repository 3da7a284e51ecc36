use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    composite_bias, error_distance, exact_match_accuracy, format_adherence_rate, judgment_accuracy,
    length_bias_rate, position_bias_rate, spearman_rho, LengthRecord,
};
use crate::datamodel::{
    Adherence, CellKey, EvalMode, GoldLabel, JudgmentRecord, MetricReport, Order, Preference, Score,
};
use crate::verdictparse::resolve_label;

/// Coordinates a report can be grouped by. Coordinates left out are
/// averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Judge,
    Dataset,
    EvalMode,
    ReferenceMode,
    CriteriaMode,
    Criterion,
}

impl GroupKey {
    pub const ALL: [GroupKey; 6] = [
        GroupKey::Judge,
        GroupKey::Dataset,
        GroupKey::EvalMode,
        GroupKey::ReferenceMode,
        GroupKey::CriteriaMode,
        GroupKey::Criterion,
    ];
}

#[derive(Debug, Clone, Default)]
pub struct AggregateOptions {
    /// Datasets whose gold labels are instruction-following annotations.
    pub instruction_datasets: BTreeSet<String>,
}

/// One record seen through one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub cell: CellKey,
    /// Identifies the judged item across presentation orders.
    pub item: String,
    pub order: Order,
    pub adherence: Adherence,
    pub value: ObservedValue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservedValue {
    Pairwise {
        predicted: Option<Preference>,
        gold: Option<Preference>,
        len_a: usize,
        len_b: usize,
    },
    Pointwise {
        predicted: Option<Score>,
        gold: Option<Score>,
    },
}

impl Observation {
    /// Splits a record into one observation per requested criterion.
    pub fn from_record(record: &JudgmentRecord) -> Vec<Observation> {
        let spec = &record.judgment.spec;
        let verdict = &record.verdict;
        let failed = verdict.is_failed();
        let order = spec.effective_order();
        let models: Vec<&str> = record.candidates.iter().map(|c| c.model_id.as_str()).collect();
        let item = format!("{}|{}", record.judgment.sample_id, models.join("|"));
        spec.criteria
            .iter()
            .map(|criterion| {
                let entry = if failed { None } else { verdict.per_criterion.get(criterion) };
                let gold = record.gold.get(criterion);
                let value = match spec.eval_mode {
                    EvalMode::Pairwise => ObservedValue::Pairwise {
                        predicted: entry
                            .and_then(|e| e.value.label())
                            .and_then(|l| resolve_label(l, order).ok()),
                        gold: match gold {
                            Some(GoldLabel::Preference(p)) => Some(*p),
                            _ => None,
                        },
                        len_a: record.candidates.first().map_or(0, |c| c.char_length),
                        len_b: record.candidates.get(1).map_or(0, |c| c.char_length),
                    },
                    EvalMode::Pointwise => ObservedValue::Pointwise {
                        predicted: entry.and_then(|e| e.value.score()),
                        gold: match gold {
                            Some(GoldLabel::Score(s)) => Some(*s),
                            _ => None,
                        },
                    },
                };
                Observation {
                    cell: CellKey {
                        judge_model: Some(spec.judge_model.clone()),
                        dataset: Some(record.dataset.clone()),
                        eval_mode: Some(spec.eval_mode),
                        reference_mode: Some(spec.reference_mode),
                        criteria_mode: Some(spec.criteria_mode()),
                        criterion: Some(criterion.clone()),
                    },
                    item: item.clone(),
                    order,
                    adherence: verdict.adherence,
                    value,
                }
            })
            .collect()
    }
}

/// Reports grouped by `keys`, with default options.
pub fn aggregate(records: &[JudgmentRecord], keys: &[GroupKey]) -> Vec<MetricReport> {
    aggregate_with(records, keys, &AggregateOptions::default())
}

/// Computes one report per finest cell, then projects onto `keys` by taking
/// unweighted means of the finest-cell values. Item counts are summed.
/// Cells without observations do not appear.
pub fn aggregate_with(records: &[JudgmentRecord], keys: &[GroupKey], options: &AggregateOptions) -> Vec<MetricReport> {
    let mut cells: BTreeMap<CellKey, Vec<Observation>> = BTreeMap::new();
    for record in records {
        for obs in Observation::from_record(record) {
            cells.entry(obs.cell.clone()).or_default().push(obs);
        }
    }
    let fine: Vec<MetricReport> = cells
        .into_iter()
        .filter_map(|(cell, obs)| {
            let instruction = cell
                .dataset
                .as_ref()
                .is_some_and(|d| options.instruction_datasets.contains(d));
            cell_report(cell, &obs, instruction)
        })
        .collect();
    project(&fine, keys)
}

fn cell_report(cell: CellKey, obs: &[Observation], instruction: bool) -> Option<MetricReport> {
    let primary: Vec<&Observation> = obs.iter().filter(|o| o.order == Order::AB).collect();
    if primary.is_empty() {
        return None;
    }
    let adherence: Vec<Adherence> = primary.iter().map(|o| o.adherence).collect();
    let mut report = MetricReport {
        cell,
        judgment_accuracy: None,
        error_distance: None,
        position_bias_rate: None,
        length_bias_rate: None,
        composite_bias: None,
        format_adherence_rate: format_adherence_rate(&adherence).unwrap_or(0.0),
        instruction_following_accuracy: None,
        spearman_rho: None,
        n_items: primary.len(),
    };
    match report.cell.eval_mode {
        Some(EvalMode::Pairwise) => {
            let mut labelled = Vec::new();
            let mut lengths = Vec::new();
            for o in &primary {
                if let ObservedValue::Pairwise {
                    predicted,
                    gold: Some(gold),
                    len_a,
                    len_b,
                } = o.value
                {
                    labelled.push((predicted, gold));
                    lengths.push(LengthRecord {
                        predicted,
                        gold,
                        len_a,
                        len_b,
                    });
                }
            }
            report.judgment_accuracy = judgment_accuracy(&labelled).ok();
            report.length_bias_rate = length_bias_rate(&lengths).ok();
            if instruction {
                report.instruction_following_accuracy = exact_match_accuracy(&labelled).ok();
            }
            let swapped: Vec<(String, Option<Preference>)> = obs
                .iter()
                .filter(|o| o.order == Order::BA)
                .filter_map(|o| pairwise_prediction(o).map(|p| (o.item.clone(), p)))
                .collect();
            if !swapped.is_empty() {
                let straight: Vec<(String, Option<Preference>)> = primary
                    .iter()
                    .filter_map(|o| pairwise_prediction(o).map(|p| (o.item.clone(), p)))
                    .collect();
                match position_bias_rate(&straight, &swapped) {
                    Ok(rate) => report.position_bias_rate = Some(rate),
                    Err(e) => log::warn!("position bias skipped for {}: {e}", report.cell),
                }
            }
            if let (Some(p), Some(l)) = (report.position_bias_rate, report.length_bias_rate) {
                report.composite_bias = Some(composite_bias(p, l));
            }
        }
        Some(EvalMode::Pointwise) => {
            let scored: Vec<(Option<Score>, Score)> = primary
                .iter()
                .filter_map(|o| match o.value {
                    ObservedValue::Pointwise {
                        predicted,
                        gold: Some(gold),
                    } => Some((predicted, gold)),
                    _ => None,
                })
                .collect();
            report.error_distance = error_distance(&scored).ok();
            if instruction {
                report.instruction_following_accuracy = exact_match_accuracy(&scored).ok();
            }
            let (a, b): (Vec<f64>, Vec<f64>) = scored
                .iter()
                .filter_map(|(p, g)| p.map(|p| (f64::from(p.get()), f64::from(g.get()))))
                .unzip();
            report.spearman_rho = spearman_rho(&a, &b).ok();
        }
        None => {}
    }
    Some(report)
}

fn pairwise_prediction(o: &Observation) -> Option<Option<Preference>> {
    match o.value {
        ObservedValue::Pairwise { predicted, .. } => Some(predicted),
        ObservedValue::Pointwise { .. } => None,
    }
}

fn projected(cell: &CellKey, keys: &[GroupKey]) -> CellKey {
    let keep = |k: GroupKey| keys.contains(&k);
    CellKey {
        judge_model: cell.judge_model.clone().filter(|_| keep(GroupKey::Judge)),
        dataset: cell.dataset.clone().filter(|_| keep(GroupKey::Dataset)),
        eval_mode: cell.eval_mode.filter(|_| keep(GroupKey::EvalMode)),
        reference_mode: cell.reference_mode.filter(|_| keep(GroupKey::ReferenceMode)),
        criteria_mode: cell.criteria_mode.filter(|_| keep(GroupKey::CriteriaMode)),
        criterion: cell.criterion.clone().filter(|_| keep(GroupKey::Criterion)),
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Groups finest-cell reports by the projection of their key onto `keys`.
pub(crate) fn project(fine: &[MetricReport], keys: &[GroupKey]) -> Vec<MetricReport> {
    let mut groups: BTreeMap<CellKey, Vec<&MetricReport>> = BTreeMap::new();
    for r in fine {
        groups.entry(projected(&r.cell, keys)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(cell, members)| {
            let m = |f: fn(&MetricReport) -> Option<f64>| mean_of(members.iter().map(|r| f(r)));
            MetricReport {
                cell,
                judgment_accuracy: m(|r| r.judgment_accuracy),
                error_distance: m(|r| r.error_distance),
                position_bias_rate: m(|r| r.position_bias_rate),
                length_bias_rate: m(|r| r.length_bias_rate),
                composite_bias: m(|r| r.composite_bias),
                format_adherence_rate: m(|r| Some(r.format_adherence_rate)).unwrap_or(0.0),
                instruction_following_accuracy: m(|r| r.instruction_following_accuracy),
                spearman_rho: m(|r| r.spearman_rho),
                n_items: members.iter().map(|r| r.n_items).sum(),
            }
        })
        .collect()
}

