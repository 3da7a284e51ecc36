use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::flow::FlowNetwork;
use super::{BuildError, TrainingCandidate};
use crate::datamodel::{Criterion, DistributionSchema, EvalMode, GoldLabel, Source};

/// A sampled distillation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<TrainingCandidate>,
    pub seed: u64,
    /// Common factor applied to every target (1.0 unless downscaled).
    pub scale: f64,
    pub schema: DistributionSchema,
}

/// A schema cell the pool cannot fill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsufficientCell {
    Label {
        eval_mode: EvalMode,
        label: GoldLabel,
        wanted: u64,
        available: u64,
    },
    Source {
        source: Source,
        wanted: u64,
        available: u64,
    },
    /// Every cell is individually coverable but not all at once.
    Joint { wanted: u64, feasible: u64 },
}

impl fmt::Display for InsufficientCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InsufficientCell::Label {
                eval_mode,
                label,
                wanted,
                available,
            } => {
                let l = match label {
                    GoldLabel::Score(s) => s.to_string(),
                    GoldLabel::Preference(p) => p.as_str().to_string(),
                };
                write!(f, "({eval_mode}, {l}) needs {wanted}, pool has {available}")
            }
            InsufficientCell::Source {
                source,
                wanted,
                available,
            } => write!(f, "source {source} needs {wanted}, pool has {available}"),
            InsufficientCell::Joint { wanted, feasible } => {
                write!(f, "cells jointly need {wanted}, at most {feasible} can be met together")
            }
        }
    }
}

type Cell = (EvalMode, GoldLabel);

struct Plan {
    labels: Vec<(Cell, u64)>,
    /// `None` when the schema has no source marginal.
    sources: Option<Vec<(Source, u64)>>,
    /// Source targets act as upper bounds instead of equalities.
    sources_are_caps: bool,
}

type Network = (FlowNetwork, usize, usize, Vec<(Source, u64)>);

/// Flow network source -> label cells -> sources -> sink, with pool
/// availability on the middle edges.
fn build_network(plan: &Plan, avail: &BTreeMap<(Cell, Source), u64>) -> Network {
    let sources: Vec<(Source, u64)> = match &plan.sources {
        Some(s) => s.clone(),
        None => {
            let mut all: Vec<Source> = avail.keys().map(|(_, s)| *s).collect();
            all.sort();
            all.dedup();
            all.into_iter().map(|s| (s, u64::MAX / 4)).collect()
        }
    };
    let nl = plan.labels.len();
    let ns = sources.len();
    let (s, t) = (0, 1 + nl + ns);
    let mut g = FlowNetwork::new(t + 1);
    for (i, (cell, n)) in plan.labels.iter().enumerate() {
        g.add_edge(s, 1 + i, *n);
        for (j, (src, _)) in sources.iter().enumerate() {
            let a = avail.get(&(*cell, *src)).copied().unwrap_or(0);
            if a > 0 {
                g.add_edge(1 + i, 1 + nl + j, a);
            }
        }
    }
    for (j, (_, n)) in sources.iter().enumerate() {
        g.add_edge(1 + nl + j, t, *n);
    }
    (g, s, t, sources)
}

/// Per-(label cell, source) allocation meeting `plan`, or `None`.
fn allocate(plan: &Plan, avail: &BTreeMap<(Cell, Source), u64>) -> Option<BTreeMap<(Cell, Source), u64>> {
    let wanted: u64 = plan.labels.iter().map(|(_, n)| n).sum();
    let (mut g, s, t, sources) = build_network(plan, avail);
    let nl = plan.labels.len();
    if g.max_flow(s, t) < wanted {
        return None;
    }
    if plan.sources.is_some() && !plan.sources_are_caps {
        let full = sources.iter().enumerate().all(|(j, (_, n))| g.flow_on(1 + nl + j, t) == *n);
        if !full {
            return None;
        }
    }
    let mut out = BTreeMap::new();
    for (i, (cell, _)) in plan.labels.iter().enumerate() {
        for (j, (src, _)) in sources.iter().enumerate() {
            let f = g.flow_on(1 + i, 1 + nl + j);
            if f > 0 {
                out.insert((*cell, *src), f);
            }
        }
    }
    Some(out)
}

fn diagnose(plan: &Plan, avail: &BTreeMap<(Cell, Source), u64>) -> Vec<InsufficientCell> {
    let allowed = |src: &Source| plan.sources.as_ref().map_or(true, |s| s.iter().any(|(x, _)| x == src));
    let mut out = Vec::new();
    for (cell, wanted) in &plan.labels {
        let available: u64 = avail
            .iter()
            .filter(|((c, s), _)| c == cell && allowed(s))
            .map(|(_, n)| n)
            .sum();
        if available < *wanted {
            out.push(InsufficientCell::Label {
                eval_mode: cell.0,
                label: cell.1,
                wanted: *wanted,
                available,
            });
        }
    }
    if let Some(sources) = &plan.sources {
        for (src, wanted) in sources {
            let available: u64 = avail
                .iter()
                .filter(|((c, s), _)| s == src && plan.labels.iter().any(|(l, _)| l == c))
                .map(|(_, n)| n)
                .sum();
            if available < *wanted {
                out.push(InsufficientCell::Source {
                    source: *src,
                    wanted: *wanted,
                    available,
                });
            }
        }
    }
    if out.is_empty() {
        let wanted = plan.labels.iter().map(|(_, n)| n).sum();
        let (mut g, s, t, _) = build_network(plan, avail);
        let feasible = g.max_flow(s, t);
        out.push(InsufficientCell::Joint { wanted, feasible });
    }
    out
}

impl Plan {
    fn scaled(&self, ratio: f64) -> Plan {
        Plan {
            labels: self
                .labels
                .iter()
                .map(|(c, n)| (*c, (*n as f64 * ratio).floor() as u64))
                .collect(),
            sources: self.sources.as_ref().map(|s| {
                s.iter()
                    .map(|(src, n)| (*src, (*n as f64 * ratio).ceil() as u64))
                    .collect()
            }),
            sources_are_caps: true,
        }
    }
}

/// Draws an exact-count dataset from `pool`.
///
/// Only candidates whose criteria mode matches the schema are eligible.
/// Label cells are filled exactly; when the schema has source targets they
/// are met at the same time (the split of each label across sources is
/// chosen by max-flow). Within each (label, source) group candidates are
/// shuffled with `seed` and taken round-robin over criteria so no single
/// criterion dominates a cell. With `downscale`, every target is scaled by
/// the largest common ratio the pool can satisfy.
pub fn sample_to_schema(
    pool: &[TrainingCandidate],
    schema: &DistributionSchema,
    seed: u64,
    downscale: bool,
) -> Result<Dataset, BuildError> {
    schema.validate()?;
    let plan = Plan {
        labels: schema.labels.iter().map(|t| ((t.eval_mode, t.label), t.count)).collect(),
        sources: (!schema.sources.is_empty()).then(|| schema.sources.iter().map(|s| (s.source, s.count)).collect()),
        sources_are_caps: false,
    };

    let mut order: Vec<&TrainingCandidate> = pool
        .iter()
        .filter(|c| c.criteria_mode() == schema.criteria_mode)
        .collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    order.dedup_by(|a, b| a.id == b.id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut groups: BTreeMap<(Cell, Source), Vec<&TrainingCandidate>> = BTreeMap::new();
    for c in order {
        groups.entry(((c.eval_mode(), c.label), c.source())).or_default().push(c);
    }
    let avail: BTreeMap<(Cell, Source), u64> = groups.iter().map(|(k, v)| (*k, v.len() as u64)).collect();

    let (allocation, scale) = match allocate(&plan, &avail) {
        Some(a) => (a, 1.0),
        None if downscale => {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut best = allocate(&plan.scaled(0.0), &avail).unwrap_or_default();
            for _ in 0..40 {
                let mid = (lo + hi) / 2.0;
                match allocate(&plan.scaled(mid), &avail) {
                    Some(a) => {
                        lo = mid;
                        best = a;
                    }
                    None => hi = mid,
                }
            }
            log::warn!("pool too small; targets scaled by {lo:.4}");
            (best, lo)
        }
        None => return Err(BuildError::InsufficientPool(diagnose(&plan, &avail))),
    };

    let mut items = Vec::new();
    for (key, n) in &allocation {
        items.extend(round_robin(&groups[key], *n as usize).into_iter().cloned());
    }
    items.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Dataset {
        items,
        seed,
        scale,
        schema: schema.clone(),
    })
}

/// Takes `n` candidates alternating between criteria sets, each set in its
/// shuffled order.
fn round_robin<'a>(group: &[&'a TrainingCandidate], n: usize) -> Vec<&'a TrainingCandidate> {
    let mut by_criteria: BTreeMap<&[Criterion], Vec<&TrainingCandidate>> = BTreeMap::new();
    for c in group {
        by_criteria.entry(c.criteria()).or_default().push(c);
    }
    let mut queues: Vec<std::vec::IntoIter<&TrainingCandidate>> = by_criteria.into_values().map(|v| v.into_iter()).collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut progressed = false;
        for q in queues.iter_mut() {
            if out.len() == n {
                break;
            }
            if let Some(c) = q.next() {
                out.push(c);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    out
}
