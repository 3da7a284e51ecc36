//! Verdict extraction from noisy judge output.
//!
//! [`extract_payload`] runs a fixed ladder of passes and stops at the first
//! one that yields a payload matching the reply contract of the spec:
//!
//! 1. the whole text parsed as JSON,
//! 2. the single Markdown code fence parsed as JSON,
//! 3. several JSON objects on consecutive lines, wrapped into an array,
//! 4. lenient repair (bracket-region extraction, quote and comma fixes,
//!    reshaping of near-miss payloads).
//!
//! Passes 1 and 2 count as format-adherent (`Strict`); 3 and 4 produce
//! `Repaired` verdicts whose `repair_trace` names what was changed.

mod repair;
mod resolve;

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::datamodel::{
    Adherence, EvalMode, JudgmentSpec, ParsedVerdict, Score, VerdictEntry, VerdictItem, VerdictValue,
};

pub use resolve::{
    normalize_type, parse_label, resolve_label, resolve_multicriteria, resolve_pairwise, AssignmentReport,
    ResolveError,
};

/// One rung of the repair ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RepairPass {
    StrictWhole,
    FencedBlock,
    JsonLines,
    Lenient,
}

impl RepairPass {
    pub fn name(self) -> &'static str {
        match self {
            RepairPass::StrictWhole => "strict_whole",
            RepairPass::FencedBlock => "fenced_block",
            RepairPass::JsonLines => "json_lines",
            RepairPass::Lenient => "lenient",
        }
    }

    fn is_strict(self) -> bool {
        matches!(self, RepairPass::StrictWhole | RepairPass::FencedBlock)
    }
}

pub const LADDER: [RepairPass; 4] = [
    RepairPass::StrictWhole,
    RepairPass::FencedBlock,
    RepairPass::JsonLines,
    RepairPass::Lenient,
];

/// Structured verdict for `raw` under the reply contract of `spec`.
pub fn extract_payload(raw: &str, spec: &JudgmentSpec) -> ParsedVerdict {
    extract_with_passes(raw, spec, &LADDER)
}

/// Like [`extract_payload`] but with an explicit subset of passes, tried in
/// the given order.
pub fn extract_with_passes(raw: &str, spec: &JudgmentSpec, passes: &[RepairPass]) -> ParsedVerdict {
    for &pass in passes {
        match run_pass(pass, raw, spec) {
            Outcome::Accepted(payload) => return finish(payload, pass, spec),
            Outcome::Fatal => return ParsedVerdict::failed(),
            Outcome::Rejected => {}
        }
    }
    ParsedVerdict::failed()
}

/// First ladder pass that accepts `raw`, if any.
pub fn accepting_pass(raw: &str, spec: &JudgmentSpec) -> Option<RepairPass> {
    for pass in LADDER {
        match run_pass(pass, raw, spec) {
            Outcome::Accepted(_) => return Some(pass),
            Outcome::Fatal => return None,
            Outcome::Rejected => {}
        }
    }
    None
}

/// Re-serializes a verdict in the exact shape the reply contract asks for.
pub fn canonical_payload(verdict: &ParsedVerdict, spec: &JudgmentSpec) -> String {
    let value_key = value_key(spec.eval_mode);
    let objects: Vec<Value> = verdict
        .items
        .iter()
        .map(|item| {
            let mut m = Map::new();
            let v = match &item.value {
                VerdictValue::Label(l) => Value::String(l.clone()),
                VerdictValue::Score(s) => Value::from(s.get()),
            };
            m.insert(value_key.to_string(), v);
            m.insert("Explanation".into(), Value::String(item.explanation.clone()));
            if spec.is_multi_criteria() {
                let t = item.type_label.clone().unwrap_or_default();
                m.insert("Type".into(), Value::String(t));
            }
            Value::Object(m)
        })
        .collect();
    let value = if spec.is_multi_criteria() {
        Value::Array(objects)
    } else {
        objects.into_iter().next().unwrap_or(Value::Null)
    };
    serde_json::to_string(&value).expect("json values serialize")
}

struct Payload {
    items: Vec<VerdictItem>,
    trace: Vec<&'static str>,
    salvaged: bool,
}

enum Outcome {
    Accepted(Payload),
    Rejected,
    /// A value outside the reply contract's domain (e.g. score 6). Repairs
    /// never touch values, so the whole record fails.
    Fatal,
}

fn finish(payload: Payload, pass: RepairPass, spec: &JudgmentSpec) -> ParsedVerdict {
    let mut trace: Vec<String> = Vec::new();
    if !pass.is_strict() {
        trace.push(pass.name().to_string());
        for t in &payload.trace {
            if !trace.iter().any(|x| x == t) {
                trace.push((*t).to_string());
            }
        }
    }
    let mut verdict = ParsedVerdict {
        items: payload.items,
        per_criterion: BTreeMap::new(),
        adherence: if pass.is_strict() {
            Adherence::Strict
        } else {
            Adherence::Repaired
        },
        repair_trace: trace,
        degenerate: payload.salvaged,
    };
    let report = resolve_multicriteria(&verdict, spec);
    for (criterion, &idx) in &report.assigned {
        let item = &verdict.items[idx];
        verdict.per_criterion.insert(
            criterion.clone(),
            VerdictEntry {
                value: item.value.clone(),
                explanation: item.explanation.clone(),
            },
        );
    }
    verdict.degenerate |= report.degenerate;
    verdict
}

fn run_pass(pass: RepairPass, raw: &str, spec: &JudgmentSpec) -> Outcome {
    match pass {
        RepairPass::StrictWhole => match serde_json::from_str::<Value>(raw.trim()) {
            Ok(v) => strict_items(&v, spec),
            Err(_) => Outcome::Rejected,
        },
        RepairPass::FencedBlock => fenced_pass(raw, spec),
        RepairPass::JsonLines => match json_lines(raw.trim()) {
            Some(values) => strict_items(&Value::Array(values), spec),
            None => Outcome::Rejected,
        },
        RepairPass::Lenient => lenient_pass(raw, spec),
    }
}

fn strict_items(value: &Value, spec: &JudgmentSpec) -> Outcome {
    match validate(value, spec) {
        Validation::Valid(items) => Outcome::Accepted(Payload {
            items,
            trace: Vec::new(),
            salvaged: false,
        }),
        Validation::Fatal => Outcome::Fatal,
        Validation::Invalid => Outcome::Rejected,
    }
}

/// Markdown code fences: an opening line that starts with three backticks,
/// content lines, and a closing line (or line end) of three backticks.
fn fenced_blocks(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        let t = line.trim();
        match current.as_mut() {
            None => {
                if let Some(rest) = t.strip_prefix("```") {
                    if rest.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                        current = Some(Vec::new());
                    }
                }
            }
            Some(lines) => {
                if t == "```" {
                    blocks.push(lines.join("\n"));
                    current = None;
                } else if let Some(body) = t.strip_suffix("```") {
                    lines.push(body);
                    blocks.push(lines.join("\n"));
                    current = None;
                } else {
                    lines.push(line);
                }
            }
        }
    }
    blocks
}

fn fenced_pass(raw: &str, spec: &JudgmentSpec) -> Outcome {
    let mut accepted = Vec::new();
    for block in fenced_blocks(raw) {
        let Ok(v) = serde_json::from_str::<Value>(block.trim()) else {
            continue;
        };
        match strict_items(&v, spec) {
            Outcome::Accepted(p) => accepted.push(p),
            Outcome::Fatal => return Outcome::Fatal,
            Outcome::Rejected => {}
        }
    }
    if accepted.len() == 1 {
        Outcome::Accepted(accepted.pop().expect("one element"))
    } else {
        Outcome::Rejected
    }
}

/// Two or more JSON objects separated only by whitespace.
fn json_lines(text: &str) -> Option<Vec<Value>> {
    let mut values = Vec::new();
    for v in serde_json::Deserializer::from_str(text).into_iter::<Value>() {
        let v = v.ok()?;
        if !v.is_object() {
            return None;
        }
        values.push(v);
    }
    (values.len() >= 2).then_some(values)
}

fn lenient_pass(raw: &str, spec: &JudgmentSpec) -> Outcome {
    let stripped = repair::strip_fence_markers(raw);
    let mut variants: Vec<(String, Option<&'static str>)> = vec![(raw.to_string(), None)];
    if stripped != raw {
        variants.push((stripped, Some("fence_markers")));
    }
    // a stray quote shifts string boundaries, so fix it before bracket matching
    let dequoted = repair::fix_doubled_quotes(raw);
    if dequoted != raw {
        variants.push((dequoted, Some("doubled_quotes")));
    }
    for (text, variant_tag) in &variants {
        let text = text.as_str();
        for start in repair::opening_brackets(text) {
            let Some(end) = repair::balanced_region(text, start) else {
                continue;
            };
            let mut trace: Vec<&'static str> = variant_tag.iter().copied().collect();
            let outside = text[..start].trim().len() + text[end..].trim().len();
            if outside > 0 {
                trace.push("balanced_region");
            }
            // objects that follow the region on later lines
            let mut regions = vec![&text[start..end]];
            let mut cursor = end;
            loop {
                let rest = &text[cursor..];
                let skipped = rest.len() - rest.trim_start_matches(|c: char| c.is_whitespace() || c == ',').len();
                let next = cursor + skipped;
                if !text[next..].starts_with('{') || !text[start..].starts_with('{') {
                    break;
                }
                match repair::balanced_region(text, next) {
                    Some(e) => {
                        regions.push(&text[next..e]);
                        cursor = e;
                    }
                    None => break,
                }
            }
            let mut candidates: Vec<(String, Vec<&'static str>)> = Vec::new();
            if regions.len() > 1 {
                let mut t = trace.clone();
                t.push("json_lines");
                if text[cursor..].trim().is_empty() && text[..start].trim().is_empty() {
                    t.retain(|x| *x != "balanced_region");
                }
                candidates.push((format!("[{}]", regions.join(",")), t));
            }
            candidates.push((regions[0].to_string(), trace));
            for (candidate, trace) in candidates {
                match lenient_candidate(&candidate, trace, spec) {
                    Outcome::Rejected => continue,
                    other => return other,
                }
            }
        }
    }
    Outcome::Rejected
}

fn lenient_candidate(candidate: &str, trace: Vec<&'static str>, spec: &JudgmentSpec) -> Outcome {
    type Fix = fn(&str) -> String;
    let fixes: [(&'static str, Fix); 4] = [
        ("doubled_quotes", repair::fix_doubled_quotes),
        ("single_quotes", repair::single_to_double_quotes),
        ("unquoted_keys", repair::quote_bare_keys),
        ("trailing_commas", repair::drop_trailing_commas),
    ];
    let mut text = candidate.to_string();
    let mut trace = trace;
    let mut parsed = serde_json::from_str::<Value>(&text).ok();
    for (name, fix) in fixes {
        if parsed.is_some() {
            break;
        }
        let fixed = fix(&text);
        if fixed != text {
            trace.push(name);
            text = fixed;
            parsed = serde_json::from_str::<Value>(&text).ok();
        }
    }
    match parsed {
        Some(value) => reshape(value, trace, spec),
        None => Outcome::Rejected,
    }
}

/// Structural repairs on a parsed value, then validation.
fn reshape(mut value: Value, mut trace: Vec<&'static str>, spec: &JudgmentSpec) -> Outcome {
    if spec.eval_mode == EvalMode::Pairwise {
        if let Some(v) = label_keyed_to_array(&value) {
            value = v;
            trace.push("label_keyed_objects");
        }
    }
    if spec.is_multi_criteria() {
        if value.is_object() {
            value = Value::Array(vec![value]);
            trace.push("wrapped_object");
        }
        if let Value::Array(items) = &mut value {
            let mut moved = false;
            for item in items.iter_mut() {
                moved |= lift_embedded_type(item);
            }
            if moved {
                trace.push("unquoted_type_key");
            }
        }
    }
    match validate(&value, spec) {
        Validation::Valid(items) => return Outcome::Accepted(Payload { items, trace, salvaged: false }),
        Validation::Fatal => return Outcome::Fatal,
        Validation::Invalid => {}
    }
    // keep the objects that do satisfy the contract
    let Value::Array(elems) = &value else {
        return Outcome::Rejected;
    };
    let mut kept = Vec::new();
    for elem in elems {
        match item_from(elem, spec) {
            ItemCheck::Valid(item) => kept.push(item),
            ItemCheck::Fatal => return Outcome::Fatal,
            ItemCheck::Invalid => {}
        }
    }
    if kept.is_empty() {
        return Outcome::Rejected;
    }
    if !spec.is_multi_criteria() {
        kept.truncate(1);
    }
    trace.push("salvaged_objects");
    Outcome::Accepted(Payload {
        items: kept,
        trace,
        salvaged: true,
    })
}

/// `{"Model A": {...}, "Model B": {...}}` becomes an array of objects with
/// the label moved into a `Model` key.
fn label_keyed_to_array(value: &Value) -> Option<Value> {
    let obj = value.as_object()?;
    if obj.is_empty() || find_key(obj, "model").is_some() {
        return None;
    }
    let mut out = Vec::new();
    for (key, inner) in obj {
        parse_label(key).ok()?;
        let mut inner = inner.as_object()?.clone();
        inner.insert("Model".into(), Value::String(key.clone()));
        out.push(Value::Object(inner));
    }
    Some(Value::Array(out))
}

/// Moves a `Type: x` tail out of an explanation string into a `Type` key.
fn lift_embedded_type(item: &mut Value) -> bool {
    let Some(obj) = item.as_object_mut() else {
        return false;
    };
    if find_key(obj, "type").is_some() {
        return false;
    }
    let Some(key) = find_key(obj, "explanation") else {
        return false;
    };
    let Some(expl) = obj[&key].as_str() else {
        return false;
    };
    let re = regex::Regex::new(r"(?i)\btype\s*:\s*([A-Za-z][A-Za-z _-]*[A-Za-z])\s*[.!]?\s*$").expect("static regex");
    let Some(cap) = re.captures(expl.trim_end()) else {
        return false;
    };
    let t = cap[1].to_string();
    obj.insert("Type".into(), Value::String(t));
    true
}

fn find_key(obj: &Map<String, Value>, want: &str) -> Option<String> {
    obj.keys().find(|k| k.trim().eq_ignore_ascii_case(want)).cloned()
}

fn value_key(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Pairwise => "Model",
        EvalMode::Pointwise => "Score",
    }
}

enum Validation {
    Valid(Vec<VerdictItem>),
    Invalid,
    Fatal,
}

enum ItemCheck {
    Valid(VerdictItem),
    Invalid,
    Fatal,
}

fn validate(value: &Value, spec: &JudgmentSpec) -> Validation {
    let elems: Vec<&Value> = match (value, spec.is_multi_criteria()) {
        (Value::Array(a), true) if !a.is_empty() => a.iter().collect(),
        (Value::Object(_), false) => vec![value],
        (Value::Array(a), false) if a.len() == 1 => vec![&a[0]],
        _ => return Validation::Invalid,
    };
    let mut items = Vec::with_capacity(elems.len());
    let mut invalid = false;
    for e in elems {
        match item_from(e, spec) {
            ItemCheck::Valid(item) => items.push(item),
            ItemCheck::Fatal => return Validation::Fatal,
            ItemCheck::Invalid => invalid = true,
        }
    }
    if invalid {
        Validation::Invalid
    } else {
        Validation::Valid(items)
    }
}

fn item_from(value: &Value, spec: &JudgmentSpec) -> ItemCheck {
    let Some(obj) = value.as_object() else {
        return ItemCheck::Invalid;
    };
    let Some(vkey) = find_key(obj, value_key(spec.eval_mode)) else {
        return ItemCheck::Invalid;
    };
    let value = match (spec.eval_mode, &obj[&vkey]) {
        (EvalMode::Pointwise, Value::Number(n)) => {
            let as_int = n.as_i64().or_else(|| {
                n.as_f64()
                    .filter(|f| f.fract() == 0.0 && f.abs() < 1e9)
                    .map(|f| f as i64)
            });
            match as_int.map(Score::new) {
                Some(Ok(s)) => VerdictValue::Score(s),
                _ => return ItemCheck::Fatal,
            }
        }
        (EvalMode::Pairwise, Value::String(s)) if !s.trim().is_empty() => VerdictValue::Label(s.clone()),
        _ => return ItemCheck::Invalid,
    };
    let Some(explanation) = find_key(obj, "explanation").and_then(|k| obj[&k].as_str().map(str::to_string)) else {
        return ItemCheck::Invalid;
    };
    let type_label = find_key(obj, "type").and_then(|k| obj[&k].as_str().map(str::to_string));
    if spec.is_multi_criteria() && type_label.is_none() {
        return ItemCheck::Invalid;
    }
    ItemCheck::Valid(VerdictItem {
        value,
        explanation,
        type_label,
    })
}
