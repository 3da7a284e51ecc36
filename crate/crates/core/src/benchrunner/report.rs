use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use super::run::{MetricsDoc, ReportBundle};
use crate::datamodel::{CriteriaMode, Criterion, EvalMode, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format {other:?} (markdown, csv, json)")),
        }
    }
}

pub fn render_report(bundle: &ReportBundle, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(&bundle.metrics),
        ReportFormat::Csv => render_csv(&bundle.metrics),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&bundle.metrics).expect("metrics serialize");
            s.push('\n');
            s
        }
    }
}

const CSV_HEADER: [&str; 15] = [
    "judge_model",
    "dataset",
    "eval_mode",
    "reference_mode",
    "criteria_mode",
    "criterion",
    "judgment_accuracy",
    "error_distance",
    "position_bias_rate",
    "length_bias_rate",
    "composite_bias",
    "format_adherence_rate",
    "instruction_following_accuracy",
    "spearman_rho",
    "n_items",
];

/// One row per finest cell; empty fields for absent metrics.
pub fn render_csv(doc: &MetricsDoc) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &doc.cells {
        let c = &r.cell;
        w.write_record([
            c.judge_model.clone().unwrap_or_default(),
            c.dataset.clone().unwrap_or_default(),
            c.eval_mode.map(|m| m.to_string()).unwrap_or_default(),
            c.reference_mode.map(|m| m.to_string()).unwrap_or_default(),
            c.criteria_mode.map(|m| m.as_str().to_string()).unwrap_or_default(),
            c.criterion.as_ref().map(|m| m.to_string()).unwrap_or_default(),
            opt(r.judgment_accuracy),
            opt(r.error_distance),
            opt(r.position_bias_rate),
            opt(r.length_bias_rate),
            opt(r.composite_bias),
            r.format_adherence_rate.to_string(),
            opt(r.instruction_following_accuracy),
            opt(r.spearman_rho),
            r.n_items.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{:.2}", x * 100.0))
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

fn row(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
}

fn header(out: &mut String, cols: &[String]) {
    row(out, cols);
    row(out, &vec!["---".to_string(); cols.len()]);
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Rates are shown as percentages; error distance and Spearman as plain
/// numbers.
pub fn render_markdown(doc: &MetricsDoc) -> String {
    let mut out = String::from("# Metrics\n\n");
    if doc.is_empty() {
        out.push_str("No judgments were scored.\n");
        return out;
    }

    out.push_str("## Cells\n\n");
    header(
        &mut out,
        &[
            "Judge", "Dataset", "Mode", "Reference", "Criteria", "Criterion", "Accuracy", "Error Distance",
            "Position Bias", "Length Bias", "Bias", "Format Following", "IF Accuracy", "Spearman", "n",
        ]
        .map(String::from),
    );
    for r in &doc.cells {
        let c = &r.cell;
        row(
            &mut out,
            &[
                c.judge_model.clone().unwrap_or_default(),
                c.dataset.clone().unwrap_or_default(),
                c.eval_mode.map(|m| m.to_string()).unwrap_or_default(),
                c.reference_mode.map(|m| m.to_string()).unwrap_or_default(),
                c.criteria_mode.map(|m| m.as_str().to_string()).unwrap_or_default(),
                c.criterion.as_ref().map(Criterion::abbrev).unwrap_or_default(),
                pct(r.judgment_accuracy),
                num(r.error_distance),
                pct(r.position_bias_rate),
                pct(r.length_bias_rate),
                pct(r.composite_bias),
                pct(Some(r.format_adherence_rate)),
                pct(r.instruction_following_accuracy),
                num(r.spearman_rho),
                r.n_items.to_string(),
            ],
        );
    }

    for mode in [CriteriaMode::SingleCriterion, CriteriaMode::MultiCriteria] {
        summary_table(&mut out, doc, mode);
    }
    bias_table(&mut out, doc);
    out
}

type Getter = fn(&MetricReport) -> Option<f64>;
type Shower = fn(Option<f64>) -> String;

/// Judges as rows; per eval mode one column per criterion plus their
/// average, then the overall format-following rate.
fn summary_table(out: &mut String, doc: &MetricsDoc, mode: CriteriaMode) {
    let rows: Vec<&MetricReport> = doc
        .summary
        .iter()
        .filter(|r| r.cell.criteria_mode == Some(mode))
        .collect();
    if rows.is_empty() {
        return;
    }
    let title = match mode {
        CriteriaMode::SingleCriterion => "Single-criterion",
        CriteriaMode::MultiCriteria => "Multi-criteria",
    };
    let _ = writeln!(out, "\n## {title}\n");
    let eval_modes: BTreeSet<EvalMode> = rows.iter().filter_map(|r| r.cell.eval_mode).collect();
    let criteria: BTreeSet<Criterion> = rows.iter().filter_map(|r| r.cell.criterion.clone()).collect();
    let judges: BTreeSet<String> = rows.iter().filter_map(|r| r.cell.judge_model.clone()).collect();

    let mut cols = vec!["Judge".to_string()];
    for m in &eval_modes {
        let m = match m {
            EvalMode::Pairwise => "Pairwise",
            EvalMode::Pointwise => "Pointwise",
        };
        for c in &criteria {
            cols.push(format!("{m} {}", c.abbrev()));
        }
        cols.push(format!("{m} Avg."));
    }
    cols.push("Format Following (Overall Avg.)".into());
    header(out, &cols);

    let lookup: BTreeMap<(&str, EvalMode, &Criterion), &MetricReport> = rows
        .iter()
        .filter_map(|r| {
            let c = &r.cell;
            Some(((c.judge_model.as_deref()?, c.eval_mode?, c.criterion.as_ref()?), *r))
        })
        .collect();
    for judge in &judges {
        let mut cells = vec![judge.clone()];
        for &m in &eval_modes {
            let (value, show): (Getter, Shower) = match m {
                EvalMode::Pairwise => (|r| r.judgment_accuracy, pct),
                EvalMode::Pointwise => (|r| r.error_distance, num),
            };
            let mut present = Vec::new();
            for c in &criteria {
                let v = lookup.get(&(judge.as_str(), m, c)).and_then(|r| value(r));
                present.extend(v);
                cells.push(show(v));
            }
            cells.push(show(mean(&present)));
        }
        let format = doc
            .overall
            .iter()
            .find(|r| r.cell.judge_model.as_deref() == Some(judge) && r.cell.criteria_mode == Some(mode))
            .map(|r| r.format_adherence_rate);
        cells.push(pct(format));
        row(out, &cells);
    }
}

/// Mean bias rates over the finest cells that have them, per judge. The
/// `Cells` column says how many entered each mean.
fn bias_table(out: &mut String, doc: &MetricsDoc) {
    let mut by_judge: BTreeMap<&str, [Vec<f64>; 3]> = BTreeMap::new();
    for r in &doc.cells {
        let Some(judge) = r.cell.judge_model.as_deref() else { continue };
        if r.position_bias_rate.is_none() && r.length_bias_rate.is_none() {
            continue;
        }
        let e = by_judge.entry(judge).or_default();
        e[0].extend(r.position_bias_rate);
        e[1].extend(r.length_bias_rate);
        e[2].extend(r.composite_bias);
    }
    if by_judge.is_empty() {
        return;
    }
    out.push_str("\n## Bias\n\n");
    header(
        out,
        &["Judge", "Position", "Length", "Bias", "Cells"].map(String::from),
    );
    for (judge, [pos, len, comp]) in by_judge {
        row(
            out,
            &[
                judge.to_string(),
                pct(mean(&pos)),
                pct(mean(&len)),
                pct(mean(&comp)),
                pos.len().max(len.len()).to_string(),
            ],
        );
    }
}
