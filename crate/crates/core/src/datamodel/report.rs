use std::fmt;

use serde::{Deserialize, Serialize};

use super::judgment::{CriteriaMode, Criterion, EvalMode, ReferenceMode};

/// Grouping coordinates of a metric cell. `None` means the coordinate was
/// averaged out.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub judge_model: Option<String>,
    pub dataset: Option<String>,
    pub eval_mode: Option<EvalMode>,
    pub reference_mode: Option<ReferenceMode>,
    pub criteria_mode: Option<CriteriaMode>,
    pub criterion: Option<Criterion>,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn or_star<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "*".to_string(), |x| x.to_string())
        }
        write!(
            f,
            "{}/{}/{}/{}/{}/{}",
            or_star(&self.judge_model),
            or_star(&self.dataset),
            or_star(&self.eval_mode),
            or_star(&self.reference_mode),
            self.criteria_mode.map_or("*", |m| m.as_str()),
            or_star(&self.criterion),
        )
    }
}

/// Aggregated metric values for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cell: CellKey,
    pub judgment_accuracy: Option<f64>,
    pub error_distance: Option<f64>,
    pub position_bias_rate: Option<f64>,
    pub length_bias_rate: Option<f64>,
    pub composite_bias: Option<f64>,
    pub format_adherence_rate: f64,
    pub instruction_following_accuracy: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub n_items: usize,
}

impl MetricReport {
    /// Lists every interval or presence rule the report breaks.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, v: Option<f64>, lo: f64, hi: f64| {
            if let Some(v) = v {
                if !(lo..=hi).contains(&v) {
                    out.push(format!("{name} = {v} outside [{lo}, {hi}]"));
                }
            }
        };
        check("judgment_accuracy", self.judgment_accuracy, 0.0, 1.0);
        check("error_distance", self.error_distance, 0.0, 5.0);
        check("position_bias_rate", self.position_bias_rate, 0.0, 1.0);
        check("length_bias_rate", self.length_bias_rate, 0.0, 1.0);
        check("composite_bias", self.composite_bias, 0.0, 1.0);
        check("format_adherence_rate", Some(self.format_adherence_rate), 0.0, 1.0);
        check(
            "instruction_following_accuracy",
            self.instruction_following_accuracy,
            0.0,
            1.0,
        );
        check("spearman_rho", self.spearman_rho, -1.0, 1.0);
        if self.n_items == 0 {
            out.push("n_items is zero".into());
        }
        match self.cell.eval_mode {
            Some(EvalMode::Pairwise) if self.error_distance.is_some() => {
                out.push("error_distance on a pairwise cell".into())
            }
            Some(EvalMode::Pointwise) if self.judgment_accuracy.is_some() => {
                out.push("judgment_accuracy on a pointwise cell".into())
            }
            _ => {}
        }
        out
    }
}
