//! Synthetic training-candidate pools for sampler checks.

use chartjudge::databuilder::TrainingCandidate;
use chartjudge::datamodel::{
    ChartSample, ChartType, Criterion, EvalMode, GoldLabel, ImageRef, JudgmentSpec, Preference, ReferenceMode, Score,
    Source, TaskKind,
};

fn candidate(i: usize, source: Source, mode: EvalMode, label: GoldLabel, criteria: Vec<Criterion>) -> TrainingCandidate {
    let id = format!("c{i:06}");
    TrainingCandidate {
        id: id.clone(),
        sample: ChartSample {
            id: id.clone(),
            image: ImageRef::from_bytes(format!("{id}.png"), id.as_bytes()),
            task_kind: TaskKind::Captioning,
            query: None,
            gold_reference: Some("A summary.".into()),
            source,
            chart_type: Some([ChartType::Bar, ChartType::Line, ChartType::Pie][i % 3]),
            complexity: None,
            synthetic_query: false,
        },
        spec: JudgmentSpec::new(mode, ReferenceMode::WithReference, criteria, "teacher").unwrap(),
        teacher_model: "teacher".into(),
        prompt_text: "prompt".into(),
        target: "{}".into(),
        label,
        rationale: String::new(),
    }
}

pub fn labels() -> Vec<(EvalMode, GoldLabel)> {
    let mut out: Vec<_> = (1..=5)
        .map(|s| (EvalMode::Pointwise, GoldLabel::Score(Score::new(s).unwrap())))
        .collect();
    for p in [Preference::Tie, Preference::ModelA, Preference::ModelB] {
        out.push((EvalMode::Pairwise, GoldLabel::Preference(p)));
    }
    out
}

/// `per_cell` candidates for every (source, label) pair, cycling through
/// `criteria_sets`.
pub fn pool(per_cell: usize, sources: &[Source], criteria_sets: &[Vec<Criterion>]) -> Vec<TrainingCandidate> {
    let mut out = Vec::new();
    for &src in sources {
        for (mode, label) in labels() {
            for k in 0..per_cell {
                let criteria = criteria_sets[k % criteria_sets.len()].clone();
                out.push(candidate(out.len(), src, mode, label, criteria));
            }
        }
    }
    out
}
