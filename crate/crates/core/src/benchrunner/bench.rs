use std::fmt::Write as _;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    CandidateResponse, ChartSample, Criterion, EvalMode, ImageRef, JudgmentSpec, ReferenceMode, Source, TaskKind,
};
use crate::judgeclient::{EndpointConfig, JudgeClient, JudgeError, Throughput};
use crate::promptforge::{PromptForge, RenderedPrompt, TemplateSet};

/// A 1x1 transparent PNG; the probe measures generation, not vision.
const PROBE_PNG: [u8; 67] = [
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00,
    0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1f, 0x15, 0xc4, 0x89, 0x00, 0x00, 0x00,
    0x0a, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x00, 0x01, 0x00, 0x00, 0x05, 0x00, 0x01, 0x0d, 0x0a, 0x2d,
    0xb4, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    /// One entry per request.
    pub runs: Vec<Throughput>,
    /// Total tokens over summed wall time across all runs.
    pub overall: Throughput,
}

/// The fixed pointwise prompt used for throughput probes.
pub fn probe_prompt(model: &str) -> RenderedPrompt {
    let uri = format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(PROBE_PNG)
    );
    let sample = ChartSample {
        id: "probe".into(),
        image: ImageRef::from_bytes(uri, &PROBE_PNG),
        task_kind: TaskKind::OpenQa,
        query: Some("What is the highest value shown in the chart?".into()),
        gold_reference: None,
        source: Source::Statista,
        chart_type: None,
        complexity: None,
        synthetic_query: false,
    };
    let response = CandidateResponse::new("probe", "The highest value is 42 percent, reached in 2020.");
    let spec = JudgmentSpec::new(
        EvalMode::Pointwise,
        ReferenceMode::WithoutReference,
        vec![Criterion::FactualCorrectness],
        model,
    )
    .expect("single criterion is valid");
    PromptForge::new(TemplateSet::builtin())
        .render_pointwise(&sample, &response, &spec)
        .expect("builtin probe renders")
}

/// Measures output throughput over `n_runs` uncached requests.
pub async fn bench_command(endpoint: EndpointConfig, n_runs: usize) -> Result<BenchReport, JudgeError> {
    if n_runs == 0 {
        return Err(JudgeError::Precondition("n_runs must be at least 1".into()));
    }
    let prompt = probe_prompt(&endpoint.model);
    let model = endpoint.model.clone();
    let client = JudgeClient::new(endpoint, None)?;
    let mut runs = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        runs.push(client.probe_throughput(&prompt, 1).await?);
    }
    let tokens = runs.iter().map(|r| r.total_tokens).sum();
    let secs = runs.iter().map(|r| r.total_secs).sum();
    let mut overall = Throughput::from_totals(tokens, secs, n_runs);
    overall.tokens_estimated = runs.iter().any(|r| r.tokens_estimated);
    Ok(BenchReport { model, runs, overall })
}

pub fn render_bench(report: &BenchReport) -> String {
    let mut out = format!("# Throughput: {}\n\n", report.model);
    out.push_str("| Run | Tokens/s | ms/token | Tokens | Estimated |\n| --- | --- | --- | --- | --- |\n");
    let line = |out: &mut String, label: String, t: &Throughput| {
        let _ = writeln!(
            out,
            "| {label} | {:.2} | {:.2} | {} | {} |",
            t.tokens_per_sec, t.ms_per_token, t.total_tokens, t.tokens_estimated
        );
    };
    for (i, r) in report.runs.iter().enumerate() {
        line(&mut out, (i + 1).to_string(), r);
    }
    line(&mut out, "all".into(), &report.overall);
    out
}
