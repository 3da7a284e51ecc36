//! On-disk run fixtures: a small chart dataset plus a run config pointing
//! at a given endpoint.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

pub struct Matrix<'a> {
    pub eval_modes: &'a [&'a str],
    pub criteria: &'a [&'a [&'a str]],
    pub bias: bool,
}

impl Matrix<'_> {
    pub fn full() -> Matrix<'static> {
        Matrix {
            eval_modes: &["pairwise", "pointwise"],
            criteria: &[&["factual_correctness"], &["informativeness"]],
            bias: true,
        }
    }
}

/// Writes `n` open-QA samples, two responses each, and gold rows for both
/// criteria in both modes. Returns (samples, responses, gold).
pub fn write_dataset(dir: &Path, n: usize) -> (PathBuf, PathBuf, PathBuf) {
    std::fs::create_dir_all(dir.join("charts")).unwrap();
    let mut samples = String::new();
    let mut responses = String::new();
    let mut gold = String::new();
    let prefs = ["model_a", "model_b", "tie"];
    for i in 0..n {
        let rel = format!("charts/c{i}.png");
        let bytes = format!("chart bytes {i}");
        std::fs::write(dir.join(&rel), &bytes).unwrap();
        let digest = chartjudge::datamodel::sha256_hex(bytes.as_bytes());
        let id = format!("s{i:03}");
        let sample = json!({
            "id": id,
            "image": {"uri": rel, "sha256": digest},
            "task_kind": "open_qa",
            "query": format!("What is the value in year {}?", 2000 + i),
            "gold_reference": format!("The value is {i} percent."),
            "source": "opencqa",
            "chart_type": "bar",
        });
        writeln!(samples, "{sample}").unwrap();
        // alternate which model writes the longer answer
        let (short, long) = (format!("It is {i}."), format!("The chart shows a value of {i} percent in that year."));
        let (t1, t2) = if i % 2 == 0 { (short, long) } else { (long, short) };
        writeln!(responses, "{}", json!({"sample_id": id, "model_id": "m1", "text": t1})).unwrap();
        writeln!(responses, "{}", json!({"sample_id": id, "model_id": "m2", "text": t2})).unwrap();
        for (k, criterion) in ["factual_correctness", "informativeness"].iter().enumerate() {
            let pref = prefs[(i + k) % 3];
            writeln!(
                gold,
                "{}",
                json!({"sample_id": id, "model_a": "m1", "model_b": "m2", "criterion": criterion,
                       "labels": {"ref": pref}})
            )
            .unwrap();
            let score = 1 + (i + 2 * k) % 5;
            writeln!(
                gold,
                "{}",
                json!({"sample_id": id, "model": "m1", "criterion": criterion, "labels": {"ref": score}})
            )
            .unwrap();
        }
    }
    let paths = (dir.join("samples.jsonl"), dir.join("responses.jsonl"), dir.join("gold.jsonl"));
    std::fs::write(&paths.0, samples).unwrap();
    std::fs::write(&paths.1, responses).unwrap();
    std::fs::write(&paths.2, gold).unwrap();
    paths
}

/// Writes `run.toml` into `dir` and returns its path. Paths in the config
/// are relative to `dir`.
pub fn write_config(dir: &Path, base_url: &str, max_concurrency: usize, matrix: &Matrix, n_items: usize) -> PathBuf {
    write_dataset(&dir.join("data"), n_items);
    let list = |xs: &[&str]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    let criteria = matrix
        .criteria
        .iter()
        .map(|c| format!("[{}]", list(c)))
        .collect::<Vec<_>>()
        .join(", ");
    let text = format!(
        r#"[[datasets]]
name = "demo"
samples = "data/samples.jsonl"
responses = "data/responses.jsonl"
gold = "data/gold.jsonl"
reference = "ref"

[[judges]]
base_url = "{base_url}"
model = "mock-judge"
max_concurrency = {max_concurrency}
timeout_secs = 10.0

[judges.retry]
max_attempts = 2
backoff_base_ms = 1
jitter = false

[matrix]
eval_modes = [{modes}]
reference_modes = ["with_reference"]
criteria = [{criteria}]
bias = {bias}

[output]
dir = "out/run"
cache_dir = "out/cache"
"#,
        modes = list(matrix.eval_modes),
        bias = matrix.bias,
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}
