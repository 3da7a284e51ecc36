use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use chartjudge::datamodel::*;
use chartjudge::mock::{MockOptions, MockServer};
use serde_json::{json, Value};

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_chartjudge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn sample(dir: &Path, id: &str, source: Source) -> ChartSample {
    std::fs::write(dir.join(format!("{id}.png")), id.as_bytes()).unwrap();
    ChartSample {
        id: id.into(),
        image: ImageRef::from_bytes(format!("{id}.png"), id.as_bytes()),
        task_kind: TaskKind::Captioning,
        query: None,
        gold_reference: Some("Shares rose from 20% to 35% between 2010 and 2020.".into()),
        source,
        chart_type: Some(ChartType::Line),
        complexity: None,
        synthetic_query: false,
    }
}

fn teacher_line(dir: &Path, i: usize) -> String {
    let id = format!("t{i:03}");
    let pairwise = i % 2 == 0;
    let (mode, responses, raw) = if pairwise {
        let pick = ["Model A", "Model B", "Tie"][i % 3];
        (
            EvalMode::Pairwise,
            vec![
                CandidateResponse::new("gen-1", "Shares rose."),
                CandidateResponse::new("gen-2", "Shares rose to 35%."),
            ],
            json!({"Model": pick, "Explanation": "Compared both."}).to_string(),
        )
    } else {
        (
            EvalMode::Pointwise,
            vec![CandidateResponse::new("gen-1", "Shares rose.")],
            format!("```json\n{}\n```", json!({"Score": 1 + i % 5, "Explanation": "Checked values."})),
        )
    };
    let record = json!({
        "sample": sample(dir, &id, Source::Statista),
        "responses": responses,
        "judgment": {
            "spec": JudgmentSpec::new(mode, ReferenceMode::WithReference, vec![Criterion::Informativeness], "teacher").unwrap(),
            "sample_id": id,
            "raw_text": raw,
            "prompt_digest": "",
            "latency_ms": 0.0,
        },
    });
    record.to_string()
}

fn write_inputs(dir: &Path, n: usize, schema: &str) -> std::path::PathBuf {
    let mut teacher = String::new();
    for i in 0..n {
        writeln!(teacher, "{}", teacher_line(dir, i)).unwrap();
    }
    writeln!(teacher, "{}", teacher_line(dir, 999).replace("\\\"Score\\\":", "\\\"Rating\\\":")).unwrap();
    std::fs::write(dir.join("teacher.jsonl"), teacher).unwrap();
    let config = format!(
        "teacher_judgments = \"teacher.jsonl\"\neval_judges = [\"gpt-4o\"]\nschema = \"{schema}\"\nseed = 5\noutput = \"train.jsonl\"\n"
    );
    let path = dir.join("build.toml");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn builds_to_a_custom_schema() {
    let dir = tempfile::tempdir().unwrap();
    let schema = json!({
        "criteria_mode": "single_criterion",
        "labels": [
            {"eval_mode": "pointwise", "label": 1, "count": 2},
            {"eval_mode": "pointwise", "label": 2, "count": 2},
            {"eval_mode": "pairwise", "label": "model_a", "count": 3},
            {"eval_mode": "pairwise", "label": "tie", "count": 1},
        ],
        "sources": [{"source": "statista", "count": 8}],
    });
    std::fs::write(dir.path().join("schema.json"), schema.to_string()).unwrap();
    let config = write_inputs(dir.path(), 60, "schema.json");
    let out = cli(&["build-dataset", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["n_records"], 8);
    assert_eq!(summary["labels"]["pairwise/model_a"], 3);
    assert_eq!(summary["labels"]["pointwise/1"], 2);
    assert_eq!(summary["sources"]["statista"], 8);
    assert_eq!(summary["ingest"]["dropped_failed"], 1);

    let text = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 8);
    let digest = sha256_hex(text.as_bytes());
    assert_eq!(summary["sha256"], digest);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["messages"][0]["role"], "user");
    assert_eq!(first["messages"][1]["role"], "assistant");

    // same seed, same bytes
    let again = cli(&["build-dataset", config.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap(), text);
}

#[test]
fn short_pool_is_a_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_inputs(dir.path(), 20, "table1_single_criterion");
    let out = cli(&["build-dataset", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pool cannot fill"));
}

#[test]
fn inconsistent_schema_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_inputs(dir.path(), 4, "table1_multi_criteria");
    let out = cli(&["build-dataset", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2826"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn question_stage_writes_synthetic_samples() {
    let server = MockServer::start(MockOptions::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut pew = String::new();
    for i in 0..3 {
        writeln!(pew, "{}", serde_json::to_string(&sample(dir.path(), &format!("p{i}"), Source::Pew)).unwrap()).unwrap();
    }
    std::fs::write(dir.path().join("pew.jsonl"), pew).unwrap();
    let config = write_inputs(dir.path(), 10, "table1_multi_criteria_labels");
    let mut text = std::fs::read_to_string(&config).unwrap();
    text = text.replace("table1_multi_criteria_labels", "schema.json");
    write!(
        text,
        "\n[questions]\nsamples = \"pew.jsonl\"\noutput = \"pew_qa.jsonl\"\n\n[questions.endpoint]\nbase_url = \"{}\"\nmodel = \"generator\"\n",
        server.base_url()
    )
    .unwrap();
    std::fs::write(&config, text).unwrap();
    let schema = json!({
        "criteria_mode": "single_criterion",
        "labels": [{"eval_mode": "pointwise", "label": 2, "count": 1}],
    });
    std::fs::write(dir.path().join("schema.json"), schema.to_string()).unwrap();

    let path = config.clone();
    let out = tokio::task::spawn_blocking(move || cli(&["build-dataset", path.to_str().unwrap()]))
        .await
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let samples: Vec<ChartSample> = read_jsonl(dir.path().join("pew_qa.jsonl")).unwrap();
    assert_eq!(samples.len(), 3);
    for s in &samples {
        assert_eq!(s.task_kind, TaskKind::OpenQa);
        assert!(s.synthetic_query);
        assert!(s.query.as_deref().is_some_and(|q| q.ends_with('?')));
    }
}
