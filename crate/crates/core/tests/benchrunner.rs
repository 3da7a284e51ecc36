mod common;

use std::process::Command;

use chartjudge::benchrunner::*;
use chartjudge::datamodel::EvalMode;
use chartjudge::mock::{MockOptions, MockServer, MockStrategy};
use common::suite::{write_config, Matrix};

async fn mock(strategy: MockStrategy) -> MockServer {
    MockServer::start(MockOptions {
        strategy,
        ..MockOptions::default()
    })
    .await
    .unwrap()
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_chartjudge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

async fn cli_async(args: Vec<String>) -> std::process::Output {
    tokio::task::spawn_blocking(move || {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        cli(&args)
    })
    .await
    .unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn two_modes_by_two_criteria_is_four_cells() {
    let server = mock(MockStrategy::ByContent).await;
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &server.base_url(), 4, &Matrix::full(), 6);
    let bundle = run_suite(&config).await.unwrap();
    assert_eq!(bundle.metrics.cells.len(), 4);
    for cell in &bundle.metrics.cells {
        assert!(cell.violations().is_empty(), "{:?}", cell.violations());
        assert_eq!(cell.n_items, 6);
        match cell.cell.eval_mode {
            Some(EvalMode::Pairwise) => {
                assert!(cell.judgment_accuracy.is_some());
                assert!(cell.position_bias_rate.is_some());
            }
            _ => assert!(cell.error_distance.is_some()),
        }
    }
    for f in [MANIFEST_FILE, JUDGMENTS_FILE, METRICS_JSON, METRICS_CSV, METRICS_MD] {
        assert!(bundle.dir.join(f).is_file(), "{f} missing");
    }
    // pairwise: 6 items x 2 criteria x 2 orders; pointwise: 6 x 2
    assert_eq!(bundle.records.len(), 36);
    assert_eq!(server.stats().request_count(), 36);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn bias_doubles_pairwise_requests() {
    let server = mock(MockStrategy::ByContent).await;
    let mut counts = Vec::new();
    for bias in [false, true] {
        let dir = tempfile::tempdir().unwrap();
        let matrix = Matrix {
            eval_modes: &["pairwise"],
            criteria: &[&["factual_correctness"], &["factual_correctness", "informativeness"]],
            bias,
        };
        let before = server.stats().request_count();
        let config = write_config(dir.path(), &server.base_url(), 4, &matrix, 5);
        let bundle = run_suite(&config).await.unwrap();
        counts.push(server.stats().request_count() - before);
        assert_eq!(bundle.manifest.n_requests, *counts.last().unwrap());
        let has_bias = bundle.metrics.cells.iter().all(|c| c.position_bias_rate.is_some());
        assert_eq!(has_bias, bias);
    }
    assert_eq!(counts, vec![10, 20]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn warm_rerun_reproduces_the_bundle() {
    let server = mock(MockStrategy::Random(3)).await;
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &server.base_url(), 3, &Matrix::full(), 8);
    let read = |name: &str| std::fs::read(dir.path().join("out/run").join(name)).unwrap();

    let cold = run_suite(&config).await.unwrap();
    assert_eq!(cold.manifest.cache_hit_rate, 0.0);
    let cold_metrics = read(METRICS_JSON);
    let issued = server.stats().request_count();

    let warm = run_suite(&config).await.unwrap();
    assert_eq!(server.stats().request_count(), issued, "warm run hit the endpoint");
    assert_eq!(warm.manifest.cache_hit_rate, 1.0);
    assert_eq!(read(METRICS_JSON), cold_metrics);
    let warm_files: Vec<Vec<u8>> = [JUDGMENTS_FILE, METRICS_CSV, METRICS_MD].iter().map(|f| read(f)).collect();

    let again = run_suite(&config).await.unwrap();
    let again_files: Vec<Vec<u8>> = [JUDGMENTS_FILE, METRICS_CSV, METRICS_MD].iter().map(|f| read(f)).collect();
    assert_eq!(warm_files, again_files);
    assert_eq!(read(METRICS_JSON), cold_metrics);
    assert_eq!(again.manifest.manifest_digest, cold.manifest.manifest_digest);
    assert_eq!(again.manifest.config_digest, cold.manifest.config_digest);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn interrupted_cache_reruns_only_missing_items() {
    let server = mock(MockStrategy::ByContent).await;
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &server.base_url(), 2, &Matrix::full(), 4);
    run_suite(&config).await.unwrap();
    let issued = server.stats().request_count();

    let mut removed = 0;
    for shard in std::fs::read_dir(dir.path().join("out/cache")).unwrap() {
        for entry in std::fs::read_dir(shard.unwrap().path()).unwrap() {
            if removed < 5 {
                std::fs::remove_file(entry.unwrap().path()).unwrap();
                removed += 1;
            }
        }
    }
    let bundle = run_suite(&config).await.unwrap();
    assert_eq!(server.stats().request_count() - issued, removed);
    assert_eq!(bundle.manifest.judges["mock-judge"].cache_hits, issued - removed);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reports_render_in_every_format() {
    let server = mock(MockStrategy::ByContent).await;
    let dir = tempfile::tempdir().unwrap();
    let matrix = Matrix {
        eval_modes: &["pairwise", "pointwise"],
        criteria: &[&["factual_correctness", "informativeness"]],
        bias: false,
    };
    let config = write_config(dir.path(), &server.base_url(), 4, &matrix, 5);
    let bundle = run_suite(&config).await.unwrap();
    let loaded = ReportBundle::load(&bundle.dir).unwrap();
    assert_eq!(loaded.metrics, bundle.metrics);

    let md = render_report(&loaded, ReportFormat::Markdown);
    let header = md
        .lines()
        .find(|l| l.starts_with("| Judge | Pairwise"))
        .expect("multi-criteria layout");
    let cols: Vec<&str> = header.trim_matches('|').split('|').map(str::trim).collect();
    assert_eq!(
        cols,
        [
            "Judge",
            "Pairwise FC",
            "Pairwise I",
            "Pairwise Avg.",
            "Pointwise FC",
            "Pointwise I",
            "Pointwise Avg.",
            "Format Following (Overall Avg.)"
        ]
    );
    assert!(md.contains("## Multi-criteria"));

    let csv = render_report(&loaded, ReportFormat::Csv);
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(rdr.headers().unwrap().len(), 15);
    assert_eq!(rdr.records().count(), 4);

    let json = render_report(&loaded, ReportFormat::Json);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let cell = &v["cells"][0];
    for field in [
        "cell",
        "judgment_accuracy",
        "error_distance",
        "position_bias_rate",
        "length_bias_rate",
        "format_adherence_rate",
        "instruction_following_accuracy",
        "spearman_rho",
        "n_items",
    ] {
        assert!(cell.get(field).is_some(), "{field} missing");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn single_cell_bundle_is_a_one_row_table() {
    let server = mock(MockStrategy::ByContent).await;
    let dir = tempfile::tempdir().unwrap();
    let matrix = Matrix {
        eval_modes: &["pointwise"],
        criteria: &[&["informativeness"]],
        bias: false,
    };
    let config = write_config(dir.path(), &server.base_url(), 4, &matrix, 3);
    let bundle = run_suite(&config).await.unwrap();
    let md = render_markdown(&bundle.metrics);
    let cells_section = md.split("## Single-criterion").next().unwrap();
    let rows = cells_section.lines().filter(|l| l.starts_with("| mock-judge")).count();
    assert_eq!(rows, 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn cli_exit_codes_follow_the_contract() {
    let server = mock(MockStrategy::ByContent).await;
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &server.base_url(), 4, &Matrix::full(), 3);
    let ok = cli_async(vec!["run".into(), config.display().to_string()]).await;
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let report = cli_async(vec![
        "report".into(),
        dir.path().join("out/run").display().to_string(),
        "--format".into(),
        "csv".into(),
    ])
    .await;
    assert_eq!(report.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&report.stdout).starts_with("judge_model,dataset"));

    let parsed = cli_async(vec![
        "parse".into(),
        dir.path().join("out/run").join(JUDGMENTS_FILE).display().to_string(),
    ])
    .await;
    assert_eq!(parsed.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&parsed.stdout).lines().count(), 18);

    // config error
    let text = std::fs::read_to_string(&config).unwrap();
    std::fs::write(&config, text.replace("bias = true", "bias = \"yes\"")).unwrap();
    let bad = cli_async(vec!["run".into(), config.display().to_string()]).await;
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("matrix.bias"));

    // dataset error
    std::fs::write(&config, text.clone()).unwrap();
    std::fs::remove_file(dir.path().join("data/gold.jsonl")).unwrap();
    let missing = cli_async(vec!["run".into(), config.display().to_string()]).await;
    assert_eq!(missing.status.code(), Some(3));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn exhausted_endpoint_exits_with_four() {
    let server = MockServer::start(MockOptions {
        fail_status: Some(503),
        ..MockOptions::default()
    })
    .await
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &server.base_url(), 4, &Matrix::full(), 2);
    let out = cli_async(vec!["run".into(), config.display().to_string()]).await;
    assert_eq!(out.status.code(), Some(4));
    let bundle = ReportBundle::load(&dir.path().join("out/run")).unwrap();
    assert_eq!(bundle.errors.len(), bundle.manifest.n_requests);
    assert!(bundle.errors.iter().all(|e| e.retries_exhausted));
    assert!(bundle.metrics.is_empty());
}

#[test]
fn gold_rows_must_name_a_pair_or_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, responses, gold) = common::suite::write_dataset(dir.path(), 2);
    std::fs::write(
        &gold,
        r#"{"sample_id":"s000","model_a":"m1","criterion":"informativeness","labels":{"ref":"tie"}}"#,
    )
    .unwrap();
    let cfg = DatasetConfig {
        name: "d".into(),
        samples,
        responses,
        gold,
        reference: "ref".into(),
        instruction_following: false,
    };
    let e = LoadedDataset::load(&cfg).unwrap_err();
    assert!(e.to_string().contains("gold line 1"), "{e}");
}

#[test]
fn corrupted_image_is_a_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, responses, gold) = common::suite::write_dataset(dir.path(), 2);
    std::fs::write(dir.path().join("charts/c1.png"), b"tampered").unwrap();
    let cfg = DatasetConfig {
        name: "d".into(),
        samples,
        responses,
        gold,
        reference: "ref".into(),
        instruction_following: false,
    };
    let e = LoadedDataset::load(&cfg).unwrap_err();
    assert!(matches!(e, DatasetError::InvalidSample { ref sample, .. } if sample == "s001"), "{e}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bench_reports_every_run() {
    let server = MockServer::start(MockOptions {
        report_usage: false,
        ..MockOptions::default()
    })
    .await
    .unwrap();
    let out = cli_async(vec![
        "bench".into(),
        server.base_url(),
        "--runs".into(),
        "2".into(),
        "--json".into(),
    ])
    .await;
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert_eq!(report["overall"]["runs"], 2);
    // no usage object, so the counts are estimates
    assert_eq!(report["overall"]["tokens_estimated"], true);
    assert!(report["overall"]["tokens_per_sec"].as_f64().unwrap() > 0.0);
}
