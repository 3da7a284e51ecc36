use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use chartjudge::benchrunner::{
    bench_command, build_dataset, parse_config, render_bench, render_report, run_suite, ReportBundle, ReportFormat,
    RunError, MAX_EXHAUSTED_RATE,
};
use chartjudge::datamodel::{read_jsonl, Adherence, JudgmentRecord, RawJudgment};
use chartjudge::judgeclient::EndpointConfig;
use chartjudge::mock::{MockOptions, MockServer, MockStrategy};
use chartjudge::verdictparse::{accepting_pass, extract_payload};

#[derive(Parser)]
#[command(name = "chartjudge", version, about = "Run vision-language judges over chart tasks and score them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the evaluation matrix of a run config.
    Run { config: PathBuf },
    /// Render the metrics of a finished run directory.
    Report {
        bundle: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Build a distillation set from teacher judgments.
    BuildDataset { config: PathBuf },
    /// Measure output-token throughput of an endpoint.
    Bench {
        /// Base URL, or a TOML/JSON endpoint config file.
        endpoint: String,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        /// Model name when `endpoint` is a URL.
        #[arg(long, default_value = "judge")]
        model: String,
        #[arg(long)]
        json: bool,
    },
    /// Re-parse raw judge outputs (RawJudgment or judgment-archive lines).
    Parse {
        raw: PathBuf,
    },
    /// Serve a mock chat-completions endpoint.
    MockServer {
        #[arg(long, default_value = "127.0.0.1:8089")]
        addr: SocketAddr,
        /// first-slot, by-content, garbage, random:SEED or fixed:TEXT
        #[arg(long, default_value = "by-content", value_parser = parse_strategy)]
        strategy: MockStrategy,
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
        #[arg(long)]
        tokens_per_sec: Option<f64>,
        /// Omit the usage object from replies.
        #[arg(long)]
        no_usage: bool,
        #[arg(long)]
        fail_status: Option<u16>,
    },
}

fn parse_strategy(s: &str) -> Result<MockStrategy, String> {
    match s.split_once(':') {
        Some(("random", seed)) => seed
            .parse()
            .map(MockStrategy::Random)
            .map_err(|e| format!("bad seed: {e}")),
        Some(("fixed", text)) => Ok(MockStrategy::Fixed(text.to_string())),
        _ => match s {
            "first-slot" => Ok(MockStrategy::FirstSlot),
            "by-content" => Ok(MockStrategy::ByContent),
            "garbage" => Ok(MockStrategy::Garbage),
            other => Err(format!("unknown strategy {other:?}")),
        },
    }
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn endpoint_from(arg: &str, model: &str) -> Result<EndpointConfig, RunError> {
    if arg.starts_with("http://") || arg.starts_with("https://") {
        return Ok(EndpointConfig::new(arg, model));
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(path.to_path_buf(), e))?;
    let endpoint: EndpointConfig = parse_config(&text, path)?;
    Ok(endpoint)
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => match run_suite(&config).await {
            Ok(bundle) => {
                println!("{}", bundle.dir.display());
                let worst = bundle.manifest.worst_exhausted_rate();
                if worst > MAX_EXHAUSTED_RATE {
                    eprintln!(
                        "error: {:.1}% of requests exhausted their retries (limit {:.0}%)",
                        worst * 100.0,
                        MAX_EXHAUSTED_RATE * 100.0
                    );
                    return ExitCode::from(4);
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Report { bundle, format } => match ReportBundle::load(&bundle) {
            Ok(b) if b.metrics.is_empty() => {
                eprintln!("error: {} holds no metric cells", bundle.display());
                ExitCode::from(1)
            }
            Ok(b) => {
                print!("{}", render_report(&b, format));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::BuildDataset { config } => match build_dataset(&config).await {
            Ok(summary) => {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Bench {
            endpoint,
            runs,
            model,
            json,
        } => {
            let endpoint = match endpoint_from(&endpoint, &model) {
                Ok(e) => e,
                Err(e) => return fail(e),
            };
            match bench_command(endpoint, runs).await {
                Ok(report) => {
                    if json {
                        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
                    } else {
                        print!("{}", render_bench(&report));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(if e.retries_exhausted() { 4 } else { 1 })
                }
            }
        }
        Command::Parse { raw } => parse_file(&raw),
        Command::MockServer {
            addr,
            strategy,
            latency_ms,
            tokens_per_sec,
            no_usage,
            fail_status,
        } => {
            let options = MockOptions {
                strategy,
                latency_ms,
                tokens_per_sec,
                report_usage: !no_usage,
                fail_status,
                fail_when_contains: None,
            };
            match MockServer::bind(options, addr).await {
                Ok(server) => {
                    log::info!("mock endpoint listening on {}", server.base_url());
                    server.wait().await;
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: cannot bind {addr}: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}

/// Accepts RawJudgment lines or judgment-archive lines.
#[derive(serde::Deserialize)]
#[serde(untagged)]
enum RawLine {
    Record(Box<JudgmentRecord>),
    Raw(RawJudgment),
}

fn parse_file(path: &Path) -> ExitCode {
    let lines: Vec<RawLine> = match read_jsonl(path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let mut counts = [0usize; 3];
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in lines {
        let raw = match line {
            RawLine::Record(r) => r.judgment,
            RawLine::Raw(r) => r,
        };
        let verdict = extract_payload(&raw.raw_text, &raw.spec);
        counts[match verdict.adherence {
            Adherence::Strict => 0,
            Adherence::Repaired => 1,
            Adherence::Failed => 2,
        }] += 1;
        let row = json!({
            "sample_id": raw.sample_id,
            "spec": raw.spec,
            "pass": accepting_pass(&raw.raw_text, &raw.spec).map(|p| p.name()),
            "verdict": verdict,
        });
        if writeln!(out, "{row}").is_err() {
            return ExitCode::from(1);
        }
    }
    eprintln!("strict {} / repaired {} / failed {}", counts[0], counts[1], counts[2]);
    ExitCode::SUCCESS
}
