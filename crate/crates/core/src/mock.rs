//! Scriptable stand-in for a chat-completions endpoint.
//!
//! The mock reads the judge prompt, works out what reply shape is being
//! asked for (pairwise or pointwise, which `Type` values) and answers
//! according to a [`MockStrategy`]. It counts requests and the peak number
//! of requests in flight.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

use crate::judgeclient::estimate_tokens;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MockStrategy {
    /// Always names the first presented slot; scores 4.
    FirstSlot,
    /// Decides from the candidate texts alone, so the same pair gets the
    /// same underlying winner in either presentation order.
    ByContent,
    /// Seeded per prompt, reproducible across runs.
    Random(u64),
    /// Prose that contains no JSON.
    Garbage,
    /// Returns the given text verbatim.
    Fixed(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MockOptions {
    pub strategy: MockStrategy,
    /// Fixed delay before answering.
    pub latency_ms: u64,
    /// When set, the reply is additionally delayed by its token count
    /// divided by this rate.
    pub tokens_per_sec: Option<f64>,
    /// Whether to include a `usage` object.
    pub report_usage: bool,
    /// Answer every request with this HTTP status.
    pub fail_status: Option<u16>,
    /// Answer 500 to prompts containing this text.
    pub fail_when_contains: Option<String>,
}

impl Default for MockOptions {
    fn default() -> Self {
        Self {
            strategy: MockStrategy::ByContent,
            latency_ms: 0,
            tokens_per_sec: None,
            report_usage: true,
            fail_status: None,
            fail_when_contains: None,
        }
    }
}

#[derive(Debug, Default)]
pub struct MockStats {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    requests: AtomicUsize,
}

impl MockStats {
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

struct Shared {
    options: MockOptions,
    stats: Arc<MockStats>,
}

/// A running mock server; stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    stats: Arc<MockStats>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
}

impl MockServer {
    /// Binds to an ephemeral localhost port.
    pub async fn start(options: MockOptions) -> std::io::Result<Self> {
        Self::bind(options, SocketAddr::from(([127, 0, 0, 1], 0))).await
    }

    pub async fn bind(options: MockOptions, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let stats = Arc::new(MockStats::default());
        let app = router(options, stats.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let served = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = served.await {
                log::error!("mock server stopped: {e}");
            }
        });
        Ok(Self {
            addr,
            stats,
            shutdown: Some(tx),
            task: Some(task),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to put in an endpoint config.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> Arc<MockStats> {
        self.stats.clone()
    }

    /// Serves until the process is stopped.
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// The axum router, for embedding in another server.
pub fn router(options: MockOptions, stats: Arc<MockStats>) -> Router {
    let shared = Arc::new(Shared { options, stats });
    Router::new()
        .route("/chat/completions", post(handle))
        .route("/v1/chat/completions", post(handle))
        .with_state(shared)
}

struct InFlight(Arc<MockStats>);

impl InFlight {
    fn enter(stats: &Arc<MockStats>) -> Self {
        stats.requests.fetch_add(1, Ordering::SeqCst);
        let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        stats.peak.fetch_max(now, Ordering::SeqCst);
        InFlight(stats.clone())
    }
}

impl Drop for InFlight {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn handle(State(shared): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    let _guard = InFlight::enter(&shared.stats);
    let opts = &shared.options;
    let prompt = prompt_text(&body);
    if opts.latency_ms > 0 {
        tokio::time::sleep(Duration::from_millis(opts.latency_ms)).await;
    }
    if let Some(status) = opts.fail_status {
        let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return (code, Json(json!({"error": {"message": "scripted failure"}}))).into_response();
    }
    if let Some(needle) = &opts.fail_when_contains {
        if prompt.contains(needle.as_str()) {
            return (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(json!({"error": {"message": "scripted failure"}})),
            )
                .into_response();
        }
    }
    let reply = reply_for(&prompt, &opts.strategy);
    let tokens = estimate_tokens(&reply);
    if let Some(rate) = opts.tokens_per_sec.filter(|r| *r > 0.0) {
        tokio::time::sleep(Duration::from_secs_f64(tokens as f64 / rate)).await;
    }
    let model = body["model"].as_str().unwrap_or("mock");
    let mut out = json!({
        "id": "mock",
        "object": "chat.completion",
        "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": reply}, "finish_reason": "stop"}],
    });
    if opts.report_usage {
        out["usage"] = json!({
            "prompt_tokens": estimate_tokens(&prompt),
            "completion_tokens": tokens,
            "total_tokens": estimate_tokens(&prompt) + tokens,
        });
    }
    Json(out).into_response()
}

fn prompt_text(body: &Value) -> String {
    let mut out = String::new();
    if let Some(messages) = body["messages"].as_array() {
        for m in messages {
            match &m["content"] {
                Value::String(s) => out.push_str(s),
                Value::Array(parts) => {
                    for p in parts {
                        if let Some(t) = p["text"].as_str() {
                            out.push_str(t);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    out
}

#[derive(Debug, PartialEq)]
enum Ask {
    Pairwise { a: String, b: String },
    Pointwise { answer: String },
    Question,
}

/// What the prompt asks for, and which `Type` values (empty for a single
/// criterion).
fn classify(prompt: &str) -> (Ask, Vec<String>) {
    let types = type_values(prompt);
    let ask = if prompt.contains("'Model' key") {
        Ask::Pairwise {
            a: section(prompt, "[Model A Generated"),
            b: section(prompt, "[Model B Generated"),
        }
    } else if prompt.contains("'Score'") {
        Ask::Pointwise {
            answer: section(prompt, "[Model Generated"),
        }
    } else {
        Ask::Question
    };
    (ask, types)
}

fn type_values(prompt: &str) -> Vec<String> {
    let Some(start) = prompt.find("'Type' key will contain") else {
        return Vec::new();
    };
    let rest = &prompt[start + "'Type' key will contain".len()..];
    let clause = rest.split(", depending").next().unwrap_or(rest);
    clause
        .split('\'')
        .enumerate()
        .filter(|(i, _)| i % 2 == 1)
        .map(|(_, s)| s.to_string())
        .collect()
}

/// Body of the bracketed section whose heading starts with `heading`.
fn section(prompt: &str, heading: &str) -> String {
    let Some(start) = prompt.find(heading) else {
        return String::new();
    };
    let after = &prompt[start..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let end = body.find("\n\n[").unwrap_or(body.len());
    body[..end].trim().to_string()
}

fn digest_byte(text: &str) -> u8 {
    Sha256::digest(text.as_bytes())[0]
}

fn payload(items: Vec<(Value, String)>, value_key: &str, types: &[String]) -> String {
    let objects: Vec<Value> = items
        .into_iter()
        .enumerate()
        .map(|(i, (v, expl))| {
            let mut o = serde_json::Map::new();
            o.insert(value_key.into(), v);
            o.insert("Explanation".into(), Value::String(expl));
            if let Some(t) = types.get(i) {
                o.insert("Type".into(), Value::String(t.clone()));
            }
            Value::Object(o)
        })
        .collect();
    if types.is_empty() {
        objects[0].to_string()
    } else {
        Value::Array(objects).to_string()
    }
}

/// Filler that gives replies a realistic length, so that fixed request
/// overhead stays small next to the scripted generation delay.
const RATIONALE: &str = "The judgment compares the stated values and trends against the data plotted in the \
    chart, checks whether the main question is answered directly, and weighs how much relevant detail \
    the response adds beyond the essentials.";

/// The reply text the mock sends for `prompt`.
pub fn reply_for(prompt: &str, strategy: &MockStrategy) -> String {
    match strategy {
        MockStrategy::Garbage => return "I am unable to provide an evaluation in the requested format.".into(),
        MockStrategy::Fixed(text) => return text.clone(),
        _ => {}
    }
    let (ask, types) = classify(prompt);
    let n = types.len().max(1);
    let mut rng = match strategy {
        MockStrategy::Random(seed) => {
            let h = Sha256::digest(prompt.as_bytes());
            let mut s = [0u8; 8];
            s.copy_from_slice(&h[..8]);
            Some(ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(s)))
        }
        _ => None,
    };
    match ask {
        Ask::Question => "What is the overall trend shown in the chart?".into(),
        Ask::Pairwise { a, b } => {
            let items = (0..n)
                .map(|i| {
                    let label = match (strategy, rng.as_mut()) {
                        (MockStrategy::FirstSlot, _) => "Model A",
                        (_, Some(r)) => ["Model A", "Model B", "Tie"][r.gen_range(0..3)],
                        _ => match a.cmp(&b) {
                            std::cmp::Ordering::Less => "Model A",
                            std::cmp::Ordering::Greater => "Model B",
                            std::cmp::Ordering::Equal => "Tie",
                        },
                    };
                    (
                        Value::String(label.into()),
                        format!("{label} is better for criterion {}. {RATIONALE}", i + 1),
                    )
                })
                .collect();
            payload(items, "Model", &types)
        }
        Ask::Pointwise { answer } => {
            let items = (0..n)
                .map(|i| {
                    let score = match (strategy, rng.as_mut()) {
                        (MockStrategy::FirstSlot, _) => 4,
                        (_, Some(r)) => r.gen_range(1..=5),
                        _ => 1 + (digest_byte(&answer).wrapping_add(i as u8)) % 5,
                    };
                    (json!(score), format!("The answer merits a {score}. {RATIONALE}"))
                })
                .collect();
            payload(items, "Score", &types)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::*;
    use crate::promptforge::PromptForge;
    use crate::verdictparse::{extract_payload, resolve_pairwise};

    fn sample() -> ChartSample {
        ChartSample {
            id: "s".into(),
            image: ImageRef::from_bytes("chart.png", b"png"),
            task_kind: TaskKind::OpenQa,
            query: Some("Which is larger?".into()),
            gold_reference: Some("Red".into()),
            source: Source::Opencqa,
            chart_type: None,
            complexity: None,
            synthetic_query: false,
        }
    }

    fn spec(mode: EvalMode, criteria: Vec<Criterion>, order: Order) -> JudgmentSpec {
        JudgmentSpec::new(mode, ReferenceMode::WithReference, criteria, "j")
            .unwrap()
            .with_order(order)
    }

    #[test]
    fn replies_parse_under_their_spec() {
        let forge = PromptForge::default();
        let a = CandidateResponse::new("m1", "Red is larger.");
        let b = CandidateResponse::new("m2", "Blue.");
        let multi = vec![Criterion::Informativeness, Criterion::FactualCorrectness];
        for strategy in [MockStrategy::FirstSlot, MockStrategy::ByContent, MockStrategy::Random(7)] {
            for criteria in [vec![Criterion::Relevance], multi.clone()] {
                let s = spec(EvalMode::Pairwise, criteria.clone(), Order::AB);
                let p = forge.render_pairwise(&sample(), &a, &b, &s).unwrap();
                let v = extract_payload(&reply_for(&p.text, &strategy), &s);
                assert_eq!(v.adherence, Adherence::Strict);
                assert_eq!(v.per_criterion.len(), criteria.len());
                assert!(!v.degenerate);

                let s = spec(EvalMode::Pointwise, criteria.clone(), Order::AB);
                let p = forge.render_pointwise(&sample(), &a, &s).unwrap();
                let v = extract_payload(&reply_for(&p.text, &strategy), &s);
                assert_eq!(v.adherence, Adherence::Strict);
                assert_eq!(v.per_criterion.len(), criteria.len());
            }
        }
    }

    #[test]
    fn by_content_is_order_independent() {
        let forge = PromptForge::default();
        let a = CandidateResponse::new("m1", "Red is larger.");
        let b = CandidateResponse::new("m2", "Blue.");
        let mut prefs = Vec::new();
        for order in [Order::AB, Order::BA] {
            let s = spec(EvalMode::Pairwise, vec![Criterion::Relevance], order);
            let p = forge.render_pairwise(&sample(), &a, &b, &s).unwrap();
            let v = extract_payload(&reply_for(&p.text, &MockStrategy::ByContent), &s);
            prefs.push(resolve_pairwise(&v, order).unwrap());
        }
        assert_eq!(prefs[0], prefs[1]);
        assert_eq!(prefs[0][&Criterion::Relevance], Preference::ModelB);
    }

    #[test]
    fn garbage_fails_to_parse() {
        let s = spec(EvalMode::Pointwise, vec![Criterion::Relevance], Order::AB);
        assert!(extract_payload(&reply_for("x", &MockStrategy::Garbage), &s).is_failed());
    }
}
