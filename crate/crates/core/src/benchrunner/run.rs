use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ConfigError, RunConfig};
use super::dataset::{DatasetError, Item, LoadedDataset};
use super::RunError;
use crate::datamodel::{
    read_jsonl, sha256_hex, write_jsonl, CandidateRef, EvalMode, JudgmentRecord, JudgmentSpec, MetricReport, Order,
};
use crate::judgeclient::{JudgeClient, JudgeRequest};
use crate::metrics::{aggregate_with, AggregateOptions, GroupKey};
use crate::promptforge::{PromptForge, TemplateSet};
use crate::verdictparse::extract_payload;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const JUDGMENTS_FILE: &str = "judgments.jsonl";
pub const ERRORS_FILE: &str = "errors.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_MD: &str = "metrics.md";

/// Request accounting for one judge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeTally {
    pub requests: usize,
    pub cache_hits: usize,
    pub errors: usize,
    /// Errors that came after the retry budget was spent.
    pub exhausted: usize,
}

impl JudgeTally {
    pub fn exhausted_rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.exhausted as f64 / self.requests as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 over the config, dataset and template digests below.
    pub manifest_digest: String,
    pub config_digest: String,
    pub dataset_digests: BTreeMap<String, BTreeMap<String, String>>,
    pub template_digests: BTreeMap<String, String>,
    pub judges: BTreeMap<String, JudgeTally>,
    pub n_requests: usize,
    pub cache_hit_rate: f64,
    pub wall_time_secs: f64,
    /// Seconds since the Unix epoch at run start.
    pub started_at: u64,
    pub tool_version: String,
}

impl RunManifest {
    /// Highest share of requests any judge gave up on.
    pub fn worst_exhausted_rate(&self) -> f64 {
        self.judges.values().map(JudgeTally::exhausted_rate).fold(0.0, f64::max)
    }
}

/// Metric reports at three levels of aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    /// One report per (judge, dataset, mode, reference, criteria mode,
    /// criterion).
    pub cells: Vec<MetricReport>,
    /// Averaged over datasets and reference modes.
    pub summary: Vec<MetricReport>,
    /// Per judge and criteria mode, averaged over everything else.
    pub overall: Vec<MetricReport>,
}

impl MetricsDoc {
    pub fn from_records(records: &[JudgmentRecord], options: &AggregateOptions) -> Self {
        Self {
            cells: aggregate_with(records, &GroupKey::ALL, options),
            summary: aggregate_with(
                records,
                &[GroupKey::Judge, GroupKey::EvalMode, GroupKey::CriteriaMode, GroupKey::Criterion],
                options,
            ),
            overall: aggregate_with(records, &[GroupKey::Judge, GroupKey::CriteriaMode], options),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// A request that never produced a judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub dataset: String,
    pub spec: JudgmentSpec,
    pub sample_id: String,
    pub error: String,
    pub retries_exhausted: bool,
}

/// Everything a run leaves in its output directory.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub metrics: MetricsDoc,
    pub records: Vec<JudgmentRecord>,
    pub errors: Vec<ErrorRow>,
}

impl ReportBundle {
    /// Reads a bundle back from a run directory.
    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let read_json = |name: &str| -> Result<Vec<u8>, RunError> {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| RunError::Io(p, e))
        };
        let manifest = serde_json::from_slice(&read_json(MANIFEST_FILE)?)
            .map_err(|e| RunError::Bundle(format!("{MANIFEST_FILE}: {e}")))?;
        let metrics = serde_json::from_slice(&read_json(METRICS_JSON)?)
            .map_err(|e| RunError::Bundle(format!("{METRICS_JSON}: {e}")))?;
        let records = read_jsonl(dir.join(JUDGMENTS_FILE)).map_err(|e| RunError::Bundle(e.to_string()))?;
        let errors_path = dir.join(ERRORS_FILE);
        let errors = if errors_path.exists() {
            read_jsonl(errors_path).map_err(|e| RunError::Bundle(e.to_string()))?
        } else {
            Vec::new()
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            metrics,
            records,
            errors,
        })
    }
}

/// Bookkeeping that travels with a request but is not sent.
struct Job {
    dataset: String,
    request: JudgeRequest,
    candidates: Vec<CandidateRef>,
    gold: BTreeMap<crate::datamodel::Criterion, crate::datamodel::GoldLabel>,
}

/// Every request the matrix calls for, in a fixed order: dataset, eval
/// mode, reference mode, criteria set, item, presentation order.
fn plan(
    config: &RunConfig,
    datasets: &[LoadedDataset],
    forge: &PromptForge,
    judge: &str,
) -> Result<Vec<Job>, RunError> {
    let m = &config.matrix;
    let mut jobs = Vec::new();
    for ds in datasets {
        for &mode in &m.eval_modes {
            let orders: &[Order] = match (mode, m.bias) {
                (EvalMode::Pairwise, true) => &[Order::AB, Order::BA],
                _ => &[Order::AB],
            };
            for &reference_mode in &m.reference_modes {
                for criteria in &m.criteria {
                    let spec = JudgmentSpec::new(mode, reference_mode, criteria.clone(), judge)
                        .map_err(|e| RunError::Config(ConfigError::new("matrix.criteria", e.to_string())))?;
                    for item in ds.items_for(mode) {
                        for &order in orders {
                            jobs.push(job(ds, item, spec.clone().with_order(order), forge)?);
                        }
                    }
                }
            }
        }
    }
    Ok(jobs)
}

fn job(ds: &LoadedDataset, item: &Item, spec: JudgmentSpec, forge: &PromptForge) -> Result<Job, RunError> {
    let sample = &ds.samples[&item.sample_id];
    let responses: Vec<_> = item.models.iter().map(|m| ds.response(&item.sample_id, m)).collect();
    let rendered = match spec.eval_mode {
        EvalMode::Pairwise => forge.render_pairwise(sample, responses[0], responses[1], &spec),
        EvalMode::Pointwise => forge.render_pointwise(sample, responses[0], &spec),
    };
    let prompt = rendered.map_err(|e| {
        RunError::Dataset(DatasetError::InvalidSample {
            dataset: ds.name().to_string(),
            sample: item.sample_id.clone(),
            message: e.to_string(),
        })
    })?;
    let gold = spec
        .criteria
        .iter()
        .filter_map(|c| ds.gold(item, c, spec.reference_mode).map(|g| (c.clone(), g)))
        .collect();
    Ok(Job {
        dataset: ds.name().to_string(),
        candidates: responses
            .iter()
            .map(|r| CandidateRef {
                model_id: r.model_id.clone(),
                char_length: r.char_length,
            })
            .collect(),
        gold,
        request: JudgeRequest {
            prompt,
            spec,
            sample_id: item.sample_id.clone(),
        },
    })
}

fn digest_json<T: Serialize>(value: &T) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(value).expect("manifest parts serialize"));
    hex::encode(h.finalize())
}

/// Loads `config_path`, runs its evaluation matrix and writes the bundle
/// into the configured output directory.
pub async fn run_suite(config_path: &Path) -> Result<ReportBundle, RunError> {
    let started = Instant::now();
    let started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());

    let (config, config_bytes) = RunConfig::load(config_path)?;
    let templates = match &config.templates {
        Some(dir) => TemplateSet::load(dir).map_err(|e| RunError::Config(ConfigError::new("templates", e.to_string())))?,
        None => TemplateSet::builtin(),
    };
    let forge = PromptForge::new(templates).with_params(config.generation);
    let datasets = config
        .datasets
        .iter()
        .map(LoadedDataset::load)
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut tallies = BTreeMap::new();
    for (i, endpoint) in config.judges.iter().enumerate() {
        let client = JudgeClient::new(endpoint.clone(), Some(config.cache_dir()))
            .map_err(|e| RunError::Config(ConfigError::new(format!("judges[{i}]"), e.to_string())))?;
        let jobs = plan(&config, &datasets, &forge, &endpoint.model)?;
        log::info!("judge {}: {} requests", endpoint.model, jobs.len());
        let requests: Vec<JudgeRequest> = jobs.iter().map(|j| j.request.clone()).collect();
        let results = client.batch_evaluate(&requests).await;

        let mut tally = JudgeTally {
            requests: jobs.len(),
            ..JudgeTally::default()
        };
        for (job, result) in jobs.into_iter().zip(results) {
            match result {
                Ok(judgment) => {
                    tally.cache_hits += usize::from(judgment.retrieved_from_cache);
                    let verdict = extract_payload(&judgment.raw_text, &judgment.spec);
                    records.push(JudgmentRecord {
                        dataset: job.dataset,
                        judgment,
                        verdict,
                        candidates: job.candidates,
                        gold: job.gold,
                    });
                }
                Err(e) => {
                    log::warn!("{} {}: {e}", job.dataset, job.request.sample_id);
                    tally.errors += 1;
                    tally.exhausted += usize::from(e.retries_exhausted());
                    errors.push(ErrorRow {
                        dataset: job.dataset,
                        spec: job.request.spec,
                        sample_id: job.request.sample_id,
                        error: e.to_string(),
                        retries_exhausted: e.retries_exhausted(),
                    });
                }
            }
        }
        tallies.insert(endpoint.model.clone(), tally);
    }

    let options = AggregateOptions {
        instruction_datasets: config
            .datasets
            .iter()
            .filter(|d| d.instruction_following)
            .map(|d| d.name.clone())
            .collect(),
    };
    let metrics = MetricsDoc::from_records(&records, &options);

    let dataset_digests: BTreeMap<String, BTreeMap<String, String>> =
        datasets.iter().map(|d| (d.name().to_string(), d.digests.clone())).collect();
    let template_digests = forge.templates().digests();
    let config_digest = sha256_hex(&config_bytes);
    let n_requests: usize = tallies.values().map(|t: &JudgeTally| t.requests).sum();
    let answered: usize = tallies.values().map(|t| t.requests - t.errors).sum();
    let hits: usize = tallies.values().map(|t| t.cache_hits).sum();
    let manifest = RunManifest {
        manifest_digest: digest_json(&(&config_digest, &dataset_digests, &template_digests)),
        config_digest,
        dataset_digests,
        template_digests,
        judges: tallies,
        n_requests,
        cache_hit_rate: if answered == 0 { 0.0 } else { hits as f64 / answered as f64 },
        wall_time_secs: started.elapsed().as_secs_f64(),
        started_at,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };

    let bundle = ReportBundle {
        dir: config.output.dir.clone(),
        manifest,
        metrics,
        records,
        errors,
    };
    write_bundle(&bundle)?;
    log::info!(
        "wrote {} ({} judgments, {} errors, cache hit rate {:.2})",
        bundle.dir.display(),
        bundle.records.len(),
        bundle.errors.len(),
        bundle.manifest.cache_hit_rate
    );
    Ok(bundle)
}

/// Writes every bundle file. Report files are rendered from the metrics
/// alone so they are identical across runs with equal inputs.
pub fn write_bundle(bundle: &ReportBundle) -> Result<(), RunError> {
    let dir = &bundle.dir;
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io(dir.clone(), e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| RunError::Io(p, e))
    };
    write(MANIFEST_FILE, pretty(&bundle.manifest))?;
    write(METRICS_JSON, pretty(&bundle.metrics))?;
    write(METRICS_CSV, super::report::render_csv(&bundle.metrics))?;
    write(METRICS_MD, super::report::render_markdown(&bundle.metrics))?;
    let io = |e: crate::datamodel::JsonlError| RunError::Bundle(e.to_string());
    write_jsonl(dir.join(JUDGMENTS_FILE), &bundle.records).map_err(io)?;
    let errors_path = dir.join(ERRORS_FILE);
    if bundle.errors.is_empty() {
        if errors_path.exists() {
            std::fs::remove_file(&errors_path).map_err(|e| RunError::Io(errors_path, e))?;
        }
    } else {
        write_jsonl(errors_path, &bundle.errors).map_err(io)?;
    }
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("bundle parts serialize");
    s.push('\n');
    s
}
