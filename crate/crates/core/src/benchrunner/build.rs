use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{parse_config, ConfigError};
use super::RunError;
use crate::databuilder::{
    chart_type_marginals, export_training_jsonl, ingest_teacher_judgments, label_counts, sample_to_schema,
    source_counts, synthesize_questions, BuildError, IngestReport, TeacherRecord,
};
use crate::datamodel::{read_jsonl, write_jsonl, ChartSample, DistributionSchema, GenerationParams, GoldLabel};
use crate::judgeclient::{EndpointConfig, JudgeClient};
use crate::promptforge::{PromptForge, TemplateSet};

/// Optional question-generation stage for Pew captioning samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionStage {
    pub samples: PathBuf,
    pub output: PathBuf,
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    /// TeacherRecord JSONL.
    pub teacher_judgments: PathBuf,
    /// Judges used for evaluation; a teacher among them is reported.
    #[serde(default)]
    pub eval_judges: Vec<String>,
    /// `table1_single_criterion`, `table1_multi_criteria`,
    /// `table1_multi_criteria_labels`, or a path to a schema JSON file.
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub downscale: bool,
    pub output: PathBuf,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub questions: Option<QuestionStage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub output: PathBuf,
    pub n_records: usize,
    pub sha256: String,
    pub scale: f64,
    pub ingest: IngestReport,
    pub labels: BTreeMap<String, u64>,
    pub sources: BTreeMap<String, u64>,
    pub chart_types: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub questions_written: Option<usize>,
}

fn label_name(label: &GoldLabel) -> String {
    match label {
        GoldLabel::Preference(p) => p.as_str().to_string(),
        GoldLabel::Score(s) => s.get().to_string(),
    }
}

fn resolve_schema(name: &str, base: &Path) -> Result<DistributionSchema, RunError> {
    let schema = match name {
        "table1_single_criterion" => DistributionSchema::table1_single_criterion(),
        "table1_multi_criteria" => DistributionSchema::table1_multi_criteria(),
        "table1_multi_criteria_labels" => DistributionSchema::table1_multi_criteria().labels_only(),
        path => {
            let p = base.join(path);
            let text = std::fs::read_to_string(&p)
                .map_err(|e| RunError::Config(ConfigError::new("schema", format!("{}: {e}", p.display()))))?;
            serde_json::from_str(&text).map_err(|e| RunError::Config(ConfigError::new("schema", e.to_string())))?
        }
    };
    schema
        .validate()
        .map_err(|e| RunError::Config(ConfigError::new("schema", e.to_string())))?;
    Ok(schema)
}

/// Runs the distillation pipeline described by a build config.
pub async fn build_dataset(config_path: &Path) -> Result<BuildSummary, RunError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| RunError::Config(ConfigError::new(".", format!("{}: {e}", config_path.display()))))?;
    let mut config: BuildConfig = parse_config(&text, config_path)?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let join = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
    config.teacher_judgments = join(&config.teacher_judgments);
    config.output = join(&config.output);
    let schema = resolve_schema(&config.schema, &base)?;

    let templates = match &config.templates {
        Some(dir) => TemplateSet::load(join(dir))
            .map_err(|e| RunError::Config(ConfigError::new("templates", e.to_string())))?,
        None => TemplateSet::builtin(),
    };
    let forge = PromptForge::new(templates).with_params(config.generation);

    let questions_written = match &config.questions {
        Some(stage) => Some(generate_questions(stage, &join, &forge).await?),
        None => None,
    };

    let teacher_base = config.teacher_judgments.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut records: Vec<TeacherRecord> =
        read_jsonl(&config.teacher_judgments).map_err(|e| RunError::Bundle(e.to_string()))?;
    for r in &mut records {
        r.sample.image = r.sample.image.rebased(&teacher_base);
    }
    let ingest = ingest_teacher_judgments(&records, &config.eval_judges, &forge);
    for w in &ingest.warnings {
        log::warn!("{w}");
    }
    log::info!("{} candidates kept, {} dropped", ingest.kept, ingest.dropped());

    let dataset = sample_to_schema(&ingest.pool, &schema, config.seed, config.downscale).map_err(build_error)?;
    let export = export_training_jsonl(&dataset, &config.output).map_err(build_error)?;
    Ok(BuildSummary {
        output: config.output.clone(),
        n_records: export.n_records,
        sha256: export.sha256,
        scale: dataset.scale,
        labels: label_counts(&dataset)
            .into_iter()
            .map(|((mode, label), n)| (format!("{mode}/{}", label_name(&label)), n))
            .collect(),
        sources: source_counts(&dataset)
            .into_iter()
            .map(|(s, n)| (s.to_string(), n))
            .collect(),
        chart_types: chart_type_marginals(&dataset),
        ingest,
        questions_written,
    })
}

async fn generate_questions(
    stage: &QuestionStage,
    join: &dyn Fn(&PathBuf) -> PathBuf,
    forge: &PromptForge,
) -> Result<usize, RunError> {
    let samples_path = join(&stage.samples);
    let samples_base = samples_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut samples: Vec<ChartSample> = read_jsonl(&samples_path).map_err(|e| RunError::Bundle(e.to_string()))?;
    for s in &mut samples {
        s.image = s.image.rebased(&samples_base);
    }
    let client = JudgeClient::new(stage.endpoint.clone(), stage.cache_dir.as_ref().map(join))
        .map_err(|e| RunError::Config(ConfigError::new("questions.endpoint", e.to_string())))?;
    let mut out = Vec::new();
    for result in synthesize_questions(&samples, &client, forge).await {
        match result {
            Ok(s) => out.push(s),
            Err(e) => log::warn!("question generation: {e}"),
        }
    }
    write_jsonl(join(&stage.output), &out).map_err(|e| RunError::Bundle(e.to_string()))?;
    Ok(out.len())
}

fn build_error(e: BuildError) -> RunError {
    match e {
        BuildError::Schema(e) => RunError::Config(ConfigError::new("schema", e.to_string())),
        BuildError::Io(e) => RunError::Bundle(e.to_string()),
        other => RunError::Build(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guide_example_is_valid() {
        let guide = include_str!("../../../../book/src/distillation.md");
        let block = guide.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
        let c: BuildConfig = parse_config(block, Path::new("build.toml")).unwrap();
        assert_eq!(c.seed, 5);
        assert!(c.questions.is_some());
    }
}
