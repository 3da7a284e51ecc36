use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Criterion, EvalMode, GenerationParams, JudgmentSpec, ReferenceMode};
use crate::judgeclient::EndpointConfig;

/// A configuration problem, located by the dotted path of the offending key.
#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    /// ChartSample JSONL.
    pub samples: PathBuf,
    /// Candidate responses, one `{sample_id, model_id, text}` per line.
    pub responses: PathBuf,
    /// Reference judgments, one criterion per line.
    pub gold: PathBuf,
    /// Key inside each gold line's `labels` map to score against.
    pub reference: String,
    /// Gold labels are instruction-following annotations.
    #[serde(default)]
    pub instruction_following: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub eval_modes: Vec<EvalMode>,
    pub reference_modes: Vec<ReferenceMode>,
    /// Each inner list is one judgment request's criteria set.
    pub criteria: Vec<Vec<Criterion>>,
    /// Run pairwise cells in both presentation orders.
    #[serde(default)]
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Response cache; defaults to `cache` next to the run directory.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of prompt templates overriding the built-in set.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub generation: GenerationParams,
    pub datasets: Vec<DatasetConfig>,
    pub judges: Vec<EndpointConfig>,
    pub matrix: MatrixConfig,
    pub output: OutputConfig,
}

/// Parses TOML, or JSON when the path ends in `.json`.
pub fn parse_config<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().to_string())
        })
    } else {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().message().to_string())
        })
    }
}

impl RunConfig {
    /// Reads and validates a run configuration. Relative paths inside it are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError::new(".", format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| ConfigError::new(".", "config is not UTF-8"))?;
        let mut config: RunConfig = parse_config(&text, path)?;
        config.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase(base);
        Ok((config, bytes))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.datasets.is_empty() {
            return Err(ConfigError::new("datasets", "at least one dataset is required"));
        }
        let mut names = BTreeSet::new();
        for (i, d) in self.datasets.iter().enumerate() {
            if d.name.trim().is_empty() {
                return Err(ConfigError::new(format!("datasets[{i}].name"), "must not be empty"));
            }
            if !names.insert(d.name.as_str()) {
                return Err(ConfigError::new(format!("datasets[{i}].name"), format!("duplicate dataset {:?}", d.name)));
            }
            if d.reference.trim().is_empty() {
                return Err(ConfigError::new(format!("datasets[{i}].reference"), "must not be empty"));
            }
        }
        if self.judges.is_empty() {
            return Err(ConfigError::new("judges", "at least one judge is required"));
        }
        let mut models = BTreeSet::new();
        for (i, j) in self.judges.iter().enumerate() {
            j.validate().map_err(|e| ConfigError::new(format!("judges[{i}]"), e.to_string()))?;
            if !models.insert(j.model.as_str()) {
                return Err(ConfigError::new(format!("judges[{i}].model"), format!("duplicate judge {:?}", j.model)));
            }
        }
        let m = &self.matrix;
        for (key, empty) in [
            ("matrix.eval_modes", m.eval_modes.is_empty()),
            ("matrix.reference_modes", m.reference_modes.is_empty()),
            ("matrix.criteria", m.criteria.is_empty()),
        ] {
            if empty {
                return Err(ConfigError::new(key, "must not be empty"));
            }
        }
        for (i, set) in m.criteria.iter().enumerate() {
            JudgmentSpec::new(EvalMode::Pointwise, ReferenceMode::WithReference, set.clone(), "judge")
                .map_err(|e| ConfigError::new(format!("matrix.criteria[{i}]"), e.to_string()))?;
        }
        if self.generation.max_output_tokens == 0 {
            return Err(ConfigError::new("generation.max_output_tokens", "must be positive"));
        }
        Ok(())
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(t) = self.templates.as_mut() {
            join(t);
        }
        for d in &mut self.datasets {
            join(&mut d.samples);
            join(&mut d.responses);
            join(&mut d.gold);
        }
        join(&mut self.output.dir);
        if let Some(c) = self.output.cache_dir.as_mut() {
            join(c);
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        match &self.output.cache_dir {
            Some(c) => c.clone(),
            None => self
                .output
                .dir
                .parent()
                .map_or_else(|| PathBuf::from("cache"), |p| p.join("cache")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[datasets]]
name = "demo"
samples = "s.jsonl"
responses = "r.jsonl"
gold = "g.jsonl"
reference = "gpt-4o"

[[judges]]
base_url = "http://localhost:1"
model = "judge"

[matrix]
eval_modes = ["pairwise", "pointwise"]
reference_modes = ["with_reference"]
criteria = [["factual_correctness"], ["informativeness"]]
bias = true

[output]
dir = "runs/demo"
"#;

    #[test]
    fn minimal_toml_parses() {
        let c: RunConfig = parse_config(MINIMAL, Path::new("run.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.judges[0].max_concurrency, 4);
        assert!(c.matrix.bias);
        assert_eq!(c.generation, GenerationParams::default());
    }

    #[test]
    fn json_is_accepted() {
        let v: toml::Value = toml::from_str(MINIMAL).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let c: RunConfig = parse_config(&json, Path::new("run.json")).unwrap();
        assert_eq!(c.datasets[0].reference, "gpt-4o");
    }

    #[test]
    fn errors_name_the_key() {
        let bad = MINIMAL.replace("eval_modes = [\"pairwise\"", "eval_modes = [\"pairwize\"");
        let e = parse_config::<RunConfig>(&bad, Path::new("run.toml")).unwrap_err();
        assert_eq!(e.path, "matrix.eval_modes[0]");

        let bad = MINIMAL.replace("model = \"judge\"", "model = \"judge\"\ntemperature = 3");
        let e = parse_config::<RunConfig>(&bad, Path::new("run.toml")).unwrap_err();
        assert!(e.path.starts_with("judges[0]"), "{e}");

        let bad = MINIMAL.replace("[\"informativeness\"]]", "[\"informativeness\", \"multidimensional\"]]");
        let c: RunConfig = parse_config(&bad, Path::new("run.toml")).unwrap();
        assert_eq!(c.validate().unwrap_err().path, "matrix.criteria[1]");

        let bad = MINIMAL.replace("model = \"judge\"", "model = \"judge\"\nmax_concurrency = 0");
        let c: RunConfig = parse_config(&bad, Path::new("run.toml")).unwrap();
        assert_eq!(c.validate().unwrap_err().path, "judges[0]");
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut c: RunConfig = parse_config(MINIMAL, Path::new("run.toml")).unwrap();
        c.rebase(Path::new("/etc/bench"));
        assert_eq!(c.datasets[0].samples, Path::new("/etc/bench/s.jsonl"));
        assert_eq!(c.cache_dir(), Path::new("/etc/bench/runs/cache"));
    }

    #[test]
    fn guide_example_is_valid() {
        let guide = include_str!("../../../../book/src/running.md");
        let block = guide.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
        let c: RunConfig = parse_config(block, Path::new("run.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.matrix.criteria.len(), 3);
        assert_eq!(c.judges[0].auth_env.as_deref(), Some("JUDGE_API_KEY"));
    }
}
