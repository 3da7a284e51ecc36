use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::DatasetConfig;
use crate::datamodel::{
    read_jsonl, sha256_hex, validate_sample, CandidateResponse, ChartSample, Criterion, EvalMode, GoldLabel,
    JsonlError, ReferenceMode,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset {dataset}: {source}")]
    Read {
        dataset: String,
        #[source]
        source: JsonlError,
    },
    #[error("dataset {dataset}: sample {sample}: {message}")]
    InvalidSample {
        dataset: String,
        sample: String,
        message: String,
    },
    #[error("dataset {dataset}: {message}")]
    Inconsistent { dataset: String, message: String },
}

/// One line of a responses file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub sample_id: String,
    pub model_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_length: Option<u32>,
}

/// One line of a gold file: reference judgments for one criterion of one
/// item, keyed by annotator.
///
/// Pairwise lines name `model_a` and `model_b` (labels refer to that
/// order); pointwise lines name `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldRow {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub criterion: Criterion,
    /// Restricts the row to one reference mode; applies to both when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_mode: Option<ReferenceMode>,
    pub labels: BTreeMap<String, GoldLabel>,
}

/// Something to judge: a sample plus one (pointwise) or two (pairwise)
/// model ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Item {
    pub sample_id: String,
    pub models: Vec<String>,
}

impl Item {
    pub fn eval_mode(&self) -> EvalMode {
        if self.models.len() == 2 {
            EvalMode::Pairwise
        } else {
            EvalMode::Pointwise
        }
    }
}

type GoldKey = (Item, Criterion, Option<ReferenceMode>);

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub config: DatasetConfig,
    pub samples: BTreeMap<String, ChartSample>,
    pub responses: HashMap<(String, String), CandidateResponse>,
    /// Items in first-seen order of the gold file.
    pub items: Vec<Item>,
    gold: HashMap<GoldKey, GoldLabel>,
    /// SHA-256 of each input file, keyed by role.
    pub digests: BTreeMap<String, String>,
}

impl LoadedDataset {
    pub fn load(config: &DatasetConfig) -> Result<Self, DatasetError> {
        let name = config.name.clone();
        let read_err = |source| DatasetError::Read {
            dataset: name.clone(),
            source,
        };
        let inconsistent = |message: String| DatasetError::Inconsistent {
            dataset: name.clone(),
            message,
        };

        let mut digests = BTreeMap::new();
        for (role, path) in [("samples", &config.samples), ("responses", &config.responses), ("gold", &config.gold)] {
            let bytes = std::fs::read(path).map_err(|source| {
                read_err(JsonlError::Io {
                    path: path.clone(),
                    source,
                })
            })?;
            digests.insert(role.to_string(), sha256_hex(&bytes));
        }

        let base = config.samples.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let mut samples = BTreeMap::new();
        for mut s in read_jsonl::<ChartSample>(&config.samples).map_err(read_err)? {
            s.image = s.image.rebased(&base);
            if let Some(v) = validate_sample(&s).first() {
                return Err(DatasetError::InvalidSample {
                    dataset: name.clone(),
                    sample: s.id.clone(),
                    message: v.to_string(),
                });
            }
            let id = s.id.clone();
            if samples.insert(id.clone(), s).is_some() {
                return Err(inconsistent(format!("duplicate sample id {id:?}")));
            }
        }

        let mut responses = HashMap::new();
        for r in read_jsonl::<ResponseRow>(&config.responses).map_err(read_err)? {
            if !samples.contains_key(&r.sample_id) {
                return Err(inconsistent(format!("response for unknown sample {:?}", r.sample_id)));
            }
            let mut c = CandidateResponse::new(r.model_id.clone(), r.text);
            c.token_length = r.token_length;
            if let Some(v) = c.validate().first() {
                return Err(inconsistent(format!("response {}/{}: {v}", r.sample_id, r.model_id)));
            }
            if responses.insert((r.sample_id.clone(), r.model_id.clone()), c).is_some() {
                return Err(inconsistent(format!("duplicate response {}/{}", r.sample_id, r.model_id)));
            }
        }

        let mut items = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut gold = HashMap::new();
        for (line, row) in read_jsonl::<GoldRow>(&config.gold).map_err(read_err)?.into_iter().enumerate() {
            let at = format!("gold line {}", line + 1);
            let models = match (&row.model_a, &row.model_b, &row.model) {
                (Some(a), Some(b), None) if a != b => vec![a.clone(), b.clone()],
                (None, None, Some(m)) => vec![m.clone()],
                _ => {
                    return Err(inconsistent(format!(
                        "{at}: expected either model_a and model_b (distinct) or model"
                    )))
                }
            };
            if !samples.contains_key(&row.sample_id) {
                return Err(inconsistent(format!("{at}: unknown sample {:?}", row.sample_id)));
            }
            for m in &models {
                if !responses.contains_key(&(row.sample_id.clone(), m.clone())) {
                    return Err(inconsistent(format!("{at}: no response from {m:?} for sample {:?}", row.sample_id)));
                }
            }
            let item = Item {
                sample_id: row.sample_id.clone(),
                models,
            };
            for label in row.labels.values() {
                let ok = matches!(
                    (item.eval_mode(), label),
                    (EvalMode::Pairwise, GoldLabel::Preference(_)) | (EvalMode::Pointwise, GoldLabel::Score(_))
                );
                if !ok {
                    return Err(inconsistent(format!("{at}: label does not fit a {} item", item.eval_mode())));
                }
            }
            if seen.insert(item.clone()) {
                items.push(item.clone());
            }
            if let Some(label) = row.labels.get(&config.reference) {
                gold.insert((item, row.criterion, row.reference_mode), *label);
            }
        }

        Ok(Self {
            config: config.clone(),
            samples,
            responses,
            items,
            gold,
            digests,
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn items_for(&self, mode: EvalMode) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(move |i| i.eval_mode() == mode)
    }

    pub fn response(&self, sample_id: &str, model_id: &str) -> &CandidateResponse {
        &self.responses[&(sample_id.to_string(), model_id.to_string())]
    }

    /// Gold label from the configured reference column. A row tied to the
    /// reference mode wins over an untied one.
    pub fn gold(&self, item: &Item, criterion: &Criterion, reference_mode: ReferenceMode) -> Option<GoldLabel> {
        let key = |m| (item.clone(), criterion.clone(), m);
        self.gold
            .get(&key(Some(reference_mode)))
            .or_else(|| self.gold.get(&key(None)))
            .copied()
    }
}
