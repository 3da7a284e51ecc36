use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Content-addressed reference to a chart (or molecule) image.
///
/// The digest, not the location, identifies the image: moving a file keeps
/// every prompt digest and cache key derived from it stable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub uri: String,
    pub sha256: String,
}

impl ImageRef {
    pub fn from_bytes(uri: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            uri: uri.into(),
            sha256: sha256_hex(bytes),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Ok(Self::from_bytes(path.to_string_lossy(), &bytes))
    }

    /// Local filesystem path for this image, if the uri names one.
    pub fn local_path(&self) -> Option<PathBuf> {
        let uri = self.uri.as_str();
        if uri.starts_with("http://") || uri.starts_with("https://") || uri.starts_with("data:") {
            return None;
        }
        Some(PathBuf::from(uri.strip_prefix("file://").unwrap_or(uri)))
    }

    /// Returns a copy whose relative local path is anchored at `base`.
    pub fn rebased(&self, base: &Path) -> Self {
        match self.local_path() {
            Some(p) if p.is_relative() => Self {
                uri: base.join(p).to_string_lossy().into_owned(),
                sha256: self.sha256.clone(),
            },
            _ => self.clone(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    OpenQa,
    Captioning,
    InstructionFollowing,
    OodMolecular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Statista,
    Pew,
    Opencqa,
    VistextL1,
    VistextL2l3,
    ChartInstructEval,
    Chebi,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Statista => "statista",
            Source::Pew => "pew",
            Source::Opencqa => "opencqa",
            Source::VistextL1 => "vistext_l1",
            Source::VistextL2l3 => "vistext_l2l3",
            Source::ChartInstructEval => "chart_instruct_eval",
            Source::Chebi => "chebi",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    Bar,
    Line,
    Pie,
    Table,
    Area,
    Scatter,
}

/// Human complexity labels. Simple charts have two columns (one independent,
/// one dependent variable); simple questions need a single extraction step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Complexity {
    pub complex_chart: bool,
    pub complex_query: bool,
}

/// One chart task instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartSample {
    pub id: String,
    pub image: ImageRef,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_reference: Option<String>,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_type: Option<ChartType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<Complexity>,
    /// Set when `query` was produced by the question generator rather than
    /// taken from the source dataset.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic_query: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    MissingQuery,
    MalformedDigest,
    DigestMismatch { expected: String, actual: String },
    UnflaggedSyntheticQuery,
    CharLengthMismatch { declared: usize, actual: usize },
    ZeroTokenLength,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => write!(f, "empty id"),
            Violation::MissingQuery => write!(f, "open_qa requires query"),
            Violation::MalformedDigest => write!(f, "image digest is not 64 hex characters"),
            Violation::DigestMismatch { expected, actual } => {
                write!(f, "digest mismatch: declared {expected}, file has {actual}")
            }
            Violation::UnflaggedSyntheticQuery => {
                write!(f, "pew open_qa sample must carry synthetic_query = true")
            }
            Violation::CharLengthMismatch { declared, actual } => {
                write!(f, "char_length {declared} does not match text length {actual}")
            }
            Violation::ZeroTokenLength => write!(f, "token_length must be >= 1 for non-empty text"),
        }
    }
}

/// Checks every sample invariant and returns all violations found.
///
/// The image digest is only compared when the image resolves to a readable
/// local file; remote images are taken on trust.
pub fn validate_sample(sample: &ChartSample) -> Vec<Violation> {
    let mut out = Vec::new();
    if sample.id.trim().is_empty() {
        out.push(Violation::EmptyId);
    }
    if sample.task_kind == TaskKind::OpenQa
        && sample.query.as_deref().map_or(true, |q| q.trim().is_empty())
    {
        out.push(Violation::MissingQuery);
    }
    let digest = &sample.image.sha256;
    if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
        out.push(Violation::MalformedDigest);
    } else if let Some(path) = sample.image.local_path() {
        if let Ok(bytes) = std::fs::read(&path) {
            let actual = sha256_hex(&bytes);
            if !actual.eq_ignore_ascii_case(digest) {
                out.push(Violation::DigestMismatch {
                    expected: digest.clone(),
                    actual,
                });
            }
        }
    }
    if sample.source == Source::Pew && sample.task_kind == TaskKind::OpenQa && !sample.synthetic_query {
        out.push(Violation::UnflaggedSyntheticQuery);
    }
    out
}

/// A model-generated answer or caption under judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub model_id: String,
    pub text: String,
    pub char_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_length: Option<u32>,
}

impl CandidateResponse {
    pub fn new(model_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            model_id: model_id.into(),
            char_length: text.chars().count(),
            text,
            token_length: None,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let actual = self.text.chars().count();
        if actual != self.char_length {
            out.push(Violation::CharLengthMismatch {
                declared: self.char_length,
                actual,
            });
        }
        if self.token_length == Some(0) && !self.text.is_empty() {
            out.push(Violation::ZeroTokenLength);
        }
        out
    }
}
