use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {name}: unterminated placeholder at byte {offset}")]
    Unterminated { name: String, offset: usize },
    #[error("template {name}: invalid slot name {slot:?}")]
    BadSlotName { name: String, slot: String },
    #[error("template {name}: slot {slot} has no value")]
    UnfilledSlot { name: String, slot: String },
    #[error("reading template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(String),
}

/// A prompt template with `{{slot_name}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    source: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(name: impl Into<String>, source: impl Into<String>) -> Result<Self, TemplateError> {
        let name = name.into();
        let source = source.into();
        let mut pieces = Vec::new();
        let mut rest = source.as_str();
        let mut offset = 0;
        while let Some(open) = rest.find("{{") {
            if open > 0 {
                pieces.push(Piece::Literal(rest[..open].to_string()));
            }
            let after = &rest[open + 2..];
            let close = after.find("}}").ok_or_else(|| TemplateError::Unterminated {
                name: name.clone(),
                offset: offset + open,
            })?;
            let slot = after[..close].trim();
            if slot.is_empty() || !slot.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(TemplateError::BadSlotName {
                    name: name.clone(),
                    slot: slot.to_string(),
                });
            }
            pieces.push(Piece::Slot(slot.to_string()));
            let consumed = open + 2 + close + 2;
            offset += consumed;
            rest = &rest[consumed..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Literal(rest.to_string()));
        }
        Ok(Self { name, source, pieces })
    }

    pub fn load(name: &str, path: &Path) -> Result<Self, TemplateError> {
        let source = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(name, source)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(s.as_str()),
            Piece::Literal(_) => None,
        })
    }

    /// Fills every slot in one pass; substituted values are never re-scanned.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.source.len() + 512);
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(slot) => {
                    let v = values.get(slot.as_str()).ok_or_else(|| TemplateError::UnfilledSlot {
                        name: self.name.clone(),
                        slot: slot.clone(),
                    })?;
                    out.push_str(v);
                }
            }
        }
        Ok(out.trim_end().to_string())
    }
}

/// The six judge-prompt templates, keyed by their file stem.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub pointwise_with_ref: Template,
    pub pointwise_without_ref: Template,
    pub pairwise_with_ref: Template,
    pub pairwise_without_ref: Template,
    pub question_gen: Template,
    pub ood_pairwise: Template,
}

pub const TEMPLATE_NAMES: [&str; 6] = [
    "pointwise_with_ref",
    "pointwise_without_ref",
    "pairwise_with_ref",
    "pairwise_without_ref",
    "question_gen",
    "ood_pairwise",
];

impl TemplateSet {
    /// Templates shipped with the crate.
    pub fn builtin() -> Self {
        let t = |name: &str, src: &str| Template::parse(name, src).expect("bundled template parses");
        Self {
            pointwise_with_ref: t("pointwise_with_ref", include_str!("../../templates/pointwise_with_ref.txt")),
            pointwise_without_ref: t(
                "pointwise_without_ref",
                include_str!("../../templates/pointwise_without_ref.txt"),
            ),
            pairwise_with_ref: t("pairwise_with_ref", include_str!("../../templates/pairwise_with_ref.txt")),
            pairwise_without_ref: t(
                "pairwise_without_ref",
                include_str!("../../templates/pairwise_without_ref.txt"),
            ),
            question_gen: t("question_gen", include_str!("../../templates/question_gen.txt")),
            ood_pairwise: t("ood_pairwise", include_str!("../../templates/ood_pairwise.txt")),
        }
    }

    /// Loads `{name}.txt` for every template from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        let l = |name: &str| Template::load(name, &dir.join(format!("{name}.txt")));
        Ok(Self {
            pointwise_with_ref: l("pointwise_with_ref")?,
            pointwise_without_ref: l("pointwise_without_ref")?,
            pairwise_with_ref: l("pairwise_with_ref")?,
            pairwise_without_ref: l("pairwise_without_ref")?,
            question_gen: l("question_gen")?,
            ood_pairwise: l("ood_pairwise")?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        [
            &self.pointwise_with_ref,
            &self.pointwise_without_ref,
            &self.pairwise_with_ref,
            &self.pairwise_without_ref,
            &self.question_gen,
            &self.ood_pairwise,
        ]
        .into_iter()
    }

    /// Digest per template, for run manifests.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.iter()
            .map(|t| (t.name().to_string(), hex::encode(Sha256::digest(t.source().as_bytes()))))
            .collect()
    }
}
