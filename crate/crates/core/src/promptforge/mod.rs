//! Judge prompt rendering.
//!
//! Four judge templates cover pairwise/pointwise with and without a gold
//! reference. Single-criterion prompts use the same templates with a
//! one-item criteria list and no `Type` key. The question-generation and
//! molecular-captioning prompts have their own templates.

mod template;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datamodel::{
    CandidateResponse, ChartSample, Criterion, EvalMode, GenerationParams, ImageRef, JudgmentSpec,
    Order, ReferenceMode, SpecError, TaskKind,
};

pub use template::{Template, TemplateError, TemplateSet, TEMPLATE_NAMES};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("sample {0} has no gold reference but the spec asks for one")]
    MissingReference(String),
    #[error("open_qa sample {0} has no query")]
    MissingQuery(String),
    #[error("summary is empty")]
    EmptySummary,
    #[error("caption is empty")]
    EmptyCaption,
    #[error("expected a {expected} spec, got {actual}")]
    WrongEvalMode { expected: EvalMode, actual: EvalMode },
    #[error(transparent)]
    InvalidSpec(#[from] SpecError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Where the content of a rendered slot came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOrigin {
    Query,
    GoldReference,
    Response,
    ResponseA,
    ResponseB,
    Summary,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSource {
    pub origin: SlotOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

/// Slot name of the first presentation label for answers.
pub const SLOT_MODEL_A_ANSWER: &str = "model_a_answer";
pub const SLOT_MODEL_B_ANSWER: &str = "model_b_answer";
pub const SLOT_MODEL_A_CAPTION: &str = "model_a_caption";
pub const SLOT_MODEL_B_CAPTION: &str = "model_b_caption";

/// A fully rendered judge request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub attachments: Vec<ImageRef>,
    pub slot_map: BTreeMap<String, SlotSource>,
    pub generation_params: GenerationParams,
}

impl RenderedPrompt {
    /// SHA-256 over prompt text, image digests and generation parameters.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"text\0");
        h.update(self.text.as_bytes());
        for img in &self.attachments {
            h.update(b"\0image\0");
            h.update(img.sha256.to_ascii_lowercase().as_bytes());
        }
        h.update(b"\0params\0");
        h.update(params_fingerprint(&self.generation_params).as_bytes());
        hex::encode(h.finalize())
    }

    /// Presentation order recorded in the slot map, if this is a pairwise
    /// prompt: `BA` when the "Model A" slot holds `response_b`.
    pub fn presentation_order(&self) -> Option<Order> {
        let slot = self
            .slot_map
            .get(SLOT_MODEL_A_ANSWER)
            .or_else(|| self.slot_map.get(SLOT_MODEL_A_CAPTION))?;
        match slot.origin {
            SlotOrigin::ResponseA => Some(Order::AB),
            SlotOrigin::ResponseB => Some(Order::BA),
            _ => None,
        }
    }
}

/// Canonical text form of generation parameters used in digests and keys.
pub fn params_fingerprint(p: &GenerationParams) -> String {
    format!("temperature={:?};max_tokens={}", p.temperature, p.max_output_tokens)
}

struct TaskWording {
    artifact: &'static str,
    artifacts: &'static str,
    task: &'static str,
    task_context: &'static str,
    query_label: &'static str,
}

fn wording(kind: TaskKind) -> TaskWording {
    match kind {
        TaskKind::OpenQa => TaskWording {
            artifact: "answer",
            artifacts: "answers",
            task: "for a given question in the open-ended chart question answering task",
            task_context: "the chart question-answering task",
            query_label: "Question",
        },
        TaskKind::Captioning => TaskWording {
            artifact: "caption",
            artifacts: "captions",
            task: "for a given chart in the chart captioning task",
            task_context: "the chart captioning task",
            query_label: "Question",
        },
        TaskKind::InstructionFollowing => TaskWording {
            artifact: "response",
            artifacts: "responses",
            task: "for a given instruction in the chart instruction following task",
            task_context: "the chart instruction following task",
            query_label: "Instruction",
        },
        TaskKind::OodMolecular => TaskWording {
            artifact: "caption",
            artifacts: "captions",
            task: "for a given molecular image in the molecular image captioning task",
            task_context: "the molecular image captioning task",
            query_label: "Question",
        },
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn criteria_phrase(criteria: &[Criterion]) -> String {
    if criteria == [Criterion::Multidimensional] {
        return "overall quality, considering Factual Correctness, Informativeness, and Relevance,".into();
    }
    join_list(&criteria.iter().map(Criterion::title).collect::<Vec<_>>())
}

fn type_values(criteria: &[Criterion]) -> String {
    let quoted: Vec<String> = criteria.iter().map(|c| format!("'{}'", c.type_label())).collect();
    match quoted.as_slice() {
        [a, b] => format!("either {a} or {b}"),
        _ => format!("one of {}", join_list(&quoted)),
    }
}

/// Renders judge prompts from a [`TemplateSet`].
#[derive(Debug, Clone)]
pub struct PromptForge {
    templates: TemplateSet,
    params: GenerationParams,
}

impl Default for PromptForge {
    fn default() -> Self {
        Self::new(TemplateSet::builtin())
    }
}

struct Section {
    heading: String,
    body: String,
    slot: &'static str,
    source: SlotSource,
}

impl PromptForge {
    pub fn new(templates: TemplateSet) -> Self {
        Self {
            templates,
            params: GenerationParams::default(),
        }
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.params = params;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn params(&self) -> GenerationParams {
        self.params
    }

    fn check_inputs(&self, sample: &ChartSample, spec: &JudgmentSpec) -> Result<(), PromptError> {
        spec.validate()?;
        if sample.task_kind == TaskKind::OpenQa
            && sample.query.as_deref().map_or(true, |q| q.trim().is_empty())
        {
            return Err(PromptError::MissingQuery(sample.id.clone()));
        }
        if spec.reference_mode == ReferenceMode::WithReference
            && sample.gold_reference.as_deref().map_or(true, |r| r.trim().is_empty())
        {
            return Err(PromptError::MissingReference(sample.id.clone()));
        }
        Ok(())
    }

    fn common_slots(&self, sample: &ChartSample, spec: &JudgmentSpec) -> BTreeMap<&'static str, String> {
        let w = wording(sample.task_kind);
        let multi = spec.is_multi_criteria();
        let mut v = BTreeMap::new();
        v.insert("criteria", criteria_phrase(&spec.criteria));
        v.insert("artifact", w.artifact.to_string());
        v.insert("artifacts", w.artifacts.to_string());
        v.insert("task", w.task.to_string());
        v.insert("task_context", w.task_context.to_string());
        let value_key = match spec.eval_mode {
            EvalMode::Pairwise => "Model",
            EvalMode::Pointwise => "Score",
        };
        if multi {
            v.insert("container", "an Array of JSON".to_string());
            v.insert("keys", format!("(i) {value_key}, (ii) Explanation, (iii) Type"));
            v.insert(
                "type_clause",
                format!(
                    ", while the value for the 'Type' key will contain {}, depending on the type for which you assess the {}",
                    type_values(&spec.criteria),
                    w.artifact
                ),
            );
        } else {
            v.insert("container", "JSON format".to_string());
            v.insert("keys", format!("(i) {value_key}, (ii) Explanation"));
            v.insert("type_clause", String::new());
        }
        let has_query = sample.query.as_deref().is_some_and(|q| !q.trim().is_empty());
        let with_ref = spec.reference_mode == ReferenceMode::WithReference;
        let query_noun = w.query_label.to_lowercase();
        let given = match (has_query, with_ref) {
            (true, true) => format!(
                "In the following, you are first given the {query_noun}, followed by the gold reference {}. Afterward, you are given",
                w.artifact
            ),
            (true, false) => format!("In the following, you are first given the {query_noun}. Afterward, you are given"),
            (false, true) => format!(
                "In the following, you are first given the gold reference {}. Afterward, you are given",
                w.artifact
            ),
            (false, false) => "In the following, you are given".to_string(),
        };
        v.insert("given_intro", given);
        v
    }

    fn context_sections(&self, sample: &ChartSample, spec: &JudgmentSpec) -> Vec<Section> {
        let w = wording(sample.task_kind);
        let mut out = Vec::new();
        if let Some(q) = sample.query.as_deref().filter(|q| !q.trim().is_empty()) {
            out.push(Section {
                heading: w.query_label.to_string(),
                body: q.to_string(),
                slot: "question",
                source: SlotSource {
                    origin: SlotOrigin::Query,
                    model_id: None,
                },
            });
        }
        if spec.reference_mode == ReferenceMode::WithReference {
            out.push(Section {
                heading: format!("Gold Reference {}", capitalize(w.artifact)),
                body: sample.gold_reference.clone().unwrap_or_default(),
                slot: "gold_reference",
                source: SlotSource {
                    origin: SlotOrigin::GoldReference,
                    model_id: None,
                },
            });
        }
        out
    }

    fn finish(
        &self,
        template: &Template,
        mut slots: BTreeMap<&'static str, String>,
        sections: Vec<Section>,
        image: &ImageRef,
    ) -> Result<RenderedPrompt, PromptError> {
        let mut inputs = String::new();
        let mut slot_map = BTreeMap::new();
        for s in sections {
            inputs.push_str(&format!("[{}]\n{}\n\n", s.heading, s.body.trim_end()));
            slot_map.insert(s.slot.to_string(), s.source);
        }
        inputs.push_str("[Chart Image]");
        slot_map.insert(
            "image".to_string(),
            SlotSource {
                origin: SlotOrigin::Image,
                model_id: None,
            },
        );
        slots.insert("inputs", inputs);
        Ok(RenderedPrompt {
            text: template.render(&slots)?,
            attachments: vec![image.clone()],
            slot_map,
            generation_params: self.params,
        })
    }

    /// Prompt asking for a 1-5 score per requested criterion.
    pub fn render_pointwise(
        &self,
        sample: &ChartSample,
        response: &CandidateResponse,
        spec: &JudgmentSpec,
    ) -> Result<RenderedPrompt, PromptError> {
        if spec.eval_mode != EvalMode::Pointwise {
            return Err(PromptError::WrongEvalMode {
                expected: EvalMode::Pointwise,
                actual: spec.eval_mode,
            });
        }
        self.check_inputs(sample, spec)?;
        let w = wording(sample.task_kind);
        let template = match spec.reference_mode {
            ReferenceMode::WithReference => &self.templates.pointwise_with_ref,
            ReferenceMode::WithoutReference => &self.templates.pointwise_without_ref,
        };
        let mut sections = self.context_sections(sample, spec);
        sections.push(Section {
            heading: format!("Model Generated {}", capitalize(w.artifact)),
            body: response.text.clone(),
            slot: "model_answer",
            source: SlotSource {
                origin: SlotOrigin::Response,
                model_id: Some(response.model_id.clone()),
            },
        });
        self.finish(template, self.common_slots(sample, spec), sections, &sample.image)
    }

    /// Prompt asking which of two responses is better. Under `Order::BA`
    /// the "Model A" slot holds `response_b`.
    pub fn render_pairwise(
        &self,
        sample: &ChartSample,
        response_a: &CandidateResponse,
        response_b: &CandidateResponse,
        spec: &JudgmentSpec,
    ) -> Result<RenderedPrompt, PromptError> {
        if spec.eval_mode != EvalMode::Pairwise {
            return Err(PromptError::WrongEvalMode {
                expected: EvalMode::Pairwise,
                actual: spec.eval_mode,
            });
        }
        self.check_inputs(sample, spec)?;
        let w = wording(sample.task_kind);
        let template = match spec.reference_mode {
            ReferenceMode::WithReference => &self.templates.pairwise_with_ref,
            ReferenceMode::WithoutReference => &self.templates.pairwise_without_ref,
        };
        let (first, second) = presented(response_a, response_b, spec.order);
        let mut sections = self.context_sections(sample, spec);
        for (label, slot, (resp, origin)) in [
            ("A", SLOT_MODEL_A_ANSWER, first),
            ("B", SLOT_MODEL_B_ANSWER, second),
        ] {
            sections.push(Section {
                heading: format!("Model {label} Generated {}", capitalize(w.artifact)),
                body: resp.text.clone(),
                slot,
                source: SlotSource {
                    origin,
                    model_id: Some(resp.model_id.clone()),
                },
            });
        }
        self.finish(template, self.common_slots(sample, spec), sections, &sample.image)
    }

    /// Prompt that asks a generator model for a question about a chart
    /// given its reference summary.
    pub fn render_question_gen(&self, summary: &str, image: &ImageRef) -> Result<RenderedPrompt, PromptError> {
        if summary.trim().is_empty() {
            return Err(PromptError::EmptySummary);
        }
        let mut slots = BTreeMap::new();
        slots.insert("summary", summary.trim_end().to_string());
        let mut slot_map = BTreeMap::new();
        slot_map.insert(
            "summary".to_string(),
            SlotSource {
                origin: SlotOrigin::Summary,
                model_id: None,
            },
        );
        slot_map.insert(
            "image".to_string(),
            SlotSource {
                origin: SlotOrigin::Image,
                model_id: None,
            },
        );
        Ok(RenderedPrompt {
            text: self.templates.question_gen.render(&slots)?,
            attachments: vec![image.clone()],
            slot_map,
            generation_params: self.params,
        })
    }

    /// Out-of-domain pairwise prompt for molecular image captions.
    pub fn render_ood_pairwise(
        &self,
        caption_a: &CandidateResponse,
        caption_b: &CandidateResponse,
        image: &ImageRef,
        order: Order,
    ) -> Result<RenderedPrompt, PromptError> {
        if caption_a.text.trim().is_empty() || caption_b.text.trim().is_empty() {
            return Err(PromptError::EmptyCaption);
        }
        let (first, second) = presented(caption_a, caption_b, order);
        let mut slots = BTreeMap::new();
        let mut slot_map = BTreeMap::new();
        for (slot, (resp, origin)) in [(SLOT_MODEL_A_CAPTION, first), (SLOT_MODEL_B_CAPTION, second)] {
            slots.insert(slot, resp.text.trim_end().to_string());
            slot_map.insert(
                slot.to_string(),
                SlotSource {
                    origin,
                    model_id: Some(resp.model_id.clone()),
                },
            );
        }
        slot_map.insert(
            "image".to_string(),
            SlotSource {
                origin: SlotOrigin::Image,
                model_id: None,
            },
        );
        Ok(RenderedPrompt {
            text: self.templates.ood_pairwise.render(&slots)?,
            attachments: vec![image.clone()],
            slot_map,
            generation_params: self.params,
        })
    }
}

type Presented<'a> = (&'a CandidateResponse, SlotOrigin);

fn presented<'a>(
    a: &'a CandidateResponse,
    b: &'a CandidateResponse,
    order: Order,
) -> (Presented<'a>, Presented<'a>) {
    match order {
        Order::AB => ((a, SlotOrigin::ResponseA), (b, SlotOrigin::ResponseB)),
        Order::BA => ((b, SlotOrigin::ResponseB), (a, SlotOrigin::ResponseA)),
    }
}

/// Spec used to parse replies to [`PromptForge::render_ood_pairwise`].
pub fn ood_spec(judge_model: impl Into<String>, order: Order) -> JudgmentSpec {
    JudgmentSpec {
        eval_mode: EvalMode::Pairwise,
        reference_mode: ReferenceMode::WithoutReference,
        criteria: vec![Criterion::Multidimensional],
        order,
        judge_model: judge_model.into(),
    }
}
