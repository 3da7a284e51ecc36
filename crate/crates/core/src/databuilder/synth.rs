use futures::stream::{self, StreamExt};
use thiserror::Error;

use crate::datamodel::{ChartSample, Source, TaskKind};
use crate::judgeclient::{JudgeClient, JudgeError};
use crate::promptforge::{PromptError, PromptForge};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("sample {0} is not from the Pew split")]
    NotPew(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Endpoint(#[from] JudgeError),
    #[error("generator returned no question for sample {0}")]
    EmptyQuestion(String),
}

/// First non-empty line of a generator reply, trimmed.
pub fn first_question_line(reply: &str) -> Option<String> {
    reply
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

/// Turns Pew captioning samples into open-ended QA samples by asking a
/// generator model for one question per chart. Results keep input order.
pub async fn synthesize_questions(
    samples: &[ChartSample],
    client: &JudgeClient,
    forge: &PromptForge,
) -> Vec<Result<ChartSample, SynthError>> {
    let jobs = samples.iter().map(|s| async move {
        if s.source != Source::Pew {
            return Err(SynthError::NotPew(s.id.clone()));
        }
        let summary = s.gold_reference.as_deref().unwrap_or_default();
        let prompt = forge.render_question_gen(summary, &s.image)?;
        let reply = client.complete(&prompt).await?;
        let question = first_question_line(&reply.text).ok_or_else(|| SynthError::EmptyQuestion(s.id.clone()))?;
        let mut out = s.clone();
        out.task_kind = TaskKind::OpenQa;
        out.query = Some(question);
        out.synthetic_query = true;
        Ok(out)
    });
    stream::iter(jobs)
        .buffered(client.endpoint().max_concurrency)
        .collect()
        .await
}
