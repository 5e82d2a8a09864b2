//! LLM-as-judge scoring: one call per (model, question) answer, three
//! dimension scores parsed from a structured JSON reply.

use futures::StreamExt;
use serde::{Deserialize, Serialize};

use crate::provider::{GenRequest, Generator, StageTag};

use super::MetricsError;

pub const DEFAULT_RUBRIC: &str = include_str!("../../assets/judge_rubric.txt");

pub const JUDGE_DIMENSIONS: [&str; 3] = ["information_richness", "relevance", "accuracy"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeDimension {
    InformationRichness,
    Relevance,
    Accuracy,
}

impl JudgeDimension {
    pub fn key(self) -> &'static str {
        match self {
            JudgeDimension::InformationRichness => "information_richness",
            JudgeDimension::Relevance => "relevance",
            JudgeDimension::Accuracy => "accuracy",
        }
    }
}

/// One judged dimension of one answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub dimension: JudgeDimension,
    /// In `[0, 10]`.
    pub value: f64,
}

/// One answer to score: keyed by `(model_id, question_id)`, with an
/// optional reference answer for the text-overlap metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub model_id: String,
    pub question_id: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

/// One scored cell. `value: None` marks a cell the judge could not produce;
/// absent cells are never fabricated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCell {
    pub model_id: String,
    pub question_id: String,
    pub metric: String,
    pub value: Option<f64>,
}

/// Renders the rubric's `{question}` / `{answer}` placeholders.
pub fn render_rubric(rubric: &str, question: &str, answer: &str) -> String {
    rubric
        .replace("{question}", question)
        .replace("{answer}", answer)
}

fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(body) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let body = match body.find('\n') {
        Some(idx) => &body[idx + 1..],
        None => body,
    };
    body.strip_suffix("```").map(str::trim).unwrap_or(trimmed)
}

/// Parses the judge's JSON object into the three dimension scores. Any
/// missing key, non-numeric value, or out-of-scale value rejects the whole
/// response.
pub fn parse_judge_response(text: &str) -> Result<[JudgeScore; 3], MetricsError> {
    let value: serde_json::Value = serde_json::from_str(strip_code_fence(text))
        .map_err(|err| MetricsError::JudgeParse(err.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| MetricsError::JudgeParse("not a JSON object".into()))?;
    let mut get = |dimension: JudgeDimension| -> Result<JudgeScore, MetricsError> {
        let raw = object
            .get(dimension.key())
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| {
                MetricsError::JudgeParse(format!("missing numeric {:?}", dimension.key()))
            })?;
        if !(0.0..=10.0).contains(&raw) {
            return Err(MetricsError::JudgeParse(format!(
                "{:?} out of scale: {raw}",
                dimension.key()
            )));
        }
        Ok(JudgeScore {
            dimension,
            value: raw,
        })
    };
    Ok([
        get(JudgeDimension::InformationRichness)?,
        get(JudgeDimension::Relevance)?,
        get(JudgeDimension::Accuracy)?,
    ])
}

const JUDGE_REPAIR_SUFFIX: &str =
    "\n\nYour previous reply was not the requested JSON object. Reply with only \
     the JSON object.";

async fn judge_one(
    row: &AnswerRow,
    rubric: &str,
    generator: &dyn Generator,
) -> Option<[JudgeScore; 3]> {
    let prompt = render_rubric(rubric, &row.question, &row.answer);
    for attempt in 0..2 {
        let user = if attempt == 0 {
            prompt.clone()
        } else {
            format!("{prompt}{JUDGE_REPAIR_SUFFIX}")
        };
        let req = GenRequest::new(StageTag::Judge, "", user).with_temperature(0.0);
        match generator.chat_complete(&req).await {
            Ok(resp) => match parse_judge_response(&resp.text) {
                Ok(scores) => return Some(scores),
                Err(_) => continue,
            },
            Err(_) => continue,
        }
    }
    None
}

/// Scores every answer on every dimension, fanning out under `concurrency`.
/// Three cells per answer; unusable judge output yields absent cells.
pub async fn judge_answers(
    rows: &[AnswerRow],
    rubric: &str,
    generator: &dyn Generator,
    concurrency: usize,
) -> Vec<ScoredCell> {
    let results: Vec<Option<[JudgeScore; 3]>> = futures::stream::iter(rows)
        .map(|row| judge_one(row, rubric, generator))
        .buffered(concurrency.max(1))
        .collect()
        .await;

    let mut cells = Vec::with_capacity(rows.len() * 3);
    for (row, scores) in rows.iter().zip(results) {
        match scores {
            Some(scores) => {
                for score in scores {
                    cells.push(ScoredCell {
                        model_id: row.model_id.clone(),
                        question_id: row.question_id.clone(),
                        metric: score.dimension.key().to_string(),
                        value: Some(score.value),
                    });
                }
            }
            None => {
                for key in JUDGE_DIMENSIONS {
                    cells.push(ScoredCell {
                        model_id: row.model_id.clone(),
                        question_id: row.question_id.clone(),
                        metric: key.to_string(),
                        value: None,
                    });
                }
            }
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{GenResponse, MockGenerator, ProviderError};
    use async_trait::async_trait;
    use std::time::Duration;

    fn row(model: &str, question: &str) -> AnswerRow {
        AnswerRow {
            model_id: model.into(),
            question_id: format!("{question}-id"),
            question: question.into(),
            answer: "an answer".into(),
            reference: None,
        }
    }

    #[test]
    fn parses_well_formed_scores() {
        let scores = parse_judge_response(
            r#"{"information_richness": 8.5, "relevance": 9, "accuracy": 7.25}"#,
        )
        .unwrap();
        assert_eq!(scores[0].value, 8.5);
        assert_eq!(scores[1].value, 9.0);
        assert_eq!(scores[2].value, 7.25);
    }

    #[test]
    fn rejects_missing_or_out_of_scale_values() {
        assert!(parse_judge_response(r#"{"relevance": 9, "accuracy": 7}"#).is_err());
        assert!(parse_judge_response(
            r#"{"information_richness": 11, "relevance": 9, "accuracy": 7}"#
        )
        .is_err());
        assert!(parse_judge_response("not json at all").is_err());
    }

    #[test]
    fn fenced_json_is_accepted() {
        let text = "```json\n{\"information_richness\": 5, \"relevance\": 5, \"accuracy\": 5}\n```";
        assert!(parse_judge_response(text).is_ok());
    }

    #[tokio::test]
    async fn mock_judge_scores_everything_seven() {
        let rows: Vec<AnswerRow> = (0..4).map(|i| row("m", &format!("q{i}"))).collect();
        let cells = judge_answers(&rows, DEFAULT_RUBRIC, &MockGenerator, 2).await;
        assert_eq!(cells.len(), 12);
        assert!(cells.iter().all(|c| c.value == Some(7.0)));
    }

    #[tokio::test]
    async fn cardinality_is_models_times_questions_times_dimensions() {
        let mut rows = Vec::new();
        for model in ["m1", "m2", "m3"] {
            for q in 0..10 {
                rows.push(row(model, &format!("q{q}")));
            }
        }
        let cells = judge_answers(&rows, DEFAULT_RUBRIC, &MockGenerator, 4).await;
        assert_eq!(cells.len(), 3 * 10 * 3);
    }

    struct AlwaysMalformed;

    #[async_trait]
    impl Generator for AlwaysMalformed {
        async fn chat_complete(&self, _req: &GenRequest) -> Result<GenResponse, ProviderError> {
            Ok(GenResponse {
                text: "I refuse to emit JSON".into(),
                raw_reasoning: None,
                provider_id: "bad".into(),
                latency: Duration::ZERO,
            })
        }
    }

    #[tokio::test]
    async fn malformed_judge_output_yields_absent_cells() {
        let cells = judge_answers(&[row("m", "q")], DEFAULT_RUBRIC, &AlwaysMalformed, 1).await;
        assert_eq!(cells.len(), 3);
        assert!(cells.iter().all(|c| c.value.is_none()));
    }

    struct MalformedOnceThenFixed {
        calls: std::sync::atomic::AtomicU32,
    }

    #[async_trait]
    impl Generator for MalformedOnceThenFixed {
        async fn chat_complete(&self, req: &GenRequest) -> Result<GenResponse, ProviderError> {
            let call = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            let text = if call == 0 {
                "oops".to_string()
            } else {
                assert!(req.user_prompt.contains("only"));
                r#"{"information_richness": 6, "relevance": 6, "accuracy": 6}"#.to_string()
            };
            Ok(GenResponse {
                text,
                raw_reasoning: None,
                provider_id: "flaky".into(),
                latency: Duration::ZERO,
            })
        }
    }

    #[tokio::test]
    async fn one_retry_recovers_parseable_scores() {
        let generator = MalformedOnceThenFixed {
            calls: std::sync::atomic::AtomicU32::new(0),
        };
        let cells = judge_answers(&[row("m", "q")], DEFAULT_RUBRIC, &generator, 1).await;
        assert!(cells.iter().all(|c| c.value == Some(6.0)));
    }
}
