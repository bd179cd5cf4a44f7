//! Metrics that read token log-probabilities.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{MetricId, MetricScore, ResponseSample, SampleSet, TaskType};
use crate::num;
use crate::text::normalize_answer;
use crate::{Error, Result};

/// Which part of a response counts as the answer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    /// First generated token whose normalized form is non-empty.
    #[default]
    FirstToken,
    /// The whole response; its probability is the product of token probabilities.
    FullTextNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerExtraction {
    pub mode: ExtractionMode,
    /// Lowercase, strip punctuation and collapse whitespace before comparing.
    pub normalize: bool,
}

impl Default for AnswerExtraction {
    fn default() -> Self {
        Self {
            mode: ExtractionMode::FirstToken,
            normalize: true,
        }
    }
}

impl AnswerExtraction {
    fn clean(&self, s: &str) -> String {
        if self.normalize {
            normalize_answer(s)
        } else {
            s.trim().to_string()
        }
    }
}

/// The answer string of one response, without its probability.
///
/// For T1 sets the normalized response must be a single word; verbose
/// answers such as "The sentiment is positive" are rejected.
pub fn extract_answer_text(
    sample: &ResponseSample,
    extraction: &AnswerExtraction,
    task_type: TaskType,
) -> core::result::Result<String, String> {
    let words = normalize_answer(&sample.text);
    if task_type == TaskType::T1ClosedOneToken && words.contains(' ') {
        return Err(format!("expected a one-word answer, got {:?}", sample.text));
    }
    let answer = match (extraction.mode, &sample.tokens) {
        (ExtractionMode::FirstToken, Some(tokens)) => tokens
            .iter()
            .map(|t| extraction.clean(t.token_text()))
            .find(|t| !t.is_empty())
            .unwrap_or_default(),
        (ExtractionMode::FirstToken, None) => sample
            .text
            .split_whitespace()
            .map(|w| extraction.clean(w))
            .find(|w| !w.is_empty())
            .unwrap_or_default(),
        (ExtractionMode::FullTextNormalized, _) => extraction.clean(&sample.text),
    };
    if answer.is_empty() {
        return Err("response has no answer text".into());
    }
    Ok(answer)
}

/// The answer string of one response and the probability the model gave it.
pub fn extract_answer(
    sample: &ResponseSample,
    extraction: &AnswerExtraction,
    task_type: TaskType,
) -> core::result::Result<(String, f64), String> {
    let tokens = sample
        .tokens
        .as_deref()
        .ok_or_else(|| String::from("no token log-probabilities"))?;
    let answer = extract_answer_text(sample, extraction, task_type)?;
    let p = match extraction.mode {
        ExtractionMode::FirstToken => tokens
            .iter()
            .find(|t| !extraction.clean(t.token_text()).is_empty())
            .map(|t| t.probability())
            .unwrap_or(0.0),
        ExtractionMode::FullTextNormalized => {
            num::exp(tokens.iter().map(|t| t.logprob()).sum::<f64>())
        }
    };
    if !(p > 0.0) {
        return Err("answer probability underflows to zero".into());
    }
    Ok((answer, p))
}

fn require_logprobs(set: &SampleSet) -> Result<()> {
    set.ensure_scorable()?;
    let missing: Vec<String> = set
        .samples()
        .iter()
        .filter(|s| s.tokens.is_none())
        .map(|s| s.sample_id.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::LogprobsRequired {
            sample_ids: missing,
        })
    }
}

/// Shannon entropy of the probability-weighted answer distribution.
///
/// Each response contributes the probability of its extracted answer to that
/// answer's mass; masses are normalized and the entropy taken in nats. The
/// diagnostics hold `support_size` and one `support:<answer>` entry per
/// distinct answer.
pub fn token_level_entropy(set: &SampleSet, extraction: &AnswerExtraction) -> Result<MetricScore> {
    require_logprobs(set)?;
    let mut mass: BTreeMap<String, f64> = BTreeMap::new();
    let mut failed = Vec::new();
    let mut reason = String::new();
    for s in set.samples() {
        match extract_answer(s, extraction, set.task_type()) {
            Ok((answer, p)) => *mass.entry(answer).or_insert(0.0) += p,
            Err(e) => {
                failed.push(s.sample_id.clone());
                reason = e;
            }
        }
    }
    if !failed.is_empty() {
        return Err(Error::InvalidExtraction {
            sample_ids: failed,
            reason,
        });
    }
    let total: f64 = mass.values().sum();
    let support: BTreeMap<String, f64> = mass.into_iter().map(|(k, v)| (k, v / total)).collect();
    let entropy = num::shannon_entropy(support.values().copied());
    let mut score = MetricScore::new(MetricId::TokenLevelEntropy, entropy)?
        .diagnostic("support_size", support.len() as f64);
    for (answer, p) in support {
        score = score.diagnostic(format!("support:{answer}"), p);
    }
    Ok(score)
}

/// Mean over responses of the mean squared distance from full confidence,
/// `(1 - p)^2`, across each response's generated tokens.
pub fn brier_uncertainty(set: &SampleSet) -> Result<MetricScore> {
    require_logprobs(set)?;
    let per_sample: BTreeMap<String, f64> = set
        .samples()
        .iter()
        .map(|s| {
            let tokens = s.tokens.as_deref().unwrap_or_default();
            let sum: f64 = tokens
                .iter()
                .map(|t| {
                    let gap = 1.0 - t.probability();
                    gap * gap
                })
                .sum();
            (s.sample_id.clone(), sum / tokens.len() as f64)
        })
        .collect();
    let value = per_sample.values().sum::<f64>() / per_sample.len() as f64;
    Ok(MetricScore::new(MetricId::Brier, value)?.with_per_sample(per_sample))
}

/// Scores one set with a grey-box metric.
pub fn score_greybox(
    set: &SampleSet,
    metric: MetricId,
    extraction: &AnswerExtraction,
) -> Result<MetricScore> {
    match metric {
        MetricId::TokenLevelEntropy => token_level_entropy(set, extraction),
        MetricId::Brier => brier_uncertainty(set),
        other => Err(Error::InvalidInput(format!("{other} is not a grey-box metric"))),
    }
}

/// Groups per-item metric values by gold label, preserving input order
/// within each group.
pub fn per_category_breakdown(
    sets: &[(SampleSet, String)],
    metric: MetricId,
    extraction: &AnswerExtraction,
) -> Result<BTreeMap<String, Vec<f64>>> {
    if sets.is_empty() {
        return Err(Error::InvalidInput("no labelled sample sets".into()));
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (set, label) in sets {
        let value = score_greybox(set, metric, extraction)?.value;
        groups.entry(label.clone()).or_default().push(value);
    }
    Ok(groups)
}
