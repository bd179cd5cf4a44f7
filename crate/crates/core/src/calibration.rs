//! Validation-aware tooling: accuracy-versus-uncertainty regression, anchor
//! distance, cross-metric flagging, validation subsampling and the metric
//! recommender.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::greybox::{extract_answer_text, AnswerExtraction};
use crate::model::{MetricId, MetricScore, ReferenceAnchor, SampleSet, TaskType, ValidationLevel};
use crate::num;
use crate::provider::{embed_batch, Embedder};
use crate::text::normalize_answer;
use crate::{rng, Error, Result};
use TaskType::{T1ClosedOneToken as T1, T2OpenShort as T2, T3OpenLong as T3};
use ValidationLevel::{V0None as V0, V1Anchors as V1, V2Full as V2};

/// Tail quantile used by [`flag_high_uncertainty`] unless configured.
pub const DEFAULT_QUANTILE: f64 = 0.9;
/// Number of metrics that must agree before an item is flagged.
pub const DEFAULT_MIN_AGREEMENT: usize = 2;
/// Share of items drawn for manual validation.
pub const DEFAULT_SUBSAMPLE_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub task_item_id: String,
    pub uncertainty: f64,
    pub accuracy: f64,
}

impl CalibrationPoint {
    pub fn new(task_item_id: impl Into<String>, uncertainty: f64, accuracy: f64) -> Result<Self> {
        if !uncertainty.is_finite() {
            return Err(Error::InvalidInput(format!("uncertainty {uncertainty} is not finite")));
        }
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::InvalidInput(format!("accuracy {accuracy} is outside [0, 1]")));
        }
        Ok(Self {
            task_item_id: task_item_id.into(),
            uncertainty,
            accuracy,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Ordinary least squares of accuracy on uncertainty.
///
/// `r_squared` is 1 when the accuracies are constant (the fit is exact), and
/// is clamped to [0, 1] otherwise.
pub fn fit_linear_calibration(points: &[CalibrationPoint]) -> Result<RegressionFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if points.iter().all(|p| p.uncertainty == points[0].uncertainty) {
        return Err(Error::DegenerateRegressor);
    }
    let constant = points.iter().all(|p| p.accuracy == points[0].accuracy);
    let nf = n as f64;
    let mx = points.iter().map(|p| p.uncertainty).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.accuracy).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.uncertainty - mx;
        let dy = p.accuracy - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = if constant { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.accuracy - intercept - slope * p.uncertainty;
            r * r
        })
        .sum();
    let r_squared = if constant || syy == 0.0 {
        1.0
    } else {
        (1.0f64 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        n,
    })
}

/// Cosine distance from the re-normalized mean of the label embeddings to
/// the anchor's embedding.
pub fn centroid_anchor_distance<E: Embedder + ?Sized>(
    labels: &[&str],
    anchor: &ReferenceAnchor,
    embedder: &E,
) -> Result<MetricScore> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("no labels to average".into()));
    }
    let mut texts = labels.to_vec();
    texts.push(anchor.text());
    let vectors = embed_batch(embedder, &texts)?;
    let (anchor_vec, label_vecs) = vectors.split_last().expect("anchor embedded");
    let dim = anchor_vec.dim();
    let mut mean = alloc::vec![0.0; dim];
    for v in label_vecs {
        for (m, x) in mean.iter_mut().zip(v.values()) {
            *m += x / label_vecs.len() as f64;
        }
    }
    let norm = num::norm(&mean);
    if norm < 1e-12 {
        return Err(Error::DegenerateCentroid);
    }
    let cos: f64 = mean.iter().zip(anchor_vec.values()).map(|(m, a)| m * a).sum::<f64>() / norm;
    Ok(MetricScore::new(MetricId::CentroidAnchorDistance, 1.0 - cos)?.diagnostic("centroid_norm", norm))
}

/// Sample quantile with linear interpolation between order statistics
/// (position `(n - 1) q`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Items at or above the metric's `quantile` cut, excluding items that sit
/// at the metric's minimum (so a constant metric flags nothing).
pub fn metric_tail(values: &BTreeMap<String, f64>, q: f64) -> BTreeSet<String> {
    if values.is_empty() {
        return BTreeSet::new();
    }
    let all: Vec<f64> = values.values().copied().collect();
    let cut = quantile(&all, q);
    let min = all.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .filter(|(_, v)| **v >= cut && **v > min)
        .map(|(k, _)| k.clone())
        .collect()
}

/// Items in the upper tail of at least `min_agreement` metrics, sorted.
pub fn flag_high_uncertainty(
    scores: &BTreeMap<String, BTreeMap<String, f64>>,
    quantile: f64,
    min_agreement: usize,
) -> Result<Vec<String>> {
    if scores.is_empty() || scores.values().all(BTreeMap::is_empty) {
        return Err(Error::InvalidInput("no metric scores to flag".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidConfig(format!("quantile must lie in (0, 1), got {quantile}")));
    }
    if min_agreement == 0 || min_agreement > scores.len() {
        return Err(Error::InvalidConfig(format!(
            "min_agreement {min_agreement} must lie in 1..={}",
            scores.len()
        )));
    }
    if let Some((metric, item)) = scores
        .iter()
        .flat_map(|(m, items)| items.iter().map(move |(i, v)| (m, i, v)))
        .find(|(_, _, v)| !v.is_finite())
        .map(|(m, i, _)| (m, i))
    {
        return Err(Error::InvalidInput(format!("{metric} value for {item} is not finite")));
    }
    let mut votes: BTreeMap<String, usize> = BTreeMap::new();
    for values in scores.values() {
        for item in metric_tail(values, quantile) {
            *votes.entry(item).or_insert(0) += 1;
        }
    }
    Ok(votes
        .into_iter()
        .filter(|(_, n)| *n >= min_agreement)
        .map(|(item, _)| item)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    Grey,
    Black,
}

/// One row of the metric summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricTableRow {
    pub metric_id: MetricId,
    pub box_kind: BoxKind,
    pub task_types: &'static [TaskType],
    pub validation_levels: &'static [ValidationLevel],
    pub requires_other_model: bool,
}

/// Which metric suits which task type and validation level.
pub const METRIC_TABLE: [MetricTableRow; 9] = [
    MetricTableRow {
        metric_id: MetricId::TokenLevelEntropy,
        box_kind: BoxKind::Grey,
        task_types: &[T1],
        validation_levels: &[V0, V1, V2],
        requires_other_model: false,
    },
    MetricTableRow {
        metric_id: MetricId::Brier,
        box_kind: BoxKind::Grey,
        task_types: &[T1],
        validation_levels: &[V2],
        requires_other_model: false,
    },
    MetricTableRow {
        metric_id: MetricId::Embedding,
        box_kind: BoxKind::Black,
        task_types: &[T2, T3],
        validation_levels: &[V0, V1, V2],
        requires_other_model: true,
    },
    MetricTableRow {
        metric_id: MetricId::EigvalLaplacianJaccard,
        box_kind: BoxKind::Black,
        task_types: &[T3],
        validation_levels: &[V0, V1],
        requires_other_model: false,
    },
    MetricTableRow {
        metric_id: MetricId::EccentricityJaccard,
        box_kind: BoxKind::Black,
        task_types: &[T3],
        validation_levels: &[V0, V1],
        requires_other_model: false,
    },
    MetricTableRow {
        metric_id: MetricId::EigvalLaplacianNli,
        box_kind: BoxKind::Black,
        task_types: &[T2, T3],
        validation_levels: &[V0, V1],
        requires_other_model: true,
    },
    MetricTableRow {
        metric_id: MetricId::EccentricityNli,
        box_kind: BoxKind::Black,
        task_types: &[T2, T3],
        validation_levels: &[V0, V1],
        requires_other_model: true,
    },
    MetricTableRow {
        metric_id: MetricId::SemanticEntropy,
        box_kind: BoxKind::Black,
        task_types: &[T2, T3],
        validation_levels: &[V0, V1],
        requires_other_model: true,
    },
    MetricTableRow {
        metric_id: MetricId::Luq,
        box_kind: BoxKind::Black,
        task_types: &[T3],
        validation_levels: &[V0],
        requires_other_model: true,
    },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendedMetric {
    pub metric_id: MetricId,
    pub requires_logprobs: bool,
    pub requires_other_model: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricRecommendation {
    pub metrics: Vec<RecommendedMetric>,
    /// Set when the table had matches but all of them need log-probabilities.
    pub warning: Option<String>,
}

impl MetricRecommendation {
    pub fn metric_ids(&self) -> Vec<MetricId> {
        self.metrics.iter().map(|m| m.metric_id).collect()
    }
}

pub fn recommend_metrics(t: TaskType, v: ValidationLevel, logprobs_available: bool) -> MetricRecommendation {
    let matching: Vec<&MetricTableRow> = METRIC_TABLE
        .iter()
        .filter(|r| r.task_types.contains(&t) && r.validation_levels.contains(&v))
        .collect();
    let metrics: Vec<RecommendedMetric> = matching
        .iter()
        .filter(|r| logprobs_available || r.box_kind != BoxKind::Grey)
        .map(|r| RecommendedMetric {
            metric_id: r.metric_id,
            requires_logprobs: r.box_kind == BoxKind::Grey,
            requires_other_model: r.requires_other_model,
        })
        .collect();
    let warning = (metrics.is_empty() && !matching.is_empty()).then(|| {
        format!(
            "every metric suited to {t} at {v} needs token log-probabilities, which are unavailable"
        )
    });
    MetricRecommendation { metrics, warning }
}

/// A uniform random `ceil(rate * n)`-subset, kept in input order.
pub fn subsample_for_validation(item_ids: &[String], rate: f64, seed: u64) -> Result<Vec<String>> {
    if item_ids.is_empty() {
        return Err(Error::InvalidInput("no items to subsample".into()));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidConfig(format!("subsample rate must lie in (0, 1], got {rate}")));
    }
    let n = item_ids.len();
    let count = (num::ceil(rate * n as f64 - 1e-9) as usize).clamp(1, n);
    let mut picked = rand::seq::index::sample(&mut rng::seeded(seed), n, count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| item_ids[i].clone()).collect())
}

/// Fraction of responses whose extracted answer equals the gold label after
/// normalization.
pub fn accuracy_against_gold(set: &SampleSet, gold: &str, extraction: &AnswerExtraction) -> Result<f64> {
    let gold = normalize_answer(gold);
    if gold.is_empty() {
        return Err(Error::InvalidInput("gold label is empty".into()));
    }
    let mut failed = Vec::new();
    let mut reason = String::new();
    let mut correct = 0usize;
    for s in set.samples() {
        match extract_answer_text(s, extraction, set.task_type()) {
            Ok(answer) => correct += usize::from(normalize_answer(&answer) == gold),
            Err(e) => {
                failed.push(s.sample_id.clone());
                reason = e;
            }
        }
    }
    if !failed.is_empty() {
        return Err(Error::InvalidSample {
            sample_ids: failed,
            reason,
        });
    }
    Ok(correct as f64 / set.len() as f64)
}
