//! Shared data model: samples, sample sets, the task / validation typology and
//! metric results. Every type is immutable once constructed; constructors and
//! deserializers enforce the invariants.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::num::NonZeroU32;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::num;
use crate::{Error, Result};

/// One generated token with its natural-log probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTokenDraw")]
pub struct TokenDraw {
    token_text: String,
    logprob: f64,
    position: u32,
}

#[derive(Deserialize)]
struct RawTokenDraw {
    token_text: String,
    logprob: f64,
    position: u32,
}

impl TryFrom<RawTokenDraw> for TokenDraw {
    type Error = Error;

    fn try_from(raw: RawTokenDraw) -> Result<Self> {
        TokenDraw::new(raw.token_text, raw.logprob, raw.position)
    }
}

impl TokenDraw {
    /// Fails unless `0 < exp(logprob) <= 1`.
    pub fn new(token_text: impl Into<String>, logprob: f64, position: u32) -> Result<Self> {
        let p = num::exp(logprob);
        if !(logprob <= 0.0 && p > 0.0) {
            return Err(Error::InvalidInput(format!(
                "token log-probability {logprob} does not map into (0, 1]"
            )));
        }
        Ok(Self {
            token_text: token_text.into(),
            logprob,
            position,
        })
    }

    pub fn token_text(&self) -> &str {
        &self.token_text
    }

    pub fn logprob(&self) -> f64 {
        self.logprob
    }

    pub fn position(&self) -> u32 {
        self.position
    }

    pub fn probability(&self) -> f64 {
        num::exp(self.logprob)
    }
}

/// Inference-time sampling controls. `top_k = None` means unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSamplingParams")]
pub struct SamplingParams {
    temperature: f64,
    top_p: f64,
    top_k: Option<NonZeroU32>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct RawSamplingParams {
    temperature: f64,
    top_p: f64,
    #[serde(default)]
    top_k: Option<NonZeroU32>,
    #[serde(default)]
    seed: Option<u64>,
}

impl TryFrom<RawSamplingParams> for SamplingParams {
    type Error = Error;

    fn try_from(raw: RawSamplingParams) -> Result<Self> {
        SamplingParams::new(raw.temperature, raw.top_p, raw.top_k, raw.seed)
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
            top_k: None,
            seed: None,
        }
    }
}

impl SamplingParams {
    pub fn new(
        temperature: f64,
        top_p: f64,
        top_k: Option<NonZeroU32>,
        seed: Option<u64>,
    ) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature must be a finite non-negative number, got {temperature}"
            )));
        }
        if !(top_p > 0.0 && top_p <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "top_p must lie in (0, 1], got {top_p}"
            )));
        }
        Ok(Self {
            temperature,
            top_p,
            top_k,
            seed,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn top_p(&self) -> f64 {
        self.top_p
    }

    pub fn top_k(&self) -> Option<NonZeroU32> {
        self.top_k
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_seed(&self, seed: Option<u64>) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Coordinates of one plan cell: which prompt variant, which repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellCoord {
    pub variant: u32,
    pub repeat: u32,
}

/// One generated output and its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub sample_id: String,
    pub task_id: String,
    pub prompt_variant_id: u32,
    pub repeat_index: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<TokenDraw>>,
    pub model_id: String,
    pub sampling_params: SamplingParams,
    /// Set when log-probabilities were requested but the backend did not return them.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub logprobs_unavailable: bool,
}

impl ResponseSample {
    pub fn cell(&self) -> CellCoord {
        CellCoord {
            variant: self.prompt_variant_id,
            repeat: self.repeat_index,
        }
    }
}

/// Closed-option one-token, open short, or open long generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskType {
    #[serde(rename = "T1", alias = "T1_closed_one_token")]
    T1ClosedOneToken,
    #[serde(rename = "T2", alias = "T2_open_short")]
    T2OpenShort,
    #[serde(rename = "T3", alias = "T3_open_long")]
    T3OpenLong,
}

impl TaskType {
    pub const ALL: [TaskType; 3] = [
        TaskType::T1ClosedOneToken,
        TaskType::T2OpenShort,
        TaskType::T3OpenLong,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::T1ClosedOneToken => "T1",
            TaskType::T2OpenShort => "T2",
            TaskType::T3OpenLong => "T3",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" | "T1_CLOSED_ONE_TOKEN" => Ok(TaskType::T1ClosedOneToken),
            "T2" | "T2_OPEN_SHORT" => Ok(TaskType::T2OpenShort),
            "T3" | "T3_OPEN_LONG" => Ok(TaskType::T3OpenLong),
            _ => Err(Error::InvalidInput(format!("unknown task type {s:?}"))),
        }
    }
}

/// How much ground truth is available for calibrating a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValidationLevel {
    #[serde(rename = "V0", alias = "V0_none")]
    V0None,
    #[serde(rename = "V1", alias = "V1_anchors")]
    V1Anchors,
    #[serde(rename = "V2", alias = "V2_full")]
    V2Full,
}

impl ValidationLevel {
    pub const ALL: [ValidationLevel; 3] = [
        ValidationLevel::V0None,
        ValidationLevel::V1Anchors,
        ValidationLevel::V2Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValidationLevel::V0None => "V0",
            ValidationLevel::V1Anchors => "V1",
            ValidationLevel::V2Full => "V2",
        }
    }
}

impl fmt::Display for ValidationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValidationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "V0" | "V0_NONE" => Ok(ValidationLevel::V0None),
            "V1" | "V1_ANCHORS" => Ok(ValidationLevel::V1Anchors),
            "V2" | "V2_FULL" => Ok(ValidationLevel::V2Full),
            _ => Err(Error::InvalidInput(format!(
                "unknown validation level {s:?}"
            ))),
        }
    }
}

/// An expert label or gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAnchor")]
pub struct ReferenceAnchor {
    anchor_id: String,
    text: String,
    category: Option<String>,
}

#[derive(Deserialize)]
struct RawAnchor {
    anchor_id: String,
    text: String,
    #[serde(default)]
    category: Option<String>,
}

impl TryFrom<RawAnchor> for ReferenceAnchor {
    type Error = Error;

    fn try_from(raw: RawAnchor) -> Result<Self> {
        ReferenceAnchor::new(raw.anchor_id, raw.text, raw.category)
    }
}

impl ReferenceAnchor {
    pub fn new(
        anchor_id: impl Into<String>,
        text: impl Into<String>,
        category: Option<String>,
    ) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("reference anchor text is empty".into()));
        }
        Ok(Self {
            anchor_id: anchor_id.into(),
            text,
            category,
        })
    }

    pub fn anchor_id(&self) -> &str {
        &self.anchor_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn category(&self) -> Option<&str> {
        self.category.as_deref()
    }
}

/// The N responses for one task item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSampleSet")]
pub struct SampleSet {
    task_id: String,
    samples: Vec<ResponseSample>,
    task_type: TaskType,
    /// Unix epoch milliseconds, supplied by the caller.
    created_at: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    failed_cells: Vec<CellCoord>,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    partial_accepted: bool,
}

#[derive(Deserialize)]
struct RawSampleSet {
    task_id: String,
    samples: Vec<ResponseSample>,
    task_type: TaskType,
    created_at: u64,
    #[serde(default)]
    failed_cells: Vec<CellCoord>,
    #[serde(default)]
    partial_accepted: bool,
}

impl TryFrom<RawSampleSet> for SampleSet {
    type Error = Error;

    fn try_from(raw: RawSampleSet) -> Result<Self> {
        let mut set = SampleSet::with_failures(
            raw.task_id,
            raw.samples,
            raw.task_type,
            raw.created_at,
            raw.failed_cells,
        )?;
        set.partial_accepted = raw.partial_accepted;
        Ok(set)
    }
}

impl SampleSet {
    pub fn new(
        task_id: impl Into<String>,
        samples: Vec<ResponseSample>,
        task_type: TaskType,
        created_at: u64,
    ) -> Result<Self> {
        Self::with_failures(task_id, samples, task_type, created_at, Vec::new())
    }

    /// A set that is missing the listed plan cells. Metrics refuse it until
    /// [`SampleSet::accept_partial`] is called.
    pub fn with_failures(
        task_id: impl Into<String>,
        samples: Vec<ResponseSample>,
        task_type: TaskType,
        created_at: u64,
        failed_cells: Vec<CellCoord>,
    ) -> Result<Self> {
        let task_id = task_id.into();
        if samples.is_empty() {
            return Err(Error::InvalidSampleSet("a sample set needs N >= 1".into()));
        }
        let mut cells = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for s in &samples {
            if s.task_id != task_id {
                return Err(Error::InvalidSampleSet(format!(
                    "sample {} belongs to task {:?}, expected {:?}",
                    s.sample_id, s.task_id, task_id
                )));
            }
            if !cells.insert(s.cell()) {
                return Err(Error::InvalidSampleSet(format!(
                    "duplicate cell (variant {}, repeat {})",
                    s.prompt_variant_id, s.repeat_index
                )));
            }
            if !ids.insert(s.sample_id.as_str()) {
                return Err(Error::InvalidSampleSet(format!(
                    "duplicate sample id {:?}",
                    s.sample_id
                )));
            }
            if let Some(tokens) = &s.tokens {
                if tokens.is_empty() {
                    return Err(Error::InvalidSampleSet(format!(
                        "sample {} carries an empty token list",
                        s.sample_id
                    )));
                }
                if tokens.windows(2).any(|w| w[0].position >= w[1].position) {
                    return Err(Error::InvalidSampleSet(format!(
                        "token positions of sample {} are not strictly increasing",
                        s.sample_id
                    )));
                }
            }
        }
        Ok(Self {
            task_id,
            samples,
            task_type,
            created_at,
            failed_cells,
            partial_accepted: false,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn samples(&self) -> &[ResponseSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn task_type(&self) -> TaskType {
        self.task_type
    }

    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    pub fn failed_cells(&self) -> &[CellCoord] {
        &self.failed_cells
    }

    pub fn is_partial(&self) -> bool {
        !self.failed_cells.is_empty()
    }

    /// Explicit opt-in to scoring a partial set.
    pub fn accept_partial(mut self) -> Self {
        self.partial_accepted = true;
        self
    }

    pub fn texts(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.text.as_str()).collect()
    }

    /// Errors on a partial set that has not been accepted.
    pub fn ensure_scorable(&self) -> Result<()> {
        if self.is_partial() && !self.partial_accepted {
            return Err(Error::PartialSampleSet {
                failed: self.failed_cells.len(),
            });
        }
        Ok(())
    }
}

/// Identifiers of every registered metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    TokenLevelEntropy,
    Brier,
    Embedding,
    EigvalLaplacianJaccard,
    EccentricityJaccard,
    EigvalLaplacianNli,
    EccentricityNli,
    SemanticEntropy,
    Luq,
    LuqPair,
    Eigenscore,
    CentroidAnchorDistance,
}

impl MetricId {
    pub const ALL: [MetricId; 12] = [
        MetricId::TokenLevelEntropy,
        MetricId::Brier,
        MetricId::Embedding,
        MetricId::EigvalLaplacianJaccard,
        MetricId::EccentricityJaccard,
        MetricId::EigvalLaplacianNli,
        MetricId::EccentricityNli,
        MetricId::SemanticEntropy,
        MetricId::Luq,
        MetricId::LuqPair,
        MetricId::Eigenscore,
        MetricId::CentroidAnchorDistance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::TokenLevelEntropy => "token_level_entropy",
            MetricId::Brier => "brier",
            MetricId::Embedding => "embedding",
            MetricId::EigvalLaplacianJaccard => "eigval_laplacian_jaccard",
            MetricId::EccentricityJaccard => "eccentricity_jaccard",
            MetricId::EigvalLaplacianNli => "eigval_laplacian_nli",
            MetricId::EccentricityNli => "eccentricity_nli",
            MetricId::SemanticEntropy => "semantic_entropy",
            MetricId::Luq => "luq",
            MetricId::LuqPair => "luq_pair",
            MetricId::Eigenscore => "eigenscore",
            MetricId::CentroidAnchorDistance => "centroid_anchor_distance",
        }
    }

    /// Grey-box metrics need token log-probabilities.
    pub fn requires_logprobs(self) -> bool {
        matches!(self, MetricId::TokenLevelEntropy | MetricId::Brier)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric id {s:?}")))
    }
}

/// A named uncertainty value with optional per-sample values and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric_id: MetricId,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl MetricScore {
    pub fn new(metric_id: MetricId, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "metric {metric_id} produced a non-finite value {value}"
            )));
        }
        Ok(Self {
            metric_id,
            value,
            per_sample: None,
            diagnostics: BTreeMap::new(),
        })
    }

    pub fn with_per_sample(mut self, per_sample: BTreeMap<String, f64>) -> Self {
        self.per_sample = Some(per_sample);
        self
    }

    pub fn diagnostic(mut self, key: impl ToString, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// What the researcher expects the model to produce for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub closed_options: Option<Vec<String>>,
    pub expected_token_length: u32,
}

/// Longest expected output (in tokens) that still counts as open short generation.
pub const SHORT_OUTPUT_MAX_TOKENS: u32 = 15;

/// Maps an output spec onto T1 / T2 / T3.
///
/// T1 needs closed options and a one-token answer; open outputs of up to 15
/// tokens (inclusive) are T2, including one-token open answers; anything
/// longer is T3.
pub fn classify_task_type(spec: &OutputSpec) -> Result<TaskType> {
    if spec.expected_token_length == 0 {
        return Err(Error::InvalidSpec(
            "expected_token_length must be at least 1".into(),
        ));
    }
    if let Some(options) = &spec.closed_options {
        if options.is_empty() {
            return Err(Error::InvalidSpec(
                "closed_options is present but empty".into(),
            ));
        }
        if spec.expected_token_length == 1 {
            return Ok(TaskType::T1ClosedOneToken);
        }
    }
    Ok(if spec.expected_token_length <= SHORT_OUTPUT_MAX_TOKENS {
        TaskType::T2OpenShort
    } else {
        TaskType::T3OpenLong
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn spec(options: Option<&[&str]>, len: u32) -> OutputSpec {
        OutputSpec {
            closed_options: options.map(|o| o.iter().map(|s| s.to_string()).collect()),
            expected_token_length: len,
        }
    }

    fn sample(task: &str, v: u32, r: u32, text: &str) -> ResponseSample {
        ResponseSample {
            sample_id: format!("{task}-v{v}-r{r}"),
            task_id: task.into(),
            prompt_variant_id: v,
            repeat_index: r,
            text: text.into(),
            tokens: Some(vec![TokenDraw::new(text, -0.1, 0).unwrap()]),
            model_id: "m".into(),
            sampling_params: SamplingParams::default(),
            logprobs_unavailable: false,
        }
    }

    #[test]
    fn classify_examples() {
        let sentiment = spec(Some(&["positive", "neutral", "negative"]), 1);
        assert_eq!(classify_task_type(&sentiment).unwrap(), TaskType::T1ClosedOneToken);
        assert_eq!(classify_task_type(&spec(None, 8)).unwrap(), TaskType::T2OpenShort);
        assert_eq!(classify_task_type(&spec(None, 400)).unwrap(), TaskType::T3OpenLong);
    }

    #[test]
    fn classify_boundaries() {
        assert_eq!(classify_task_type(&spec(None, 15)).unwrap(), TaskType::T2OpenShort);
        assert_eq!(classify_task_type(&spec(None, 16)).unwrap(), TaskType::T3OpenLong);
        // one-token open generation has no class of its own; it lands in T2
        assert_eq!(classify_task_type(&spec(None, 1)).unwrap(), TaskType::T2OpenShort);
        assert_eq!(
            classify_task_type(&spec(Some(&["a", "b"]), 3)).unwrap(),
            TaskType::T2OpenShort
        );
    }

    #[test]
    fn classify_rejects_empty_options_and_zero_length() {
        assert!(matches!(
            classify_task_type(&spec(Some(&[]), 1)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            classify_task_type(&spec(None, 0)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn token_draw_checks_probability_range() {
        assert!(TokenDraw::new("a", 0.0, 0).is_ok());
        assert!(TokenDraw::new("a", 0.01, 0).is_err());
        assert!(TokenDraw::new("a", f64::NEG_INFINITY, 0).is_err());
        assert!(TokenDraw::new("a", -1e6, 0).is_err());
        assert!(TokenDraw::new("a", f64::NAN, 0).is_err());
        let bad = r#"{"token_text":"a","logprob":0.5,"position":0}"#;
        assert!(serde_json::from_str::<TokenDraw>(bad).is_err());
    }

    #[test]
    fn sampling_params_validation() {
        assert!(SamplingParams::new(-0.1, 1.0, None, None).is_err());
        assert!(SamplingParams::new(1.0, 0.0, None, None).is_err());
        assert!(SamplingParams::new(1.0, 1.1, None, None).is_err());
        assert!(SamplingParams::new(0.0, 1.0, None, Some(1)).is_ok());
        let json = r#"{"temperature":0.7,"top_p":0.9,"top_k":0}"#;
        assert!(serde_json::from_str::<SamplingParams>(json).is_err());
    }

    #[test]
    fn sample_set_rejects_broken_invariants() {
        let a = sample("t", 0, 0, "x");
        let mut dup = sample("t", 0, 0, "y");
        dup.sample_id = "other".into();
        assert!(SampleSet::new("t", vec![a.clone(), dup], TaskType::T2OpenShort, 0).is_err());
        assert!(SampleSet::new("u", vec![a.clone()], TaskType::T2OpenShort, 0).is_err());
        assert!(SampleSet::new("t", vec![], TaskType::T2OpenShort, 0).is_err());
        let mut empty_tokens = a.clone();
        empty_tokens.tokens = Some(vec![]);
        assert!(SampleSet::new("t", vec![empty_tokens], TaskType::T2OpenShort, 0).is_err());
        let mut disordered = a;
        disordered.tokens = Some(vec![
            TokenDraw::new("a", -0.1, 1).unwrap(),
            TokenDraw::new("b", -0.1, 1).unwrap(),
        ]);
        assert!(SampleSet::new("t", vec![disordered], TaskType::T2OpenShort, 0).is_err());
    }

    #[test]
    fn partial_sets_need_explicit_acceptance() {
        let set = SampleSet::with_failures(
            "t",
            vec![sample("t", 0, 0, "x")],
            TaskType::T1ClosedOneToken,
            0,
            vec![CellCoord { variant: 0, repeat: 1 }],
        )
        .unwrap();
        assert!(matches!(
            set.ensure_scorable(),
            Err(Error::PartialSampleSet { failed: 1 })
        ));
        assert!(set.accept_partial().ensure_scorable().is_ok());
    }

    #[test]
    fn metric_ids_round_trip_through_strings() {
        for id in MetricId::ALL {
            assert_eq!(id.as_str().parse::<MetricId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.as_str()));
        }
        assert!("nope".parse::<MetricId>().is_err());
        assert!(MetricScore::new(MetricId::Luq, f64::NAN).is_err());
    }

    #[test]
    fn enums_parse_from_cli_strings() {
        assert_eq!("t3".parse::<TaskType>().unwrap(), TaskType::T3OpenLong);
        assert_eq!("V1".parse::<ValidationLevel>().unwrap(), ValidationLevel::V1Anchors);
        assert!("T4".parse::<TaskType>().is_err());
        assert!(ReferenceAnchor::new("a", "  ", None).is_err());
    }

    fn arb_set() -> impl Strategy<Value = SampleSet> {
        (
            1usize..6,
            1usize..4,
            proptest::collection::vec(("[a-z ]{0,12}", -5.0f64..0.0), 1..20),
            any::<u64>(),
        )
            .prop_map(|(variants, repeats, texts, created)| {
                let mut samples = Vec::new();
                let mut it = texts.into_iter().cycle();
                for v in 0..variants as u32 {
                    for r in 0..repeats as u32 {
                        let (text, lp) = it.next().unwrap();
                        let mut s = sample("task", v, r, &text);
                        s.tokens = Some(vec![
                            TokenDraw::new(text.clone(), lp, 0).unwrap(),
                            TokenDraw::new("eos", lp / 2.0, 3).unwrap(),
                        ]);
                        s.sampling_params = SamplingParams::new(0.7, 0.9, NonZeroU32::new(40), Some(created)).unwrap();
                        samples.push(s);
                    }
                }
                SampleSet::new("task", samples, TaskType::T2OpenShort, created).unwrap()
            })
    }

    proptest! {
        #[test]
        fn sample_set_json_round_trip(set in arb_set()) {
            let json = serde_json::to_string(&set).unwrap();
            let back: SampleSet = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, set);
        }

        #[test]
        fn classify_partitions_valid_specs(len in 1u32..200, closed in any::<bool>()) {
            let s = spec(if closed { Some(&["a", "b"]) } else { None }, len);
            let t = classify_task_type(&s).unwrap();
            let expected = if closed && len == 1 {
                TaskType::T1ClosedOneToken
            } else if len <= 15 {
                TaskType::T2OpenShort
            } else {
                TaskType::T3OpenLong
            };
            prop_assert_eq!(t, expected);
        }

        #[test]
        fn token_draw_construction_matches_probability_range(lp in -800.0f64..2.0) {
            let p = lp.exp();
            prop_assert_eq!(TokenDraw::new("t", lp, 0).is_ok(), p > 0.0 && p <= 1.0);
        }
    }
}
