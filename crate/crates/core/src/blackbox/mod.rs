//! Sample-diversity metrics that need only the response texts plus an
//! embedding or NLI backend.
//!
//! Every function scores one [`SampleSet`]. Wherever a metric has a pure core
//! (cluster sizes, a matrix of embeddings) that core is exposed separately
//! so callers holding precomputed inputs can skip the provider round trip.

mod luq;
mod spectral;

pub use luq::{luq, luq_pair, DEFAULT_TOP_FRACTION};
pub use spectral::{
    eccentricity, eigval_laplacian, jaccard_similarity, nli_similarity, similarity_matrix,
    SimilarityKind, SimilarityMatrix, DEFAULT_EIG_THRESHOLD,
};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};
use crate::model::{MetricId, MetricScore, SampleSet};
use crate::num;
use crate::provider::{embed_batch, nli_judge, Embedder, EmbeddingVector, NliModel};
use crate::{Error, Result};

/// Regularizer added to the centered Gram matrix before the log-determinant.
pub const DEFAULT_ALPHA: f64 = 1e-3;

pub(crate) fn require_samples(set: &SampleSet, needed: usize) -> Result<()> {
    set.ensure_scorable()?;
    if set.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: set.len(),
        });
    }
    Ok(())
}

fn embed_set<E: Embedder + ?Sized>(set: &SampleSet, embedder: &E) -> Result<Vec<EmbeddingVector>> {
    Ok(embed_batch(embedder, &set.texts())?)
}

/// `1 - mean_{i != j} x_i . x_j` over unit embeddings.
pub fn dispersion_from_embeddings(vectors: &[EmbeddingVector]) -> f64 {
    let n = vectors.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += vectors[i].cosine(&vectors[j]);
            }
        }
    }
    1.0 - sum / (n * (n - 1)) as f64
}

/// Average pairwise cosine distance between response embeddings. The
/// per-sample value is each response's mean distance to the others.
pub fn embedding_dispersion<E: Embedder + ?Sized>(set: &SampleSet, embedder: &E) -> Result<MetricScore> {
    require_samples(set, 2)?;
    let vectors = embed_set(set, embedder)?;
    let n = vectors.len();
    let per_sample = set
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let d: f64 = (0..n)
                .filter(|j| *j != i)
                .map(|j| 1.0 - vectors[i].cosine(&vectors[j]))
                .sum();
            (s.sample_id.clone(), d / (n - 1) as f64)
        })
        .collect();
    Ok(MetricScore::new(MetricId::Embedding, dispersion_from_embeddings(&vectors))?
        .with_per_sample(per_sample))
}

/// Cluster id per sample, in sample order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    cluster_ids: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Ids must be dense: every id in `0..k` is used and nothing else.
    pub fn new(cluster_ids: Vec<usize>) -> Result<Self> {
        let k = cluster_ids.iter().max().map_or(0, |m| m + 1);
        let mut used = alloc::vec![false; k];
        for id in &cluster_ids {
            used[*id] = true;
        }
        if k == 0 || used.contains(&false) {
            return Err(Error::InvalidInput(
                "cluster ids must cover 0..k with no empty cluster".into(),
            ));
        }
        Ok(Self { cluster_ids, k })
    }

    pub fn cluster_ids(&self) -> &[usize] {
        &self.cluster_ids
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0; self.k];
        for id in &self.cluster_ids {
            sizes[*id] += 1;
        }
        sizes
    }

    /// Members of each cluster as sample indices, clusters in id order.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut groups = alloc::vec![Vec::new(); self.k];
        for (i, id) in self.cluster_ids.iter().enumerate() {
            groups[*id].push(i);
        }
        groups
    }
}

/// Greedy clustering by mutual entailment.
///
/// Samples are visited in set order. Each joins the first cluster whose
/// representative (its first member) it entails and is entailed by;
/// otherwise it starts a new cluster.
pub fn cluster_by_bidirectional_entailment<N: NliModel + ?Sized>(
    set: &SampleSet,
    nli: &N,
) -> Result<ClusterAssignment> {
    set.ensure_scorable()?;
    let texts = set.texts();
    let mut representatives: Vec<usize> = Vec::new();
    let mut ids = Vec::with_capacity(texts.len());
    for (i, text) in texts.iter().enumerate() {
        let mut joined = None;
        for (c, &r) in representatives.iter().enumerate() {
            if nli_judge(nli, texts[r], text)?.is_entailment()
                && nli_judge(nli, text, texts[r])?.is_entailment()
            {
                joined = Some(c);
                break;
            }
        }
        ids.push(joined.unwrap_or_else(|| {
            representatives.push(i);
            representatives.len() - 1
        }));
    }
    ClusterAssignment::new(ids)
}

/// Normalized entropy of the cluster-size distribution, `H / ln k`; zero
/// when there is a single cluster.
pub fn semantic_entropy_from_sizes(sizes: &[usize]) -> f64 {
    let k = sizes.len();
    if k <= 1 {
        return 0.0;
    }
    let n: usize = sizes.iter().sum();
    let h = num::shannon_entropy(sizes.iter().map(|s| *s as f64 / n as f64));
    (h / num::ln(k as f64)).min(1.0)
}

pub fn semantic_entropy<N: NliModel + ?Sized>(set: &SampleSet, nli: &N) -> Result<MetricScore> {
    let clusters = cluster_by_bidirectional_entailment(set, nli)?;
    let sizes = clusters.sizes();
    let mut score = MetricScore::new(MetricId::SemanticEntropy, semantic_entropy_from_sizes(&sizes))?
        .diagnostic("k", clusters.k() as f64);
    for (c, size) in sizes.iter().enumerate() {
        score = score.diagnostic(format!("cluster_size:{c}"), *size as f64);
    }
    let per_sample = set
        .samples()
        .iter()
        .zip(clusters.cluster_ids())
        .map(|(s, c)| (s.sample_id.clone(), *c as f64))
        .collect();
    score.diagnostics.insert("per_sample_is_cluster_id".into(), 1.0);
    Ok(score.with_per_sample(per_sample))
}

/// Result of [`eigenscore_from_rows`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenScoreValue {
    pub value: f64,
    /// The Cholesky factorization failed and the eigenvalue sum was used.
    pub used_eigen_fallback: bool,
}

/// `(1/K) ln det(J Z (J Z)^T + alpha I)` for the `K` rows of `z`.
pub fn eigenscore_from_rows(z: &[Vec<f64>], alpha: f64) -> Result<EigenScoreValue> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    let k = z.len();
    if k < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: k });
    }
    let d = z[0].len();
    if z.iter().any(|r| r.len() != d) || z.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "embeddings must be finite and share one dimension".into(),
        ));
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| z.iter().map(|r| r[c]).sum::<f64>() / k as f64)
        .collect();
    let centered: Vec<Vec<f64>> = z
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let gram = Matrix::from_fn(k, |i, j| num::dot(&centered[i], &centered[j]));
    let regularized = Matrix::from_fn(k, |i, j| gram[(i, j)] + if i == j { alpha } else { 0.0 });
    let (log_det, used_eigen_fallback) = match linalg::cholesky_log_det(&regularized) {
        Some(ld) => (ld, false),
        None => {
            let eig = linalg::symmetric_eigen(&gram);
            let ld = eig.values.iter().map(|l| num::ln(l.max(0.0) + alpha)).sum();
            (ld, true)
        }
    };
    Ok(EigenScoreValue {
        value: log_det / k as f64,
        used_eigen_fallback,
    })
}

pub fn eigenscore<E: Embedder + ?Sized>(set: &SampleSet, embedder: &E, alpha: f64) -> Result<MetricScore> {
    require_samples(set, 2)?;
    let rows: Vec<Vec<f64>> = embed_set(set, embedder)?
        .into_iter()
        .map(|v| v.values().to_vec())
        .collect();
    let r = eigenscore_from_rows(&rows, alpha)?;
    Ok(MetricScore::new(MetricId::Eigenscore, r.value)?
        .diagnostic("alpha", alpha)
        .diagnostic("eigen_fallback", if r.used_eigen_fallback { 1.0 } else { 0.0 }))
}

/// The two responses farthest apart in embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarthestPair {
    pub first: String,
    pub second: String,
    pub distance: f64,
}

/// Argmax of cosine distance over unordered pairs. Exact ties go to the
/// lexicographically smallest `(first, second)` id pair, with
/// `first < second`.
pub fn farthest_pair<E: Embedder + ?Sized>(set: &SampleSet, embedder: &E) -> Result<FarthestPair> {
    require_samples(set, 2)?;
    let vectors = embed_set(set, embedder)?;
    let ids: Vec<&str> = set.samples().iter().map(|s| s.sample_id.as_str()).collect();
    let mut best: Option<(f64, &str, &str)> = None;
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            let d = 1.0 - vectors[i].cosine(&vectors[j]);
            let (a, b) = if ids[i] < ids[j] { (ids[i], ids[j]) } else { (ids[j], ids[i]) };
            let better = match best {
                None => true,
                Some((bd, ba, bb)) => d > bd || (d == bd && (a, b) < (ba, bb)),
            };
            if better {
                best = Some((d, a, b));
            }
        }
    }
    let (distance, a, b) = best.expect("at least one pair");
    Ok(FarthestPair {
        first: a.into(),
        second: b.into(),
        distance,
    })
}

/// Sample id to text, for reports that quote responses.
pub fn texts_by_id(set: &SampleSet) -> BTreeMap<String, String> {
    set.samples()
        .iter()
        .map(|s| (s.sample_id.clone(), s.text.clone()))
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::model::{ResponseSample, SamplingParams, TaskType};

    pub fn text_set(texts: &[&str]) -> SampleSet {
        let samples = texts
            .iter()
            .enumerate()
            .map(|(i, t)| ResponseSample {
                sample_id: format!("s{i:02}"),
                task_id: "t".into(),
                prompt_variant_id: 0,
                repeat_index: i as u32,
                text: (*t).into(),
                tokens: None,
                model_id: "m".into(),
                sampling_params: SamplingParams::default(),
                logprobs_unavailable: false,
            })
            .collect();
        SampleSet::new("t", samples, TaskType::T3OpenLong, 0).unwrap()
    }
}
