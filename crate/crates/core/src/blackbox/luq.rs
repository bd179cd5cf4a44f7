use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::require_samples;
use crate::model::{MetricId, MetricScore, SampleSet};
use crate::num;
use crate::provider::{embed_batch, nli_judge, Embedder, NliModel};
use crate::text::split_sentences;
use crate::{Error, Result};

/// Share of sentence pairs kept per response pair by [`luq_pair`].
pub const DEFAULT_TOP_FRACTION: f64 = 0.5;

fn sentences_of(set: &SampleSet) -> Result<Vec<Vec<String>>> {
    let split: Vec<Vec<String>> = set.texts().iter().map(|t| split_sentences(t)).collect();
    let empty: Vec<String> = set
        .samples()
        .iter()
        .zip(&split)
        .filter(|(_, s)| s.is_empty())
        .map(|(s, _)| s.sample_id.clone())
        .collect();
    if !empty.is_empty() {
        return Err(Error::InvalidSample {
            sample_ids: empty,
            reason: "response has no sentences".into(),
        });
    }
    Ok(split)
}

fn finish(metric: MetricId, set: &SampleSet, consistency: &[f64]) -> Result<MetricScore> {
    let per_sample: BTreeMap<String, f64> = set
        .samples()
        .iter()
        .zip(consistency)
        .map(|(s, c)| (s.sample_id.clone(), 1.0 - c))
        .collect();
    let value = per_sample.values().sum::<f64>() / per_sample.len() as f64;
    Ok(MetricScore::new(metric, value)?.with_per_sample(per_sample))
}

/// Asymmetric sentence-against-response consistency.
///
/// Every sentence of response `i` is checked for support by each other full
/// response `k` (premise `r_k`, hypothesis the sentence). `C(r_i)` averages
/// the entailment probabilities over sentences, then over `k`. The score is
/// the mean of `1 - C(r_i)`.
pub fn luq<N: NliModel + ?Sized>(set: &SampleSet, nli: &N) -> Result<MetricScore> {
    require_samples(set, 2)?;
    let sentences = sentences_of(set)?;
    let texts = set.texts();
    let n = texts.len();
    let mut consistency = Vec::with_capacity(n);
    for (i, own) in sentences.iter().enumerate() {
        let mut total = 0.0;
        for (k, premise) in texts.iter().enumerate() {
            if k == i {
                continue;
            }
            let mut per_sentence = 0.0;
            for s in own {
                per_sentence += nli_judge(nli, premise, s)?.entail_probability();
            }
            total += per_sentence / own.len() as f64;
        }
        consistency.push(total / (n - 1) as f64);
    }
    finish(MetricId::Luq, set, &consistency)
}

/// Symmetric sentence-to-sentence consistency over the best-matching
/// sentence pairs.
///
/// For each unordered response pair `(i, k)` all `m_i * m_k` sentence pairs
/// are ranked by embedding cosine distance, with ties broken by the sorted
/// sentence texts and then by index. The closest
/// `ceil(top_fraction * m_i * m_k)` of them, at least one, are kept.
/// A kept pair scores `(P(a => b) + P(b => a)) / 2`. `Cons(r_i)` is the mean
/// over every kept pair that involves response `i`, and the metric is
/// `1 - mean_i Cons(r_i)`.
pub fn luq_pair<E, N>(set: &SampleSet, embedder: &E, top_fraction: f64, nli: &N) -> Result<MetricScore>
where
    E: Embedder + ?Sized,
    N: NliModel + ?Sized,
{
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "top_fraction must lie in (0, 1], got {top_fraction}"
        )));
    }
    require_samples(set, 2)?;
    let sentences = sentences_of(set)?;
    let flat: Vec<&str> = sentences.iter().flatten().map(String::as_str).collect();
    let embedded = embed_batch(embedder, &flat)?;
    let mut offsets = Vec::with_capacity(sentences.len());
    let mut next = 0;
    for s in &sentences {
        offsets.push(next);
        next += s.len();
    }
    let n = sentences.len();
    let mut sums = alloc::vec![0.0; n];
    let mut counts = alloc::vec![0usize; n];
    let mut selected_total = 0usize;
    for i in 0..n {
        for k in (i + 1)..n {
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for a in 0..sentences[i].len() {
                for b in 0..sentences[k].len() {
                    let d = 1.0 - embedded[offsets[i] + a].cosine(&embedded[offsets[k] + b]);
                    pairs.push((d, a, b));
                }
            }
            let key = |a: usize, b: usize| {
                let (x, y) = (&sentences[i][a], &sentences[k][b]);
                if x <= y { (x, y) } else { (y, x) }
            };
            pairs.sort_by(|x, y| {
                x.0.total_cmp(&y.0)
                    .then_with(|| key(x.1, x.2).cmp(&key(y.1, y.2)))
                    .then(x.1.cmp(&y.1))
                    .then(x.2.cmp(&y.2))
            });
            let keep = (num::ceil(top_fraction * pairs.len() as f64 - 1e-9) as usize).clamp(1, pairs.len());
            for &(_, a, b) in &pairs[..keep] {
                let (sa, sb) = (&sentences[i][a], &sentences[k][b]);
                let p = 0.5
                    * (nli_judge(nli, sa, sb)?.entail_probability()
                        + nli_judge(nli, sb, sa)?.entail_probability());
                sums[i] += p;
                sums[k] += p;
                counts[i] += 1;
                counts[k] += 1;
            }
            selected_total += keep;
        }
    }
    let consistency: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    Ok(finish(MetricId::LuqPair, set, &consistency)?
        .diagnostic("top_fraction", top_fraction)
        .diagnostic("selected_pairs", selected_total as f64)
        .diagnostic("aggregation_pooled_mean", 1.0))
}
