use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::require_samples;
use crate::linalg::{symmetric_eigen, Matrix, SymmetricEigen};
use crate::model::{MetricId, MetricScore, SampleSet};
use crate::num;
use crate::provider::{nli_judge, NliModel};
use crate::text::{jaccard, word_set};
use crate::{Error, Result};

/// Eigenvalues of the normalized Laplacian below this value supply the
/// eccentricity coordinates.
pub const DEFAULT_EIG_THRESHOLD: f64 = 0.9;

const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Jaccard,
    NliEntail,
}

/// Pairwise response similarities: symmetric, unit diagonal, entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    kind: SimilarityKind,
    entries: Matrix,
    ids: Vec<String>,
}

impl SimilarityMatrix {
    /// `ids` names the rows (usually sample ids) and must match the size.
    pub fn new(kind: SimilarityKind, entries: Matrix, ids: Vec<String>) -> Result<Self> {
        let m = entries.dim();
        if ids.len() != m {
            return Err(Error::InvalidMatrix(format!("{} ids for a {m}x{m} matrix", ids.len())));
        }
        for i in 0..m {
            if (entries[(i, i)] - 1.0).abs() > TOLERANCE {
                return Err(Error::InvalidMatrix(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..m {
                let a = entries[(i, j)];
                if !a.is_finite() || !(-TOLERANCE..=1.0 + TOLERANCE).contains(&a) {
                    return Err(Error::InvalidMatrix(format!("entry ({i}, {j}) = {a} is outside [0, 1]")));
                }
                if (a - entries[(j, i)]).abs() > TOLERANCE {
                    return Err(Error::InvalidMatrix(format!("entries ({i}, {j}) and ({j}, {i}) differ")));
                }
            }
        }
        Ok(Self { kind, entries, ids })
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }
}

fn ids_of(set: &SampleSet) -> Vec<String> {
    set.samples().iter().map(|s| s.sample_id.clone()).collect()
}

/// Jaccard overlap of the responses' word sets.
pub fn jaccard_similarity(set: &SampleSet) -> Result<SimilarityMatrix> {
    require_samples(set, 2)?;
    let sets: Vec<_> = set.texts().iter().map(|t| word_set(t)).collect();
    let empty: Vec<String> = set
        .samples()
        .iter()
        .zip(&sets)
        .filter(|(_, w)| w.is_empty())
        .map(|(s, _)| s.sample_id.clone())
        .collect();
    if !empty.is_empty() {
        return Err(Error::InvalidSample {
            sample_ids: empty,
            reason: "response has no words".into(),
        });
    }
    let entries = Matrix::from_fn(sets.len(), |i, j| if i == j { 1.0 } else { jaccard(&sets[i], &sets[j]) });
    SimilarityMatrix::new(SimilarityKind::Jaccard, entries, ids_of(set))
}

/// Mean of the two directed entailment probabilities for every pair.
pub fn nli_similarity<N: NliModel + ?Sized>(set: &SampleSet, nli: &N) -> Result<SimilarityMatrix> {
    require_samples(set, 2)?;
    let texts = set.texts();
    let m = texts.len();
    let mut entries = Matrix::identity(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let a = 0.5
                * (nli_judge(nli, texts[i], texts[j])?.entail_probability()
                    + nli_judge(nli, texts[j], texts[i])?.entail_probability());
            entries[(i, j)] = a;
            entries[(j, i)] = a;
        }
    }
    SimilarityMatrix::new(SimilarityKind::NliEntail, entries, ids_of(set))
}

/// Builds the requested kind; `nli` is required for [`SimilarityKind::NliEntail`].
pub fn similarity_matrix(
    set: &SampleSet,
    kind: SimilarityKind,
    nli: Option<&dyn NliModel>,
) -> Result<SimilarityMatrix> {
    match (kind, nli) {
        (SimilarityKind::Jaccard, _) => jaccard_similarity(set),
        (SimilarityKind::NliEntail, Some(nli)) => nli_similarity(set, nli),
        (SimilarityKind::NliEntail, None) => Err(Error::InvalidInput(
            "an NLI model is needed for entailment similarity".into(),
        )),
    }
}

/// `L = I - D^{-1/2} W D^{-1/2}` and its eigendecomposition.
fn laplacian_spectrum(sim: &SimilarityMatrix) -> Result<SymmetricEigen> {
    let m = sim.dim();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let w = sim.entries();
    let mut inv_sqrt_degree = Vec::with_capacity(m);
    for row in 0..m {
        let d: f64 = w.row(row).iter().sum();
        if !(d > 0.0) {
            return Err(Error::DegenerateGraph { row });
        }
        inv_sqrt_degree.push(1.0 / num::sqrt(d));
    }
    let l = Matrix::from_fn(m, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - inv_sqrt_degree[i] * w[(i, j)] * inv_sqrt_degree[j]
    });
    Ok(symmetric_eigen(&l))
}

fn metric_for(kind: SimilarityKind, eig: bool) -> MetricId {
    match (kind, eig) {
        (SimilarityKind::Jaccard, true) => MetricId::EigvalLaplacianJaccard,
        (SimilarityKind::Jaccard, false) => MetricId::EccentricityJaccard,
        (SimilarityKind::NliEntail, true) => MetricId::EigvalLaplacianNli,
        (SimilarityKind::NliEntail, false) => MetricId::EccentricityNli,
    }
}

/// `sum_k max(0, 1 - lambda_k)` over the normalized Laplacian spectrum, a
/// soft count of semantic clusters. Diagnostics carry `lambda:<k>`.
pub fn eigval_laplacian(sim: &SimilarityMatrix) -> Result<MetricScore> {
    let spectrum = laplacian_spectrum(sim)?;
    let value: f64 = spectrum.values.iter().map(|l| (1.0 - l).max(0.0)).sum();
    let mut score = MetricScore::new(metric_for(sim.kind(), true), value)?;
    for (k, l) in spectrum.values.iter().enumerate() {
        score = score.diagnostic(format!("lambda:{k}"), *l);
    }
    Ok(score)
}

/// Spread of the responses in the spectral embedding.
///
/// Response `i` is placed at row `i` of the eigenvectors whose eigenvalues
/// are below `eig_threshold`. After centering, the score is the norm of all
/// offsets together and each response's per-sample value is its distance to
/// the centroid.
pub fn eccentricity(sim: &SimilarityMatrix, eig_threshold: f64) -> Result<MetricScore> {
    if !(eig_threshold > 0.0 && eig_threshold.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "eig_threshold must be positive, got {eig_threshold}"
        )));
    }
    let spectrum = laplacian_spectrum(sim)?;
    let m = sim.dim();
    let chosen: Vec<usize> = (0..m).filter(|k| spectrum.values[*k] < eig_threshold).collect();
    let vectors = &spectrum.vectors;
    let mean: Vec<f64> = chosen
        .iter()
        .map(|k| (0..m).map(|i| vectors[(i, *k)]).sum::<f64>() / m as f64)
        .collect();
    let distances: Vec<f64> = (0..m)
        .map(|i| {
            let sq: f64 = chosen
                .iter()
                .zip(&mean)
                .map(|(k, mu)| (vectors[(i, *k)] - mu) * (vectors[(i, *k)] - mu))
                .sum();
            num::sqrt(sq)
        })
        .collect();
    let value = num::sqrt(distances.iter().map(|d| d * d).sum());
    let per_sample = sim.ids().iter().cloned().zip(distances).collect();
    Ok(MetricScore::new(metric_for(sim.kind(), false), value)?
        .with_per_sample(per_sample)
        .diagnostic("eig_threshold", eig_threshold)
        .diagnostic("dimensions", chosen.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::text_set;
    use super::*;
    use crate::provider::StubNli;
    use alloc::vec;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn ids(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("r{i}")).collect()
    }

    fn sim(rows: Matrix) -> SimilarityMatrix {
        let m = rows.dim();
        SimilarityMatrix::new(SimilarityKind::Jaccard, rows, ids(m)).unwrap()
    }

    fn two_blocks(within: f64, across: f64) -> SimilarityMatrix {
        sim(Matrix::from_fn(6, |i, j| {
            if i == j {
                1.0
            } else if (i < 3) == (j < 3) {
                within
            } else {
                across
            }
        }))
    }

    #[test]
    fn jaccard_examples() {
        let same = jaccard_similarity(&text_set(&["a b", "A b.", "b a"])).unwrap();
        assert!(same.entries().to_rows().iter().flatten().all(|x| *x == 1.0));
        let disjoint = jaccard_similarity(&text_set(&["a", "b", "c"])).unwrap();
        assert_eq!(disjoint.entries(), &Matrix::identity(3));
        let half = jaccard_similarity(&text_set(&["a b c", "b c d"])).unwrap();
        assert_eq!(half.entries()[(0, 1)], 0.5);
        assert!(matches!(
            jaccard_similarity(&text_set(&["a", "?!"])),
            Err(Error::InvalidSample { .. })
        ));
    }

    #[test]
    fn nli_similarity_averages_directions() {
        let p = |x: f64| [(x / (1.0 - x)).ln(), 0.0, 0.0];
        let nli = StubNli::constant([0.0, 0.0, 0.0]).with_pair("A", "B", p(0.9)).with_pair("B", "A", p(0.3));
        let s = similarity_matrix(&text_set(&["A", "B"]), SimilarityKind::NliEntail, Some(&nli)).unwrap();
        assert_relative_eq!(s.entries()[(0, 1)], 0.6, epsilon = 1e-12);
        assert_eq!(s.entries()[(0, 0)], 1.0);
        assert!(similarity_matrix(&text_set(&["A", "B"]), SimilarityKind::NliEntail, None).is_err());
    }

    #[test]
    fn matrix_validation() {
        let bad = Matrix::from_rows(&[vec![1.0, 0.4], vec![0.5, 1.0]]);
        assert!(SimilarityMatrix::new(SimilarityKind::Jaccard, bad, ids(2)).is_err());
        let diag = Matrix::from_rows(&[vec![0.9, 0.4], vec![0.4, 1.0]]);
        assert!(SimilarityMatrix::new(SimilarityKind::Jaccard, diag, ids(2)).is_err());
        let range = Matrix::from_rows(&[vec![1.0, 1.5], vec![1.5, 1.0]]);
        assert!(SimilarityMatrix::new(SimilarityKind::Jaccard, range, ids(2)).is_err());
    }

    #[test]
    fn eigval_fixed_points() {
        for m in 2..7 {
            let ones = sim(Matrix::from_fn(m, |_, _| 1.0));
            assert_relative_eq!(eigval_laplacian(&ones).unwrap().value, 1.0, epsilon = 1e-9);
            let identity = sim(Matrix::identity(m));
            assert_relative_eq!(eigval_laplacian(&identity).unwrap().value, m as f64, epsilon = 1e-12);
        }
        let blocks = eigval_laplacian(&two_blocks(0.9, 0.05)).unwrap().value;
        assert!((blocks - 2.0).abs() < 0.2, "{blocks}");
    }

    #[test]
    fn eccentricity_examples() {
        let ones = sim(Matrix::from_fn(4, |_, _| 1.0));
        assert!(eccentricity(&ones, DEFAULT_EIG_THRESHOLD).unwrap().value < 1e-9);
        let identity = eccentricity(&sim(Matrix::identity(4)), DEFAULT_EIG_THRESHOLD).unwrap();
        assert!(identity.value > 0.1);
        let blocks = eccentricity(&two_blocks(0.9, 0.05), DEFAULT_EIG_THRESHOLD).unwrap();
        assert_eq!(blocks.per_sample.unwrap().len(), 6);
        assert!(eccentricity(&ones, 0.0).is_err());
    }

    #[test]
    fn eccentricity_separates_blocks() {
        // distances between spectral coordinates: within-block pairs are
        // closer than cross-block pairs
        let s = two_blocks(0.9, 0.05);
        let spectrum = laplacian_spectrum(&s).unwrap();
        let chosen: Vec<usize> = (0..6).filter(|k| spectrum.values[*k] < DEFAULT_EIG_THRESHOLD).collect();
        let dist = |a: usize, b: usize| {
            chosen.iter().map(|k| (spectrum.vectors[(a, *k)] - spectrum.vectors[(b, *k)]).powi(2)).sum::<f64>().sqrt()
        };
        let within = dist(0, 1).max(dist(3, 4));
        let across = dist(0, 3).min(dist(2, 5));
        assert!(within < across, "{within} vs {across}");
    }

    fn random_sim(m: usize, seed: u64) -> SimilarityMatrix {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed);
        let mut w = Matrix::identity(m);
        for i in 0..m {
            for j in (i + 1)..m {
                let x: f64 = rng.random();
                w[(i, j)] = x;
                w[(j, i)] = x;
            }
        }
        sim(w)
    }

    fn oracle_spectrum(s: &SimilarityMatrix) -> (Vec<f64>, DMatrix<f64>) {
        let m = s.dim();
        let w = DMatrix::from_fn(m, m, |i, j| s.entries()[(i, j)]);
        let d: Vec<f64> = (0..m).map(|i| w.row(i).sum()).collect();
        let l = DMatrix::from_fn(m, m, |i, j| (if i == j { 1.0 } else { 0.0 }) - w[(i, j)] / (d[i] * d[j]).sqrt());
        let e = l.symmetric_eigen();
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    }

    proptest! {
        #[test]
        fn eigval_matches_dense_oracle(m in 2usize..9, seed in any::<u64>()) {
            let s = random_sim(m, seed);
            let (values, _) = oracle_spectrum(&s);
            let oracle: f64 = values.iter().map(|l| (1.0 - l).max(0.0)).sum();
            let ours = eigval_laplacian(&s).unwrap().value;
            prop_assert!((ours - oracle).abs() <= 1e-6 * oracle.abs().max(1.0));
            prop_assert!(ours <= m as f64 + 1e-9);
        }

        #[test]
        fn eccentricity_matches_dense_oracle(m in 2usize..9, seed in any::<u64>()) {
            let s = random_sim(m, seed);
            let (values, vectors) = oracle_spectrum(&s);
            let chosen: Vec<usize> = (0..m).filter(|k| values[*k] < DEFAULT_EIG_THRESHOLD).collect();
            // skip draws with an eigenvalue sitting on the threshold
            prop_assume!(values.iter().all(|l| (l - DEFAULT_EIG_THRESHOLD).abs() > 1e-6));
            let mean: Vec<f64> = chosen.iter().map(|k| (0..m).map(|i| vectors[(i, *k)]).sum::<f64>() / m as f64).collect();
            let dists: Vec<f64> = (0..m).map(|i| chosen.iter().zip(&mean).map(|(k, mu)| (vectors[(i, *k)] - mu).powi(2)).sum::<f64>().sqrt()).collect();
            let total = dists.iter().map(|d| d * d).sum::<f64>().sqrt();
            let ours = eccentricity(&s, DEFAULT_EIG_THRESHOLD).unwrap();
            prop_assert!((ours.value - total).abs() <= 1e-6 * total.max(1.0));
            let per = ours.per_sample.unwrap();
            for (i, d) in dists.iter().enumerate() {
                let key = format!("r{i}");
                prop_assert!((per[&key] - d).abs() <= 1e-6);
            }
        }

        #[test]
        fn spectral_metrics_ignore_order(m in 2usize..8, seed in any::<u64>(), rot in 0usize..8) {
            let s = random_sim(m, seed);
            let r = rot % m;
            let perm: Vec<usize> = (0..m).map(|i| (i + r) % m).collect();
            let w = Matrix::from_fn(m, |i, j| s.entries()[(perm[i], perm[j])]);
            let permuted = SimilarityMatrix::new(SimilarityKind::Jaccard, w, perm.iter().map(|p| format!("r{p}")).collect()).unwrap();
            let (values, _) = oracle_spectrum(&s);
            prop_assume!(values.iter().all(|l| (l - DEFAULT_EIG_THRESHOLD).abs() > 1e-6));
            let a = eigval_laplacian(&s).unwrap().value;
            let b = eigval_laplacian(&permuted).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9);
            let ea = eccentricity(&s, DEFAULT_EIG_THRESHOLD).unwrap();
            let eb = eccentricity(&permuted, DEFAULT_EIG_THRESHOLD).unwrap();
            prop_assert!((ea.value - eb.value).abs() < 1e-6);
        }

        #[test]
        fn jaccard_matrices_are_valid(texts in prop::collection::vec("[a-e]( [a-e]){0,4}", 2..7)) {
            let refs: Vec<&str> = texts.iter().map(|t| t.as_str()).collect();
            let s = jaccard_similarity(&text_set(&refs)).unwrap();
            for i in 0..s.dim() {
                prop_assert_eq!(s.entries()[(i, i)], 1.0);
                for j in 0..s.dim() {
                    prop_assert_eq!(s.entries()[(i, j)], s.entries()[(j, i)]);
                    prop_assert!((0.0..=1.0).contains(&s.entries()[(i, j)]));
                }
            }
        }
    }
}
