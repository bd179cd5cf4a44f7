//! Randomized fixtures and brute-force reference implementations shared by
//! the oracle suite and the acceptance target.
//!
//! Every reference here is written directly from the metric definitions with
//! dense `nalgebra` linear algebra where eigen-decompositions are needed. None
//! of them calls into the metric code under test.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use uqkit_core::blackbox::{
    eccentricity, eigenscore, eigval_laplacian, embedding_dispersion, jaccard_similarity, luq,
    luq_pair, nli_similarity, semantic_entropy,
};
use uqkit_core::calibration::centroid_anchor_distance;
use uqkit_core::greybox::{brier_uncertainty, token_level_entropy, AnswerExtraction};
use uqkit_core::provider::{Embedder, NliModel};
use uqkit_core::rng::{seeded, ChaCha8Rng};
use uqkit_core::{
    ProviderError, ReferenceAnchor, ResponseSample, SampleSet, SamplingParams, TaskType, TokenDraw,
};

pub const REL_TOL: f64 = 1e-9;
pub const EIGEN_TOL: f64 = 1e-6;

const WORDS: &[&str] = &[
    "river", "stone", "lamp", "cloud", "tiger", "maple", "quiet", "amber", "north", "glass",
    "piano", "ember",
];
const ANSWERS: &[&str] = &["yes", "no", "maybe", "Yes", "unsure"];

pub fn close(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol * expected.abs().max(1.0)
}

fn check(label: &str, fixture: usize, actual: f64, expected: f64, tol: f64) -> Result<(), String> {
    if close(actual, expected, tol) {
        Ok(())
    } else {
        Err(format!("{label} fixture {fixture}: got {actual}, oracle {expected}"))
    }
}

// ---------------------------------------------------------------- providers

/// Embedder returning a planted vector per text.
pub struct TableEmbedder(pub BTreeMap<String, Vec<f64>>);

impl Embedder for TableEmbedder {
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        texts
            .iter()
            .map(|t| self.0.get(*t).cloned().ok_or_else(|| ProviderError::MissingFixture(t.to_string())))
            .collect()
    }
}

/// NLI model returning planted logits per ordered (premise, hypothesis) pair.
pub struct TableNli(pub BTreeMap<(String, String), [f64; 3]>);

impl NliModel for TableNli {
    fn logits(&self, premise: &str, hypothesis: &str) -> Result<[f64; 3], ProviderError> {
        self.0
            .get(&(premise.to_string(), hypothesis.to_string()))
            .copied()
            .ok_or_else(|| ProviderError::MissingFixture(format!("{premise} => {hypothesis}")))
    }
}

// ----------------------------------------------------------------- fixtures

pub fn sample(i: usize, text: String, tokens: Option<Vec<TokenDraw>>) -> ResponseSample {
    ResponseSample {
        sample_id: format!("s{i:02}"),
        task_id: "fixture".into(),
        prompt_variant_id: i as u32,
        repeat_index: 0,
        text,
        tokens,
        model_id: "oracle".into(),
        sampling_params: SamplingParams::default(),
        logprobs_unavailable: false,
    }
}

pub fn set_of(texts: &[String], task_type: TaskType) -> SampleSet {
    let samples = texts.iter().enumerate().map(|(i, t)| sample(i, t.clone(), None)).collect();
    SampleSet::new("fixture", samples, task_type, 0).unwrap()
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=5);
    let words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// N in 2..=8 responses of 1..=4 sentences each.
pub fn random_texts(rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let n = rng.random_range(2..=8);
    (0..n)
        .map(|_| (0..rng.random_range(1..=4)).map(|_| sentence(rng)).collect())
        .collect()
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-3 {
            return v;
        }
    }
}

fn random_logits(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]
}

fn embed_table<'a>(rng: &mut ChaCha8Rng, texts: impl Iterator<Item = &'a String>, dim: usize) -> TableEmbedder {
    let mut table = BTreeMap::new();
    for t in texts {
        if !table.contains_key(t) {
            table.insert(t.clone(), random_vector(rng, dim));
        }
    }
    TableEmbedder(table)
}

fn nli_table(rng: &mut ChaCha8Rng, units: &[String]) -> TableNli {
    let mut table = BTreeMap::new();
    for a in units {
        for b in units {
            table.entry((a.clone(), b.clone())).or_insert_with(|| random_logits(rng));
        }
    }
    TableNli(table)
}

// ------------------------------------------------------------------ oracles

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn entail_p(l: [f64; 3]) -> f64 {
    l[0].exp() / (l[0].exp() + l[2].exp())
}

fn entails(l: [f64; 3]) -> bool {
    l[0] > l[1] && l[0] > l[2]
}

fn shannon(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    -masses.iter().map(|m| m / total).filter(|p| *p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

pub fn oracle_token_entropy(answers: &[(String, f64)]) -> f64 {
    let mut mass: BTreeMap<String, f64> = BTreeMap::new();
    for (a, lp) in answers {
        *mass.entry(a.to_lowercase()).or_default() += lp.exp();
    }
    shannon(&mass.values().copied().collect::<Vec<_>>())
}

pub fn oracle_brier(responses: &[Vec<f64>]) -> f64 {
    let per: Vec<f64> = responses
        .iter()
        .map(|lps| lps.iter().map(|lp| (1.0 - lp.exp()).powi(2)).sum::<f64>() / lps.len() as f64)
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

pub fn oracle_dispersion(vectors: &[Vec<f64>]) -> f64 {
    let u: Vec<Vec<f64>> = vectors.iter().map(|v| unit(v)).collect();
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += dot(&u[i], &u[j]);
            }
        }
    }
    1.0 - s / (n * (n - 1)) as f64
}

pub fn oracle_eigenscore(vectors: &[Vec<f64>], alpha: f64) -> f64 {
    let k = vectors.len();
    let d = vectors[0].len();
    let z = DMatrix::from_fn(k, d, |i, j| unit(&vectors[i])[j]);
    let j = DMatrix::<f64>::identity(k, k) - DMatrix::from_element(k, k, 1.0 / k as f64);
    let jz = &j * &z;
    let g = &jz * jz.transpose() + DMatrix::<f64>::identity(k, k) * alpha;
    let eig = SymmetricEigen::new(g);
    eig.eigenvalues.iter().map(|l| l.ln()).sum::<f64>() / k as f64
}

/// Greedy clustering against each cluster's first member, then normalized entropy.
pub fn oracle_semantic_entropy(texts: &[String], nli: &TableNli) -> f64 {
    let mut reps: Vec<&String> = Vec::new();
    let mut sizes: Vec<f64> = Vec::new();
    for t in texts {
        let found = reps.iter().position(|r| {
            entails(nli.0[&((*r).clone(), t.clone())]) && entails(nli.0[&(t.clone(), (*r).clone())])
        });
        match found {
            Some(c) => sizes[c] += 1.0,
            None => {
                reps.push(t);
                sizes.push(1.0);
            }
        }
    }
    if sizes.len() == 1 {
        0.0
    } else {
        shannon(&sizes) / (sizes.len() as f64).ln()
    }
}

pub fn oracle_luq(responses: &[Vec<String>], nli: &TableNli) -> f64 {
    let full: Vec<String> = responses.iter().map(|s| s.join(" ")).collect();
    let n = responses.len();
    let mut total = 0.0;
    for (i, sentences) in responses.iter().enumerate() {
        let mut c = 0.0;
        for k in (0..n).filter(|k| *k != i) {
            let per: f64 = sentences
                .iter()
                .map(|s| entail_p(nli.0[&(full[k].clone(), s.clone())]))
                .sum();
            c += per / sentences.len() as f64;
        }
        total += 1.0 - c / (n - 1) as f64;
    }
    total / n as f64
}

pub fn oracle_luq_pair(responses: &[Vec<String>], emb: &TableEmbedder, frac: f64, nli: &TableNli) -> f64 {
    let n = responses.len();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0.0; n];
    for i in 0..n {
        for k in (i + 1)..n {
            let mut pairs = Vec::new();
            for a in &responses[i] {
                for b in &responses[k] {
                    let d = 1.0 - dot(&unit(&emb.0[a]), &unit(&emb.0[b]));
                    pairs.push((d, a, b));
                }
            }
            pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            let keep = ((frac * pairs.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            for (_, a, b) in &pairs[..keep.min(pairs.len())] {
                let p = (entail_p(nli.0[&((*a).clone(), (*b).clone())])
                    + entail_p(nli.0[&((*b).clone(), (*a).clone())]))
                    / 2.0;
                sums[i] += p;
                sums[k] += p;
                counts[i] += 1.0;
                counts[k] += 1.0;
            }
        }
    }
    1.0 - (0..n).map(|i| sums[i] / counts[i]).sum::<f64>() / n as f64
}

pub fn jaccard_matrix(texts: &[String]) -> DMatrix<f64> {
    let sets: Vec<std::collections::BTreeSet<String>> = texts
        .iter()
        .map(|t| t.split_whitespace().map(|w| w.trim_end_matches('.').to_lowercase()).collect())
        .collect();
    DMatrix::from_fn(texts.len(), texts.len(), |i, j| {
        if i == j {
            1.0
        } else {
            sets[i].intersection(&sets[j]).count() as f64 / sets[i].union(&sets[j]).count() as f64
        }
    })
}

pub fn nli_matrix(texts: &[String], nli: &TableNli) -> DMatrix<f64> {
    DMatrix::from_fn(texts.len(), texts.len(), |i, j| {
        if i == j {
            1.0
        } else {
            (entail_p(nli.0[&(texts[i].clone(), texts[j].clone())])
                + entail_p(nli.0[&(texts[j].clone(), texts[i].clone())]))
                / 2.0
        }
    })
}

fn normalized_laplacian(w: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let m = w.nrows();
    let d: Vec<f64> = (0..m).map(|i| w.row(i).sum()).collect();
    let l = DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - w[(i, j)] / (d[i] * d[j]).sqrt()
    });
    SymmetricEigen::new(l)
}

pub fn oracle_eigval(w: &DMatrix<f64>) -> f64 {
    normalized_laplacian(w).eigenvalues.iter().map(|l| (1.0 - l).max(0.0)).sum()
}

/// Total and per-row distance to the centroid in the low-eigenvalue coordinates.
pub fn oracle_eccentricity(w: &DMatrix<f64>, threshold: f64) -> (f64, Vec<f64>) {
    let eig = normalized_laplacian(w);
    let m = w.nrows();
    let cols: Vec<usize> = (0..m).filter(|c| eig.eigenvalues[*c] < threshold).collect();
    let coords = DMatrix::from_fn(m, cols.len(), |i, c| eig.eigenvectors[(i, cols[c])]);
    let mean = coords.row_mean();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        rows.push((coords.row(i) - &mean).norm());
    }
    (rows.iter().map(|r| r * r).sum::<f64>().sqrt(), rows)
}

pub fn oracle_centroid_distance(labels: &[Vec<f64>], anchor: &[f64]) -> f64 {
    let dim = anchor.len();
    let mut mean = vec![0.0; dim];
    for l in labels {
        for (m, x) in mean.iter_mut().zip(unit(l)) {
            *m += x / labels.len() as f64;
        }
    }
    1.0 - dot(&unit(&mean), &unit(anchor))
}

// ------------------------------------------------------------- the checks

/// One metric family's randomized comparison. Returns the number of fixtures
/// checked or the first mismatch.
pub type OracleCheck = fn(u64, usize) -> Result<usize, String>;

pub const ORACLE_CHECKS: &[(&str, OracleCheck)] = &[
    ("token_level_entropy", check_token_entropy),
    ("brier", check_brier),
    ("embedding", check_dispersion),
    ("eigenscore", check_eigenscore),
    ("semantic_entropy", check_semantic_entropy),
    ("luq", check_luq),
    ("luq_pair", check_luq_pair),
    ("eigval_laplacian_jaccard", check_eigval_jaccard),
    ("eccentricity_jaccard", check_eccentricity_jaccard),
    ("eigval_laplacian_nli", check_eigval_nli),
    ("eccentricity_nli", check_eccentricity_nli),
    ("centroid_anchor_distance", check_centroid),
];

pub fn check_token_entropy(seed: u64, fixtures: usize) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let n = rng.random_range(1..=8);
        let answers: Vec<(String, f64)> = (0..n)
            .map(|_| (ANSWERS[rng.random_range(0..ANSWERS.len())].to_string(), rng.random_range(-3.0..0.0)))
            .collect();
        let samples = answers
            .iter()
            .enumerate()
            .map(|(i, (a, lp))| sample(i, a.clone(), Some(vec![TokenDraw::new(a.as_str(), *lp, 0).unwrap()])))
            .collect();
        let set = SampleSet::new("fixture", samples, TaskType::T1ClosedOneToken, 0).unwrap();
        let got = token_level_entropy(&set, &AnswerExtraction::default()).map_err(|e| e.to_string())?;
        check("token_level_entropy", f, got.value, oracle_token_entropy(&answers), REL_TOL)?;
    }
    Ok(fixtures)
}

pub fn check_brier(seed: u64, fixtures: usize) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let n = rng.random_range(1..=8);
        let lps: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..rng.random_range(1..=6)).map(|_| rng.random_range(-4.0..0.0)).collect())
            .collect();
        let samples = lps
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let tokens: Vec<TokenDraw> = l
                    .iter()
                    .enumerate()
                    .map(|(p, lp)| TokenDraw::new(WORDS[p], *lp, p as u32).unwrap())
                    .collect();
                sample(i, WORDS[..l.len()].join(" "), Some(tokens))
            })
            .collect();
        let set = SampleSet::new("fixture", samples, TaskType::T3OpenLong, 0).unwrap();
        let got = brier_uncertainty(&set).map_err(|e| e.to_string())?;
        check("brier", f, got.value, oracle_brier(&lps), REL_TOL)?;
    }
    Ok(fixtures)
}

fn flat_texts(rng: &mut ChaCha8Rng) -> Vec<String> {
    random_texts(rng).into_iter().map(|s| s.join(" ")).collect()
}

pub fn check_dispersion(seed: u64, fixtures: usize) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let texts = flat_texts(&mut rng);
        let dim = rng.random_range(2..=16);
        let emb = embed_table(&mut rng, texts.iter(), dim);
        let got = embedding_dispersion(&set_of(&texts, TaskType::T3OpenLong), &emb).map_err(|e| e.to_string())?;
        let vectors: Vec<Vec<f64>> = texts.iter().map(|t| emb.0[t].clone()).collect();
        check("embedding", f, got.value, oracle_dispersion(&vectors), REL_TOL)?;
    }
    Ok(fixtures)
}

pub fn check_eigenscore(seed: u64, fixtures: usize) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let texts = flat_texts(&mut rng);
        let dim = rng.random_range(2..=16);
        let alpha = [1e-3, 1e-2, 0.1][f % 3];
        let emb = embed_table(&mut rng, texts.iter(), dim);
        let got = eigenscore(&set_of(&texts, TaskType::T3OpenLong), &emb, alpha).map_err(|e| e.to_string())?;
        let vectors: Vec<Vec<f64>> = texts.iter().map(|t| emb.0[t].clone()).collect();
        check("eigenscore", f, got.value, oracle_eigenscore(&vectors, alpha), EIGEN_TOL)?;
    }
    Ok(fixtures)
}

pub fn check_semantic_entropy(seed: u64, fixtures: usize) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let texts = flat_texts(&mut rng);
        let mut units = texts.clone();
        units.sort();
        units.dedup();
        let nli = nli_table(&mut rng, &units);
        let got = semantic_entropy(&set_of(&texts, TaskType::T2OpenShort), &nli).map_err(|e| e.to_string())?;
        check("semantic_entropy", f, got.value, oracle_semantic_entropy(&texts, &nli), REL_TOL)?;
    }
    Ok(fixtures)
}

fn sentence_units(responses: &[Vec<String>]) -> Vec<String> {
    let mut units: Vec<String> = responses.iter().flatten().cloned().collect();
    units.extend(responses.iter().map(|s| s.join(" ")));
    units.sort();
    units.dedup();
    units
}

pub fn check_luq(seed: u64, fixtures: usize) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let responses = random_texts(&mut rng);
        let texts: Vec<String> = responses.iter().map(|s| s.join(" ")).collect();
        let nli = nli_table(&mut rng, &sentence_units(&responses));
        let got = luq(&set_of(&texts, TaskType::T3OpenLong), &nli).map_err(|e| e.to_string())?;
        check("luq", f, got.value, oracle_luq(&responses, &nli), REL_TOL)?;
    }
    Ok(fixtures)
}

pub fn check_luq_pair(seed: u64, fixtures: usize) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let responses = random_texts(&mut rng);
        let texts: Vec<String> = responses.iter().map(|s| s.join(" ")).collect();
        let units = sentence_units(&responses);
        let nli = nli_table(&mut rng, &units);
        let dim = rng.random_range(2..=16);
        let emb = embed_table(&mut rng, units.iter(), dim);
        let frac = [0.5, 0.25, 1.0, 0.7][f % 4];
        let got = luq_pair(&set_of(&texts, TaskType::T3OpenLong), &emb, frac, &nli).map_err(|e| e.to_string())?;
        check("luq_pair", f, got.value, oracle_luq_pair(&responses, &emb, frac, &nli), REL_TOL)?;
    }
    Ok(fixtures)
}

fn spectral_check(
    seed: u64,
    fixtures: usize,
    label: &str,
    use_nli: bool,
    eccentric: bool,
) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let texts = flat_texts(&mut rng);
        let mut units = texts.clone();
        units.sort();
        units.dedup();
        let nli = nli_table(&mut rng, &units);
        let set = set_of(&texts, TaskType::T3OpenLong);
        let (sim, w) = if use_nli {
            (nli_similarity(&set, &nli), nli_matrix(&texts, &nli))
        } else {
            (jaccard_similarity(&set), jaccard_matrix(&texts))
        };
        let sim = sim.map_err(|e| e.to_string())?;
        if eccentric {
            let threshold = [0.9, 0.5, 1.2][f % 3];
            let got = eccentricity(&sim, threshold).map_err(|e| e.to_string())?;
            let (total, rows) = oracle_eccentricity(&w, threshold);
            check(label, f, got.value, total, EIGEN_TOL)?;
            let per = got.per_sample.expect("eccentricity reports per-sample offsets");
            for (i, r) in rows.iter().enumerate() {
                check(label, f, per[&format!("s{i:02}")], *r, EIGEN_TOL)?;
            }
        } else {
            let got = eigval_laplacian(&sim).map_err(|e| e.to_string())?;
            check(label, f, got.value, oracle_eigval(&w), EIGEN_TOL)?;
        }
    }
    Ok(fixtures)
}

pub fn check_eigval_jaccard(seed: u64, fixtures: usize) -> Result<usize, String> {
    spectral_check(seed, fixtures, "eigval_laplacian_jaccard", false, false)
}

pub fn check_eccentricity_jaccard(seed: u64, fixtures: usize) -> Result<usize, String> {
    spectral_check(seed, fixtures, "eccentricity_jaccard", false, true)
}

pub fn check_eigval_nli(seed: u64, fixtures: usize) -> Result<usize, String> {
    spectral_check(seed, fixtures, "eigval_laplacian_nli", true, false)
}

pub fn check_eccentricity_nli(seed: u64, fixtures: usize) -> Result<usize, String> {
    spectral_check(seed, fixtures, "eccentricity_nli", true, true)
}

pub fn check_centroid(seed: u64, fixtures: usize) -> Result<usize, String> {
    let mut rng = seeded(seed);
    for f in 0..fixtures {
        let n = rng.random_range(1..=8);
        let dim = rng.random_range(2..=16);
        let labels: Vec<String> = (0..n).map(|i| format!("label {i}")).collect();
        let mut table = BTreeMap::new();
        for l in &labels {
            table.insert(l.clone(), random_vector(&mut rng, dim));
        }
        table.insert("anchor".to_string(), random_vector(&mut rng, dim));
        let emb = TableEmbedder(table);
        let anchor = ReferenceAnchor::new("a", "anchor", None).unwrap();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let got = centroid_anchor_distance(&refs, &anchor, &emb).map_err(|e| e.to_string())?;
        let vectors: Vec<Vec<f64>> = labels.iter().map(|l| emb.0[l].clone()).collect();
        check("centroid_anchor_distance", f, got.value, oracle_centroid_distance(&vectors, &emb.0["anchor"]), REL_TOL)?;
    }
    Ok(fixtures)
}
