//! The five subcommands as plain functions. Each returns `Ok(())` for exit
//! code 0 or a [`CliError`] carrying the exit code; human-readable progress
//! goes to the supplied writer.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use uqkit_core::blackbox::{
    eccentricity, eigenscore, eigval_laplacian, embedding_dispersion, farthest_pair,
    jaccard_similarity, luq, luq_pair, nli_similarity, semantic_entropy, texts_by_id,
};
use uqkit_core::calibration::{
    accuracy_against_gold, centroid_anchor_distance, fit_linear_calibration,
    flag_high_uncertainty, metric_tail, recommend_metrics, CalibrationPoint, RegressionFit,
};
use uqkit_core::greybox::score_greybox;
use uqkit_core::provider::{ChatProvider, Embedder, NliModel, StubChat, StubEmbedder, StubNli};
use uqkit_core::sampler::{build_plan, PartialRun, ResponseCache};
use uqkit_core::sim::{LogitTable, SimulatedChat};
use uqkit_core::{
    rng, text, Error, MetricId, MetricScore, ReferenceAnchor, SampleSet, TaskType, ValidationLevel,
};

use crate::cache::JsonlCache;
use crate::config::{ChatConfig, Config, EmbedderConfig, NliConfig};
use crate::executor::execute_plan_concurrent;
use crate::http::{HttpChat, HttpEmbedder, HttpNli};
use crate::io::{
    read_gold, read_items, read_scores, read_variants, render_prompt, scores_csv, write_atomic,
    write_json, ScoreRow, ScoreTable,
};
use crate::records::{
    clear_partial, read_run_dir, records_of, write_partial, write_records, FailedCell, ItemRun,
    PartialMarker, RunRecord, SCHEMA_VERSION,
};
use crate::CliError;

/// Characters of each response quoted in the farthest-pair report.
pub const EXCERPT_CHARS: usize = 240;

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::Io(e.to_string()))
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    path.map_or_else(|| Ok(Config::default()), Config::load)
}

pub fn build_chat(config: &Config) -> Result<Box<dyn ChatProvider>, CliError> {
    match &config.providers.chat {
        None => Err(CliError::Usage("config has no providers.chat section".into())),
        Some(ChatConfig::Simulated { logit_table, model_id, max_tokens }) => {
            let text = fs::read_to_string(logit_table).map_err(|e| {
                CliError::Usage(format!("cannot read logit table {}: {e}", logit_table.display()))
            })?;
            let table: LogitTable = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", logit_table.display())))?;
            Ok(Box::new(SimulatedChat::new(model_id.clone(), table, *max_tokens)))
        }
        Some(ChatConfig::Stub { model_id, replies }) => {
            let chat = replies
                .iter()
                .fold(StubChat::new(model_id.clone()), |c, (p, r)| c.with_reply(p.clone(), r.clone()));
            Ok(Box::new(chat))
        }
        Some(ChatConfig::Http(h)) => Ok(Box::new(HttpChat::new(h.clone()))),
    }
}

pub fn build_embedder(config: &Config) -> Box<dyn Embedder> {
    match &config.providers.embedder {
        EmbedderConfig::Stub { dim } => Box::new(StubEmbedder::new(*dim)),
        EmbedderConfig::Http(h) => Box::new(HttpEmbedder::new(h.clone())),
    }
}

pub fn build_nli(config: &Config) -> Box<dyn NliModel> {
    match &config.providers.nli {
        NliConfig::Stub => Box::new(StubNli::new()),
        NliConfig::Http(h) => Box::new(HttpNli::new(h.clone())),
    }
}

/// Seed of one item's plan: the configured seed mixed with a hash of the
/// item id, so items choose their variants independently.
pub fn item_plan_seed(seed: u64, item_id: &str) -> u64 {
    rng::mix64(seed ^ text::fnv1a64(item_id.as_bytes()))
}

fn marker_for(item_id: &str, partial: &PartialRun) -> PartialMarker {
    PartialMarker {
        schema_version: SCHEMA_VERSION,
        item_id: item_id.into(),
        planned: partial.planned,
        failed_cells: partial
            .failures
            .iter()
            .map(|f| FailedCell {
                cell: f.cell,
                error: f.error.to_string(),
            })
            .collect(),
    }
}

/// `sample`: run the K-of-M x R plan for every item and write one JSONL file
/// of run records per item. All inputs are validated before anything is
/// written. Items whose plans fail partly keep their completed records plus a
/// `.partial.json` marker, and the command exits with code 3.
pub fn cmd_sample(
    config_path: &Path,
    variants_path: &Path,
    items_path: &Path,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let config = Config::load(config_path)?;
    let variants = read_variants(variants_path)?;
    let items = read_items(items_path)?;
    let task_type = config.resolved_task_type()?;
    let chat = build_chat(&config)?;
    let mut plans = Vec::with_capacity(items.len());
    for item in &items {
        let prompts = variants.iter().map(|v| render_prompt(v, &item.text)).collect();
        let seed = item_plan_seed(config.plan.seed, &item.item_id);
        let plan = build_plan(item.item_id.clone(), prompts, config.plan.k, config.plan.repeats, seed)
            .map_err(|e| CliError::Usage(format!("item {}: {e}", item.item_id)))?;
        plans.push(plan);
    }
    let cache = match &config.cache_dir {
        Some(dir) => Some(JsonlCache::open(dir).map_err(|e| CliError::Io(e.to_string()))?),
        None => None,
    };
    let cache_ref = cache.as_ref().map(|c| c as &dyn ResponseCache);
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let first = &plans[0];
    say(
        out,
        format!(
            "plan: M={} K={} R={} N={} per item, {} item(s), task type {}",
            first.variant_count(),
            first.chosen_count(),
            first.repeats(),
            first.planned_samples(),
            plans.len(),
            task_type
        ),
    )?;
    let mut failed_items = Vec::new();
    for plan in &plans {
        let item_id = plan.task_id();
        let result = execute_plan_concurrent(
            plan,
            chat.as_ref(),
            &config.sampling,
            config.want_logprobs,
            cache_ref,
            task_type,
            0,
            config.concurrency,
        );
        match result {
            Ok(run) => {
                write_records(out_dir, item_id, &records_of(&run, task_type))?;
                clear_partial(out_dir, item_id)?;
                say(
                    out,
                    format!(
                        "{item_id}: {} samples, {} provider call(s), {} cache hit(s)",
                        run.set.len(),
                        run.stats.provider_calls,
                        run.stats.cache_hits
                    ),
                )?;
            }
            Err(Error::PartialResult(partial)) => {
                let records: Vec<RunRecord> = match &partial.completed {
                    Some(set) => set
                        .samples()
                        .iter()
                        .zip(&partial.outputs)
                        .map(|(s, o)| RunRecord::new(s.clone(), o, task_type))
                        .collect(),
                    None => Vec::new(),
                };
                write_records(out_dir, item_id, &records)?;
                write_partial(out_dir, &marker_for(item_id, &partial))?;
                let first_error = &partial.failures[0];
                say(
                    out,
                    format!(
                        "{item_id}: {} of {} cells failed (first: variant {} repeat {}: {})",
                        partial.failures.len(),
                        partial.planned,
                        first_error.cell.variant,
                        first_error.cell.repeat,
                        first_error.error
                    ),
                )?;
                failed_items.push(item_id.to_string());
            }
            Err(e) => return Err(CliError::Provider(format!("item {item_id}: {e}"))),
        }
    }
    if failed_items.is_empty() {
        Ok(())
    } else {
        Err(CliError::Provider(format!(
            "provider failures in item(s) {}; completed records and .partial.json markers were kept",
            failed_items.join(", ")
        )))
    }
}

/// Computes one metric on one item with the configured thresholds.
pub fn score_metric(
    set: &SampleSet,
    metric: MetricId,
    config: &Config,
    embedder: &dyn Embedder,
    nli: &dyn NliModel,
    anchor: Option<&ReferenceAnchor>,
) -> uqkit_core::Result<MetricScore> {
    let t = &config.thresholds;
    match metric {
        MetricId::TokenLevelEntropy | MetricId::Brier => score_greybox(set, metric, &config.extraction),
        MetricId::Embedding => embedding_dispersion(set, embedder),
        MetricId::EigvalLaplacianJaccard => eigval_laplacian(&jaccard_similarity(set)?),
        MetricId::EccentricityJaccard => eccentricity(&jaccard_similarity(set)?, t.eig_threshold),
        MetricId::EigvalLaplacianNli => eigval_laplacian(&nli_similarity(set, nli)?),
        MetricId::EccentricityNli => eccentricity(&nli_similarity(set, nli)?, t.eig_threshold),
        MetricId::SemanticEntropy => semantic_entropy(set, nli),
        MetricId::Luq => luq(set, nli),
        MetricId::LuqPair => luq_pair(set, embedder, t.top_fraction, nli),
        MetricId::Eigenscore => eigenscore(set, embedder, t.alpha),
        MetricId::CentroidAnchorDistance => {
            let anchor = anchor.ok_or_else(|| Error::InvalidInput("no anchor for this item".into()))?;
            set.ensure_scorable()?;
            centroid_anchor_distance(&set.texts(), anchor, embedder)
        }
    }
}

fn metric_error(metric: MetricId, item: &str, e: Error) -> CliError {
    match e {
        Error::Provider(p) => CliError::Provider(format!("{metric} on item {item}: {p}")),
        other => CliError::Incompatible(format!("{metric} on item {item}: {other}")),
    }
}

/// Path of the diagnostics written next to a scores CSV.
pub fn diagnostics_path(scores: &Path) -> PathBuf {
    scores.with_extension("diagnostics.json")
}

#[derive(Serialize)]
struct ScoreDetail {
    value: f64,
    diagnostics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_sample: Option<BTreeMap<String, f64>>,
}

/// Arguments of [`cmd_score`].
#[derive(Debug, Clone, Default)]
pub struct ScoreArgs {
    pub runs_dir: PathBuf,
    /// Overrides the config's metric list when non-empty.
    pub metrics: Vec<MetricId>,
    pub out_path: PathBuf,
    pub config: Option<PathBuf>,
    /// Gold CSV whose labels serve as anchors for `centroid_anchor_distance`.
    pub gold: Option<PathBuf>,
    pub allow_partial: bool,
}

/// `score`: CSV `item_id,metric_id,value` for every item and metric, and a
/// JSON sidecar with diagnostics and per-sample values.
pub fn cmd_score(args: &ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let metrics = if args.metrics.is_empty() { config.metrics.clone() } else { args.metrics.clone() };
    if metrics.is_empty() {
        return Err(CliError::Usage("no metrics requested (use --metrics or set metrics in the config)".into()));
    }
    let runs = read_run_dir(&args.runs_dir)?;
    let gold = args.gold.as_deref().map(read_gold).transpose()?;
    let mut sets = BTreeMap::new();
    for (id, run) in &runs {
        sets.insert(id.clone(), run.sample_set(args.allow_partial)?);
    }
    for &metric in &metrics {
        if metric.requires_logprobs() {
            let missing: Vec<&str> = sets
                .iter()
                .filter(|(_, s)| s.samples().iter().any(|x| x.tokens.is_none()))
                .map(|(id, _)| id.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(CliError::Incompatible(format!(
                    "metric {metric} needs token log-probabilities, which are missing for item(s) {}",
                    missing.join(", ")
                )));
            }
        }
        if metric == MetricId::CentroidAnchorDistance {
            let Some(gold) = &gold else {
                return Err(CliError::Usage(format!("metric {metric} needs --gold for its anchors")));
            };
            let missing: Vec<&str> =
                sets.keys().filter(|id| !gold.contains_key(*id)).map(String::as_str).collect();
            if !missing.is_empty() {
                return Err(CliError::Incompatible(format!(
                    "metric {metric} has no gold anchor for item(s) {}",
                    missing.join(", ")
                )));
            }
        }
    }
    let embedder = build_embedder(&config);
    let nli = build_nli(&config);
    let mut rows = Vec::new();
    let mut details: BTreeMap<String, BTreeMap<String, ScoreDetail>> = BTreeMap::new();
    for (id, set) in &sets {
        let anchor = match gold.as_ref().and_then(|g| g.get(id)) {
            Some(row) => Some(
                ReferenceAnchor::new(id.clone(), row.gold_label.clone(), Some(row.category.clone()))
                    .map_err(|e| CliError::Usage(format!("gold label of {id}: {e}")))?,
            ),
            None => None,
        };
        for &metric in &metrics {
            let score = score_metric(set, metric, &config, embedder.as_ref(), nli.as_ref(), anchor.as_ref())
                .map_err(|e| metric_error(metric, id, e))?;
            rows.push(ScoreRow {
                item_id: id.clone(),
                metric_id: metric.as_str().into(),
                value: score.value,
            });
            details.entry(id.clone()).or_default().insert(
                metric.as_str().into(),
                ScoreDetail {
                    value: score.value,
                    diagnostics: score.diagnostics,
                    per_sample: score.per_sample,
                },
            );
        }
    }
    write_atomic(&args.out_path, &scores_csv(&rows))?;
    write_json(&diagnostics_path(&args.out_path), &details)?;
    say(out, format!("scored {} item(s) x {} metric(s) -> {}", sets.len(), metrics.len(), args.out_path.display()))
}

/// `advise`: the metrics suited to a task type and validation level.
pub fn cmd_advise(
    task_type: TaskType,
    validation: ValidationLevel,
    logprobs: bool,
    as_json: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let rec = recommend_metrics(task_type, validation, logprobs);
    if as_json {
        let doc = json!({
            "task_type": task_type,
            "validation_level": validation,
            "logprobs_available": logprobs,
            "metrics": rec.metrics,
            "warning": rec.warning,
        });
        return say(out, serde_json::to_string_pretty(&doc).expect("recommendations serialize"));
    }
    for m in &rec.metrics {
        say(
            out,
            format!(
                "{:<26} {:<9} other model: {}",
                m.metric_id.as_str(),
                if m.requires_logprobs { "grey-box" } else { "black-box" },
                if m.requires_other_model { "yes" } else { "no" }
            ),
        )?;
    }
    if let Some(w) = &rec.warning {
        say(out, format!("warning: {w}"))?;
    }
    Ok(())
}

/// Arguments of [`cmd_calibrate`].
#[derive(Debug, Clone, Default)]
pub struct CalibrateArgs {
    pub scores: PathBuf,
    pub gold: PathBuf,
    pub out_dir: PathBuf,
    /// Run records used to measure accuracy for gold rows without an
    /// `accuracy` value.
    pub runs_dir: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitFile {
    schema_version: u32,
    x: &'static str,
    y: &'static str,
    fits: BTreeMap<String, RegressionFit>,
    skipped: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct BreakdownRow<'a> {
    category: &'a str,
    metric_id: &'a str,
    n: usize,
    mean_uncertainty: f64,
    mean_accuracy: f64,
}

#[derive(Serialize)]
struct PlotRow<'a> {
    metric_id: &'a str,
    item_id: &'a str,
    x: f64,
    y: f64,
}

/// Per-item accuracy for every gold item that has one.
fn item_accuracies(
    gold: &BTreeMap<String, crate::io::GoldRow>,
    runs: Option<&BTreeMap<String, ItemRun>>,
    config: &Config,
) -> Result<BTreeMap<String, f64>, CliError> {
    let mut acc = BTreeMap::new();
    for (id, row) in gold {
        if let Some(a) = row.accuracy {
            acc.insert(id.clone(), a);
            continue;
        }
        let Some(runs) = runs else {
            return Err(CliError::Usage(format!(
                "gold row {id} has no accuracy value; pass --runs to measure it from run records"
            )));
        };
        let Some(run) = runs.get(id) else { continue };
        let set = run.sample_set(true)?;
        let a = accuracy_against_gold(&set, &row.gold_label, &config.extraction)
            .map_err(|e| CliError::Incompatible(format!("accuracy of item {id}: {e}")))?;
        acc.insert(id.clone(), a);
    }
    Ok(acc)
}

/// `calibrate`: regress accuracy on each metric's uncertainty over the items
/// present in both inputs. Writes `fit.json`, `breakdown.csv`, `plot.csv`
/// and `plot.json` into the output directory.
pub fn cmd_calibrate(args: &CalibrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let scores = read_scores(&args.scores)?;
    let gold = read_gold(&args.gold)?;
    let runs = args.runs_dir.as_deref().map(read_run_dir).transpose()?;
    let accuracy = item_accuracies(&gold, runs.as_ref(), &config)?;
    let joined: usize = scores
        .values()
        .map(|items| items.keys().filter(|id| accuracy.contains_key(*id)).count())
        .sum();
    if joined == 0 {
        return Err(CliError::EmptyJoin(format!(
            "no item of {} has an accuracy from {}",
            args.scores.display(),
            args.gold.display()
        )));
    }
    let mut fits = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let mut plot = csv::Writer::from_writer(Vec::new());
    let mut breakdown = csv::Writer::from_writer(Vec::new());
    for (metric, items) in &scores {
        let points: Vec<CalibrationPoint> = items
            .iter()
            .filter_map(|(id, u)| accuracy.get(id).map(|a| (id, *u, *a)))
            .map(|(id, u, a)| CalibrationPoint::new(id.clone(), u, a))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        for p in &points {
            plot.serialize(PlotRow {
                metric_id: metric.as_str(),
                item_id: &p.task_item_id,
                x: p.uncertainty,
                y: p.accuracy,
            })
            .expect("in-memory CSV");
        }
        let mut by_category: BTreeMap<&str, (usize, f64, f64)> = BTreeMap::new();
        for p in &points {
            let e = by_category.entry(gold[&p.task_item_id].category.as_str()).or_default();
            e.0 += 1;
            e.1 += p.uncertainty;
            e.2 += p.accuracy;
        }
        for (category, (n, su, sa)) in by_category {
            breakdown
                .serialize(BreakdownRow {
                    category,
                    metric_id: metric.as_str(),
                    n,
                    mean_uncertainty: su / n as f64,
                    mean_accuracy: sa / n as f64,
                })
                .expect("in-memory CSV");
        }
        match fit_linear_calibration(&points) {
            Ok(fit) => {
                fits.insert(metric.as_str().to_string(), fit);
            }
            Err(e) => {
                skipped.insert(metric.as_str().to_string(), e.to_string());
            }
        }
    }
    if fits.is_empty() {
        let reasons: Vec<String> = skipped.iter().map(|(m, r)| format!("{m}: {r}")).collect();
        return Err(CliError::Incompatible(format!("no metric could be fitted ({})", reasons.join("; "))));
    }
    let dir = &args.out_dir;
    write_json(
        &dir.join("fit.json"),
        &FitFile {
            schema_version: SCHEMA_VERSION,
            x: "uncertainty",
            y: "accuracy",
            fits: fits.clone(),
            skipped,
        },
    )?;
    write_atomic(&dir.join("breakdown.csv"), &breakdown.into_inner().expect("in-memory CSV"))?;
    write_atomic(&dir.join("plot.csv"), &plot.into_inner().expect("in-memory CSV"))?;
    write_json(
        &dir.join("plot.json"),
        &json!({
            "data": "plot.csv",
            "kind": "scatter",
            "series": "metric_id",
            "label": "item_id",
            "x": {"column": "x", "label": "uncertainty"},
            "y": {"column": "y", "label": "accuracy", "min": 0.0, "max": 1.0},
        }),
    )?;
    for (m, f) in &fits {
        say(out, format!("{m}: slope {:.6} intercept {:.6} r2 {:.6} n {}", f.slope, f.intercept, f.r_squared, f.n))?;
    }
    Ok(())
}

/// Token cost of the sampled run against a single-response baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub baseline_tokens: u64,
    pub uq_tokens: u64,
    pub overhead_ratio: f64,
    pub items: usize,
    pub responses: usize,
    /// Corpus size the baseline was computed for; absent when the baseline
    /// was configured directly.
    pub corpus_items: Option<u64>,
}

impl CostReport {
    pub fn new(baseline_tokens: u64, uq_tokens: u64) -> Self {
        Self {
            baseline_tokens,
            uq_tokens,
            overhead_ratio: uq_tokens as f64 / baseline_tokens.max(1) as f64,
            items: 0,
            responses: 0,
            corpus_items: None,
        }
    }
}

/// Baseline: one response of the run's mean length for each corpus item.
pub fn cost_report(runs: &BTreeMap<String, ItemRun>, config: &Config) -> Result<CostReport, CliError> {
    let uq_tokens: u64 = runs.values().map(ItemRun::total_tokens).sum();
    let responses: usize = runs.values().map(|r| r.records.len()).sum();
    let items = runs.len();
    let mut report = match config.cost.baseline_tokens {
        Some(b) => CostReport::new(b, uq_tokens),
        None => {
            let rate = config.validation.subsample_rate;
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(CliError::Usage(format!("subsample_rate must lie in (0, 1], got {rate}")));
            }
            let corpus = config
                .cost
                .corpus_items
                .unwrap_or_else(|| (items as f64 / rate - 1e-9).ceil() as u64);
            let baseline = (uq_tokens as u128 * corpus as u128).div_ceil(responses.max(1) as u128) as u64;
            let mut r = CostReport::new(baseline, uq_tokens);
            r.corpus_items = Some(corpus);
            r
        }
    };
    report.items = items;
    report.responses = responses;
    Ok(report)
}

fn excerpt(text: &str) -> String {
    match text.char_indices().nth(EXCERPT_CHARS) {
        Some((i, _)) => format!("{}...", &text[..i]),
        None => text.to_string(),
    }
}

/// `report`: `cost.json`, `flags.json` and `farthest_pairs.json` in the
/// output directory.
pub fn cmd_report(
    runs_dir: &Path,
    scores_path: &Path,
    out_dir: &Path,
    config_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let runs = read_run_dir(runs_dir)?;
    let scores: ScoreTable = read_scores(scores_path)?;
    let cost = cost_report(&runs, &config)?;
    let t = &config.thresholds;
    let by_name: BTreeMap<String, BTreeMap<String, f64>> =
        scores.iter().map(|(m, v)| (m.as_str().to_string(), v.clone())).collect();
    let flagged = flag_high_uncertainty(&by_name, t.quantile, t.min_agreement)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let tails: BTreeMap<&str, BTreeSet<String>> =
        by_name.iter().map(|(m, v)| (m.as_str(), metric_tail(v, t.quantile))).collect();
    let flag_entries: Vec<Value> = flagged
        .iter()
        .map(|id| {
            let metrics: Vec<&str> =
                tails.iter().filter(|(_, tail)| tail.contains(id)).map(|(m, _)| *m).collect();
            json!({"item_id": id, "metrics": metrics})
        })
        .collect();
    let embedder = build_embedder(&config);
    let mut pairs = Vec::new();
    let mut unavailable = Vec::new();
    for id in &flagged {
        let Some(run) = runs.get(id) else {
            unavailable.push(json!({"item_id": id, "reason": "no run records"}));
            continue;
        };
        let set = run.sample_set(true)?;
        match farthest_pair(&set, embedder.as_ref()) {
            Ok(p) => {
                let texts = texts_by_id(&set);
                pairs.push(json!({
                    "item_id": id,
                    "distance": p.distance,
                    "first": {"sample_id": p.first, "excerpt": excerpt(&texts[&p.first])},
                    "second": {"sample_id": p.second, "excerpt": excerpt(&texts[&p.second])},
                }));
            }
            Err(Error::Provider(e)) => return Err(CliError::Provider(format!("item {id}: {e}"))),
            Err(e) => unavailable.push(json!({"item_id": id, "reason": e.to_string()})),
        }
    }
    write_json(&out_dir.join("cost.json"), &cost)?;
    write_json(
        &out_dir.join("flags.json"),
        &json!({
            "quantile": t.quantile,
            "min_agreement": t.min_agreement,
            "metrics": by_name.keys().collect::<Vec<_>>(),
            "flagged": flag_entries,
        }),
    )?;
    write_json(
        &out_dir.join("farthest_pairs.json"),
        &json!({"pairs": pairs, "unavailable": unavailable}),
    )?;
    say(
        out,
        format!(
            "cost: {} UQ tokens vs {} baseline tokens, overhead {:.3}x",
            cost.uq_tokens, cost.baseline_tokens, cost.overhead_ratio
        ),
    )?;
    say(out, format!("flagged: {}", if flagged.is_empty() { "none".into() } else { flagged.join(", ") }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overhead_ratio_is_plain_division() {
        let r = CostReport::new(1000, 2300);
        assert_eq!(r.overhead_ratio, 2.3);
        assert_eq!(CostReport::new(0, 5).overhead_ratio, 5.0);
    }

    #[test]
    fn item_seeds_differ_by_item() {
        assert_ne!(item_plan_seed(0, "a"), item_plan_seed(0, "b"));
        assert_eq!(item_plan_seed(3, "a"), item_plan_seed(3, "a"));
    }

    #[test]
    fn excerpts_are_bounded() {
        assert_eq!(excerpt("short"), "short");
        assert_eq!(excerpt(&"x".repeat(1000)).len(), EXCERPT_CHARS + 3);
    }
}
