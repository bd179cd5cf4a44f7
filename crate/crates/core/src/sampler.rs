//! Perturbed sampling: choose K of M prompt variants, query each R times.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{CellCoord, ResponseSample, SampleSet, SamplingParams, TaskType};
use crate::provider::{chat_generate, ChatProvider, Generation};
use crate::rng;
use crate::{Error, ProviderError, Result};

/// A K-of-M x R perturbation schedule for one task item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPlan {
    task_id: String,
    variants: Vec<String>,
    /// Ascending, distinct indices into `variants`.
    chosen_indices: Vec<u32>,
    repeats: u32,
    seed: u64,
}

/// Builds a plan whose chosen variants are a uniform `k`-subset drawn with
/// the seeded generator (see [`crate::rng`]).
pub fn build_plan(
    task_id: impl Into<String>,
    variants: Vec<String>,
    k: usize,
    repeats: u32,
    seed: u64,
) -> Result<PromptPlan> {
    let m = variants.len();
    if m == 0 {
        return Err(Error::InvalidVariants("no prompt variants given".into()));
    }
    if let Some(i) = variants.iter().position(|v| v.trim().is_empty()) {
        return Err(Error::InvalidVariants(format!("variant {i} is empty")));
    }
    let mut seen = BTreeSet::new();
    for (i, v) in variants.iter().enumerate() {
        if !seen.insert(v.as_str()) {
            return Err(Error::InvalidVariants(format!(
                "variant {i} duplicates an earlier variant"
            )));
        }
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > m {
        return Err(Error::PlanInfeasible { k, m });
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be at least 1".into()));
    }
    let mut chosen: Vec<u32> = rand::seq::index::sample(&mut rng::seeded(seed), m, k)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    chosen.sort_unstable();
    Ok(PromptPlan {
        task_id: task_id.into(),
        variants,
        chosen_indices: chosen,
        repeats,
        seed,
    })
}

impl PromptPlan {
    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn variants(&self) -> &[String] {
        &self.variants
    }

    pub fn chosen_indices(&self) -> &[u32] {
        &self.chosen_indices
    }

    pub fn repeats(&self) -> u32 {
        self.repeats
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// M
    pub fn variant_count(&self) -> usize {
        self.variants.len()
    }

    /// K
    pub fn chosen_count(&self) -> usize {
        self.chosen_indices.len()
    }

    /// N = K x R
    pub fn planned_samples(&self) -> usize {
        self.chosen_indices.len() * self.repeats as usize
    }

    /// Cells in canonical order: by variant index, then repeat.
    pub fn cells(&self) -> Vec<CellCoord> {
        self.chosen_indices
            .iter()
            .flat_map(|&variant| (0..self.repeats).map(move |repeat| CellCoord { variant, repeat }))
            .collect()
    }

    pub fn prompt(&self, cell: CellCoord) -> &str {
        &self.variants[cell.variant as usize]
    }

    /// Seed for one cell: the request seed (or the plan seed when the
    /// request has none) mixed with the cell coordinates.
    pub fn cell_seed(&self, cell: CellCoord, params: &SamplingParams) -> u64 {
        rng::repeat_seed(params.seed().unwrap_or(self.seed), cell.variant, cell.repeat)
    }

    pub fn sample_id(&self, cell: CellCoord) -> String {
        format!("{}-v{}-r{}", self.task_id, cell.variant, cell.repeat)
    }
}

/// Everything that identifies a cacheable generation request.
#[derive(Debug, Clone, Copy)]
pub struct CacheRequest<'a> {
    pub prompt: &'a str,
    pub params: &'a SamplingParams,
    pub model_id: &'a str,
    pub seed: u64,
    pub want_logprobs: bool,
}

/// Store of previous generations keyed by [`CacheRequest`].
pub trait ResponseCache: Send + Sync {
    fn lookup(&self, request: &CacheRequest<'_>) -> Result<Option<Generation>, ProviderError>;
    fn store(&self, request: &CacheRequest<'_>, generation: &Generation)
        -> Result<(), ProviderError>;
}

/// One successfully generated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub cell: CellCoord,
    pub prompt: String,
    pub params: SamplingParams,
    pub generation: Generation,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub cell: CellCoord,
    pub error: ProviderError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub provider_calls: usize,
    pub cache_hits: usize,
}

/// A fully executed plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRun {
    pub set: SampleSet,
    /// Same order as `set.samples()`.
    pub outputs: Vec<CellOutput>,
    pub stats: RunStats,
}

/// A plan where some cells failed after retries. `completed` holds the
/// successful subset (flagged partial) when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRun {
    pub completed: Option<SampleSet>,
    pub outputs: Vec<CellOutput>,
    pub failures: Vec<CellFailure>,
    pub planned: usize,
    pub stats: RunStats,
}

/// Runs one cell, consulting the cache first.
pub fn run_cell<P: ChatProvider + ?Sized>(
    plan: &PromptPlan,
    cell: CellCoord,
    provider: &P,
    params: &SamplingParams,
    want_logprobs: bool,
    cache: Option<&dyn ResponseCache>,
) -> core::result::Result<CellOutput, CellFailure> {
    let prompt = plan.prompt(cell);
    let seed = plan.cell_seed(cell, params);
    let cell_params = params.with_seed(Some(seed));
    let request = CacheRequest {
        prompt,
        params: &cell_params,
        model_id: provider.model_id(),
        seed,
        want_logprobs,
    };
    let fail = |error| CellFailure { cell, error };
    if let Some(cache) = cache {
        if let Some(generation) = cache.lookup(&request).map_err(fail)? {
            return Ok(CellOutput {
                cell,
                prompt: prompt.into(),
                params: cell_params,
                generation,
                cache_hit: true,
            });
        }
    }
    let generation =
        chat_generate(provider, prompt, &cell_params, want_logprobs).map_err(fail)?;
    if let Some(cache) = cache {
        cache.store(&request, &generation).map_err(fail)?;
    }
    Ok(CellOutput {
        cell,
        prompt: prompt.into(),
        params: cell_params,
        generation,
        cache_hit: false,
    })
}

/// Builds the sample set from per-cell results in any completion order.
/// Samples are sorted into canonical cell order.
pub fn assemble(
    plan: &PromptPlan,
    task_type: TaskType,
    created_at: u64,
    results: Vec<core::result::Result<CellOutput, CellFailure>>,
) -> Result<PlanRun> {
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(o) => outputs.push(o),
            Err(f) => failures.push(f),
        }
    }
    outputs.sort_by_key(|o| o.cell);
    failures.sort_by_key(|f| f.cell);
    let stats = RunStats {
        provider_calls: outputs.iter().filter(|o| !o.cache_hit).count(),
        cache_hits: outputs.iter().filter(|o| o.cache_hit).count(),
    };
    let samples: Vec<ResponseSample> = outputs
        .iter()
        .map(|o| ResponseSample {
            sample_id: plan.sample_id(o.cell),
            task_id: plan.task_id.clone(),
            prompt_variant_id: o.cell.variant,
            repeat_index: o.cell.repeat,
            text: o.generation.text.clone(),
            tokens: o.generation.tokens.clone(),
            model_id: o.generation.model_id.clone(),
            sampling_params: o.params.clone(),
            logprobs_unavailable: o.generation.logprobs_unavailable,
        })
        .collect();
    if failures.is_empty() {
        let set = SampleSet::new(plan.task_id.clone(), samples, task_type, created_at)?;
        return Ok(PlanRun {
            set,
            outputs,
            stats,
        });
    }
    let completed = if samples.is_empty() {
        None
    } else {
        Some(SampleSet::with_failures(
            plan.task_id.clone(),
            samples,
            task_type,
            created_at,
            failures.iter().map(|f| f.cell).collect(),
        )?)
    };
    Err(Error::PartialResult(alloc::boxed::Box::new(PartialRun {
        completed,
        outputs,
        failures,
        planned: plan.planned_samples(),
        stats,
    })))
}

/// Executes every cell sequentially. The `uqkit` crate provides a concurrent
/// executor with the same assembly.
pub fn execute_plan<P: ChatProvider + ?Sized>(
    plan: &PromptPlan,
    provider: &P,
    params: &SamplingParams,
    want_logprobs: bool,
    cache: Option<&dyn ResponseCache>,
    task_type: TaskType,
    created_at: u64,
) -> Result<PlanRun> {
    let results = plan
        .cells()
        .into_iter()
        .map(|cell| run_cell(plan, cell, provider, params, want_logprobs, cache))
        .collect();
    assemble(plan, task_type, created_at, results)
}
