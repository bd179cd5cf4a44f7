//! Threaded plan execution. Cells are handed to a fixed pool of scoped
//! workers and the results go through the same assembly as the sequential
//! executor, so completion order never shows in the output.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use uqkit_core::provider::ChatProvider;
use uqkit_core::sampler::{assemble, run_cell, PlanRun, PromptPlan, ResponseCache};
use uqkit_core::{Result, SamplingParams, TaskType};

#[allow(clippy::too_many_arguments)]
pub fn execute_plan_concurrent<P: ChatProvider + ?Sized>(
    plan: &PromptPlan,
    provider: &P,
    params: &SamplingParams,
    want_logprobs: bool,
    cache: Option<&dyn ResponseCache>,
    task_type: TaskType,
    created_at: u64,
    workers: usize,
) -> Result<PlanRun> {
    let cells = plan.cells();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(cells.len()));
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&cell) = cells.get(i) else { break };
                let r = run_cell(plan, cell, provider, params, want_logprobs, cache);
                results.lock().expect("result list poisoned").push(r);
            });
        }
    });
    assemble(plan, task_type, created_at, results.into_inner().expect("result list poisoned"))
}
