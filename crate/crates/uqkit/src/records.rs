//! Run records: one JSON line per generated response, one file per item.
//!
//! A run directory holds `<item_id>.jsonl` for every sampled item and, for
//! items whose plan did not complete, `<item_id>.partial.json` listing the
//! failed cells. Fields a reader does not know are kept in
//! [`RunRecord::extra`] and written back unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use uqkit_core::model::CellCoord;
use uqkit_core::provider::TokenUsage;
use uqkit_core::sampler::{CellOutput, PlanRun};
use uqkit_core::{ResponseSample, SampleSet, TaskType};

use crate::io::write_atomic;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub task_type: TaskType,
    #[serde(flatten)]
    pub sample: ResponseSample,
    /// The exact prompt sent for this cell.
    pub prompt: String,
    pub token_usage: TokenUsage,
    pub latency_ms: u64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl RunRecord {
    pub fn new(sample: ResponseSample, output: &CellOutput, task_type: TaskType) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task_type,
            sample,
            prompt: output.prompt.clone(),
            token_usage: output.generation.usage,
            latency_ms: output.generation.latency_ms,
            extra: Map::new(),
        }
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let record: RunRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if record.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                record.schema_version
            ));
        }
        Ok(record)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("run records always serialize")
    }
}

/// Records for every sample of a plan run, in sample order.
pub fn records_of(run: &PlanRun, task_type: TaskType) -> Vec<RunRecord> {
    run.set
        .samples()
        .iter()
        .zip(&run.outputs)
        .map(|(s, o)| RunRecord::new(s.clone(), o, task_type))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    #[serde(flatten)]
    pub cell: CellCoord,
    pub error: String,
}

/// Marker written next to an incomplete item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialMarker {
    pub schema_version: u32,
    pub item_id: String,
    pub planned: usize,
    pub failed_cells: Vec<FailedCell>,
}

/// Item ids become file names, so they are restricted to ASCII letters,
/// digits, `-`, `_` and `.`, and may not start with a dot.
pub fn validate_item_id(id: &str) -> Result<(), String> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.ends_with(".partial");
    if ok {
        Ok(())
    } else {
        Err(format!(
            "item id {id:?} must be non-empty, use only ASCII letters, digits, '-', '_' or '.', and not start with '.'"
        ))
    }
}

pub fn records_path(dir: &Path, item_id: &str) -> PathBuf {
    dir.join(format!("{item_id}.jsonl"))
}

pub fn partial_path(dir: &Path, item_id: &str) -> PathBuf {
    dir.join(format!("{item_id}.partial.json"))
}

pub fn write_records(dir: &Path, item_id: &str, records: &[RunRecord]) -> Result<(), CliError> {
    let mut body = String::new();
    for r in records {
        body.push_str(&r.to_line());
        body.push('\n');
    }
    write_atomic(&records_path(dir, item_id), body.as_bytes())
}

pub fn write_partial(dir: &Path, marker: &PartialMarker) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(marker).expect("markers always serialize");
    write_atomic(&partial_path(dir, &marker.item_id), body.as_bytes())
}

/// Removes a stale marker after an item completes.
pub fn clear_partial(dir: &Path, item_id: &str) -> Result<(), CliError> {
    match fs::remove_file(partial_path(dir, item_id)) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(CliError::Io(format!("cannot remove partial marker for {item_id}: {e}"))),
    }
}

/// Everything on disk for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRun {
    pub item_id: String,
    pub records: Vec<RunRecord>,
    pub partial: Option<PartialMarker>,
}

impl ItemRun {
    /// Rebuilds the sample set. Partial items are refused unless `allow_partial`.
    pub fn sample_set(&self, allow_partial: bool) -> Result<SampleSet, CliError> {
        let Some(first) = self.records.first() else {
            return Err(CliError::Usage(format!("item {} has no run records", self.item_id)));
        };
        let task_type = first.task_type;
        if self.records.iter().any(|r| r.task_type != task_type) {
            return Err(CliError::Usage(format!(
                "item {} mixes task types across records",
                self.item_id
            )));
        }
        let samples = self.records.iter().map(|r| r.sample.clone()).collect();
        let failed = self
            .partial
            .as_ref()
            .map(|p| p.failed_cells.iter().map(|f| f.cell).collect())
            .unwrap_or_default();
        let set = SampleSet::with_failures(self.item_id.clone(), samples, task_type, 0, failed)
            .map_err(|e| CliError::Usage(format!("item {}: {e}", self.item_id)))?;
        match (set.is_partial(), allow_partial) {
            (false, _) => Ok(set),
            (true, true) => Ok(set.accept_partial()),
            (true, false) => Err(CliError::Incompatible(format!(
                "item {} is partial ({} failed cell(s)); pass --allow-partial to score it",
                self.item_id,
                set.failed_cells().len()
            ))),
        }
    }

    pub fn total_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.token_usage.total()).sum()
    }
}

/// Reads every `<item>.jsonl` in `dir`, keyed by item id.
pub fn read_run_dir(dir: &Path) -> Result<BTreeMap<String, ItemRun>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read run directory {}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Usage(e.to_string()))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(item_id) = name.strip_suffix(".jsonl") else {
            continue;
        };
        if item_id.starts_with('.') {
            continue;
        }
        let records = read_records(&path)?;
        let marker = partial_path(dir, item_id);
        let partial = if marker.exists() {
            let text = fs::read_to_string(&marker)
                .map_err(|e| CliError::Usage(format!("{}: {e}", marker.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", marker.display())))?,
            )
        } else {
            None
        };
        out.insert(
            item_id.to_string(),
            ItemRun {
                item_id: item_id.to_string(),
                records,
                partial,
            },
        );
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("no run records found in {}", dir.display())));
    }
    Ok(out)
}

/// Parses one JSONL file, reporting the first bad line by number.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            RunRecord::parse_line(l)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use uqkit_core::{SamplingParams, TokenDraw};

    fn record() -> RunRecord {
        RunRecord {
            schema_version: 1,
            task_type: TaskType::T1ClosedOneToken,
            sample: ResponseSample {
                sample_id: "a-v0-r0".into(),
                task_id: "a".into(),
                prompt_variant_id: 0,
                repeat_index: 0,
                text: "yes".into(),
                tokens: Some(vec![TokenDraw::new("yes", -0.1, 0).unwrap()]),
                model_id: "m".into(),
                sampling_params: SamplingParams::default().with_seed(Some(7)),
                logprobs_unavailable: false,
            },
            prompt: "Q?".into(),
            token_usage: TokenUsage { prompt: 1, completion: 1 },
            latency_ms: 0,
            extra: Map::new(),
        }
    }

    #[test]
    fn unknown_fields_survive_a_rewrite() {
        let mut line: Value = serde_json::from_str(&record().to_line()).unwrap();
        line["judge_note"] = Value::from("kept");
        let parsed = RunRecord::parse_line(&line.to_string()).unwrap();
        assert_eq!(parsed.extra["judge_note"], "kept");
        let again: Value = serde_json::from_str(&parsed.to_line()).unwrap();
        assert_eq!(again, line);
    }

    #[test]
    fn other_schema_versions_are_refused() {
        let line = record().to_line().replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(RunRecord::parse_line(&line).unwrap_err().contains("schema_version 2"));
    }

    #[test]
    fn item_ids_must_be_file_safe() {
        assert!(validate_item_id("item-01.a_b").is_ok());
        for bad in ["", ".hidden", "a/b", "a b", "x.partial", "é"] {
            assert!(validate_item_id(bad).is_err(), "{bad}");
        }
    }
}
