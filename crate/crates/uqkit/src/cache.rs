//! Content-addressed response cache stored as JSONL shards.
//!
//! The key is the SHA-256 of a canonical JSON rendering of the request
//! (model id, prompt, sampling parameters, per-cell seed, logprob flag). Entries
//! are appended to `<dir>/<first two hex digits>.jsonl`. A hit whose stored
//! request differs from the lookup is reported as an error rather than
//! served.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uqkit_core::provider::Generation;
use uqkit_core::sampler::{CacheRequest, ResponseCache};
use uqkit_core::{ProviderError, SamplingParams};

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_id: &'a str,
    prompt: &'a str,
    params: &'a SamplingParams,
    seed: u64,
    want_logprobs: bool,
}

pub fn cache_key(request: &CacheRequest<'_>) -> String {
    let material = KeyMaterial {
        model_id: request.model_id,
        prompt: request.prompt,
        params: request.params,
        seed: request.seed,
        want_logprobs: request.want_logprobs,
    };
    let json = serde_json::to_vec(&material).expect("key material always serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    key: String,
    model_id: String,
    prompt: String,
    seed: u64,
    want_logprobs: bool,
    generation: Generation,
}

impl Entry {
    fn matches(&self, r: &CacheRequest<'_>) -> bool {
        self.prompt == r.prompt
            && self.model_id == r.model_id
            && self.seed == r.seed
            && self.want_logprobs == r.want_logprobs
    }
}

#[derive(Debug)]
pub struct JsonlCache {
    dir: PathBuf,
    entries: Mutex<HashMap<String, Entry>>,
}

impl JsonlCache {
    /// Opens (creating if needed) a cache directory and indexes its shards.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        let err = |e: std::io::Error| ProviderError::Cache(format!("{}: {e}", dir.display()));
        fs::create_dir_all(&dir).map_err(err)?;
        let mut entries = HashMap::new();
        for item in fs::read_dir(&dir).map_err(err)? {
            let path = item.map_err(err)?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                load_shard(&path, &mut entries)?;
            }
        }
        Ok(Self {
            dir,
            entries: Mutex::new(entries),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn load_shard(path: &Path, into: &mut HashMap<String, Entry>) -> Result<(), ProviderError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ProviderError::Cache(format!("{}: {e}", path.display())))?;
    let complete = if text.ends_with('\n') {
        text.as_str()
    } else {
        // a torn final line from an interrupted append is dropped
        &text[..text.rfind('\n').map_or(0, |i| i + 1)]
    };
    for (i, line) in complete.lines().enumerate() {
        let entry: Entry = serde_json::from_str(line).map_err(|e| {
            ProviderError::Cache(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        into.insert(entry.key.clone(), entry);
    }
    Ok(())
}

impl ResponseCache for JsonlCache {
    fn lookup(&self, request: &CacheRequest<'_>) -> Result<Option<Generation>, ProviderError> {
        let key = cache_key(request);
        let entries = self.entries.lock().expect("cache lock poisoned");
        match entries.get(&key) {
            None => Ok(None),
            Some(e) if e.matches(request) => Ok(Some(e.generation.clone())),
            Some(_) => Err(ProviderError::Cache(format!(
                "entry {key} does not match the request it is keyed by"
            ))),
        }
    }

    fn store(&self, request: &CacheRequest<'_>, generation: &Generation) -> Result<(), ProviderError> {
        let key = cache_key(request);
        let entry = Entry {
            key: key.clone(),
            model_id: request.model_id.into(),
            prompt: request.prompt.into(),
            seed: request.seed,
            want_logprobs: request.want_logprobs,
            generation: generation.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("cache entries always serialize");
        line.push('\n');
        let mut entries = self.entries.lock().expect("cache lock poisoned");
        let path = self.dir.join(format!("{}.jsonl", &key[..2]));
        let err = |e: std::io::Error| ProviderError::Cache(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(err)?;
        file.write_all(line.as_bytes()).map_err(err)?;
        entries.insert(key, entry);
        Ok(())
    }
}
