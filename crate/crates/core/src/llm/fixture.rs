use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::transport::{ChatRequest, ChatTransport};
use super::LlmError;

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub request: ChatRequest,
    pub response: String,
}

impl FixtureRecord {
    pub fn new(request: &ChatRequest, response: impl Into<String>) -> Self {
        Self {
            key: request.key(),
            request: request.clone(),
            response: response.into(),
        }
    }
}

/// Responses indexed by request key. Later records win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureStore {
    pub records: BTreeMap<String, FixtureRecord>,
}

impl FixtureStore {
    pub fn parse(reader: impl BufRead) -> Result<Self, LlmError> {
        let mut store = Self::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_str(&line)
                .map_err(|e| LlmError::Schema(format!("fixture line {}: {e}", n + 1)))?;
            store.records.insert(rec.key.clone(), rec);
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Self::parse(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn insert(&mut self, rec: FixtureRecord) {
        self.records.insert(rec.key.clone(), rec);
    }

    pub fn get(&self, request: &ChatRequest) -> Option<&str> {
        self.records.get(&request.key()).map(|r| r.response.as_str())
    }

    /// Line-delimited rendering, ordered by key.
    pub fn to_jsonl(&self) -> String {
        self.records
            .values()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Serves recorded responses; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    store: FixtureStore,
}

impl ReplayTransport {
    pub fn new(store: FixtureStore) -> Self {
        Self { store }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Ok(Self::new(FixtureStore::load(path)?))
    }
}

impl ChatTransport for ReplayTransport {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        self.store
            .get(request)
            .map(str::to_string)
            .ok_or_else(|| LlmError::CacheMiss(request.key()))
    }
}

/// Forwards to an inner transport and appends every exchange to a fixture file.
pub struct RecordingTransport<T> {
    inner: T,
    path: PathBuf,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T, path: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
        }
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        let line = serde_json::to_string(&FixtureRecord::new(request, response.clone()))
            .map_err(|e| LlmError::Schema(e.to_string()))?;
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{line}")?;
        Ok(response)
    }
}
