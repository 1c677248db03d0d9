//! JSON-lines datasets and prediction files.
//!
//! A dataset line is one [`LabeledExample`]:
//!
//! ```json
//! {"id": "1", "task": "ner", "lang": "en", "text": "Turing was born in London.",
//!  "categories": ["PER", "LOC"], "spans": [{"start": 0, "end": 6, "label": "PER"}]}
//! ```
//!
//! Offsets are 0-based half-open character offsets into `text`, which is
//! taken verbatim. A prediction line is a [`PredictionRecord`]: the raw model
//! output plus its parse.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::span::{ExampleError, LabeledExample, ParseResult, RawPrediction};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(flatten)]
    pub raw: RawPrediction,
    pub parsed: ParseResult,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: ExampleError,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("no records")]
    Empty,
    #[error("predictions do not match the dataset (missing: [{}], extra: [{}])", missing.join(", "), extra.join(", "))]
    IdMismatch { missing: Vec<String>, extra: Vec<String> },
}

/// Parses JSON lines, skipping blank ones. Errors carry 1-based line numbers.
pub fn parse_jsonl<T: DeserializeOwned>(source: &str) -> Result<Vec<T>, DatasetError> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| DatasetError::Json { line: i + 1, source }))
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).expect("records serialize") + "\n")
        .collect()
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `items` as JSON lines, one `write` per line so an interrupted
/// writer leaves only whole lines behind.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for item in items {
        let line = serde_json::to_string(item).expect("records serialize") + "\n";
        file.write_all(line.as_bytes()).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

/// Parses and validates a dataset. Ids must be unique.
pub fn parse_examples(source: &str) -> Result<Vec<LabeledExample>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample =
            serde_json::from_str(line).map_err(|source| DatasetError::Json { line: i + 1, source })?;
        ex.validate()
            .map_err(|source| DatasetError::Invalid { line: i + 1, source })?;
        if !seen.insert(ex.id.clone()) {
            return Err(DatasetError::DuplicateId(ex.id));
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn read_examples(path: &Path) -> Result<Vec<LabeledExample>, DatasetError> {
    parse_examples(&read(path)?)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, DatasetError> {
    parse_jsonl(&read(path)?)
}

/// Pairs each prediction with its example, in prediction order. Every
/// prediction must refer to a dataset example; examples without a
/// prediction are left out.
pub fn align(
    examples: &[LabeledExample],
    predictions: &[PredictionRecord],
) -> Result<Vec<(LabeledExample, ParseResult)>, DatasetError> {
    if predictions.is_empty() {
        return Err(DatasetError::Empty);
    }
    let by_id: HashMap<&str, &LabeledExample> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut seen = HashSet::new();
    for p in predictions {
        if !seen.insert(p.raw.example_id.as_str()) {
            return Err(DatasetError::DuplicateId(p.raw.example_id.clone()));
        }
    }
    let extra: Vec<String> = predictions
        .iter()
        .filter(|p| !by_id.contains_key(p.raw.example_id.as_str()))
        .map(|p| p.raw.example_id.clone())
        .collect();
    if !extra.is_empty() {
        let missing = examples
            .iter()
            .filter(|e| !seen.contains(e.id.as_str()))
            .map(|e| e.id.clone())
            .collect();
        return Err(DatasetError::IdMismatch { missing, extra });
    }
    Ok(predictions
        .iter()
        .map(|p| (by_id[p.raw.example_id.as_str()].clone(), p.parsed.clone()))
        .collect())
}
