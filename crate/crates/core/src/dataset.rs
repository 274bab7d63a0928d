//! JSON-lines question datasets.
//!
//! Each line holds one example. Answers use the encoding of
//! [`AnswerSet::to_strings`]: entity ids, `"lexical"^^tag` literals, or a
//! decimal count.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::exec::AnswerSet;
use crate::kg::{AttributeValue, EntityId};
use crate::pylf::{parse_pylf, Expr, FunctionType, ParseError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub qid: String,
    pub question: String,
    /// Gold logical form in PyLF concrete syntax.
    pub pylf: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_type: Option<FunctionType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_constraints: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("example {qid}: gold PyLF does not parse: {source}")]
    Pylf { qid: String, source: ParseError },
    #[error("example {qid}: bad gold answer `{answer}`")]
    Answer { qid: String, answer: String },
}

impl Example {
    pub fn gold_expr(&self) -> Result<Expr, DatasetError> {
        parse_pylf(&self.pylf).map_err(|source| DatasetError::Pylf {
            qid: self.qid.clone(),
            source,
        })
    }

    /// Gold answers decoded by shape: a count when the gold form is a COUNT,
    /// literals when every answer is `"lex"^^tag`, entity ids otherwise.
    pub fn gold_answers(&self) -> Result<AnswerSet, DatasetError> {
        let bad = |a: &str| DatasetError::Answer {
            qid: self.qid.clone(),
            answer: a.to_string(),
        };
        if matches!(self.gold_expr()?.body(), Expr::Count(_)) {
            let [n] = &self.answers[..] else {
                return Err(bad(&self.answers.join(",")));
            };
            return n.trim().parse().map(AnswerSet::Number).map_err(|_| bad(n));
        }
        if !self.answers.is_empty() && self.answers.iter().all(|a| a.contains("\"^^")) {
            let lits = self
                .answers
                .iter()
                .map(|a| AttributeValue::from_tsv(a).map_err(|_| bad(a)))
                .collect::<Result<BTreeSet<_>, _>>()?;
            return Ok(AnswerSet::Literals(lits));
        }
        Ok(AnswerSet::Entities(self.answers.iter().map(|a| EntityId::new(a.trim())).collect()))
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = io::BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        let line = serde_json::to_string(item).expect("dataset records serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads examples and rejects duplicate qids.
pub fn load_dataset(path: &Path) -> Result<Vec<Example>, DatasetError> {
    let examples: Vec<Example> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for (i, ex) in examples.iter().enumerate() {
        if !seen.insert(ex.qid.as_str()) {
            return Err(DatasetError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("duplicate qid {}", ex.qid),
            });
        }
    }
    Ok(examples)
}
