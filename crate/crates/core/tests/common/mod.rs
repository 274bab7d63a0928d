#![allow(dead_code)]

use std::path::PathBuf;

use kgqa_core::kg::{load_kg, KnowledgeGraph};
use kgqa_core::pylf::{parse_pylf, Expr};

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load_fixture(name: &str) -> KnowledgeGraph {
    let dir = fixture_dir(name);
    load_kg(&dir.join("entities.tsv"), &dir.join("triples.tsv"), &dir.join("schema.tsv")).unwrap()
}

/// Expressions listed one per line in `<fixture>/queries.pylf`.
pub fn fixture_queries(name: &str) -> Vec<Expr> {
    let text = std::fs::read_to_string(fixture_dir(name).join("queries.pylf")).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| parse_pylf(l).unwrap_or_else(|e| panic!("{l}: {e}")))
        .collect()
}
