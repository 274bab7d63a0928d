use std::fs;
use std::path::{Path, PathBuf};

use super::{AttributeValue, BuildError, KnowledgeGraph, KnowledgeGraphBuilder, Node, Range, Triple, ValueParseError};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Malformed { file: String, line: usize, reason: String },
    #[error(transparent)]
    Build(#[from] BuildError),
}

fn malformed(file: &str, line: usize, reason: impl Into<String>) -> LoadError {
    LoadError::Malformed {
        file: file.to_string(),
        line,
        reason: reason.into(),
    }
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank, non-comment lines with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').collect()))
}

/// Loads the three TSV files. Schema disagreements are logged as warnings
/// and remain available through [`KnowledgeGraph::violations`].
pub fn load_kg(entities: &Path, triples: &Path, schema: &Path) -> Result<KnowledgeGraph, LoadError> {
    let mut builder = KnowledgeGraph::builder();
    parse_entities(&read(entities)?, &mut builder)?;
    parse_schema(&read(schema)?, &mut builder)?;
    parse_triples(&read(triples)?, &mut builder)?;
    let kg = builder.build()?;
    for v in kg.violations() {
        log::warn!("schema violation: {v}");
    }
    Ok(kg)
}

pub fn parse_entities(text: &str, builder: &mut KnowledgeGraphBuilder) -> Result<(), LoadError> {
    const FILE: &str = "entities.tsv";
    for (line, cols) in records(text) {
        let [id, name, classes] = cols.as_slice() else {
            return Err(malformed(FILE, line, format!("expected 3 columns, found {}", cols.len())));
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(malformed(FILE, line, "empty entity id"));
        }
        let classes: Vec<&str> = classes.split(',').map(str::trim).filter(|c| !c.is_empty()).collect();
        builder
            .entity(id, name.trim(), classes)
            .map_err(|e| malformed(FILE, line, e.to_string()))?;
    }
    Ok(())
}

pub fn parse_schema(text: &str, builder: &mut KnowledgeGraphBuilder) -> Result<(), LoadError> {
    const FILE: &str = "schema.tsv";
    for (line, cols) in records(text) {
        let [domain, relation, range] = cols.as_slice() else {
            return Err(malformed(FILE, line, format!("expected 3 columns, found {}", cols.len())));
        };
        let (domain, relation, range) = (domain.trim(), relation.trim(), range.trim());
        if domain.is_empty() || relation.is_empty() || range.is_empty() {
            return Err(malformed(FILE, line, "empty column"));
        }
        let range = match range.parse() {
            Ok(dt) => Range::Datatype(dt),
            Err(_) => Range::Class(range.into()),
        };
        builder.schema(domain, relation, range)?;
    }
    Ok(())
}

pub fn parse_triples(text: &str, builder: &mut KnowledgeGraphBuilder) -> Result<(), LoadError> {
    const FILE: &str = "triples.tsv";
    for (line, cols) in records(text) {
        let [head, relation, tail] = cols.as_slice() else {
            return Err(malformed(FILE, line, format!("expected 3 columns, found {}", cols.len())));
        };
        let (head, relation, tail) = (head.trim(), relation.trim(), tail.trim());
        if head.is_empty() || relation.is_empty() || tail.is_empty() {
            return Err(malformed(FILE, line, "empty column"));
        }
        let tail = if tail.starts_with('"') {
            Node::Literal(AttributeValue::from_tsv(tail).map_err(|e: ValueParseError| malformed(FILE, line, e.to_string()))?)
        } else {
            Node::Entity(tail.into())
        };
        builder.triple(Triple::new(head, relation, tail));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::DataType;

    const ENTITIES: &str = "BoeingCompany\tBoeing Company\trocket_manufacturer\nLockheedMartin\tLockheed Martin\trocket_manufacturer\nSaturn\tSaturn\trocket\nDelta\tDelta\trocket\n";
    const SCHEMA: &str = "rocket_manufacturer\tproducing\trocket\nrocket\tmass\tfloat\n";
    const TRIPLES: &str = "BoeingCompany\tproducing\tSaturn\nLockheedMartin\tproducing\tDelta\nSaturn\tmass\t\"3.03e6\"^^float\nDelta\tmass\t\"1.0e3\"^^float\n";

    fn build(e: &str, s: &str, t: &str) -> Result<KnowledgeGraph, LoadError> {
        let mut b = KnowledgeGraph::builder();
        parse_entities(e, &mut b)?;
        parse_schema(s, &mut b)?;
        parse_triples(t, &mut b)?;
        Ok(b.build()?)
    }

    #[test]
    fn rockets_counts() {
        let kg = build(ENTITIES, SCHEMA, TRIPLES).unwrap();
        assert_eq!((kg.entity_count(), kg.triple_count(), kg.schema_count()), (4, 4, 2));
        assert!(kg.is_schema_consistent());
        let mass = kg.schema_of(&"mass".into()).unwrap();
        assert_eq!(mass.range, Range::Datatype(DataType::Float));
    }

    #[test]
    fn single_entity_no_triples() {
        let kg = build("x\tX\tc\n", "", "").unwrap();
        assert_eq!((kg.entity_count(), kg.triple_count()), (1, 0));
    }

    #[test]
    fn unknown_entity_is_named() {
        let err = build(ENTITIES, SCHEMA, "X\tproducing\tSaturn\n").unwrap_err();
        assert!(err.to_string().contains("`X`"), "{err}");
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = build(ENTITIES, SCHEMA, "BoeingCompany\tproducing\n").unwrap_err();
        assert!(matches!(err, LoadError::Malformed { line: 1, .. }), "{err}");
        let err = build(ENTITIES, SCHEMA, "\nSaturn\tmass\t\"heavy\"^^float\n").unwrap_err();
        assert!(matches!(err, LoadError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_schema_and_unknown_class() {
        let err = build(ENTITIES, "rocket\tmass\tfloat\nrocket\tmass\tinteger\n", "").unwrap_err();
        assert!(matches!(err, LoadError::Build(BuildError::DuplicateSchema(_))));
        let err = build(ENTITIES, "spaceship\tmass\tfloat\n", "").unwrap_err();
        assert!(matches!(err, LoadError::Build(BuildError::UnknownClass { .. })));
    }

    #[test]
    fn deterministic_loads() {
        assert_eq!(build(ENTITIES, SCHEMA, TRIPLES).unwrap(), build(ENTITIES, SCHEMA, TRIPLES).unwrap());
    }
}
