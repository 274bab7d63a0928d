//! Immutable, schema-annotated knowledge graph under the closed-world
//! assumption.
//!
//! A graph is built once (from TSV files or through [`KnowledgeGraphBuilder`])
//! and then only read. Every relation carries exactly one schema-level triple
//! `(domain class, relation, range class or datatype)`; instance triples that
//! disagree with it are reported as [`SchemaViolation`]s but still loaded.

mod load;
mod value;

pub use load::{load_kg, parse_entities, parse_schema, parse_triples, LoadError};
pub use value::{AttributeValue, DataType, ValueParseError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

string_id!(
    /// Opaque entity identifier such as `m.0178g`.
    EntityId
);
string_id!(
    /// Relation identifier; doubles as the relation's name for matching.
    RelationId
);
string_id!(
    /// Class identifier. A class is the set of entities that list it.
    ClassId
);

/// Tail of a triple: an entity or an attribute value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Entity(EntityId),
    Literal(AttributeValue),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Entity(e) => write!(f, "{e}"),
            Node::Literal(v) => write!(f, "{}", v.to_tsv()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: Node,
}

impl Triple {
    pub fn new(head: impl Into<EntityId>, relation: impl Into<RelationId>, tail: Node) -> Self {
        Triple {
            head: head.into(),
            relation: relation.into(),
            tail,
        }
    }
}

impl From<String> for EntityId {
    fn from(s: String) -> Self {
        EntityId(s)
    }
}

impl From<String> for RelationId {
    fn from(s: String) -> Self {
        RelationId(s)
    }
}

impl From<String> for ClassId {
    fn from(s: String) -> Self {
        ClassId(s)
    }
}

/// Range side of a schema-level triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Range {
    Class(ClassId),
    Datatype(DataType),
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Range::Class(c) => write!(f, "{c}"),
            Range::Datatype(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SchemaTriple {
    pub domain: ClassId,
    pub relation: RelationId,
    pub range: Range,
}

/// Which end of a schema triple a class lookup targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Domain,
    Range,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityInfo {
    pub name: String,
    pub classes: BTreeSet<ClassId>,
}

/// An instance triple that disagrees with its relation's schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaViolation {
    pub triple: Triple,
    pub reason: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}): {}",
            self.triple.head, self.triple.relation, self.triple.tail, self.reason
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("duplicate entity `{0}`")]
    DuplicateEntity(EntityId),
    #[error("empty entity id")]
    EmptyEntityId,
    #[error("triple references unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("duplicate schema triple for relation `{0}`")]
    DuplicateSchema(RelationId),
    #[error("schema for relation `{relation}` uses unknown class `{class}`")]
    UnknownClass { relation: RelationId, class: ClassId },
}

/// Accumulates entities, triples and schema before indexing.
#[derive(Debug, Default, Clone)]
pub struct KnowledgeGraphBuilder {
    entities: BTreeMap<EntityId, EntityInfo>,
    triples: BTreeSet<Triple>,
    schema: BTreeMap<RelationId, SchemaTriple>,
}

impl KnowledgeGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity<I, C>(&mut self, id: impl Into<EntityId>, name: &str, classes: I) -> Result<&mut Self, BuildError>
    where
        I: IntoIterator<Item = C>,
        C: Into<ClassId>,
    {
        let id = id.into();
        if id.as_str().is_empty() {
            return Err(BuildError::EmptyEntityId);
        }
        if self.entities.contains_key(&id) {
            return Err(BuildError::DuplicateEntity(id));
        }
        let info = EntityInfo {
            name: name.to_string(),
            classes: classes.into_iter().map(Into::into).collect(),
        };
        self.entities.insert(id, info);
        Ok(self)
    }

    pub fn schema(&mut self, domain: impl Into<ClassId>, relation: impl Into<RelationId>, range: Range) -> Result<&mut Self, BuildError> {
        let relation = relation.into();
        if self.schema.contains_key(&relation) {
            return Err(BuildError::DuplicateSchema(relation));
        }
        let st = SchemaTriple {
            domain: domain.into(),
            relation: relation.clone(),
            range,
        };
        self.schema.insert(relation, st);
        Ok(self)
    }

    pub fn triple(&mut self, triple: Triple) -> &mut Self {
        self.triples.insert(triple);
        self
    }

    /// Indexes the graph. Referential and schema-declaration errors are fatal;
    /// instance-level schema disagreements are collected as violations.
    pub fn build(self) -> Result<KnowledgeGraph, BuildError> {
        let KnowledgeGraphBuilder { entities, triples, schema } = self;

        let mut instances: BTreeMap<ClassId, BTreeSet<EntityId>> = BTreeMap::new();
        for (id, info) in &entities {
            for c in &info.classes {
                instances.entry(c.clone()).or_default().insert(id.clone());
            }
        }

        for st in schema.values() {
            let mut classes = vec![&st.domain];
            if let Range::Class(c) = &st.range {
                classes.push(c);
            }
            for c in classes {
                if !instances.contains_key(c) {
                    return Err(BuildError::UnknownClass {
                        relation: st.relation.clone(),
                        class: c.clone(),
                    });
                }
            }
        }

        let mut by_relation: BTreeMap<RelationId, BTreeSet<(EntityId, Node)>> = BTreeMap::new();
        let mut by_tail: BTreeMap<Node, BTreeSet<(RelationId, EntityId)>> = BTreeMap::new();
        let mut violations = Vec::new();

        for t in &triples {
            if !entities.contains_key(&t.head) {
                return Err(BuildError::UnknownEntity(t.head.clone()));
            }
            if let Node::Entity(e) = &t.tail {
                if !entities.contains_key(e) {
                    return Err(BuildError::UnknownEntity(e.clone()));
                }
            }
            by_relation
                .entry(t.relation.clone())
                .or_default()
                .insert((t.head.clone(), t.tail.clone()));
            by_tail
                .entry(t.tail.clone())
                .or_default()
                .insert((t.relation.clone(), t.head.clone()));

            if let Some(reason) = check_triple(t, &schema, &entities) {
                violations.push(SchemaViolation { triple: t.clone(), reason });
            }
        }

        Ok(KnowledgeGraph {
            entities,
            instances,
            triples,
            by_relation,
            by_tail,
            schema,
            violations,
        })
    }
}

fn check_triple(t: &Triple, schema: &BTreeMap<RelationId, SchemaTriple>, entities: &BTreeMap<EntityId, EntityInfo>) -> Option<String> {
    let Some(st) = schema.get(&t.relation) else {
        return Some("relation has no schema triple".to_string());
    };
    if !entities[&t.head].classes.contains(&st.domain) {
        return Some(format!("head is not an instance of `{}`", st.domain));
    }
    match (&t.tail, &st.range) {
        (Node::Entity(e), Range::Class(c)) if !entities[e].classes.contains(c) => Some(format!("tail is not an instance of `{c}`")),
        (Node::Entity(_), Range::Class(_)) => None,
        (Node::Literal(v), Range::Datatype(d)) if v.datatype() != *d => {
            Some(format!("literal tagged `{}` where `{d}` is declared", v.datatype()))
        }
        (Node::Literal(_), Range::Datatype(_)) => None,
        (Node::Entity(_), Range::Datatype(d)) => Some(format!("entity tail where datatype `{d}` is declared")),
        (Node::Literal(_), Range::Class(c)) => Some(format!("literal tail where class `{c}` is declared")),
    }
}

/// Indexed, read-only knowledge graph.
///
/// Lookups by `(h, r)` use the primary triple order; `(r, *)` and `(*, t)`
/// use secondary indexes. Equality compares content, so two loads of the
/// same files compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, EntityInfo>,
    instances: BTreeMap<ClassId, BTreeSet<EntityId>>,
    triples: BTreeSet<Triple>,
    by_relation: BTreeMap<RelationId, BTreeSet<(EntityId, Node)>>,
    by_tail: BTreeMap<Node, BTreeSet<(RelationId, EntityId)>>,
    schema: BTreeMap<RelationId, SchemaTriple>,
    violations: Vec<SchemaViolation>,
}

impl KnowledgeGraph {
    pub fn builder() -> KnowledgeGraphBuilder {
        KnowledgeGraphBuilder::new()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn schema_count(&self) -> usize {
        self.schema.len()
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityInfo> {
        self.entities.get(id)
    }

    pub fn contains_entity(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = (&EntityId, &EntityInfo)> {
        self.entities.iter()
    }

    /// All triples in `(h, r, t)` order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn schema_triples(&self) -> impl Iterator<Item = &SchemaTriple> {
        self.schema.values()
    }

    pub fn schema_of(&self, relation: &RelationId) -> Option<&SchemaTriple> {
        self.schema.get(relation)
    }

    /// Declared classes, i.e. every class listed by at least one entity.
    pub fn classes(&self) -> impl Iterator<Item = &ClassId> {
        self.instances.keys()
    }

    pub fn violations(&self) -> &[SchemaViolation] {
        &self.violations
    }

    pub fn is_schema_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    /// Entities listing `class`; empty for unknown classes.
    pub fn instances_of(&self, class: &ClassId) -> BTreeSet<EntityId> {
        self.instances.get(class).cloned().unwrap_or_default()
    }

    pub(crate) fn instances_ref(&self, class: &ClassId) -> Option<&BTreeSet<EntityId>> {
        self.instances.get(class)
    }

    /// Every distinct literal of the given datatype appearing as a tail.
    pub fn literals_of(&self, datatype: DataType) -> BTreeSet<AttributeValue> {
        self.by_tail
            .keys()
            .filter_map(|n| match n {
                Node::Literal(v) if v.datatype() == datatype => Some(v.clone()),
                _ => None,
            })
            .collect()
    }

    /// Pattern query; unbound positions are `None`. With all three bound this
    /// is an existence test.
    pub fn query_triples(&self, head: Option<&EntityId>, relation: Option<&RelationId>, tail: Option<&Node>) -> BTreeSet<Triple> {
        match (head, relation, tail) {
            (Some(h), r, t) => self
                .head_range(h)
                .filter(|tr| r.is_none_or(|r| &tr.relation == r) && t.is_none_or(|t| &tr.tail == t))
                .cloned()
                .collect(),
            (None, Some(r), None) => self
                .by_relation
                .get(r)
                .into_iter()
                .flatten()
                .map(|(h, t)| Triple::new(h.clone(), r.clone(), t.clone()))
                .collect(),
            (None, r, Some(t)) => self
                .by_tail
                .get(t)
                .into_iter()
                .flatten()
                .filter(|(rel, _)| r.is_none_or(|r| rel == r))
                .map(|(rel, h)| Triple::new(h.clone(), rel.clone(), t.clone()))
                .collect(),
            (None, None, None) => self.triples.clone(),
        }
    }

    fn head_range<'a>(&'a self, head: &EntityId) -> impl Iterator<Item = &'a Triple> + 'a {
        let head = head.clone();
        let lo = Triple::new(head.clone(), RelationId::new(""), Node::Entity(EntityId::new("")));
        self.triples
            .range((Bound::Included(lo), Bound::Unbounded))
            .take_while(move |t| t.head == head)
    }

    pub fn has_triple(&self, head: &EntityId, relation: &RelationId, tail: &Node) -> bool {
        self.triples.contains(&Triple::new(head.clone(), relation.clone(), tail.clone()))
    }

    /// Tails reachable from `head` via `relation`.
    pub fn objects<'a>(&'a self, head: &EntityId, relation: &'a RelationId) -> impl Iterator<Item = &'a Node> + 'a {
        self.head_range(head).filter(move |t| &t.relation == relation).map(|t| &t.tail)
    }

    /// Heads pointing at `tail` via `relation`.
    pub fn subjects<'a>(&'a self, relation: &'a RelationId, tail: &Node) -> impl Iterator<Item = &'a EntityId> + 'a {
        self.by_tail
            .get(tail)
            .into_iter()
            .flatten()
            .filter(move |(r, _)| r == relation)
            .map(|(_, h)| h)
    }

    /// All `(head, tail)` pairs of a relation.
    pub fn pairs<'a>(&'a self, relation: &RelationId) -> impl Iterator<Item = &'a (EntityId, Node)> + 'a {
        self.by_relation.get(relation).into_iter().flatten()
    }

    /// Schema triples whose domain (or range) class is one of `classes`.
    pub fn schema_lookup<'a, I>(&self, classes: I, side: Side) -> BTreeSet<SchemaTriple>
    where
        I: IntoIterator<Item = &'a ClassId>,
    {
        let classes: BTreeSet<&ClassId> = classes.into_iter().collect();
        self.schema
            .values()
            .filter(|st| match side {
                Side::Domain => classes.contains(&st.domain),
                Side::Range => matches!(&st.range, Range::Class(c) if classes.contains(c)),
            })
            .cloned()
            .collect()
    }
}
