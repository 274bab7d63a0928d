//! Closed-world evaluation of grounded PyLF.
//!
//! [`evaluate`] uses the graph indexes. [`brute_force_evaluate`] computes the
//! same semantics with full scans over the triple and entity sets and serves
//! as a test oracle.

mod brute;

pub use brute::brute_force_evaluate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kg::{AttributeValue, EntityId, KnowledgeGraph, Node, Range, RelationId, SchemaTriple};
use crate::pylf::{ArgMode, Expr, Leaf, RelationRef};

pub const DEFAULT_SIZE_CAP: usize = 1_000_000;

/// Result of evaluating an expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerSet {
    Entities(BTreeSet<EntityId>),
    Literals(BTreeSet<AttributeValue>),
    Number(i64),
}

impl AnswerSet {
    pub fn empty() -> Self {
        AnswerSet::Entities(BTreeSet::new())
    }

    /// True for empty sets and for a zero count. A count of zero is treated
    /// as "no answer" when choosing among candidates.
    pub fn is_empty(&self) -> bool {
        match self {
            AnswerSet::Entities(s) => s.is_empty(),
            AnswerSet::Literals(s) => s.is_empty(),
            AnswerSet::Number(n) => *n == 0,
        }
    }

    /// Set size; a count is a single answer.
    pub fn len(&self) -> usize {
        match self {
            AnswerSet::Entities(s) => s.len(),
            AnswerSet::Literals(s) => s.len(),
            AnswerSet::Number(_) => 1,
        }
    }

    pub fn entities(&self) -> Option<&BTreeSet<EntityId>> {
        match self {
            AnswerSet::Entities(s) => Some(s),
            _ => None,
        }
    }

    /// Answers in dataset encoding: entity ids, `"lex"^^tag` literals, or a
    /// decimal count.
    pub fn to_strings(&self) -> Vec<String> {
        match self {
            AnswerSet::Entities(s) => s.iter().map(|e| e.to_string()).collect(),
            AnswerSet::Literals(s) => s.iter().map(|v| v.to_tsv()).collect(),
            AnswerSet::Number(n) => vec![n.to_string()],
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            AnswerSet::Entities(_) => "entities",
            AnswerSet::Literals(_) => "literals",
            AnswerSet::Number(_) => "count",
        }
    }

    fn nodes(&self) -> Result<Vec<Node>, ExecError> {
        match self {
            AnswerSet::Entities(s) => Ok(s.iter().cloned().map(Node::Entity).collect()),
            AnswerSet::Literals(s) => Ok(s.iter().cloned().map(Node::Literal).collect()),
            AnswerSet::Number(_) => Err(ExecError::TypeClash("count used as a set".into())),
        }
    }

    fn from_nodes(nodes: impl IntoIterator<Item = Node>, range: &Range) -> AnswerSet {
        match range {
            Range::Class(_) => AnswerSet::Entities(
                nodes
                    .into_iter()
                    .filter_map(|n| match n {
                        Node::Entity(e) => Some(e),
                        Node::Literal(_) => None,
                    })
                    .collect(),
            ),
            Range::Datatype(_) => AnswerSet::Literals(
                nodes
                    .into_iter()
                    .filter_map(|n| match n {
                        Node::Literal(v) => Some(v),
                        Node::Entity(_) => None,
                    })
                    .collect(),
            ),
        }
    }
}

impl fmt::Display for AnswerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerSet::Number(n) => write!(f, "{n}"),
            other => write!(f, "{{{}}}", other.to_strings().join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("cannot execute unresolved {0}")]
    Unresolved(String),
    #[error("relation `{0}` has no schema triple")]
    UnknownRelation(RelationId),
    #[error("intermediate set of {size} elements exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },
    #[error("type clash: {0}")]
    TypeClash(String),
}

pub(crate) fn schema<'a>(kg: &'a KnowledgeGraph, r: &RelationRef) -> Result<&'a SchemaTriple, ExecError> {
    match r {
        RelationRef::Unresolved(m) => Err(ExecError::Unresolved(format!("relation '{m}'"))),
        RelationRef::Resolved(id) => kg.schema_of(id).ok_or_else(|| ExecError::UnknownRelation(id.clone())),
    }
}

pub(crate) fn check_cap(size: usize, cap: usize) -> Result<(), ExecError> {
    if size > cap {
        Err(ExecError::SizeCap { size, cap })
    } else {
        Ok(())
    }
}

pub(crate) fn start(leaf: &Leaf) -> Result<AnswerSet, ExecError> {
    match leaf {
        Leaf::Mention(m) => Err(ExecError::Unresolved(format!("mention '{m}'"))),
        Leaf::Entity(e) => Ok(AnswerSet::Entities(BTreeSet::from([e.clone()]))),
        Leaf::Literal(v) => Ok(AnswerSet::Literals(BTreeSet::from([v.clone()]))),
    }
}

pub(crate) fn intersect(a: AnswerSet, b: AnswerSet) -> Result<AnswerSet, ExecError> {
    match (a, b) {
        (AnswerSet::Entities(x), AnswerSet::Entities(y)) => Ok(AnswerSet::Entities(x.intersection(&y).cloned().collect())),
        (AnswerSet::Literals(x), AnswerSet::Literals(y)) => Ok(AnswerSet::Literals(x.intersection(&y).cloned().collect())),
        (a, b) => Err(ExecError::TypeClash(format!("AND of {} and {}", a.kind(), b.kind()))),
    }
}

pub(crate) fn count(inner: AnswerSet) -> Result<AnswerSet, ExecError> {
    match inner {
        AnswerSet::Number(_) => Err(ExecError::TypeClash("COUNT of a count".into())),
        s => Ok(AnswerSet::Number(s.len() as i64)),
    }
}

pub(crate) fn arg_input(inner: AnswerSet) -> Result<BTreeSet<EntityId>, ExecError> {
    match inner {
        AnswerSet::Entities(s) => Ok(s),
        other => Err(ExecError::TypeClash(format!("ARG over {}", other.kind()))),
    }
}

/// Orders `a` against `b` for ARG, flipping for ARGMIN so that "better" is
/// always `Greater`.
pub(crate) fn better(mode: ArgMode, a: &AttributeValue, b: &AttributeValue) -> bool {
    let ord = a.compare(b);
    match mode {
        ArgMode::Max => ord == Some(std::cmp::Ordering::Greater),
        ArgMode::Min => ord == Some(std::cmp::Ordering::Less),
    }
}

/// Index-backed evaluator with a bound on intermediate set sizes.
#[derive(Debug, Clone, Copy)]
pub struct Executor {
    pub size_cap: usize,
}

impl Default for Executor {
    fn default() -> Self {
        Executor {
            size_cap: DEFAULT_SIZE_CAP,
        }
    }
}

impl Executor {
    pub fn new(size_cap: usize) -> Self {
        Executor { size_cap }
    }

    pub fn evaluate(&self, expr: &Expr, kg: &KnowledgeGraph) -> Result<AnswerSet, ExecError> {
        match expr {
            Expr::Start(leaf) => start(leaf),
            Expr::Join {
                relation,
                inner,
                reversed,
                negated,
            } => {
                let st = schema(kg, relation)?;
                let inner = self.evaluate(inner, kg)?;
                check_cap(inner.len(), self.size_cap)?;
                self.join(kg, st, inner, *reversed, *negated)
            }
            Expr::And(a, b) => intersect(self.evaluate(a, kg)?, self.evaluate(b, kg)?),
            Expr::Count(inner) => count(self.evaluate(inner, kg)?),
            Expr::Arg { mode, inner, relation } => {
                let st = schema(kg, relation)?;
                let heads = arg_input(self.evaluate(inner, kg)?)?;
                check_cap(heads.len(), self.size_cap)?;
                Ok(AnswerSet::Entities(arg(kg, &st.relation, *mode, &heads)))
            }
            Expr::Cmp { op, relation, bound } => {
                let st = schema(kg, relation)?;
                let out = kg
                    .pairs(&st.relation)
                    .filter(|(_, t)| matches!(t, Node::Literal(a) if a.compare(bound).is_some_and(|o| op.holds(o))))
                    .map(|(h, _)| h.clone())
                    .collect();
                Ok(AnswerSet::Entities(out))
            }
            Expr::Stop(inner) => self.evaluate(inner, kg),
        }
    }

    fn join(
        &self,
        kg: &KnowledgeGraph,
        st: &SchemaTriple,
        inner: AnswerSet,
        reversed: bool,
        negated: bool,
    ) -> Result<AnswerSet, ExecError> {
        let r = &st.relation;
        let nodes = inner.nodes()?;
        if !reversed {
            let positive: BTreeSet<EntityId> = nodes.iter().flat_map(|t| kg.subjects(r, t)).cloned().collect();
            if !negated {
                return Ok(AnswerSet::Entities(positive));
            }
            let universe = kg.instances_ref(&st.domain).map_or(0, |s| s.len());
            check_cap(universe, self.size_cap)?;
            let out = kg
                .instances_ref(&st.domain)
                .into_iter()
                .flatten()
                .filter(|h| !positive.contains(*h))
                .cloned()
                .collect();
            return Ok(AnswerSet::Entities(out));
        }
        let heads: Vec<EntityId> = nodes
            .into_iter()
            .filter_map(|n| match n {
                Node::Entity(e) => Some(e),
                Node::Literal(_) => None,
            })
            .collect();
        let positive: BTreeSet<Node> = heads.iter().flat_map(|h| kg.objects(h, r)).cloned().collect();
        if !negated {
            return Ok(AnswerSet::from_nodes(positive, &st.range));
        }
        let universe: Vec<Node> = match &st.range {
            Range::Class(c) => kg.instances_ref(c).into_iter().flatten().cloned().map(Node::Entity).collect(),
            Range::Datatype(d) => kg.literals_of(*d).into_iter().map(Node::Literal).collect(),
        };
        check_cap(universe.len(), self.size_cap)?;
        Ok(AnswerSet::from_nodes(
            universe.into_iter().filter(|t| !positive.contains(t)),
            &st.range,
        ))
    }
}

/// Entities of `heads` holding an extreme value of `relation`. Values that
/// are mutually incomparable (say, a date among numbers) each keep their
/// own extremum.
fn arg(kg: &KnowledgeGraph, relation: &RelationId, mode: ArgMode, heads: &BTreeSet<EntityId>) -> BTreeSet<EntityId> {
    let values: Vec<(&EntityId, &AttributeValue)> = heads
        .iter()
        .flat_map(|h| {
            kg.objects(h, relation).filter_map(move |n| match n {
                Node::Literal(v) => Some((h, v)),
                Node::Entity(_) => None,
            })
        })
        .collect();
    let mut extremes: Vec<&AttributeValue> = Vec::new();
    for (_, v) in &values {
        match extremes.iter_mut().find(|e| e.compare(v).is_some()) {
            Some(e) if better(mode, v, e) => *e = v,
            Some(_) => {}
            None => extremes.push(v),
        }
    }
    values
        .into_iter()
        .filter(|(_, v)| extremes.iter().any(|e| e.compare(v) == Some(std::cmp::Ordering::Equal)))
        .map(|(h, _)| h.clone())
        .collect()
}

/// Evaluates with the default size cap.
pub fn evaluate(expr: &Expr, kg: &KnowledgeGraph) -> Result<AnswerSet, ExecError> {
    Executor::default().evaluate(expr, kg)
}
