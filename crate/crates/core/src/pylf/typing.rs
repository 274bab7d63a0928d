//! Output-type inference against a knowledge-graph schema.
//!
//! An entity-valued expression is typed by a set of classes that every
//! answer entity belongs to. `AND` intersects those sets and requires the
//! intersection to be non-empty.

use std::collections::BTreeSet;
use std::fmt;

use super::{path_string, Expr, Leaf, RelationRef, StructureError};
use crate::kg::{ClassId, DataType, KnowledgeGraph, Range, SchemaTriple};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputType {
    Entities(BTreeSet<ClassId>),
    Datatype(DataType),
    Count,
}

impl OutputType {
    pub fn class(c: impl Into<ClassId>) -> Self {
        OutputType::Entities(BTreeSet::from([c.into()]))
    }

    /// Whether a value of this type can stand where `required` is expected.
    pub fn fits(&self, required: &Range) -> bool {
        match (self, required) {
            (OutputType::Entities(cs), Range::Class(c)) => cs.contains(c),
            (OutputType::Datatype(d), Range::Datatype(r)) => d == r,
            _ => false,
        }
    }

    fn range_type(r: &Range) -> OutputType {
        match r {
            Range::Class(c) => OutputType::class(c.clone()),
            Range::Datatype(d) => OutputType::Datatype(*d),
        }
    }
}

impl fmt::Display for OutputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputType::Entities(cs) => {
                let names: Vec<&str> = cs.iter().map(|c| c.as_str()).collect();
                write!(f, "{{{}}}", names.join(", "))
            }
            OutputType::Datatype(d) => write!(f, "{d}"),
            OutputType::Count => f.write_str("count"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("unresolved {0}")]
    Unresolved(String),
    #[error("relation `{0}` has no schema triple")]
    UnknownRelation(String),
    #[error("entity `{0}` is not in the graph")]
    UnknownEntity(String),
    #[error("`{relation}` expects {expected} but its argument has type {found}")]
    Incompatible { relation: String, expected: String, found: String },
    #[error("AND operands have disjoint types {left} and {right}")]
    AndMismatch { left: String, right: String },
    #[error("`{0}` does not have an ordered datatype range")]
    NotOrdered(String),
    #[error("bound {bound} cannot be compared with `{relation}`")]
    BadBound { relation: String, bound: String },
    #[error("COUNT cannot be used as an operand")]
    CountOperand,
    #[error(transparent)]
    Structure(#[from] StructureError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    /// Child-index path of the offending node, `root` for the top.
    pub path: String,
    pub error: TypeError,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at {}: {}", self.path, self.error)
    }
}

struct Checker<'a> {
    kg: &'a KnowledgeGraph,
    issues: Vec<ValidationIssue>,
    path: Vec<usize>,
}

impl Checker<'_> {
    fn report<T>(&mut self, error: TypeError) -> Option<T> {
        self.issues.push(ValidationIssue {
            path: path_string(&self.path),
            error,
        });
        None
    }

    fn schema(&mut self, r: &RelationRef) -> Option<SchemaTriple> {
        match r {
            RelationRef::Unresolved(m) => self.report(TypeError::Unresolved(format!("relation '{m}'"))),
            RelationRef::Resolved(id) => match self.kg.schema_of(id) {
                Some(st) => Some(st.clone()),
                None => self.report(TypeError::UnknownRelation(id.to_string())),
            },
        }
    }

    fn child(&mut self, i: usize, e: &Expr) -> Option<OutputType> {
        self.path.push(i);
        let t = self.check(e);
        self.path.pop();
        t
    }

    /// Checks an operand that must fit `required`; reports against the parent.
    fn operand(&mut self, t: Option<OutputType>, required: &Range, relation: &SchemaTriple) -> Option<()> {
        let t = t?;
        if t == OutputType::Count {
            return self.report(TypeError::CountOperand);
        }
        if t.fits(required) {
            Some(())
        } else {
            self.report(TypeError::Incompatible {
                relation: relation.relation.to_string(),
                expected: required.to_string(),
                found: t.to_string(),
            })
        }
    }

    fn ordered_range(&mut self, st: &SchemaTriple) -> Option<DataType> {
        match st.range {
            Range::Datatype(d) if d.is_ordered() => Some(d),
            _ => self.report(TypeError::NotOrdered(st.relation.to_string())),
        }
    }

    fn check(&mut self, e: &Expr) -> Option<OutputType> {
        match e {
            Expr::Start(Leaf::Mention(m)) => self.report(TypeError::Unresolved(format!("mention '{m}'"))),
            Expr::Start(Leaf::Entity(id)) => match self.kg.entity(id) {
                Some(info) => Some(OutputType::Entities(info.classes.clone())),
                None => self.report(TypeError::UnknownEntity(id.to_string())),
            },
            Expr::Start(Leaf::Literal(v)) => Some(OutputType::Datatype(v.datatype())),
            Expr::Join {
                relation, inner, reversed, ..
            } => {
                let st = self.schema(relation);
                let t = self.child(0, inner);
                let st = st?;
                let (required, output) = if *reversed {
                    (Range::Class(st.domain.clone()), OutputType::range_type(&st.range))
                } else {
                    (st.range.clone(), OutputType::class(st.domain.clone()))
                };
                self.operand(t, &required, &st)?;
                Some(output)
            }
            Expr::And(a, b) => {
                let ta = self.child(0, a);
                let tb = self.child(1, b);
                let (ta, tb) = (ta?, tb?);
                match (&ta, &tb) {
                    (OutputType::Entities(x), OutputType::Entities(y)) => {
                        let common: BTreeSet<ClassId> = x.intersection(y).cloned().collect();
                        if common.is_empty() {
                            self.report(TypeError::AndMismatch {
                                left: ta.to_string(),
                                right: tb.to_string(),
                            })
                        } else {
                            Some(OutputType::Entities(common))
                        }
                    }
                    (OutputType::Datatype(x), OutputType::Datatype(y)) if x == y => Some(ta),
                    (OutputType::Count, _) | (_, OutputType::Count) => self.report(TypeError::CountOperand),
                    _ => self.report(TypeError::AndMismatch {
                        left: ta.to_string(),
                        right: tb.to_string(),
                    }),
                }
            }
            Expr::Count(inner) => {
                let t = self.child(0, inner)?;
                if t == OutputType::Count {
                    return self.report(TypeError::CountOperand);
                }
                Some(OutputType::Count)
            }
            Expr::Arg { inner, relation, .. } => {
                let st = self.schema(relation);
                let t = self.child(0, inner);
                let st = st?;
                self.ordered_range(&st)?;
                self.operand(t, &Range::Class(st.domain.clone()), &st)?;
                Some(OutputType::class(st.domain))
            }
            Expr::Cmp { relation, bound, .. } => {
                let st = self.schema(relation)?;
                let d = self.ordered_range(&st)?;
                let ok = if d.is_numeric() {
                    bound.datatype().is_numeric()
                } else {
                    bound.datatype() == d
                };
                if !ok {
                    return self.report(TypeError::BadBound {
                        relation: st.relation.to_string(),
                        bound: bound.to_tsv(),
                    });
                }
                Some(OutputType::class(st.domain))
            }
            Expr::Stop(inner) => self.child(0, inner),
        }
    }
}

/// Infers the output type of `expr`, failing on the first type error.
pub fn infer_type(expr: &Expr, kg: &KnowledgeGraph) -> Result<OutputType, TypeError> {
    let mut c = Checker {
        kg,
        issues: Vec::new(),
        path: Vec::new(),
    };
    let t = c.check(expr);
    match (t, c.issues.into_iter().next()) {
        (Some(t), None) => Ok(t),
        (_, Some(issue)) => Err(issue.error),
        (None, None) => unreachable!("checker failed without reporting"),
    }
}

/// Collects every structural and type issue. An issue below a node
/// suppresses checks at that node, so one fault is reported once.
pub fn validate(expr: &Expr, kg: &KnowledgeGraph) -> Vec<ValidationIssue> {
    let mut c = Checker {
        kg,
        issues: Vec::new(),
        path: Vec::new(),
    };
    if let Err(e) = expr.check_structure() {
        c.report::<()>(e.into());
    }
    c.check(expr);
    c.issues
}
