//! PyLF: a Python-call-style logical form with explicit negation.
//!
//! ```text
//! STOP(AND(JOIN('R_producing', START('Boeing Company'), neg=True),
//!          CMP('<', 'mass', 2.32e3)))
//! ```
//!
//! Quoted arguments are unresolved mentions produced by a language model;
//! bare identifiers are resolved knowledge-graph ids. A relation written
//! with an `R_` prefix is traversed from head to tail.

mod parse;
mod print;
mod profile;
mod typing;

pub use parse::{parse_pylf, ParseError, ParseErrorKind};
pub use print::print_pylf;
pub use profile::{profile_constraints, ConstraintProfile, FunctionType};
pub use typing::{infer_type, validate, OutputType, TypeError, ValidationIssue};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kg::{AttributeValue, EntityId, RelationId};

/// Surface text naming an entity, as written in a draft.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mention(String);

impl Mention {
    /// Trims the text; `None` when nothing remains.
    pub fn new(text: &str) -> Option<Self> {
        let t = text.trim();
        (!t.is_empty()).then(|| Mention(t.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Mention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Leaf {
    Mention(Mention),
    Entity(EntityId),
    Literal(AttributeValue),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationRef {
    Unresolved(String),
    Resolved(RelationId),
}

impl RelationRef {
    pub fn name(&self) -> &str {
        match self {
            RelationRef::Unresolved(s) => s,
            RelationRef::Resolved(r) => r.as_str(),
        }
    }

    pub fn resolved(&self) -> Option<&RelationId> {
        match self {
            RelationRef::Resolved(r) => Some(r),
            RelationRef::Unresolved(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArgMode {
    Min,
    Max,
}

impl ArgMode {
    pub fn keyword(self) -> &'static str {
        match self {
            ArgMode::Min => "ARGMIN",
            ArgMode::Max => "ARGMAX",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 4] = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "<" | "lt" => Some(CmpOp::Lt),
            "<=" | "le" => Some(CmpOp::Le),
            ">" | "gt" => Some(CmpOp::Gt),
            ">=" | "ge" => Some(CmpOp::Ge),
            _ => None,
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

/// PyLF syntax tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Start(Leaf),
    Join {
        relation: RelationRef,
        inner: Box<Expr>,
        reversed: bool,
        negated: bool,
    },
    And(Box<Expr>, Box<Expr>),
    Count(Box<Expr>),
    Arg {
        mode: ArgMode,
        inner: Box<Expr>,
        relation: RelationRef,
    },
    Cmp {
        op: CmpOp,
        relation: RelationRef,
        bound: AttributeValue,
    },
    Stop(Box<Expr>),
}

impl Expr {
    pub fn mention(text: &str) -> Expr {
        Expr::Start(Leaf::Mention(Mention::new(text).expect("non-empty mention")))
    }

    pub fn entity(id: impl Into<EntityId>) -> Expr {
        Expr::Start(Leaf::Entity(id.into()))
    }

    pub fn literal(v: AttributeValue) -> Expr {
        Expr::Start(Leaf::Literal(v))
    }

    pub fn join(relation: RelationRef, inner: Expr, reversed: bool, negated: bool) -> Expr {
        Expr::Join {
            relation,
            inner: Box::new(inner),
            reversed,
            negated,
        }
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn count(e: Expr) -> Expr {
        Expr::Count(Box::new(e))
    }

    pub fn arg(mode: ArgMode, inner: Expr, relation: RelationRef) -> Expr {
        Expr::Arg {
            mode,
            inner: Box::new(inner),
            relation,
        }
    }

    pub fn cmp(op: CmpOp, relation: RelationRef, bound: AttributeValue) -> Expr {
        Expr::Cmp { op, relation, bound }
    }

    pub fn stop(e: Expr) -> Expr {
        Expr::Stop(Box::new(e))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Start(_) | Expr::Cmp { .. } => vec![],
            Expr::Join { inner, .. } | Expr::Arg { inner, .. } | Expr::Count(inner) | Expr::Stop(inner) => vec![inner],
            Expr::And(a, b) => vec![a, b],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Start(_) | Expr::Cmp { .. } => vec![],
            Expr::Join { inner, .. } | Expr::Arg { inner, .. } | Expr::Count(inner) | Expr::Stop(inner) => vec![inner],
            Expr::And(a, b) => vec![a, b],
        }
    }

    /// Pre-order traversal paired with child-index paths (root is `[]`).
    pub fn preorder(&self) -> Vec<(Vec<usize>, &Expr)> {
        fn go<'a>(e: &'a Expr, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, &'a Expr)>) {
            out.push((path.clone(), e));
            for (i, c) in e.children().into_iter().enumerate() {
                path.push(i);
                go(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn at_path(&self, path: &[usize]) -> Option<&Expr> {
        path.iter().try_fold(self, |e, &i| e.children().get(i).copied())
    }

    pub fn at_path_mut(&mut self, path: &[usize]) -> Option<&mut Expr> {
        let mut cur = self;
        for &i in path {
            cur = cur.children_mut().into_iter().nth(i)?;
        }
        Some(cur)
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// True when every leaf and relation reference is resolved.
    pub fn is_grounded(&self) -> bool {
        self.preorder().iter().all(|(_, e)| match e {
            Expr::Start(Leaf::Mention(_)) => false,
            Expr::Join { relation, .. } | Expr::Arg { relation, .. } | Expr::Cmp { relation, .. } => relation.resolved().is_some(),
            _ => true,
        })
    }

    /// Expression under the root `STOP`, or `self` when there is none.
    pub fn body(&self) -> &Expr {
        match self {
            Expr::Stop(inner) => inner,
            other => other,
        }
    }

    /// Checks placement rules: a single `STOP` at the root and `COUNT` only
    /// directly beneath it.
    pub fn check_structure(&self) -> Result<(), StructureError> {
        let Expr::Stop(body) = self else {
            return Err(StructureError::MissingStop);
        };
        for (path, node) in body.preorder() {
            match node {
                Expr::Stop(_) => return Err(StructureError::NestedStop),
                Expr::Count(_) if !path.is_empty() => return Err(StructureError::MisplacedCount),
                _ => {}
            }
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_pylf(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StructureError {
    #[error("expression must be wrapped in STOP(...)")]
    MissingStop,
    #[error("STOP may only appear at the root")]
    NestedStop,
    #[error("COUNT may only appear directly under STOP")]
    MisplacedCount,
}

pub fn path_string(path: &[usize]) -> String {
    if path.is_empty() {
        "root".to_string()
    } else {
        path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
    }
}
