//! SPARQL 1.1 compilation of grounded PyLF, an HTTP endpoint client and an
//! N-Triples exporter for seeding endpoints.
//!
//! IRIs: entities `<kg:entity/ID>`, relations `<kg:rel/NAME>`, classes
//! `<kg:class/NAME>` (percent-encoded). Class membership is `rdf:type`.
//! Integers and floats compile to bare numeric literals (`xsd:integer`,
//! `xsd:double`); dates use the datatype `<kg:dt/date>` and compare on their
//! lexical form.

mod export;
mod remote;

pub use export::{export_ntriples, write_ntriples};
pub use remote::{execute_remote, parse_results, SparqlClient, SparqlError};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use crate::kg::{AttributeValue, ClassId, DataType, EntityId, KnowledgeGraph, Range, RelationId};
use crate::pylf::{infer_type, ArgMode, CmpOp, Expr, Leaf, OutputType, RelationRef, TypeError};

pub const ENTITY_PREFIX: &str = "kg:entity/";
pub const RELATION_PREFIX: &str = "kg:rel/";
pub const CLASS_PREFIX: &str = "kg:class/";
pub const DATE_DATATYPE: &str = "kg:dt/date";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

const IRI_UNSAFE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'<')
    .add(b'>')
    .add(b'?')
    .add(b'\\')
    .add(b'^')
    .add(b'`')
    .add(b'{')
    .add(b'|')
    .add(b'}');

fn iri(prefix: &str, local: &str) -> String {
    format!("<{prefix}{}>", utf8_percent_encode(local, IRI_UNSAFE))
}

pub fn entity_iri(e: &EntityId) -> String {
    iri(ENTITY_PREFIX, e.as_str())
}

pub fn relation_iri(r: &RelationId) -> String {
    iri(RELATION_PREFIX, r.as_str())
}

pub fn class_iri(c: &ClassId) -> String {
    iri(CLASS_PREFIX, c.as_str())
}

/// Inverse of [`entity_iri`] for an IRI without angle brackets.
pub fn entity_from_iri(iri: &str) -> Option<EntityId> {
    let local = iri.strip_prefix(ENTITY_PREFIX)?;
    Some(EntityId::new(percent_decode_str(local).decode_utf8().ok()?.into_owned()))
}

pub fn datatype_iri(d: DataType) -> String {
    match d {
        DataType::Integer => format!("<{XSD}integer>"),
        DataType::Float => format!("<{XSD}double>"),
        DataType::String => format!("<{XSD}string>"),
        DataType::Date => format!("<{DATE_DATATYPE}>"),
    }
}

fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Literal in SPARQL query syntax.
pub fn literal_term(v: &AttributeValue) -> String {
    match v {
        AttributeValue::Integer(_) | AttributeValue::Float(_) => v.lexical(),
        AttributeValue::String(s) => escape_string(s),
        AttributeValue::Date(s) => format!("{}^^{}", escape_string(s), datatype_iri(DataType::Date)),
    }
}

/// Literal in N-Triples syntax (always explicitly typed).
pub fn literal_ntriples(v: &AttributeValue) -> String {
    format!("{}^^{}", escape_string(&v.lexical()), datatype_iri(v.datatype()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Entities,
    Literals,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparqlQuery {
    pub text: String,
    /// Projected variable name without `?`.
    pub answer_variable: String,
    pub kind: AnswerKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("cannot compile unresolved {0}")]
    Unresolved(String),
    #[error("unsupported expression: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Type(#[from] TypeError),
}

struct Compiler<'a> {
    kg: &'a KnowledgeGraph,
    next: usize,
    lines: Vec<String>,
    indent: usize,
}

impl Compiler<'_> {
    fn fresh(&mut self) -> String {
        let v = format!("?v{}", self.next);
        self.next += 1;
        v
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.lines.push(format!("{}{}", "  ".repeat(self.indent), s.as_ref()));
    }

    fn open(&mut self, s: &str) {
        self.line(s);
        self.indent += 1;
    }

    fn close(&mut self) {
        self.indent -= 1;
        self.line("}");
    }

    fn relation(&self, r: &RelationRef) -> Result<(RelationId, Range, ClassId), CompileError> {
        let id = r
            .resolved()
            .ok_or_else(|| CompileError::Unresolved(format!("relation '{}'", r.name())))?;
        let st = self.kg.schema_of(id).ok_or_else(|| TypeError::UnknownRelation(id.to_string()))?;
        Ok((id.clone(), st.range.clone(), st.domain.clone()))
    }

    /// Emits a group binding `v` to the answers of `e`.
    fn node(&mut self, e: &Expr, v: &str) -> Result<(), CompileError> {
        match e {
            Expr::Start(Leaf::Mention(m)) => return Err(CompileError::Unresolved(format!("mention '{m}'"))),
            Expr::Start(Leaf::Entity(id)) => self.line(format!("VALUES {v} {{ {} }}", entity_iri(id))),
            Expr::Start(Leaf::Literal(lit)) => self.line(format!("VALUES {v} {{ {} }}", literal_term(lit))),
            Expr::Join {
                relation,
                inner,
                reversed,
                negated,
            } => {
                let (r, range, domain) = self.relation(relation)?;
                let r = relation_iri(&r);
                let t = self.fresh();
                let edge = if *reversed {
                    format!("{t} {r} {v} .")
                } else {
                    format!("{v} {r} {t} .")
                };
                self.open("{");
                if *negated {
                    match (*reversed, &range) {
                        (false, _) => self.line(format!("{v} a {} .", class_iri(&domain))),
                        (true, Range::Class(c)) => self.line(format!("{v} a {} .", class_iri(c))),
                        (true, Range::Datatype(d)) => {
                            let (s, p) = (self.fresh(), self.fresh());
                            self.line(format!("{s} {p} {v} ."));
                            self.line(format!("FILTER(isLiteral({v}) && DATATYPE({v}) = {})", datatype_iri(*d)));
                        }
                    }
                    self.open("FILTER NOT EXISTS {");
                    self.node(inner, &t)?;
                    self.line(edge);
                    self.close();
                } else {
                    self.node(inner, &t)?;
                    self.line(edge);
                }
                self.close();
            }
            Expr::And(a, b) => {
                self.open("{");
                self.node(a, v)?;
                self.node(b, v)?;
                self.close();
            }
            Expr::Cmp { op, relation, bound } => {
                let (r, ..) = self.relation(relation)?;
                let a = self.fresh();
                self.open("{");
                self.line(format!("{v} {} {a} .", relation_iri(&r)));
                let filter = match bound {
                    AttributeValue::Integer(_) | AttributeValue::Float(_) => format!("{a} {} {}", op.symbol(), literal_term(bound)),
                    AttributeValue::Date(s) | AttributeValue::String(s) => format!(
                        "DATATYPE({a}) = {} && STR({a}) {} {}",
                        datatype_iri(bound.datatype()),
                        op.symbol(),
                        escape_string(s)
                    ),
                };
                self.line(format!("FILTER({filter})"));
                self.close();
            }
            Expr::Arg { mode, inner, relation } => {
                let (r, ..) = self.relation(relation)?;
                let r = relation_iri(&r);
                let a = self.fresh();
                self.open("{");
                self.node(inner, v)?;
                self.line(format!("{v} {r} {a} ."));
                self.line(format!("FILTER(isLiteral({a}))"));
                self.open("FILTER NOT EXISTS {");
                let (v2, a2) = (self.fresh(), self.fresh());
                self.node(inner, &v2)?;
                self.line(format!("{v2} {r} {a2} ."));
                let op = match mode {
                    ArgMode::Max => CmpOp::Gt,
                    ArgMode::Min => CmpOp::Lt,
                };
                self.line(format!("FILTER({})", strictly_ordered(&a2, op, &a)));
                self.close();
                self.close();
            }
            Expr::Count(_) => return Err(CompileError::Unsupported("COUNT below the root".into())),
            Expr::Stop(_) => return Err(CompileError::Unsupported("nested STOP".into())),
        }
        Ok(())
    }
}

/// `lhs op rhs` restricted to pairs the executor considers comparable:
/// numeric with numeric, date with date, string with string.
fn strictly_ordered(lhs: &str, op: CmpOp, rhs: &str) -> String {
    let o = op.symbol();
    let date = datatype_iri(DataType::Date);
    let string = datatype_iri(DataType::String);
    format!(
        "(isNumeric({lhs}) && isNumeric({rhs}) && {lhs} {o} {rhs}) || \
         (DATATYPE({lhs}) = {date} && DATATYPE({rhs}) = {date} && STR({lhs}) {o} STR({rhs})) || \
         (DATATYPE({lhs}) = {string} && DATATYPE({rhs}) = {string} && STR({lhs}) {o} STR({rhs}))"
    )
}

/// Compiles a grounded expression rooted at `STOP` into one SELECT query.
/// Variables are numbered in pre-order; `AND` operands share their parent's
/// variable.
pub fn compile(expr: &Expr, kg: &KnowledgeGraph) -> Result<SparqlQuery, CompileError> {
    let Expr::Stop(body) = expr else {
        return Err(CompileError::Unsupported("expression must be rooted at STOP".into()));
    };
    if let Some((_, Expr::Start(Leaf::Mention(m)))) = expr
        .preorder()
        .into_iter()
        .find(|(_, n)| matches!(n, Expr::Start(Leaf::Mention(_))))
    {
        return Err(CompileError::Unresolved(format!("mention '{m}'")));
    }
    if let Some((_, n)) = expr.preorder().into_iter().find(|(_, n)| {
        matches!(n, Expr::Join { relation, .. } | Expr::Arg { relation, .. } | Expr::Cmp { relation, .. } if relation.resolved().is_none())
    }) {
        let name = match n {
            Expr::Join { relation, .. } | Expr::Arg { relation, .. } | Expr::Cmp { relation, .. } => relation.name(),
            _ => unreachable!(),
        };
        return Err(CompileError::Unresolved(format!("relation '{name}'")));
    }
    let kind = match infer_type(body, kg)? {
        OutputType::Entities(_) => AnswerKind::Entities,
        OutputType::Datatype(_) => AnswerKind::Literals,
        OutputType::Count => AnswerKind::Count,
    };
    let mut c = Compiler {
        kg,
        next: 0,
        lines: Vec::new(),
        indent: 0,
    };
    let v0 = c.fresh();
    let answer_variable = match &**body {
        Expr::Count(inner) => {
            let v = c.fresh();
            c.open(&format!("SELECT (COUNT(DISTINCT {v}) AS ?count) WHERE {{"));
            c.node(inner, &v)?;
            "count".to_string()
        }
        other => {
            c.open(&format!("SELECT DISTINCT {v0} WHERE {{"));
            c.node(other, &v0)?;
            v0[1..].to_string()
        }
    };
    c.close();
    let mut text = c.lines.join("\n");
    text.push('\n');
    Ok(SparqlQuery {
        text,
        answer_variable,
        kind,
    })
}
