use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::embed::EmbedError;
use super::index::SimilarityIndex;
use crate::kg::{AttributeValue, ClassId, DataType, KnowledgeGraph, Range, RelationId, SchemaTriple, Side};
use crate::pylf::{print_pylf, validate, Expr, Leaf, OutputType, RelationRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    /// Entity candidates retrieved per mention.
    pub j: usize,
    /// Relations must score strictly above this to be kept.
    pub theta: f64,
    /// Cap on candidates kept at each node and in the final list.
    pub max_candidates: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            j: 10,
            theta: 0.7,
            max_candidates: 100,
        }
    }
}

impl MatcherConfig {
    pub fn check(&self) -> Result<(), MatchError> {
        if self.j == 0 {
            return Err(MatchError::Config("j must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(MatchError::Config(format!("theta {} is outside [0, 1]", self.theta)));
        }
        if self.max_candidates == 0 {
            return Err(MatchError::Config("max_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedLogicalForm {
    pub expr: Expr,
    /// Product of the similarities of every resolved mention and relation.
    pub score: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum MatchError {
    #[error("no entity candidate for mention '{0}'")]
    NoEntityCandidate(String),
    #[error("no relation above theta {theta} for '{mention}'")]
    NoRelationAboveThreshold { mention: String, theta: f64 },
    #[error("no schema-compatible grounding for '{0}'")]
    NoCompatibleCandidate(String),
    #[error("enumeration would produce {count} candidates, cap is {cap}")]
    EnumerationCap { count: u128, cap: usize },
    #[error("invalid matcher configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// A grounded subtree with its score and output type.
#[derive(Debug, Clone)]
struct Partial {
    expr: Expr,
    score: f64,
    ty: OutputType,
}

/// A literal named by a mention: integers, floats and ISO dates.
fn mention_literal(text: &str) -> Option<AttributeValue> {
    AttributeValue::parse_bare(text).filter(|v| v.datatype() != DataType::String)
}

/// Converts a literal to `target` when no precision is lost.
fn coerce(v: &AttributeValue, target: DataType) -> Option<AttributeValue> {
    match (v, target) {
        _ if v.datatype() == target => Some(v.clone()),
        (AttributeValue::Integer(i), DataType::Float) => Some(AttributeValue::Float(*i as f64)),
        (AttributeValue::Float(x), DataType::Integer) if x.fract() == 0.0 && x.abs() < 9.0e15 => Some(AttributeValue::Integer(*x as i64)),
        _ => None,
    }
}

fn bound_fits(bound: &AttributeValue, d: DataType) -> bool {
    d.is_ordered()
        && if d.is_numeric() {
            bound.datatype().is_numeric()
        } else {
            bound.datatype() == d
        }
}

fn range_type(r: &Range) -> OutputType {
    match r {
        Range::Class(c) => OutputType::class(c.clone()),
        Range::Datatype(d) => OutputType::Datatype(*d),
    }
}

fn and_type(a: &OutputType, b: &OutputType) -> Option<OutputType> {
    match (a, b) {
        (OutputType::Entities(x), OutputType::Entities(y)) => {
            let common: BTreeSet<ClassId> = x.intersection(y).cloned().collect();
            (!common.is_empty()).then_some(OutputType::Entities(common))
        }
        (OutputType::Datatype(x), OutputType::Datatype(y)) if x == y => Some(a.clone()),
        _ => None,
    }
}

/// Sorts by score descending, then printed form, and truncates.
fn rank_and_cap(parts: Vec<Partial>, cap: usize) -> Vec<Partial> {
    let mut keyed: Vec<(String, Partial)> = parts.into_iter().map(|p| (print_pylf(&p.expr), p)).collect();
    keyed.sort_by(|(ka, a), (kb, b)| b.score.total_cmp(&a.score).then_with(|| ka.cmp(kb)));
    keyed.dedup_by(|(ka, _), (kb, _)| ka == kb);
    keyed.truncate(cap);
    keyed.into_iter().map(|(_, p)| p).collect()
}

struct Grounder<'a> {
    kg: &'a KnowledgeGraph,
    index: &'a SimilarityIndex,
    cfg: &'a MatcherConfig,
    relation_cache: HashMap<String, HashMap<RelationId, f64>>,
}

impl Grounder<'_> {
    /// Similarity of every indexed relation to `mention`.
    fn relation_similarity(&mut self, mention: &str) -> Result<&HashMap<RelationId, f64>, EmbedError> {
        if !self.relation_cache.contains_key(mention) {
            let scores = self
                .index
                .relation_scores(mention)?
                .into_iter()
                .map(|(r, s)| (r, f64::from(s)))
                .collect();
            self.relation_cache.insert(mention.to_string(), scores);
        }
        Ok(&self.relation_cache[mention])
    }

    /// Relation choices for a slot: resolved references pass through with
    /// score 1, mentions keep every candidate scoring above theta.
    fn relation_choices(
        &mut self,
        r: &RelationRef,
        candidates: impl Iterator<Item = SchemaTriple>,
    ) -> Result<Vec<(SchemaTriple, f64)>, MatchError> {
        let candidates: Vec<SchemaTriple> = candidates.collect();
        match r {
            RelationRef::Resolved(id) => Ok(candidates.into_iter().filter(|st| &st.relation == id).map(|st| (st, 1.0)).collect()),
            RelationRef::Unresolved(mention) => {
                let theta = self.cfg.theta;
                let sims = self.relation_similarity(mention)?;
                Ok(candidates
                    .into_iter()
                    .filter_map(|st| sims.get(&st.relation).copied().filter(|&s| s > theta).map(|s| (st, s)))
                    .collect())
            }
        }
    }

    /// Errors when a relation mention has nothing above theta anywhere in
    /// the schema, which is reported separately from type mismatches.
    fn check_threshold(&mut self, r: &RelationRef) -> Result<(), MatchError> {
        if let RelationRef::Unresolved(mention) = r {
            let theta = self.cfg.theta;
            if !self.relation_similarity(mention)?.values().any(|&s| s > theta) {
                return Err(MatchError::NoRelationAboveThreshold {
                    mention: mention.clone(),
                    theta,
                });
            }
        }
        Ok(())
    }

    fn nonempty(&self, parts: Vec<Partial>, node: &Expr) -> Result<Vec<Partial>, MatchError> {
        if parts.is_empty() {
            Err(MatchError::NoCompatibleCandidate(print_pylf(node)))
        } else {
            Ok(rank_and_cap(parts, self.cfg.max_candidates))
        }
    }

    fn leaf(&self, leaf: &Leaf) -> Result<Vec<Partial>, MatchError> {
        match leaf {
            Leaf::Literal(v) => Ok(vec![Partial {
                expr: Expr::literal(v.clone()),
                score: 1.0,
                ty: OutputType::Datatype(v.datatype()),
            }]),
            Leaf::Entity(id) => {
                let info = self.kg.entity(id).ok_or_else(|| MatchError::NoEntityCandidate(id.to_string()))?;
                Ok(vec![Partial {
                    expr: Expr::entity(id.clone()),
                    score: 1.0,
                    ty: OutputType::Entities(info.classes.clone()),
                }])
            }
            Leaf::Mention(m) => {
                if let Some(v) = mention_literal(m.as_str()) {
                    return self.leaf(&Leaf::Literal(v));
                }
                let parts: Vec<Partial> = self
                    .index
                    .candidate_entities(m.as_str(), self.cfg.j)?
                    .into_iter()
                    .filter(|c| c.similarity > 0.0)
                    .map(|c| Partial {
                        expr: Expr::entity(c.id),
                        score: f64::from(c.similarity),
                        ty: OutputType::Entities(c.classes),
                    })
                    .collect();
                if parts.is_empty() {
                    return Err(MatchError::NoEntityCandidate(m.to_string()));
                }
                Ok(parts)
            }
        }
    }

    fn join(
        &mut self,
        node: &Expr,
        relation: &RelationRef,
        inner: &Expr,
        reversed: bool,
        negated: bool,
    ) -> Result<Vec<Partial>, MatchError> {
        let children = self.ground(inner)?;
        self.check_threshold(relation)?;
        let mut out = Vec::new();
        for child in children {
            let schema: Vec<SchemaTriple> = match (&child.ty, reversed) {
                (OutputType::Entities(cs), true) => self.kg.schema_lookup(cs, Side::Domain).into_iter().collect(),
                (OutputType::Entities(cs), false) => self.kg.schema_lookup(cs, Side::Range).into_iter().collect(),
                (OutputType::Datatype(d), false) => self
                    .kg
                    .schema_triples()
                    .filter(|st| matches!(st.range, Range::Datatype(r) if r == *d || (r.is_numeric() && d.is_numeric())))
                    .cloned()
                    .collect(),
                _ => continue,
            };
            for (st, s) in self.relation_choices(relation, schema.into_iter())? {
                let inner_expr = match (&child.expr, &st.range) {
                    (Expr::Start(Leaf::Literal(v)), Range::Datatype(d)) if !reversed => match coerce(v, *d) {
                        Some(v) => Expr::literal(v),
                        None => continue,
                    },
                    _ => child.expr.clone(),
                };
                let ty = if reversed {
                    range_type(&st.range)
                } else {
                    OutputType::class(st.domain.clone())
                };
                out.push(Partial {
                    expr: Expr::join(RelationRef::Resolved(st.relation), inner_expr, reversed, negated),
                    score: child.score * s,
                    ty,
                });
            }
        }
        self.nonempty(out, node)
    }

    fn ground(&mut self, e: &Expr) -> Result<Vec<Partial>, MatchError> {
        match e {
            Expr::Start(leaf) => self.leaf(leaf),
            Expr::Join {
                relation,
                inner,
                reversed,
                negated,
            } => self.join(e, relation, inner, *reversed, *negated),
            Expr::And(a, b) => {
                let left = self.ground(a)?;
                let right = self.ground(b)?;
                let mut out = Vec::new();
                for l in &left {
                    for r in &right {
                        if let Some(ty) = and_type(&l.ty, &r.ty) {
                            out.push(Partial {
                                expr: Expr::and(l.expr.clone(), r.expr.clone()),
                                score: l.score * r.score,
                                ty,
                            });
                        }
                    }
                }
                self.nonempty(out, e)
            }
            Expr::Count(inner) => Ok(self
                .ground(inner)?
                .into_iter()
                .filter(|p| p.ty != OutputType::Count)
                .map(|p| Partial {
                    expr: Expr::count(p.expr),
                    score: p.score,
                    ty: OutputType::Count,
                })
                .collect()),
            Expr::Arg { mode, inner, relation } => {
                let children = self.ground(inner)?;
                self.check_threshold(relation)?;
                let mut out = Vec::new();
                for child in children {
                    let OutputType::Entities(cs) = &child.ty else { continue };
                    let schema = self
                        .kg
                        .schema_lookup(cs, Side::Domain)
                        .into_iter()
                        .filter(|st| matches!(st.range, Range::Datatype(d) if d.is_ordered()));
                    for (st, s) in self.relation_choices(relation, schema)? {
                        out.push(Partial {
                            expr: Expr::arg(*mode, child.expr.clone(), RelationRef::Resolved(st.relation)),
                            score: child.score * s,
                            ty: OutputType::class(st.domain),
                        });
                    }
                }
                self.nonempty(out, e)
            }
            Expr::Cmp { op, relation, bound } => {
                self.check_threshold(relation)?;
                let schema: Vec<SchemaTriple> = self
                    .kg
                    .schema_triples()
                    .filter(|st| matches!(st.range, Range::Datatype(d) if bound_fits(bound, d)))
                    .cloned()
                    .collect();
                let out = self
                    .relation_choices(relation, schema.into_iter())?
                    .into_iter()
                    .map(|(st, s)| Partial {
                        expr: Expr::cmp(*op, RelationRef::Resolved(st.relation), bound.clone()),
                        score: s,
                        ty: OutputType::class(st.domain),
                    })
                    .collect();
                self.nonempty(out, e)
            }
            Expr::Stop(inner) => Ok(self
                .ground(inner)?
                .into_iter()
                .map(|p| Partial {
                    expr: Expr::stop(p.expr),
                    ..p
                })
                .collect()),
        }
    }
}

/// Resolves every mention and relation of `draft` against `kg`, keeping only
/// groundings the schema admits. Candidates are ranked by score, ties by
/// printed form.
///
/// The configuration is used as given; [`MatcherConfig::check`] is for
/// callers loading it from user input.
pub fn ground(
    draft: &Expr,
    kg: &KnowledgeGraph,
    index: &SimilarityIndex,
    cfg: &MatcherConfig,
) -> Result<Vec<GroundedLogicalForm>, MatchError> {
    let mut g = Grounder {
        kg,
        index,
        cfg,
        relation_cache: HashMap::new(),
    };
    let parts = g.ground(draft)?;
    let out: Vec<GroundedLogicalForm> = rank_and_cap(parts, cfg.max_candidates)
        .into_iter()
        .filter(|p| validate(&p.expr, kg).is_empty())
        .map(|p| GroundedLogicalForm {
            expr: p.expr,
            score: p.score,
        })
        .collect();
    if out.is_empty() {
        return Err(MatchError::NoCompatibleCandidate(print_pylf(draft)));
    }
    Ok(out)
}

/// Number of candidates [`brute_force_ground`] would enumerate.
pub fn brute_force_count(draft: &Expr, ke: usize, kr: usize) -> u128 {
    draft
        .preorder()
        .iter()
        .map(|(_, e)| match e {
            Expr::Start(Leaf::Mention(m)) if mention_literal(m.as_str()).is_none() => ke as u128,
            Expr::Join {
                relation: RelationRef::Unresolved(_),
                ..
            }
            | Expr::Arg {
                relation: RelationRef::Unresolved(_),
                ..
            }
            | Expr::Cmp {
                relation: RelationRef::Unresolved(_),
                ..
            } => kr as u128,
            _ => 1,
        })
        .product()
}

/// Similarity-only grounding: the cartesian product of the top `ke`
/// entities per mention and the top `kr` relations per relation slot, with
/// no schema pruning. Results are not guaranteed to type-check.
pub fn brute_force_ground(
    draft: &Expr,
    index: &SimilarityIndex,
    ke: usize,
    kr: usize,
    cap: usize,
) -> Result<Vec<GroundedLogicalForm>, MatchError> {
    let count = brute_force_count(draft, ke, kr);
    if count > cap as u128 {
        return Err(MatchError::EnumerationCap { count, cap });
    }
    fn relations(index: &SimilarityIndex, r: &RelationRef, kr: usize) -> Result<Vec<(RelationRef, f64)>, MatchError> {
        Ok(match r {
            RelationRef::Resolved(_) => vec![(r.clone(), 1.0)],
            RelationRef::Unresolved(m) => index
                .candidate_relations(m, kr)?
                .into_iter()
                .map(|(id, s)| (RelationRef::Resolved(id), f64::from(s)))
                .collect(),
        })
    }
    fn go(e: &Expr, index: &SimilarityIndex, ke: usize, kr: usize) -> Result<Vec<(Expr, f64)>, MatchError> {
        Ok(match e {
            Expr::Start(Leaf::Mention(m)) => match mention_literal(m.as_str()) {
                Some(v) => vec![(Expr::literal(v), 1.0)],
                None => index
                    .candidate_entities(m.as_str(), ke)?
                    .into_iter()
                    .map(|c| (Expr::entity(c.id), f64::from(c.similarity)))
                    .collect(),
            },
            Expr::Start(_) => vec![(e.clone(), 1.0)],
            Expr::Join {
                relation,
                inner,
                reversed,
                negated,
            } => {
                let children = go(inner, index, ke, kr)?;
                let mut out = Vec::new();
                for (r, s) in relations(index, relation, kr)? {
                    for (c, cs) in &children {
                        out.push((Expr::join(r.clone(), c.clone(), *reversed, *negated), s * cs));
                    }
                }
                out
            }
            Expr::And(a, b) => {
                let (left, right) = (go(a, index, ke, kr)?, go(b, index, ke, kr)?);
                let mut out = Vec::with_capacity(left.len() * right.len());
                for (l, ls) in &left {
                    for (r, rs) in &right {
                        out.push((Expr::and(l.clone(), r.clone()), ls * rs));
                    }
                }
                out
            }
            Expr::Count(inner) => go(inner, index, ke, kr)?.into_iter().map(|(c, s)| (Expr::count(c), s)).collect(),
            Expr::Stop(inner) => go(inner, index, ke, kr)?.into_iter().map(|(c, s)| (Expr::stop(c), s)).collect(),
            Expr::Arg { mode, inner, relation } => {
                let children = go(inner, index, ke, kr)?;
                let mut out = Vec::new();
                for (r, s) in relations(index, relation, kr)? {
                    for (c, cs) in &children {
                        out.push((Expr::arg(*mode, c.clone(), r.clone()), s * cs));
                    }
                }
                out
            }
            Expr::Cmp { op, relation, bound } => relations(index, relation, kr)?
                .into_iter()
                .map(|(r, s)| (Expr::cmp(*op, r, bound.clone()), s))
                .collect(),
        })
    }
    let mut keyed: Vec<(String, GroundedLogicalForm)> = go(draft, index, ke, kr)?
        .into_iter()
        .map(|(expr, score)| (print_pylf(&expr), GroundedLogicalForm { expr, score }))
        .collect();
    keyed.sort_by(|(ka, a), (kb, b)| b.score.total_cmp(&a.score).then_with(|| ka.cmp(kb)));
    Ok(keyed.into_iter().map(|(_, g)| g).collect())
}
