//! Scan-only evaluator. Every node re-reads the full triple and entity sets
//! and applies the quantified definitions literally.

use std::collections::BTreeSet;

use super::{arg_input, better, check_cap, count, intersect, schema, start, AnswerSet, ExecError, DEFAULT_SIZE_CAP};
use crate::kg::{EntityId, KnowledgeGraph, Node, Range};
use crate::pylf::Expr;

/// Oracle with the same contract as [`super::evaluate`].
pub fn brute_force_evaluate(expr: &Expr, kg: &KnowledgeGraph) -> Result<AnswerSet, ExecError> {
    brute_force_with_cap(expr, kg, DEFAULT_SIZE_CAP)
}

pub(crate) fn brute_force_with_cap(expr: &Expr, kg: &KnowledgeGraph, cap: usize) -> Result<AnswerSet, ExecError> {
    let eval = |e: &Expr| brute_force_with_cap(e, kg, cap);
    match expr {
        Expr::Start(leaf) => start(leaf),
        Expr::Join {
            relation,
            inner,
            reversed,
            negated,
        } => {
            let st = schema(kg, relation)?;
            let r = &st.relation;
            let inner = eval(inner)?;
            check_cap(inner.len(), cap)?;
            let targets = inner.nodes()?;
            let linked = |h: &EntityId, t: &Node| kg.triples().any(|tr| &tr.head == h && &tr.relation == r && &tr.tail == t);
            if !*reversed {
                let domain: Vec<&EntityId> = kg
                    .entities()
                    .filter(|(_, info)| !*negated || info.classes.contains(&st.domain))
                    .map(|(id, _)| id)
                    .collect();
                if *negated {
                    check_cap(domain.len(), cap)?;
                }
                let out = domain
                    .into_iter()
                    .filter(|h| {
                        let any = targets.iter().any(|t| linked(h, t));
                        if *negated {
                            !any
                        } else {
                            any
                        }
                    })
                    .cloned()
                    .collect();
                return Ok(AnswerSet::Entities(out));
            }
            let heads: Vec<EntityId> = targets
                .into_iter()
                .filter_map(|n| match n {
                    Node::Entity(e) => Some(e),
                    Node::Literal(_) => None,
                })
                .collect();
            let candidates: BTreeSet<Node> = if *negated {
                match &st.range {
                    Range::Class(c) => kg
                        .entities()
                        .filter(|(_, info)| info.classes.contains(c))
                        .map(|(id, _)| Node::Entity(id.clone()))
                        .collect(),
                    Range::Datatype(d) => kg
                        .triples()
                        .filter_map(|tr| match &tr.tail {
                            Node::Literal(v) if v.datatype() == *d => Some(tr.tail.clone()),
                            _ => None,
                        })
                        .collect(),
                }
            } else {
                kg.triples().map(|tr| tr.tail.clone()).collect()
            };
            if *negated {
                check_cap(candidates.len(), cap)?;
            }
            let out = candidates.into_iter().filter(|t| {
                let any = heads.iter().any(|h| linked(h, t));
                if *negated {
                    !any
                } else {
                    any
                }
            });
            Ok(AnswerSet::from_nodes(out, &st.range))
        }
        Expr::And(a, b) => intersect(eval(a)?, eval(b)?),
        Expr::Count(inner) => count(eval(inner)?),
        Expr::Arg { mode, inner, relation } => {
            let st = schema(kg, relation)?;
            let heads = arg_input(eval(inner)?)?;
            check_cap(heads.len(), cap)?;
            let values = |h: &EntityId| {
                kg.triples()
                    .filter(|tr| &tr.head == h && tr.relation == st.relation)
                    .filter_map(|tr| match &tr.tail {
                        Node::Literal(v) => Some(v.clone()),
                        Node::Entity(_) => None,
                    })
                    .collect::<Vec<_>>()
            };
            let out = heads
                .iter()
                .filter(|h| {
                    values(h)
                        .iter()
                        .any(|a| heads.iter().all(|h2| values(h2).iter().all(|a2| !better(*mode, a2, a))))
                })
                .cloned()
                .collect();
            Ok(AnswerSet::Entities(out))
        }
        Expr::Cmp { op, relation, bound } => {
            let st = schema(kg, relation)?;
            let out = kg
                .entities()
                .map(|(id, _)| id)
                .filter(|h| {
                    kg.triples().any(|tr| {
                        &tr.head == *h
                            && tr.relation == st.relation
                            && matches!(&tr.tail, Node::Literal(a) if a.compare(bound).is_some_and(|o| op.holds(o)))
                    })
                })
                .cloned()
                .collect();
            Ok(AnswerSet::Entities(out))
        }
        Expr::Stop(inner) => eval(inner),
    }
}
