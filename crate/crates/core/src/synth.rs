//! Random schema-consistent graphs and type-directed expressions for
//! property tests and benchmarks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::kg::{AttributeValue, ClassId, DataType, KnowledgeGraph, Node, Range, RelationId, SchemaTriple, Triple};
use crate::pylf::{ArgMode, CmpOp, Expr, Leaf, RelationRef};

const WORDS: &[&str] = &[
    "amber", "basalt", "cedar", "delta", "ember", "falcon", "garnet", "harbor", "iris", "juniper", "kestrel", "lumen", "meadow", "nimbus",
    "onyx", "pioneer", "quartz", "raven", "summit", "tundra", "umber", "vector", "willow", "xenon", "yarrow", "zephyr", "atlas", "boreal",
    "comet", "dune", "echo", "fjord",
];

const REL_WORDS: &[&str] = &[
    "manufacturer",
    "operator",
    "designer",
    "owner",
    "member",
    "location",
    "parent",
    "partner",
    "supplier",
    "founder",
    "successor",
    "sponsor",
];

const ATTR_WORDS: &[(&str, DataType)] = &[
    ("mass", DataType::Float),
    ("height", DataType::Float),
    ("rank", DataType::Integer),
    ("capacity", DataType::Integer),
    ("founded", DataType::Date),
    ("launched", DataType::Date),
    ("code", DataType::String),
];

#[derive(Debug, Clone)]
pub struct KgParams {
    pub entities: usize,
    pub classes: usize,
    pub entity_relations: usize,
    pub attribute_relations: usize,
    /// Probability of each schema-admissible entity edge.
    pub edge_prob: f64,
}

impl Default for KgParams {
    fn default() -> Self {
        KgParams {
            entities: 30,
            classes: 3,
            entity_relations: 4,
            attribute_relations: 3,
            edge_prob: 0.15,
        }
    }
}

fn random_value<R: Rng>(rng: &mut R, d: DataType) -> AttributeValue {
    match d {
        DataType::Integer => AttributeValue::Integer(rng.gen_range(0..12)),
        DataType::Float => AttributeValue::Float(rng.gen_range(1..16) as f64 * 250.0),
        DataType::Date => AttributeValue::Date(format!("20{:02}-{:02}-15", rng.gen_range(0..12), rng.gen_range(1..4))),
        DataType::String => AttributeValue::String(format!("s{}", rng.gen_range(0..5))),
    }
}

/// Builds a graph in which every triple agrees with its relation's schema.
pub fn random_kg<R: Rng>(rng: &mut R, p: &KgParams) -> KnowledgeGraph {
    let classes: Vec<ClassId> = (0..p.classes.max(1)).map(|i| ClassId::new(format!("c{i}"))).collect();
    let mut b = KnowledgeGraph::builder();
    for i in 0..p.entities {
        let mut cs = BTreeSet::from([classes[i % classes.len()].clone()]);
        if rng.gen_bool(0.2) {
            cs.insert(classes.choose(rng).unwrap().clone());
        }
        let name = format!("{} {}", WORDS.choose(rng).unwrap(), WORDS.choose(rng).unwrap());
        b.entity(format!("e{i}"), &name, cs.iter().map(|c| c.as_str())).unwrap();
    }
    let mut schema = Vec::new();
    for i in 0..p.entity_relations {
        let domain = classes.choose(rng).unwrap().clone();
        let range = classes.choose(rng).unwrap().clone();
        let rel = RelationId::new(format!("{domain}.{}", REL_WORDS[i % REL_WORDS.len()]));
        if schema.iter().any(|st: &SchemaTriple| st.relation == rel) {
            continue;
        }
        schema.push(SchemaTriple {
            domain,
            relation: rel,
            range: Range::Class(range),
        });
    }
    for i in 0..p.attribute_relations {
        let domain = classes.choose(rng).unwrap().clone();
        let (word, d) = ATTR_WORDS[i % ATTR_WORDS.len()];
        let rel = RelationId::new(format!("{domain}.{word}"));
        if schema.iter().any(|st: &SchemaTriple| st.relation == rel) {
            continue;
        }
        schema.push(SchemaTriple {
            domain,
            relation: rel,
            range: Range::Datatype(d),
        });
    }
    for st in &schema {
        b.schema(st.domain.clone(), st.relation.clone(), st.range.clone()).unwrap();
    }
    // Class membership is fixed before triples are drawn.
    let probe = b.clone().build().unwrap();
    for st in &schema {
        for h in probe.instances_of(&st.domain) {
            match &st.range {
                Range::Class(c) => {
                    for t in probe.instances_of(c) {
                        if rng.gen_bool(p.edge_prob) {
                            b.triple(Triple::new(h.clone(), st.relation.clone(), Node::Entity(t)));
                        }
                    }
                }
                Range::Datatype(d) => {
                    for _ in 0..rng.gen_range(0..3) {
                        b.triple(Triple::new(h.clone(), st.relation.clone(), Node::Literal(random_value(rng, *d))));
                    }
                }
            }
        }
    }
    b.build().unwrap()
}

struct Gen<'a, R> {
    rng: &'a mut R,
    kg: &'a KnowledgeGraph,
    schema: Vec<SchemaTriple>,
}

impl<R: Rng> Gen<'_, R> {
    fn literal(&mut self, d: DataType) -> AttributeValue {
        let seen: Vec<AttributeValue> = self.kg.literals_of(d).into_iter().collect();
        if !seen.is_empty() && self.rng.gen_bool(0.8) {
            seen.choose(self.rng).unwrap().clone()
        } else {
            random_value(self.rng, d)
        }
    }

    /// An expression whose answers are instances of `c`, of depth ≤ `depth`.
    fn entities(&mut self, c: &ClassId, depth: usize) -> Option<Expr> {
        let instances: Vec<_> = self.kg.instances_of(c).into_iter().collect();
        let mut options: Vec<u8> = Vec::new();
        if !instances.is_empty() {
            options.push(0);
        }
        if depth >= 2 {
            options.extend([1, 1, 2, 2, 3, 5]);
        }
        if depth >= 1 {
            options.push(4);
        }
        options.shuffle(self.rng);
        for opt in options {
            let out = match opt {
                0 => Some(Expr::Start(Leaf::Entity(instances.choose(self.rng).unwrap().clone()))),
                1 => self.forward_join(c, depth),
                2 => self.reverse_join(c, depth),
                3 => {
                    let a = self.entities(c, depth - 1);
                    let b = self.entities(c, depth - 1);
                    a.zip(b).map(|(a, b)| Expr::and(a, b))
                }
                4 => self.cmp(c),
                5 => self.arg(c, depth),
                _ => unreachable!(),
            };
            if out.is_some() {
                return out;
            }
        }
        None
    }

    fn pick(&mut self, f: impl Fn(&SchemaTriple) -> bool) -> Option<SchemaTriple> {
        let matching: Vec<&SchemaTriple> = self.schema.iter().filter(|st| f(st)).collect();
        matching.choose(self.rng).map(|st| (*st).clone())
    }

    fn forward_join(&mut self, c: &ClassId, depth: usize) -> Option<Expr> {
        let st = self.pick(|st| &st.domain == c)?;
        let inner = match &st.range {
            Range::Class(rc) => self.entities(rc, depth - 1)?,
            Range::Datatype(d) => Expr::literal(self.literal(*d)),
        };
        let neg = self.rng.gen_bool(0.4);
        Some(Expr::join(RelationRef::Resolved(st.relation), inner, false, neg))
    }

    fn reverse_join(&mut self, c: &ClassId, depth: usize) -> Option<Expr> {
        let st = self.pick(|st| st.range == Range::Class(c.clone()))?;
        let inner = self.entities(&st.domain, depth - 1)?;
        let neg = self.rng.gen_bool(0.4);
        Some(Expr::join(RelationRef::Resolved(st.relation), inner, true, neg))
    }

    fn ordered_attr(&mut self, c: &ClassId) -> Option<(SchemaTriple, DataType)> {
        let st = self.pick(|st| &st.domain == c && matches!(st.range, Range::Datatype(d) if d.is_ordered()))?;
        let Range::Datatype(d) = st.range else { unreachable!() };
        Some((st, d))
    }

    fn cmp(&mut self, c: &ClassId) -> Option<Expr> {
        let (st, d) = self.ordered_attr(c)?;
        let op = *CmpOp::ALL.choose(self.rng).unwrap();
        let bound = self.literal(d);
        Some(Expr::cmp(op, RelationRef::Resolved(st.relation), bound))
    }

    fn arg(&mut self, c: &ClassId, depth: usize) -> Option<Expr> {
        let (st, _) = self.ordered_attr(c)?;
        let inner = self.entities(c, depth - 1)?;
        let mode = if self.rng.gen_bool(0.5) { ArgMode::Max } else { ArgMode::Min };
        Some(Expr::arg(mode, inner, RelationRef::Resolved(st.relation)))
    }

    /// A literal-valued expression: a reversed join into an attribute.
    fn literals(&mut self, depth: usize) -> Option<Expr> {
        let st = self.pick(|st| matches!(st.range, Range::Datatype(_)))?;
        let inner = self.entities(&st.domain, depth - 1)?;
        let neg = self.rng.gen_bool(0.3);
        Some(Expr::join(RelationRef::Resolved(st.relation), inner, true, neg))
    }
}

/// A grounded, schema-valid expression rooted at `STOP` whose body has depth
/// at most `max_depth` (≥ 1).
pub fn random_expr<R: Rng>(rng: &mut R, kg: &KnowledgeGraph, max_depth: usize) -> Option<Expr> {
    let schema: Vec<SchemaTriple> = kg.schema_triples().cloned().collect();
    let classes: Vec<ClassId> = kg.classes().cloned().collect();
    let mut g = Gen { rng, kg, schema };
    for _ in 0..20 {
        let depth = g.rng.gen_range(1..=max_depth.max(1));
        let roll = g.rng.gen_range(0..10);
        let body = match roll {
            0 if depth >= 2 => g.literals(depth),
            1 if depth >= 2 => {
                let c = classes.choose(g.rng)?.clone();
                g.entities(&c, depth - 1).map(Expr::count)
            }
            _ => {
                let c = classes.choose(g.rng)?.clone();
                g.entities(&c, depth)
            }
        };
        if let Some(b) = body {
            return Some(Expr::stop(b));
        }
    }
    None
}

/// Replaces every resolved entity with its surface-name mention and every
/// relation with an unresolved reference to the same name.
pub fn to_draft(expr: &Expr, kg: &KnowledgeGraph) -> Expr {
    let mut out = expr.clone();
    for (path, _) in expr.preorder() {
        let node = out.at_path_mut(&path).unwrap();
        match node {
            Expr::Start(Leaf::Entity(id)) => {
                let name = kg.entity(id).map_or_else(|| id.to_string(), |i| i.name.clone());
                *node = Expr::mention(&name);
            }
            Expr::Join { relation, .. } | Expr::Arg { relation, .. } | Expr::Cmp { relation, .. } => {
                *relation = RelationRef::Unresolved(relation.name().to_string());
            }
            _ => {}
        }
    }
    out
}
