use std::io::{self, Write};

use super::{class_iri, entity_iri, literal_ntriples, relation_iri, RDF_TYPE};
use crate::kg::{KnowledgeGraph, Node};

/// Writes class memberships and instance triples as N-Triples, sorted.
/// Surface names are not exported so that the only literals in the store
/// are attribute values.
pub fn write_ntriples<W: Write>(kg: &KnowledgeGraph, mut out: W) -> io::Result<()> {
    for (id, info) in kg.entities() {
        for c in &info.classes {
            writeln!(out, "{} <{RDF_TYPE}> {} .", entity_iri(id), class_iri(c))?;
        }
    }
    for t in kg.triples() {
        let tail = match &t.tail {
            Node::Entity(e) => entity_iri(e),
            Node::Literal(v) => literal_ntriples(v),
        };
        writeln!(out, "{} {} {tail} .", entity_iri(&t.head), relation_iri(&t.relation))?;
    }
    Ok(())
}

pub fn export_ntriples(kg: &KnowledgeGraph) -> String {
    let mut buf = Vec::new();
    write_ntriples(kg, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("N-Triples output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{AttributeValue, DataType, Range, Triple};

    #[test]
    fn exports_types_and_literals() {
        let mut b = KnowledgeGraph::builder();
        b.entity("Saturn", "Saturn", ["rocket"]).unwrap();
        b.schema("rocket", "mass", Range::Datatype(DataType::Float)).unwrap();
        b.triple(Triple::new("Saturn", "mass", Node::Literal(AttributeValue::Float(3.03e6))));
        let text = export_ntriples(&b.build().unwrap());
        assert_eq!(
            text,
            "<kg:entity/Saturn> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <kg:class/rocket> .\n\
             <kg:entity/Saturn> <kg:rel/mass> \"3.03e6\"^^<http://www.w3.org/2001/XMLSchema#double> .\n"
        );
    }
}
