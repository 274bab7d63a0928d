use super::{Expr, Leaf, RelationRef};
use crate::kg::AttributeValue;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\'' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn relation(r: &RelationRef, reversed: bool) -> String {
    let prefix = if reversed { "R_" } else { "" };
    match r {
        RelationRef::Unresolved(s) => quote(&format!("{prefix}{s}")),
        RelationRef::Resolved(id) => format!("{prefix}{id}"),
    }
}

/// String literals have no bare syntax and print quoted, which reads back as
/// a mention.
fn literal(v: &AttributeValue) -> String {
    match v {
        AttributeValue::String(s) => quote(s),
        other => other.lexical(),
    }
}

fn write(e: &Expr, out: &mut String) {
    match e {
        Expr::Start(leaf) => {
            out.push_str("START(");
            match leaf {
                Leaf::Mention(m) => out.push_str(&quote(m.as_str())),
                Leaf::Entity(id) => out.push_str(id.as_str()),
                Leaf::Literal(v) => out.push_str(&literal(v)),
            }
            out.push(')');
        }
        Expr::Join {
            relation: r,
            inner,
            reversed,
            negated,
        } => {
            out.push_str("JOIN(");
            out.push_str(&relation(r, *reversed));
            out.push_str(", ");
            write(inner, out);
            out.push_str(if *negated { ", neg=True)" } else { ", neg=False)" });
        }
        Expr::And(a, b) => {
            out.push_str("AND(");
            write(a, out);
            out.push_str(", ");
            write(b, out);
            out.push(')');
        }
        Expr::Count(inner) => {
            out.push_str("COUNT(");
            write(inner, out);
            out.push(')');
        }
        Expr::Arg { mode, inner, relation: r } => {
            out.push_str("ARG(");
            out.push_str(&quote(mode.keyword()));
            out.push_str(", ");
            write(inner, out);
            out.push_str(", ");
            out.push_str(&relation(r, false));
            out.push(')');
        }
        Expr::Cmp { op, relation: r, bound } => {
            out.push_str(&format!("CMP({}, {}, {})", quote(op.symbol()), relation(r, false), literal(bound)));
        }
        Expr::Stop(inner) => {
            out.push_str("STOP(");
            write(inner, out);
            out.push(')');
        }
    }
}

/// Canonical single-line form accepted by [`super::parse_pylf`].
pub fn print_pylf(e: &Expr) -> String {
    let mut out = String::new();
    write(e, &mut out);
    out
}
