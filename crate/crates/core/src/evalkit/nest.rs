use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetError, Example};
use crate::exec::{evaluate, AnswerSet, ExecError};
use crate::kg::KnowledgeGraph;
use crate::pylf::{path_string, print_pylf, profile_constraints, Expr, Leaf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestExample {
    pub source_qid: String,
    pub qid: String,
    /// Placeholder text naming the negated constraint; see `rewording_prompt`.
    pub question: String,
    #[serde(with = "printed")]
    pub pylf: Expr,
    pub answers: AnswerSet,
    /// Child-index path of the flipped JOIN.
    pub flipped_path: String,
    pub rewording_prompt: String,
}

mod printed {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::pylf::{parse_pylf, print_pylf, Expr};

    pub fn serialize<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&print_pylf(e))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        parse_pylf(&String::deserialize(d)?).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NestSkip {
    /// Fewer than two constraints.
    TooFewConstraints,
    /// Every JOIN is already negative.
    NoFlippableJoin,
}

#[derive(Debug, thiserror::Error)]
pub enum NestError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("example {qid}: {source}")]
    Exec { qid: String, source: ExecError },
}

/// Toggles the `neg` flag of the JOIN at `path`. Applying it twice restores
/// the input.
pub fn flip_join(expr: &Expr, path: &[usize]) -> Option<Expr> {
    let mut out = expr.clone();
    match out.at_path_mut(path)? {
        Expr::Join { negated, .. } => {
            *negated = !*negated;
            Some(out)
        }
        _ => None,
    }
}

/// Paths of the positive JOINs of `expr`, in pre-order.
pub fn flippable_joins(expr: &Expr) -> Vec<Vec<usize>> {
    expr.preorder()
        .into_iter()
        .filter(|(_, e)| matches!(e, Expr::Join { negated: false, .. }))
        .map(|(p, _)| p)
        .collect()
}

/// Why an expression cannot produce negated variants, if it cannot.
pub fn nest_eligibility(expr: &Expr) -> Result<(), NestSkip> {
    if profile_constraints(expr).total < 2 {
        return Err(NestSkip::TooFewConstraints);
    }
    if flippable_joins(expr).is_empty() {
        return Err(NestSkip::NoFlippableJoin);
    }
    Ok(())
}

fn describe_join(join: &Expr, kg: &KnowledgeGraph) -> String {
    let Expr::Join { relation, inner, .. } = join else {
        return String::new();
    };
    match &**inner {
        Expr::Start(Leaf::Entity(id)) => {
            let name = kg.entity(id).map_or(id.as_str(), |i| i.name.as_str());
            format!("{} {name}", relation.name())
        }
        Expr::Start(Leaf::Literal(v)) => format!("{} {}", relation.name(), v.lexical()),
        _ => relation.name().to_string(),
    }
}

fn rewording_prompt(source: &str, constraint: &str, variant: &Expr) -> String {
    format!(
        "Rewrite the question so that it asks for answers that do NOT satisfy the constraint `{constraint}`, \
keeping every other constraint unchanged. Reply with the rewritten question only.\n\
Question: {source}\nLogical form of the rewritten question: {}\n",
        print_pylf(variant)
    )
}

/// Every single-flip negative variant of `example` whose answer set is
/// non-empty. Ineligible sources yield no variants.
pub fn nest_transform(example: &Example, kg: &KnowledgeGraph) -> Result<Vec<NestExample>, NestError> {
    let expr = example.gold_expr()?;
    if let Err(reason) = nest_eligibility(&expr) {
        log::debug!("{}: skipped ({reason:?})", example.qid);
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for path in flippable_joins(&expr) {
        let variant = flip_join(&expr, &path).expect("path points at a JOIN");
        let answers = evaluate(&variant, kg).map_err(|source| NestError::Exec {
            qid: example.qid.clone(),
            source,
        })?;
        if answers.is_empty() {
            continue;
        }
        let constraint = describe_join(expr.at_path(&path).expect("path exists"), kg);
        let flipped_path = path_string(&path);
        out.push(NestExample {
            source_qid: example.qid.clone(),
            qid: format!("{}-neg-{flipped_path}", example.qid),
            question: format!("{} [negated: {constraint}]", example.question),
            rewording_prompt: rewording_prompt(&example.question, &constraint, &variant),
            pylf: variant,
            answers,
            flipped_path,
        });
    }
    Ok(out)
}

impl NestExample {
    /// Dataset record for the variant.
    pub fn to_example(&self) -> Example {
        let profile = profile_constraints(&self.pylf);
        Example {
            qid: self.qid.clone(),
            question: self.question.clone(),
            pylf: print_pylf(&self.pylf),
            answers: self.answers.to_strings(),
            function_type: Some(profile.function_type),
            num_constraints: Some(profile.total),
            split: Some("nest".into()),
        }
    }
}
