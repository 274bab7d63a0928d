use std::sync::OnceLock;

use serde::Deserialize;

use super::draft::{CritiqueCategory, QuestionInfo};
use crate::dataset::Example;
use crate::kg::KnowledgeGraph;
use crate::pipeline::draft::{derive_question_info, render_draft};
use crate::pylf::{print_pylf, Expr};
use crate::synth::to_draft;

const DRAFT_INSTRUCTION: &str = "\
Translate the question into a PyLF logical form over a knowledge graph.
First list every topic entity and literal of the question under `# question_info`, one per line, as
`- mention | entity or literal | positive, negative or calculation | short note`.
A constraint is negative when the question excludes what the mention is linked to.
Then write the logical form under `# expression` using only the functions below.
Refer to entities by their surface text and to relations by their likely names.";

const REFINE_INSTRUCTION: &str = "\
The draft below did not produce an answer. Decide which critique applies to it:
no question_info (the constraint list is missing), wrong question_info (the constraint list is malformed),
wrong expression (the logical form misuses a function), or wrong format (the blocks cannot be located).
Write the critique under `# critique`, then a complete corrected draft with `# question_info` and
`# expression` blocks.";

/// PyLF function signatures shown to the model.
pub fn pylf_signatures() -> &'static str {
    "\
START(i): begin a logical form at entity or literal i; output has the type of i
JOIN(r, t, neg=False): entities linked to t by r; output class is the domain of r
JOIN('R_' + r, h, neg=False): values h links to by r; output class is the range of r
  neg=True keeps the members of the output class that are not linked that way
AND(e1, e2): intersection of e1 and e2, which share a class
COUNT(e): number of elements of e
ARG('ARGMAX' or 'ARGMIN', h, r): members of h with the largest or smallest value of r
CMP('<', '<=', '>' or '>=', r, n): entities whose value of r compares with n as stated
STOP(e): end the logical form with result e"
}

/// A drafting demonstration: question, constraint list and expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Demo {
    pub id: String,
    pub question: String,
    pub question_info: Vec<QuestionInfo>,
    /// Draft-style expression: surface names and relation mentions.
    pub expr: Expr,
}

impl Demo {
    /// Builds a demonstration from a training example's gold form.
    pub fn from_example(ex: &Example, kg: &KnowledgeGraph) -> Result<Demo, crate::dataset::DatasetError> {
        let gold = ex.gold_expr()?;
        Ok(Demo {
            id: ex.qid.clone(),
            question: ex.question.clone(),
            question_info: derive_question_info(&gold, kg),
            expr: to_draft(&gold, kg),
        })
    }
}

/// Drafting prompt: instruction, signatures, demonstrations, then the
/// target question. With `constraint_elements` off, demonstrations omit
/// their question_info block.
pub fn build_draft_prompt(question: &str, demos: &[Demo], signatures: &str, constraint_elements: bool) -> String {
    let mut p = format!("{DRAFT_INSTRUCTION}\n\n## Functions\n{signatures}\n\n");
    if !demos.is_empty() {
        p.push_str("## Examples\n");
        for d in demos {
            p.push_str(&format!("Question: {}\n", d.question));
            if constraint_elements {
                p.push_str(&render_draft(&d.question_info, &d.expr));
            } else {
                p.push_str(&format!("# expression\n{}\n", print_pylf(&d.expr)));
            }
            p.push('\n');
        }
    }
    p.push_str(&format!("## Task\nQuestion: {question}\n"));
    p
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RefineDemo {
    pub category: CritiqueCategory,
    pub question: String,
    pub draft: String,
    pub revised: String,
}

/// The fixed refinement demonstrations: one, two, three and four for the
/// four critique categories in order.
pub fn refine_demos() -> &'static [RefineDemo] {
    static DEMOS: OnceLock<Vec<RefineDemo>> = OnceLock::new();
    DEMOS.get_or_init(|| serde_json::from_str(include_str!("../../data/refine_demos.json")).expect("bundled refinement demos are valid"))
}

/// Refinement prompt for a failed draft. A known `category` is stated and
/// only its demonstrations are shown; otherwise every demonstration is
/// shown and the model names the critique.
pub fn build_refine_prompt(
    question: &str,
    original: &str,
    category: Option<CritiqueCategory>,
    demos: &[RefineDemo],
    signatures: &str,
) -> String {
    let mut p = format!("{REFINE_INSTRUCTION}\n\n## Functions\n{signatures}\n\n## Examples\n");
    for d in demos.iter().filter(|d| category.is_none_or(|c| c == d.category)) {
        p.push_str(&format!(
            "Question: {}\n## Draft\n{}\n## Revision\n# critique\n{}\n{}\n\n",
            d.question,
            d.draft.trim_end(),
            d.category.label(),
            d.revised.trim_end()
        ));
    }
    p.push_str(&format!(
        "## Task\nQuestion: {question}\n## Draft\n{}\n## Revision\n",
        original.trim_end()
    ));
    if let Some(c) = category {
        p.push_str(&format!("# critique\n{}\n", c.label()));
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::draft::parse_draft;

    #[test]
    fn refine_demo_counts_and_labels() {
        let demos = refine_demos();
        assert_eq!(demos.len(), 10);
        for (c, n) in CritiqueCategory::ALL.into_iter().zip([1, 2, 3, 4]) {
            assert_eq!(demos.iter().filter(|d| d.category == c).count(), n, "{c}");
        }
        for d in demos {
            assert_eq!(parse_draft(&d.draft).unwrap_err().category, d.category, "{}", d.draft);
            parse_draft(&d.revised).unwrap_or_else(|e| panic!("{}: {e:?}", d.revised));
        }
    }

    #[test]
    fn draft_prompt_without_demos() {
        let p = build_draft_prompt("what?", &[], pylf_signatures(), true);
        assert!(p.starts_with(DRAFT_INSTRUCTION));
        assert!(p.contains("## Functions\n"));
        assert!(!p.contains("## Examples"));
        assert!(p.ends_with("Question: what?\n"));
        assert_eq!(p, build_draft_prompt("what?", &[], pylf_signatures(), true));
    }

    #[test]
    fn refine_prompt_shows_category_demos() {
        let p = build_refine_prompt(
            "q",
            "# expression\nSTOP(",
            Some(CritiqueCategory::WrongExpression),
            refine_demos(),
            pylf_signatures(),
        );
        assert_eq!(p.matches("# critique\nwrong expression\n").count(), 4);
        assert_eq!(p.matches("## Draft\n").count(), 4);
        let open = build_refine_prompt("q", "x", None, refine_demos(), pylf_signatures());
        assert_eq!(open.matches("## Draft\n").count(), 11);
        assert!(open.ends_with("## Revision\n"));
    }
}
