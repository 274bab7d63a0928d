use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kg::KnowledgeGraph;
use crate::pylf::{parse_pylf, print_pylf, Expr, Leaf};
use crate::synth::to_draft;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Entity,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Calculation,
}

impl MentionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MentionKind::Entity => "entity",
            MentionKind::Literal => "literal",
        }
    }
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Calculation => "calculation",
        }
    }
}

/// One enumerated constraint element of a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionInfo {
    pub mention: String,
    pub kind: MentionKind,
    pub polarity: Polarity,
    pub note: String,
}

impl fmt::Display for QuestionInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "- {} | {} | {} | {}",
            self.mention,
            self.kind.as_str(),
            self.polarity.as_str(),
            self.note
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub question_info: Vec<QuestionInfo>,
    pub expr: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CritiqueCategory {
    NoQuestionInfo,
    WrongQuestionInfo,
    WrongExpression,
    WrongFormat,
}

impl CritiqueCategory {
    pub const ALL: [CritiqueCategory; 4] = [
        CritiqueCategory::NoQuestionInfo,
        CritiqueCategory::WrongQuestionInfo,
        CritiqueCategory::WrongExpression,
        CritiqueCategory::WrongFormat,
    ];

    /// Label used in prompts.
    pub fn label(self) -> &'static str {
        match self {
            CritiqueCategory::NoQuestionInfo => "no question_info",
            CritiqueCategory::WrongQuestionInfo => "wrong question_info",
            CritiqueCategory::WrongExpression => "wrong expression",
            CritiqueCategory::WrongFormat => "wrong format",
        }
    }
}

impl fmt::Display for CritiqueCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CritiqueCategory {
    type Err = String;

    /// Accepts the prompt label or the snake-case name, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        match norm.as_str() {
            "no_question_info" => Ok(CritiqueCategory::NoQuestionInfo),
            "wrong_question_info" => Ok(CritiqueCategory::WrongQuestionInfo),
            "wrong_expression" => Ok(CritiqueCategory::WrongExpression),
            "wrong_format" => Ok(CritiqueCategory::WrongFormat),
            _ => Err(format!("unknown critique category `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftFailure {
    pub category: CritiqueCategory,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    QuestionInfo,
    Expression,
    Critique,
    Other,
}

/// Recognizes `# question_info`, `# expression`, `# critique` and
/// `# question` header lines.
fn header(line: &str) -> Option<Block> {
    let name = line.trim().strip_prefix('#')?.trim().to_ascii_lowercase().replace([' ', '-'], "_");
    match name.trim_end_matches(':') {
        "question_info" => Some(Block::QuestionInfo),
        "expression" => Some(Block::Expression),
        "critique" => Some(Block::Critique),
        "question" => Some(Block::Other),
        _ => None,
    }
}

fn parse_row(line: &str) -> Result<QuestionInfo, String> {
    let body = line
        .strip_prefix('-')
        .ok_or_else(|| format!("row does not start with '-': `{line}`"))?;
    let fields: Vec<&str> = body.splitn(4, '|').map(str::trim).collect();
    let [mention, kind, polarity, note] = fields[..] else {
        return Err(format!("expected 4 '|'-separated fields: `{line}`"));
    };
    if mention.is_empty() {
        return Err(format!("empty mention: `{line}`"));
    }
    let kind = match kind.to_ascii_lowercase().as_str() {
        "entity" => MentionKind::Entity,
        "literal" => MentionKind::Literal,
        other => return Err(format!("unknown kind `{other}`")),
    };
    let polarity = match polarity.to_ascii_lowercase().as_str() {
        "positive" => Polarity::Positive,
        "negative" => Polarity::Negative,
        "calculation" => Polarity::Calculation,
        other => return Err(format!("unknown polarity `{other}`")),
    };
    Ok(QuestionInfo {
        mention: mention.to_string(),
        kind,
        polarity,
        note: note.to_string(),
    })
}

/// Text of the `# critique` block of a refinement completion, if any.
pub fn extract_critique(completion: &str) -> Option<CritiqueCategory> {
    let mut in_block = false;
    for line in completion.lines() {
        match header(line) {
            Some(b) => in_block = b == Block::Critique,
            None if in_block && !line.trim().is_empty() => return line.trim().trim_start_matches('-').parse().ok(),
            None => {}
        }
    }
    None
}

/// Splits a completion into its question_info and expression blocks and
/// parses both. Failures are classified into a critique category.
pub fn parse_draft(completion: &str) -> Result<Draft, DraftFailure> {
    let fail = |category, detail: String| DraftFailure { category, detail };
    let mut current = Block::Other;
    let mut info_lines: Option<Vec<&str>> = None;
    let mut expr_lines: Option<Vec<&str>> = None;
    for line in completion.lines() {
        if line.trim_start().starts_with("```") {
            continue;
        }
        if let Some(b) = header(line) {
            current = b;
            match b {
                Block::QuestionInfo => info_lines = Some(info_lines.unwrap_or_default()),
                Block::Expression => expr_lines = Some(expr_lines.unwrap_or_default()),
                _ => {}
            }
            continue;
        }
        match current {
            Block::QuestionInfo => info_lines.get_or_insert_with(Vec::new).push(line),
            Block::Expression => expr_lines.get_or_insert_with(Vec::new).push(line),
            _ => {}
        }
    }
    let Some(expr_lines) = expr_lines else {
        return Err(fail(CritiqueCategory::WrongFormat, "no `# expression` block".into()));
    };
    let Some(info_lines) = info_lines else {
        return Err(fail(CritiqueCategory::NoQuestionInfo, "no `# question_info` block".into()));
    };
    let rows: Vec<&str> = info_lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty()).collect();
    if rows.is_empty() {
        return Err(fail(CritiqueCategory::WrongQuestionInfo, "question_info block is empty".into()));
    }
    let question_info = rows
        .into_iter()
        .map(parse_row)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fail(CritiqueCategory::WrongQuestionInfo, e))?;
    let expr = parse_pylf(&expr_lines.join("\n")).map_err(|e| fail(CritiqueCategory::WrongExpression, e.to_string()))?;
    Ok(Draft { question_info, expr })
}

/// Formats a draft the way completions are expected to look.
pub fn render_draft(question_info: &[QuestionInfo], expr: &Expr) -> String {
    let mut out = String::from("# question_info\n");
    for row in question_info {
        out.push_str(&format!("{row}\n"));
    }
    out.push_str("# expression\n");
    out.push_str(&print_pylf(expr));
    out.push('\n');
    out
}

/// Constraint elements of a grounded expression: each START leaf and each
/// CMP bound, with the polarity of the constraint that uses it.
pub fn derive_question_info(expr: &Expr, kg: &KnowledgeGraph) -> Vec<QuestionInfo> {
    fn go(e: &Expr, kg: &KnowledgeGraph, via: Option<(&str, bool)>, out: &mut Vec<QuestionInfo>) {
        match e {
            Expr::Start(leaf) => {
                let (mention, kind) = match leaf {
                    Leaf::Entity(id) => (
                        kg.entity(id).map_or(id.as_str(), |i| i.name.as_str()).to_string(),
                        MentionKind::Entity,
                    ),
                    Leaf::Mention(m) => (m.to_string(), MentionKind::Entity),
                    Leaf::Literal(v) => (v.lexical(), MentionKind::Literal),
                };
                let (polarity, note) = match via {
                    Some((r, true)) => (Polarity::Negative, format!("not linked by {r}")),
                    Some((r, false)) => (Polarity::Positive, format!("linked by {r}")),
                    None => (Polarity::Positive, "topic".to_string()),
                };
                out.push(QuestionInfo {
                    mention,
                    kind,
                    polarity,
                    note,
                });
            }
            Expr::Join {
                relation, inner, negated, ..
            } => go(inner, kg, Some((relation.name(), *negated)), out),
            Expr::Cmp { op, relation, bound } => out.push(QuestionInfo {
                mention: bound.lexical(),
                kind: MentionKind::Literal,
                polarity: Polarity::Calculation,
                note: format!("{} {}", relation.name(), op.symbol()),
            }),
            other => {
                for c in other.children() {
                    go(c, kg, via, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    go(expr, kg, None, &mut out);
    out
}

/// The draft an ideal model would write for a grounded expression.
pub fn ideal_draft(expr: &Expr, kg: &KnowledgeGraph) -> String {
    render_draft(&derive_question_info(expr, kg), &to_draft(expr, kg))
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q2_DRAFT: &str = "# question_info
- Boeing Company | entity | negative | not produced by
- 2.32e3 | literal | calculation | mass less than
# expression
STOP(AND(JOIN('R_producing', START('Boeing Company'), neg=True), CMP('<', 'mass', 2.32e3)))
";

    #[test]
    fn parses_well_formed_draft() {
        let d = parse_draft(Q2_DRAFT).unwrap();
        assert_eq!(d.question_info.len(), 2);
        assert_eq!(d.question_info[0].polarity, Polarity::Negative);
        assert_eq!(d.question_info[1].kind, MentionKind::Literal);
        assert_eq!(
            print_pylf(&d.expr),
            "STOP(AND(JOIN('R_producing', START('Boeing Company'), neg=True), CMP('<', 'mass', 2.32e3)))"
        );
    }

    #[test]
    fn assignment_style_and_fences() {
        let text = "```\n# question_info\n- Delta | entity | positive | topic\n# expression\nx = START('Delta')\nSTOP(x)\n```";
        assert_eq!(parse_draft(text).unwrap().expr, Expr::stop(Expr::mention("Delta")));
    }

    #[test]
    fn failure_categories() {
        let cat = |t: &str| parse_draft(t).unwrap_err().category;
        assert_eq!(cat("# expression\nSTOP(START('x'))"), CritiqueCategory::NoQuestionInfo);
        assert_eq!(
            cat("# question_info\n- x | thing | positive | n\n# expression\nSTOP(START('x'))"),
            CritiqueCategory::WrongQuestionInfo
        );
        assert_eq!(
            cat("# question_info\n\n# expression\nSTOP(START('x'))"),
            CritiqueCategory::WrongQuestionInfo
        );
        assert_eq!(
            cat("# question_info\n- y | entity | positive | n\n# expression\nSTOP(JOINN('x', START('y')))"),
            CritiqueCategory::WrongExpression
        );
        assert_eq!(cat("STOP(START('x'))"), CritiqueCategory::WrongFormat);
        assert_eq!(cat("# question_info\n- y | entity | positive | n"), CritiqueCategory::WrongFormat);
    }

    #[test]
    fn category_labels_round_trip() {
        for c in CritiqueCategory::ALL {
            assert_eq!(c.label().parse::<CritiqueCategory>(), Ok(c));
        }
        assert_eq!(
            extract_critique("# critique\nwrong expression\n# question_info\n"),
            Some(CritiqueCategory::WrongExpression)
        );
    }

    #[test]
    fn ideal_draft_parses_back() {
        let kg = crate::kg::tests::rockets();
        let expr = parse_pylf("STOP(AND(JOIN(R_producing, START(BoeingCompany), neg=True), CMP('<', mass, 2.32e3)))").unwrap();
        let text = ideal_draft(&expr, &kg);
        let d = parse_draft(&text).unwrap();
        assert_eq!(d.expr, to_draft(&expr, &kg));
        assert_eq!(
            d.question_info,
            vec![
                QuestionInfo {
                    mention: "Boeing Company".into(),
                    kind: MentionKind::Entity,
                    polarity: Polarity::Negative,
                    note: "not linked by producing".into()
                },
                QuestionInfo {
                    mention: "2.32e3".into(),
                    kind: MentionKind::Literal,
                    polarity: Polarity::Calculation,
                    note: "mass <".into()
                },
            ]
        );
    }
}
