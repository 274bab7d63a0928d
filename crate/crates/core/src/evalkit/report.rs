use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{exact_match, f1, MetricError};
use crate::dataset::{DatasetError, Example};
use crate::exec::AnswerSet;
use crate::pylf::{profile_constraints, FunctionType};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction for unknown qid {0}")]
    UnknownQid(String),
    #[error("duplicate prediction for qid {0}")]
    DuplicateQid(String),
    #[error("example {qid}: {source}")]
    Metric { qid: String, source: MetricError },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub em: f64,
    pub f1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub qid: String,
    pub em: f64,
    pub f1: f64,
}

/// Scores in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_em: f64,
    pub overall_f1: f64,
    pub by_num_constraints: BTreeMap<usize, Bucket>,
    pub by_function_type: BTreeMap<FunctionType, Bucket>,
    pub per_example: Vec<ExampleScore>,
}

#[derive(Default)]
struct Sum {
    em: f64,
    f1: f64,
    n: usize,
}

impl Sum {
    fn add(&mut self, em: f64, f1: f64) {
        self.em += em;
        self.f1 += f1;
        self.n += 1;
    }

    fn bucket(&self) -> Bucket {
        let n = self.n.max(1) as f64;
        Bucket {
            em: 100.0 * self.em / n,
            f1: 100.0 * self.f1 / n,
            n: self.n,
        }
    }
}

/// Scores `predictions` (qid, answers) against `golds`, with breakdowns by
/// constraint count and function type. Both come from the dataset fields
/// when present and from the gold logical form otherwise.
pub fn evaluate_dataset(predictions: &[(String, AnswerSet)], golds: &[Example]) -> Result<EvalReport, EvalError> {
    let by_qid: HashMap<&str, &Example> = golds.iter().map(|g| (g.qid.as_str(), g)).collect();
    let mut seen = std::collections::HashSet::new();
    let (mut all, mut by_n, mut by_ft) = (Sum::default(), BTreeMap::<usize, Sum>::new(), BTreeMap::<FunctionType, Sum>::new());
    let mut per_example = Vec::with_capacity(predictions.len());
    for (qid, pred) in predictions {
        let gold = by_qid.get(qid.as_str()).ok_or_else(|| EvalError::UnknownQid(qid.clone()))?;
        if !seen.insert(qid.as_str()) {
            return Err(EvalError::DuplicateQid(qid.clone()));
        }
        let answers = gold.gold_answers()?;
        let em = exact_match(pred, &answers);
        let f = f1(pred, &answers).map_err(|source| EvalError::Metric { qid: qid.clone(), source })?;
        let (n, ft) = match (gold.num_constraints, gold.function_type) {
            (Some(n), Some(ft)) => (n, ft),
            (n, ft) => {
                let profile = profile_constraints(&gold.gold_expr()?);
                (n.unwrap_or(profile.total), ft.unwrap_or(profile.function_type))
            }
        };
        all.add(em, f);
        by_n.entry(n).or_default().add(em, f);
        by_ft.entry(ft).or_default().add(em, f);
        per_example.push(ExampleScore {
            qid: qid.clone(),
            em,
            f1: f,
        });
    }
    let overall = all.bucket();
    Ok(EvalReport {
        overall_em: overall.em,
        overall_f1: overall.f1,
        by_num_constraints: by_n.into_iter().map(|(k, s)| (k, s.bucket())).collect(),
        by_function_type: by_ft.into_iter().map(|(k, s)| (k, s.bucket())).collect(),
        per_example,
    })
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, label: &str, b: &Bucket| {
            let _ = writeln!(out, "{label:<20} {:>7.1} {:>7.1} {:>6}", b.em, b.f1, b.n);
        };
        let _ = writeln!(out, "{:<20} {:>7} {:>7} {:>6}", "", "EM", "F1", "n");
        row(
            &mut out,
            "overall",
            &Bucket {
                em: self.overall_em,
                f1: self.overall_f1,
                n: self.per_example.len(),
            },
        );
        for (k, b) in &self.by_num_constraints {
            row(&mut out, &format!("constraints={k}"), b);
        }
        for (k, b) in &self.by_function_type {
            row(&mut out, &format!("function={k}"), b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EntityId;

    fn gold(qid: &str, pylf: &str, answers: &[&str]) -> Example {
        Example {
            qid: qid.into(),
            question: String::new(),
            pylf: pylf.into(),
            answers: answers.iter().map(|s| s.to_string()).collect(),
            function_type: None,
            num_constraints: None,
            split: None,
        }
    }

    fn ents(ids: &[&str]) -> AnswerSet {
        AnswerSet::Entities(ids.iter().map(|s| EntityId::new(*s)).collect())
    }

    #[test]
    fn half_right() {
        let golds = vec![
            gold("a", "STOP(JOIN(r, START(x)))", &["Delta"]),
            gold("b", "STOP(COUNT(JOIN(r, START(x))))", &["2"]),
        ];
        let preds = vec![("a".to_string(), ents(&["Delta"])), ("b".to_string(), AnswerSet::Number(3))];
        let r = evaluate_dataset(&preds, &golds).unwrap();
        assert_eq!(r.overall_em, 50.0);
        assert_eq!(r.overall_f1, 50.0);
        assert_eq!(r.by_num_constraints.values().map(|b| b.n).sum::<usize>(), 2);
        assert_eq!(r.by_function_type[&FunctionType::Count].em, 0.0);
        assert_eq!(r.by_function_type[&FunctionType::None].em, 100.0);
        assert!(r.to_table().contains("overall"));
    }

    #[test]
    fn qid_errors() {
        let golds = vec![gold("a", "STOP(START(x))", &["x"])];
        assert!(matches!(
            evaluate_dataset(&[("z".into(), ents(&[]))], &golds),
            Err(EvalError::UnknownQid(_))
        ));
        let dup = vec![("a".to_string(), ents(&["x"])), ("a".to_string(), ents(&["x"]))];
        assert!(matches!(evaluate_dataset(&dup, &golds), Err(EvalError::DuplicateQid(_))));
        let empty_gold = vec![gold("a", "STOP(START(x))", &[])];
        assert!(matches!(
            evaluate_dataset(&[("a".into(), ents(&[]))], &empty_gold),
            Err(EvalError::Metric { .. })
        ));
    }
}
