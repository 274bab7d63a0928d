use std::collections::BTreeSet;

use crate::exec::AnswerSet;
use crate::kg::{AttributeValue, EntityId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("gold answer set is empty")]
    EmptyGold,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Item {
    Entity(EntityId),
    Literal(AttributeValue),
    Number(i64),
}

/// Answer elements; a count is the singleton set of its value.
fn items(a: &AnswerSet) -> BTreeSet<Item> {
    match a {
        AnswerSet::Entities(s) => s.iter().cloned().map(Item::Entity).collect(),
        AnswerSet::Literals(s) => s.iter().cloned().map(Item::Literal).collect(),
        AnswerSet::Number(n) => BTreeSet::from([Item::Number(*n)]),
    }
}

/// 1.0 when the two answer sets are equal, else 0.0. Two empty sets are
/// equal whatever their kind.
pub fn exact_match(pred: &AnswerSet, gold: &AnswerSet) -> f64 {
    if items(pred) == items(gold) {
        1.0
    } else {
        0.0
    }
}

/// Harmonic mean of precision and recall over answer elements.
pub fn f1(pred: &AnswerSet, gold: &AnswerSet) -> Result<f64, MetricError> {
    let (p, g) = (items(pred), items(gold));
    if g.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let common = p.intersection(&g).count();
    Ok(2.0 * common as f64 / (p.len() + g.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ents(ids: &[&str]) -> AnswerSet {
        AnswerSet::Entities(ids.iter().map(|s| EntityId::new(*s)).collect())
    }

    #[test]
    fn exact_match_cases() {
        assert_eq!(exact_match(&ents(&["Delta"]), &ents(&["Delta"])), 1.0);
        assert_eq!(exact_match(&ents(&["Delta"]), &ents(&["Delta", "Saturn"])), 0.0);
        assert_eq!(exact_match(&ents(&[]), &ents(&[])), 1.0);
        assert_eq!(exact_match(&AnswerSet::Number(2), &AnswerSet::Number(2)), 1.0);
        assert_eq!(exact_match(&AnswerSet::Number(0), &ents(&[])), 0.0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1(&ents(&["Delta"]), &ents(&["Delta"])), Ok(1.0));
        assert_eq!(f1(&ents(&["Delta"]), &ents(&["Delta", "Saturn"])), Ok(2.0 / 3.0));
        assert_eq!(f1(&ents(&[]), &ents(&["Delta"])), Ok(0.0));
        assert_eq!(f1(&ents(&["Delta"]), &ents(&[])), Err(MetricError::EmptyGold));
        assert_eq!(f1(&AnswerSet::Number(3), &AnswerSet::Number(4)), Ok(0.0));
    }

    fn set() -> impl Strategy<Value = AnswerSet> {
        proptest::collection::btree_set(0u8..6, 0..5)
            .prop_map(|s| AnswerSet::Entities(s.into_iter().map(|i| EntityId::new(format!("e{i}"))).collect()))
    }

    proptest! {
        #[test]
        fn em_and_f1_agree(p in set(), g in set()) {
            if let Ok(score) = f1(&p, &g) {
                prop_assert!((0.0..=1.0).contains(&score));
                if exact_match(&p, &g) == 1.0 {
                    prop_assert_eq!(score, 1.0);
                }
                if score == 1.0 && !p.is_empty() {
                    prop_assert_eq!(exact_match(&p, &g), 1.0);
                }
                if !p.is_empty() {
                    prop_assert_eq!(Ok(score), f1(&g, &p));
                }
            }
        }
    }
}
