//! End-to-end runs over the rockets fixture with replayed completions.
//!
//! Prompts are compared against frozen golden files and completions come
//! from frozen replay files. Set `KGQA_BLESS=1` to rewrite both after an
//! intentional prompt change, then review the diff.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use kgqa_core::dataset::load_dataset;
use kgqa_core::exec::{brute_force_evaluate, AnswerSet};
use kgqa_core::kg::EntityId;
use kgqa_core::matcher::{build_index, HashedTrigramEmbedder};
use kgqa_core::pipeline::{
    build_draft_prompt, build_refine_prompt, parse_draft, prompt_key, pylf_signatures, refine_demos, CritiqueCategory, Demo, DemoIndex,
    Pipeline, PipelineConfig, ReplayProvider,
};

const Q2: &str = "Which rockets not produced by Boeing Company have a mass below 2.32e+03?";

const GOOD: &str = "# question_info
- Boeing Company | entity | negative | not produced by
- 2.32e+03 | literal | calculation | mass below
# expression
STOP(AND(JOIN('R_producing', START('Boeing Company'), neg=True), CMP('<', 'mass', 2.32e+03)))
";

const NO_INFO: &str = "# expression
STOP(AND(JOIN('R_producing', START('Boeing Company'), neg=True), CMP('<', 'mass', 2.32e+03)))
";

const BAD_EXPR: &str = "# question_info
- Boeing Company | entity | negative | not produced by
- 2.32e+03 | literal | calculation | mass below
# expression
STOP(AND(JOINN('R_producing', START('Boeing Company'), neg=True), CMP('<', 'mass', 2.32e+03)))
";

fn blessing() -> bool {
    std::env::var("KGQA_BLESS").is_ok_and(|v| v == "1")
}

fn check_golden(name: &str, actual: &str) {
    let path = common::fixture_dir("golden").join(name);
    if blessing() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "prompt differs from {}", path.display());
}

fn replay(name: &str, entries: &[(&str, Vec<&str>)]) -> ReplayProvider {
    let path = common::fixture_dir("replay").join(name);
    if blessing() {
        let map: BTreeMap<String, Vec<&str>> = entries.iter().map(|(p, c)| (prompt_key(p), c.clone())).collect();
        std::fs::write(&path, serde_json::to_string_pretty(&map).unwrap() + "\n").unwrap();
    }
    ReplayProvider::from_file(&path).unwrap()
}

struct Setup {
    kg: kgqa_core::kg::KnowledgeGraph,
    index: kgqa_core::matcher::SimilarityIndex,
    demos: DemoIndex,
}

fn setup() -> Setup {
    let kg = common::load_fixture("rockets");
    let embedder = Arc::new(HashedTrigramEmbedder::default());
    let index = build_index(&kg, embedder.clone()).unwrap();
    let train = load_dataset(&common::fixture_dir("rockets").join("train.jsonl")).unwrap();
    let demos = DemoIndex::build(train, embedder).unwrap();
    Setup { kg, index, demos }
}

fn config(n: usize) -> PipelineConfig {
    PipelineConfig {
        k: 3,
        n_candidates: n,
        ..Default::default()
    }
}

fn pipeline(s: &Setup, cfg: PipelineConfig) -> Pipeline<'_> {
    Pipeline {
        kg: &s.kg,
        index: &s.index,
        demos: &s.demos,
        backend: Default::default(),
        config: cfg,
    }
}

fn draft_prompt(s: &Setup) -> String {
    let demos: Vec<Demo> = s
        .demos
        .select(Q2, 3)
        .unwrap()
        .into_iter()
        .map(|e| Demo::from_example(e, &s.kg).unwrap())
        .collect();
    build_draft_prompt(Q2, &demos, pylf_signatures(), true)
}

fn delta() -> AnswerSet {
    AnswerSet::Entities([EntityId::new("Delta")].into())
}

#[test]
fn draft_prompt_matches_golden() {
    let s = setup();
    check_golden("q2_draft_prompt.txt", &draft_prompt(&s));
}

#[test]
fn refine_prompt_matches_golden() {
    let p = build_refine_prompt(
        Q2,
        BAD_EXPR,
        Some(CritiqueCategory::WrongExpression),
        refine_demos(),
        pylf_signatures(),
    );
    check_golden("q2_refine_prompt.txt", &p);
}

fn q2_six_candidates(s: &Setup) -> ReplayProvider {
    let prompt = draft_prompt(s);
    let refine = build_refine_prompt(
        Q2,
        NO_INFO,
        Some(CritiqueCategory::NoQuestionInfo),
        refine_demos(),
        pylf_signatures(),
    );
    let revised = format!("# critique\nno question_info\n{GOOD}");
    replay(
        "rockets_q2.json",
        &[
            (prompt.as_str(), vec![GOOD, GOOD, NO_INFO, GOOD, GOOD, GOOD]),
            (refine.as_str(), vec![revised.as_str()]),
        ],
    )
}

#[test]
fn good_draft_answers_delta() {
    let s = setup();
    let provider = q2_six_candidates(&s);
    let p = pipeline(&s, config(6)).answer(Q2, &provider).unwrap();
    assert_eq!(p.answers, delta());
    assert_eq!(p.chosen_candidate, Some(0));
    assert!(!p.refined);
    assert_eq!(provider.calls(), 2);
    assert!(p.trace.provider_calls <= 12);
    let third = &p.trace.candidates[2];
    assert_eq!(third.draft.failure.as_ref().unwrap().category, CritiqueCategory::NoQuestionInfo);
    assert_eq!(
        third.refinement.as_ref().unwrap().stated_critique,
        Some(CritiqueCategory::NoQuestionInfo)
    );
    assert_eq!(third.answers, delta());
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let s = setup();
    let runs: Vec<String> = (0..3)
        .map(|_| {
            let provider = q2_six_candidates(&s);
            serde_json::to_string(&pipeline(&s, config(6)).answer(Q2, &provider).unwrap().trace).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

fn bad_then_good(s: &Setup) -> ReplayProvider {
    let prompt = draft_prompt(s);
    let refine = build_refine_prompt(
        Q2,
        BAD_EXPR,
        Some(CritiqueCategory::WrongExpression),
        refine_demos(),
        pylf_signatures(),
    );
    let revised = format!("# critique\nwrong expression\n{GOOD}");
    replay(
        "rockets_q2_refine.json",
        &[(prompt.as_str(), vec![BAD_EXPR]), (refine.as_str(), vec![revised.as_str()])],
    )
}

#[test]
fn bad_draft_is_refined_once() {
    let s = setup();
    let provider = bad_then_good(&s);
    let p = pipeline(&s, config(1)).answer(Q2, &provider).unwrap();
    assert_eq!(p.answers, delta());
    assert!(p.refined);
    assert_eq!(provider.calls(), 2);
    let r = p.trace.candidates[0].refinement.as_ref().unwrap();
    assert_eq!(r.given_category, Some(CritiqueCategory::WrongExpression));
}

#[test]
fn refinement_disabled_leaves_empty_prediction() {
    let s = setup();
    let provider = bad_then_good(&s);
    let cfg = PipelineConfig {
        refinement_enabled: false,
        ..config(1)
    };
    let p = pipeline(&s, cfg).answer(Q2, &provider).unwrap();
    assert!(p.answers.is_empty());
    assert_eq!(p.chosen_candidate, None);
    assert_eq!(provider.calls(), 1);
    assert!(p.trace.candidates[0].refinement.is_none());
}

#[test]
fn replay_miss_is_an_error_not_an_empty_answer() {
    let s = setup();
    let provider = ReplayProvider::default();
    assert!(pipeline(&s, config(1)).answer("unknown question", &provider).is_err());
}

#[test]
fn micro_dataset_gold_matches_oracle() {
    let kg = common::load_fixture("rockets");
    let data = load_dataset(&common::fixture_dir("rockets").join("dataset.jsonl")).unwrap();
    assert_eq!(data.len(), 3);
    for ex in data
        .iter()
        .chain(&load_dataset(Path::new(&common::fixture_dir("rockets").join("train.jsonl"))).unwrap())
    {
        let gold = ex.gold_answers().unwrap();
        assert_eq!(brute_force_evaluate(&ex.gold_expr().unwrap(), &kg).unwrap(), gold, "{}", ex.qid);
    }
}

#[test]
fn fixture_completions_parse_as_intended() {
    assert!(parse_draft(GOOD).is_ok());
    assert_eq!(parse_draft(NO_INFO).unwrap_err().category, CritiqueCategory::NoQuestionInfo);
    assert_eq!(parse_draft(BAD_EXPR).unwrap_err().category, CritiqueCategory::WrongExpression);
}
