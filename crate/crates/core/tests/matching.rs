mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use kgqa_core::matcher::{brute_force_ground, build_index, ground, HashedTrigramEmbedder, MatchError, MatcherConfig, SimilarityIndex};
use kgqa_core::pylf::{parse_pylf, print_pylf, validate, Expr};
use kgqa_core::synth::{random_expr, random_kg, to_draft, KgParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ROCKET_DRAFT: &str =
    "STOP(AND(JOIN('R_spaceflight_rocket.manufacturer', START('boeing')), CMP('<', 'spaceflight.rocket.mass', 2.32e+03)))";

fn matching_index() -> (kgqa_core::kg::KnowledgeGraph, SimilarityIndex) {
    let kg = common::load_fixture("matching");
    let index = build_index(&kg, Arc::new(HashedTrigramEmbedder::default())).unwrap();
    (kg, index)
}

fn printed(forms: &[kgqa_core::matcher::GroundedLogicalForm]) -> BTreeSet<String> {
    forms.iter().map(|g| print_pylf(&g.expr)).collect()
}

#[test]
fn schema_pruning_versus_brute_force() {
    let (kg, index) = matching_index();
    let draft = parse_pylf(ROCKET_DRAFT).unwrap();
    let grounded = ground(&draft, &kg, &index, &MatcherConfig::default()).unwrap();
    assert_eq!(grounded.len(), 4, "{:#?}", printed(&grounded));
    for g in &grounded {
        assert!(validate(&g.expr, &kg).is_empty());
        assert!(g.score > 0.0 && g.score <= 1.0 + 1e-9);
        assert!(print_pylf(&g.expr).contains("START(m.0178g)"));
    }
    assert!(grounded.windows(2).all(|w| w[0].score >= w[1].score));

    let brute = brute_force_ground(&draft, &index, 10, 10, 10_000).unwrap();
    assert_eq!(brute.len(), 1000);
    assert!(printed(&grounded).is_subset(&printed(&brute)));
}

#[test]
fn raising_theta_never_adds_candidates() {
    let (kg, index) = matching_index();
    let draft = parse_pylf(ROCKET_DRAFT).unwrap();
    let mut previous: Option<BTreeSet<String>> = None;
    for theta in [0.0, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 1.0] {
        let cfg = MatcherConfig {
            theta,
            max_candidates: 10_000,
            ..Default::default()
        };
        let now = match ground(&draft, &kg, &index, &cfg) {
            Ok(forms) => printed(&forms),
            Err(MatchError::NoRelationAboveThreshold { .. } | MatchError::NoCompatibleCandidate(_)) => BTreeSet::new(),
            Err(e) => panic!("{e}"),
        };
        if let Some(prev) = &previous {
            assert!(now.is_subset(prev), "theta {theta} added candidates");
        }
        previous = Some(now);
    }
}

#[test]
fn grounding_is_deterministic() {
    let (kg, index) = matching_index();
    let draft = parse_pylf(ROCKET_DRAFT).unwrap();
    let a = ground(&draft, &kg, &index, &MatcherConfig::default()).unwrap();
    let b = ground(&draft, &kg, &index, &MatcherConfig::default()).unwrap();
    assert_eq!(a, b);
}

/// Drafts derived from random grounded expressions: every candidate must
/// type-check, and the expression the draft came from must be recovered
/// when its names are exact.
#[test]
fn random_drafts_ground_soundly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut drafts = 0;
    let mut recovered = 0;
    while drafts < 200 {
        let kg = random_kg(&mut rng, &KgParams::default());
        let index = build_index(&kg, Arc::new(HashedTrigramEmbedder::default())).unwrap();
        for _ in 0..10 {
            let Some(expr) = random_expr(&mut rng, &kg, 3) else { continue };
            let draft: Expr = to_draft(&expr, &kg);
            drafts += 1;
            let cfg = MatcherConfig {
                max_candidates: 10_000,
                ..Default::default()
            };
            match ground(&draft, &kg, &index, &cfg) {
                Ok(forms) => {
                    for g in &forms {
                        assert!(validate(&g.expr, &kg).is_empty(), "{}", print_pylf(&g.expr));
                    }
                    recovered += usize::from(forms.iter().any(|g| g.expr == expr));
                }
                Err(e) => panic!("{}: {e}", print_pylf(&draft)),
            }
        }
    }
    assert!(recovered * 10 >= drafts * 9, "recovered {recovered} of {drafts}");
}
