//! Property tests over random schema-consistent graphs.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kgqa_core::evalkit::{flip_join, flippable_joins};
use kgqa_core::exec::{brute_force_evaluate, evaluate};
use kgqa_core::pylf::{parse_pylf, print_pylf, validate};
use kgqa_core::sparql::compile;
use kgqa_core::synth::{random_expr, random_kg, to_draft, KgParams};

fn params() -> impl Strategy<Value = KgParams> {
    (4usize..=30, 1usize..=4, 1usize..=5, 0usize..=4, 0.05f64..0.4).prop_map(
        |(entities, classes, entity_relations, attribute_relations, edge_prob)| KgParams {
            entities,
            classes,
            entity_relations,
            attribute_relations,
            edge_prob,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn executor_matches_oracle(seed in any::<u64>(), p in params()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = random_kg(&mut rng, &p);
        for _ in 0..8 {
            let Some(e) = random_expr(&mut rng, &kg, 3) else { continue };
            prop_assert!(validate(&e, &kg).is_empty());
            prop_assert_eq!(evaluate(&e, &kg).unwrap(), brute_force_evaluate(&e, &kg).unwrap(), "{}", e);
            prop_assert!(compile(&e, &kg).is_ok());
        }
    }

    #[test]
    fn print_parse_round_trip(seed in any::<u64>(), p in params()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = random_kg(&mut rng, &p);
        for _ in 0..8 {
            let Some(e) = random_expr(&mut rng, &kg, 3) else { continue };
            for form in [to_draft(&e, &kg), e] {
                let text = print_pylf(&form);
                prop_assert_eq!(parse_pylf(&text).unwrap(), form, "{}", text);
            }
        }
    }

    #[test]
    fn double_flip_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = random_kg(&mut rng, &KgParams::default());
        let Some(e) = random_expr(&mut rng, &kg, 3) else { return Ok(()) };
        for path in flippable_joins(&e) {
            let once = flip_join(&e, &path).unwrap();
            prop_assert_ne!(&once, &e);
            prop_assert_eq!(flip_join(&once, &path).unwrap(), e.clone());
        }
    }
}
