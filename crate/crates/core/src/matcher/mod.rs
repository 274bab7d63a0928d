//! Grounding of draft logical forms against a knowledge graph.
//!
//! Mentions are matched to entities and relations by cosine similarity over
//! an exact index. Schema triples restrict which relations may sit above a
//! candidate subtree, so only type-correct groundings are enumerated.

mod embed;
mod ground;
mod index;

pub use embed::{dot, EmbedError, EmbeddingProvider, HashedTrigramEmbedder, HttpEmbedder};
pub use ground::{brute_force_count, brute_force_ground, ground, GroundedLogicalForm, MatchError, MatcherConfig};
pub use index::{build_index, EntityCandidate, IndexError, SimilarityIndex};
