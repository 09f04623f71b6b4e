//! Acute-toxicity gap-filling from knowledge-graph embeddings.
//!
//! The crate covers the whole pipeline: an in-memory triple store
//! ([`kg`]), a seeded synthetic data generator ([`synth`]), effect-record
//! filtering and aggregation ([`effects`]), ComplEx embedding training
//! ([`embed`]), species/chemical grouping and grouped fold plans
//! ([`grouping`]), SVR prediction with grouped cross-validation
//! ([`predict`]) and neighbourhood-based explanations ([`explain`]).

pub mod effects;
pub mod embed;
pub mod explain;
pub mod grouping;
pub mod kg;
pub mod predict;
pub mod synth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// ChaCha8 generator for one independent stream of a run seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
