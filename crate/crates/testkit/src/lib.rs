//! Seeded fixture generators and reference oracles shared by the lit-tag
//! test suites. The oracles work on CSV text parsed here, not on the core
//! data model, so they do not share code paths with the implementations
//! they check.

pub mod gen;
pub mod oracle;

pub use rand_chacha::ChaCha8Rng;

use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
