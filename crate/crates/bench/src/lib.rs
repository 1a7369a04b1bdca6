//! Shared fixtures for the scan benchmarks.

use mscan::Field;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn noise_field(d: usize, n: usize, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Field::standard_normal(d, n, &mut rng)
}
