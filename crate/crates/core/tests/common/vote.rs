//! Brute-force majority vote.

use infodemic::rmdl::vote;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rows where `vote` disagrees with counting, plus rows where an odd member count tied.
pub fn vote_mismatches(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = 2 * rng.random_range(0..8) + 1;
    let rows = rng.random_range(1..60);
    let bias = rng.random_range(0.1..0.9);
    let matrix: Vec<Vec<usize>> = (0..members)
        .map(|_| (0..rows).map(|_| usize::from(rng.random_bool(bias))).collect())
        .collect();
    let got = vote(&matrix).unwrap();
    let mut bad = 0;
    for row in 0..rows {
        let ones = matrix.iter().filter(|m| m[row] == 1).count();
        let zeros = members - ones;
        if ones == zeros {
            bad += 1;
        }
        if got[row] != usize::from(ones > zeros) {
            bad += 1;
        }
    }
    bad
}
