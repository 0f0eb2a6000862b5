//! Counter-based random streams.
//!
//! A draw is a pure function of `(master seed, realization index, rank)`, so
//! realizations can be generated in any order on any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a path of counters into one 64-bit key.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Uniform in the open interval (0, 1), using the top 52 bits.
#[inline]
pub fn unit_open(key: u64) -> f64 {
    ((key >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Uniform draw for impurity `rank` of realization `index`.
pub fn coupling_uniform(seed: u64, index: u64, rank: u64) -> f64 {
    unit_open(derive(seed, &[index, rank]))
}

/// A ChaCha stream keyed by a derivation path, for loops that need many draws.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_open_stays_inside() {
        assert!(unit_open(0) > 0.0);
        assert!(unit_open(u64::MAX) < 1.0);
    }

    #[test]
    fn distinct_paths_give_distinct_keys() {
        assert_ne!(derive(1, &[1, 0]), derive(1, &[0, 1]));
        assert_ne!(derive(1, &[2]), derive(2, &[1]));
        assert_eq!(derive(7, &[3, 4]), derive(7, &[3, 4]));
    }
}
