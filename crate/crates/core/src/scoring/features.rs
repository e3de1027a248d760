//! Hashed character n-gram counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_low: usize,
    pub n_high: usize,
    /// Number of hash buckets; a power of two.
    pub dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { n_low: 2, n_high: 4, dim: 1 << 18 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_low == 0 || self.n_low > self.n_high {
            return Err(format!("bad n-gram range {}..{}", self.n_low, self.n_high));
        }
        if !self.dim.is_power_of_two() {
            return Err(format!("dim {} is not a power of two", self.dim));
        }
        Ok(())
    }
}

/// Sparse (bucket, count) pairs, sorted by bucket, no duplicates.
pub type SparseCounts = Vec<(u32, u32)>;

/// Hash bucket of one n-gram.
pub fn bucket(ngram: &str, dim: usize) -> u32 {
    (fnv1a64(ngram.as_bytes()) % dim as u64) as u32
}

/// Character n-gram counts of the lowercased text for every order in
/// `n_low..=n_high`, hashed into `dim` buckets.
pub fn featurize(text: &str, cfg: &FeatureConfig) -> SparseCounts {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    let mut gram = String::new();
    for n in cfg.n_low..=cfg.n_high {
        for window in chars.windows(n) {
            gram.clear();
            gram.extend(window);
            *counts.entry(bucket(&gram, cfg.dim)).or_default() += 1;
        }
    }
    counts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    fn bigrams() -> FeatureConfig {
        FeatureConfig { n_low: 2, n_high: 2, dim: 1 << 18 }
    }

    #[test]
    fn single_bigram() {
        let f = featurize("ab", &bigrams());
        assert_eq!(f, vec![(bucket("ab", 1 << 18), 1)]);
    }

    #[test]
    fn overlapping_bigrams_are_counted() {
        let f = featurize("aaa", &bigrams());
        assert_eq!(f, vec![(bucket("aa", 1 << 18), 2)]);
    }

    #[test]
    fn lowercases_cased_scripts_only() {
        assert_eq!(featurize("AB", &bigrams()), featurize("ab", &bigrams()));
        let zh = featurize("你好", &bigrams());
        assert_eq!(zh, vec![(bucket("你好", 1 << 18), 1)]);
    }

    #[test]
    fn short_text_has_no_grams() {
        assert!(featurize("a", &bigrams()).is_empty());
        assert!(featurize("", &FeatureConfig::default()).is_empty());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(FeatureConfig { n_low: 2, n_high: 4, dim: 1000 }.validate().is_err());
        assert!(FeatureConfig { n_low: 3, n_high: 2, dim: 1024 }.validate().is_err());
        assert!(FeatureConfig { n_low: 0, n_high: 2, dim: 1024 }.validate().is_err());
        assert!(FeatureConfig::default().validate().is_ok());
    }
}
