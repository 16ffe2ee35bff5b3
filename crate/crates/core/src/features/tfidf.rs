//! Hashed TF-IDF over lowercase alphanumeric unigrams and bigrams.
//!
//! Terms are hashed with 64-bit FNV-1a (offset basis `0xcbf29ce484222325`,
//! prime `0x100000001b3`) over their UTF-8 bytes; a bigram is the two tokens
//! joined by one ASCII space. The bucket is the hash modulo the dimension
//! count, so the term-to-bucket map is identical on every platform.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FeatureError;

pub const DEFAULT_HASH_DIMENSIONS: u32 = 1 << 18;
/// Identifier recorded in model artifacts for the term hash.
pub const HASH_FUNCTION_ID: &str = "fnv1a-64";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

pub fn bucket_of(term: &str, dims: u32) -> u32 {
    (fnv1a_64(term.as_bytes()) % u64::from(dims)) as u32
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Unigrams followed by adjacent bigrams.
pub fn terms(text: &str) -> Vec<String> {
    let tokens = tokenize(text);
    let bigrams: Vec<String> = tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])).collect();
    tokens.into_iter().chain(bigrams).collect()
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn zero(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, *v))
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    L2,
}

/// Fitted featurizer. Buckets never seen in training have no IDF weight and
/// are dropped at vectorization time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub hash_function: String,
    pub hash_dimensions: u32,
    pub ngram_orders: Vec<u8>,
    pub normalization: Normalization,
    pub document_count: usize,
    pub idf_weights: BTreeMap<u32, f64>,
}

impl FeatureSpec {
    pub fn dims(&self) -> usize {
        self.hash_dimensions as usize
    }

    /// SHA-256 over the canonical JSON rendering.
    pub fn digest(&self) -> String {
        crate::sha256_hex(&self.to_json_bytes())
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("feature spec serializes")
    }

    /// Checks the invariants a deserialized spec must still satisfy.
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !self.hash_dimensions.is_power_of_two() {
            return Err(FeatureError::InvalidDimensions(self.hash_dimensions));
        }
        if self.hash_function != HASH_FUNCTION_ID {
            return Err(FeatureError::InvalidSpec("unknown hash function"));
        }
        if self.idf_weights.keys().any(|b| *b >= self.hash_dimensions) {
            return Err(FeatureError::InvalidSpec("bucket out of range"));
        }
        if self.idf_weights.values().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(FeatureError::InvalidSpec("idf weight not positive"));
        }
        Ok(())
    }
}

/// Fits IDF weights on training documents:
/// `idf(b) = ln((1 + N) / (1 + df(b))) + 1`.
pub fn fit_features<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    hash_dimensions: u32,
) -> Result<FeatureSpec, FeatureError> {
    if !hash_dimensions.is_power_of_two() {
        return Err(FeatureError::InvalidDimensions(hash_dimensions));
    }
    let mut df: BTreeMap<u32, usize> = BTreeMap::new();
    let mut n = 0usize;
    for text in texts {
        n += 1;
        let mut buckets: Vec<u32> = terms(text).iter().map(|t| bucket_of(t, hash_dimensions)).collect();
        buckets.sort_unstable();
        buckets.dedup();
        for b in buckets {
            *df.entry(b).or_default() += 1;
        }
    }
    if n == 0 {
        return Err(FeatureError::EmptyCorpus);
    }
    let idf_weights = df
        .into_iter()
        .map(|(b, d)| (b, ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0))
        .collect();
    Ok(FeatureSpec {
        hash_function: HASH_FUNCTION_ID.to_string(),
        hash_dimensions,
        ngram_orders: vec![1, 2],
        normalization: Normalization::L2,
        document_count: n,
        idf_weights,
    })
}

/// Raw term counts times IDF, L2-normalized. Text without known terms maps
/// to the zero vector.
pub fn vectorize(text: &str, spec: &FeatureSpec) -> SparseVector {
    let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
    for t in terms(text) {
        let b = bucket_of(&t, spec.hash_dimensions);
        if spec.idf_weights.contains_key(&b) {
            *tf.entry(b).or_default() += 1.0;
        }
    }
    let mut entries: Vec<(u32, f64)> = tf
        .into_iter()
        .map(|(b, count)| (b, count * spec.idf_weights[&b]))
        .collect();
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    SparseVector {
        dim: spec.dims(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a_64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenization() {
        assert_eq!(tokenize("Hello, world"), ["hello", "world"]);
        assert_eq!(terms("Hello, world"), ["hello", "world", "hello world"]);
        assert_eq!(tokenize("  --  "), Vec::<String>::new());
        assert_eq!(tokenize("Café_42x"), ["café", "42x"]);
    }

    #[test]
    fn idf_formula() {
        // "world" shares no bucket with "hello" at this size
        let spec = fit_features(["hello world", "hello"], DEFAULT_HASH_DIMENSIONS).unwrap();
        let hello = bucket_of("hello", DEFAULT_HASH_DIMENSIONS);
        let world = bucket_of("world", DEFAULT_HASH_DIMENSIONS);
        assert_ne!(hello, world);
        assert_eq!(spec.idf_weights[&hello], 1.0);
        assert!((spec.idf_weights[&world] - (1.5f64.ln() + 1.0)).abs() < 1e-15);
        assert!((spec.idf_weights[&world] - 1.405_465_108_108_164_4).abs() < 1e-12);
        assert_eq!(fit_features([], 16), Err(FeatureError::EmptyCorpus));
        assert_eq!(fit_features(["x"], 12), Err(FeatureError::InvalidDimensions(12)));
    }

    #[test]
    fn vectorize_cases() {
        let spec = fit_features(["alpha beta", "alpha beta"], DEFAULT_HASH_DIMENSIONS).unwrap();
        assert!(vectorize("", &spec).is_zero());
        assert!(vectorize("unseen words", &spec).is_zero());

        let v = vectorize("alpha", &spec);
        assert_eq!(v.entries, vec![(bucket_of("alpha", DEFAULT_HASH_DIMENSIONS), 1.0)]);

        // two distinct unigrams, one bigram; all idf 1 and tf 1
        let v = vectorize("alpha beta", &spec);
        assert_eq!(v.entries.len(), 3);
        for (_, x) in &v.entries {
            assert!((x - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }

        let spec = fit_features(["alpha", "beta"], DEFAULT_HASH_DIMENSIONS).unwrap();
        let v = vectorize("beta alpha", &spec);
        assert_eq!(v.entries.len(), 2);
        for (_, x) in &v.entries {
            assert!((x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn spec_json_roundtrip_exact() {
        let spec = fit_features(["one two three", "two three", "three"], 1024).unwrap();
        let back: FeatureSpec = serde_json::from_slice(&spec.to_json_bytes()).unwrap();
        assert_eq!(spec, back);
        assert_eq!(spec.digest(), back.digest());
        assert!(back.validate().is_ok());
    }

    proptest! {
        #[test]
        fn unit_norm_or_zero(docs in proptest::collection::vec("[a-e ]{0,30}", 1..8), probe in "[a-f ,.]{0,40}") {
            let spec = fit_features(docs.iter().map(String::as_str), 64).unwrap();
            let v = vectorize(&probe, &spec);
            prop_assert!(v.is_zero() || (v.norm() - 1.0).abs() < 1e-9);
            prop_assert!(v.entries.windows(2).all(|w| w[0].0 < w[1].0));
            prop_assert!(spec.idf_weights.values().all(|w| *w >= 1.0));
        }
    }
}
