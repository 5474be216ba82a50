//! Tokenization shared by the hashed bag-of-tokens embedder and TF-IDF.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Bucket of a token in a hash space of `buckets` slots.
pub fn token_bucket(token: &str, buckets: usize) -> usize {
    (crate::rng::fnv1a(token.as_bytes()) % buckets as u64) as usize
}

/// Buckets of the first `limit` tokens of `text`, in order.
pub fn hashed_tokens(text: &str, limit: usize, buckets: usize) -> Vec<usize> {
    tokenize(text)
        .iter()
        .take(limit)
        .map(|t| token_bucket(t, buckets))
        .collect()
}
