//! Content hashes used to tie artifacts to the configuration that produced them.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of the canonical JSON form (object keys sorted) of `value`, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("config serializes to JSON");
    let bytes = serde_json::to_vec(&canonical).expect("JSON value serializes");
    bytes_hash(&bytes)
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
