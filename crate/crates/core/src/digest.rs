use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a serializable value through its JSON form. Struct fields
/// serialize in declaration order and maps used here are ordered, so equal
/// values hash equally.
pub fn json_digest<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("digest inputs serialize");
    sha256_hex(&bytes)
}
