//! SHA-256 content digests, hex encoded.

use sha2::{Digest as _, Sha256};

pub const HASH_ALGORITHM: &str = "sha256";
pub const DIGEST_HEX_LEN: usize = 64;

/// All-zero digest, the `prev_hash` of a chain's genesis record.
pub const ZERO_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn is_digest_hex(s: &str) -> bool {
    s.len() == DIGEST_HEX_LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(is_digest_hex(ZERO_DIGEST));
        assert!(!is_digest_hex("ABC"));
    }
}
