use serde::Serialize;
use sha2::{Digest, Sha256};

/// Short hex digest of a value's JSON form. Field order is the declaration
/// order, so equal configs always hash equally.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config types always serialize");
    let hash = Sha256::digest(&json);
    hex::encode(&hash[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_sensitive() {
        let a = config_digest(&(1.0f64, "x"));
        assert_eq!(a, config_digest(&(1.0f64, "x")));
        assert_ne!(a, config_digest(&(1.5f64, "x")));
        assert_eq!(a.len(), 16);
    }
}
