//! Deterministic, shard-independent random number derivation.
//!
//! All randomness in the pipeline is drawn from streams keyed by
//! `(global seed, scope parts)`, where the scope is typically a document id
//! plus a purpose tag such as `"truncate"` or `"goal-span"`. Two consequences:
//!
//! - the draw for a given document does not depend on iteration order or on
//!   which worker shard processed it, and
//! - separate purposes on the same document are mutually independent streams,
//!   so adding a draw to one code path never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The concrete RNG used everywhere randomness is needed.
pub type SeededRng = ChaCha8Rng;

/// Derive an independent RNG stream from a global seed and scope parts.
///
/// The key is SHA-256 over the seed and the parts. Parts are separated by a
/// `0xff` byte, which cannot occur inside UTF-8 text, so distinct part lists
/// never collide by concatenation.
pub fn derive_rng(seed: u64, scope: &[&str]) -> SeededRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in scope {
        hasher.update([0xff]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let key: [u8; 32] = digest[..].try_into().expect("sha256 digest is 32 bytes");
    ChaCha8Rng::from_seed(key)
}
