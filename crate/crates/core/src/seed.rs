//! Deterministic derivation of RNG streams from a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash of a role name.
pub fn tag(role: &str) -> u64 {
    role.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Mix a seed with a sequence of indices.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Seed for `(master, sweep index, trial index, role)`.
pub fn stream_id(master: u64, sweep: u64, trial: u64, role: &str) -> u64 {
    derive(master, &[sweep, trial, tag(role)])
}

/// Child seed for a named role and index.
pub fn child(seed: u64, role: &str, index: u64) -> u64 {
    derive(seed, &[tag(role), index])
}

pub fn stream(seed: u64) -> Stream {
    ChaCha12Rng::seed_from_u64(seed)
}
