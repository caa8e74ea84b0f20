//! Counter-based random streams.
//!
//! Each stream is a ChaCha8 generator whose key is the tuple
//! `(master_seed, index, role)`. Any work unit can rebuild its own streams
//! from that tuple, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for inside one work unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    /// Channel taps of user `k` (0 is the desired user).
    Channel(u32),
    /// Time-hopping and polarity codes of user `k`.
    Codes(u32),
    /// Information bits of user `k`.
    Bits(u32),
    /// Asynchronism offsets of the interferers.
    Offsets,
    /// Receiver noise for sweep point `p`.
    Noise(u32),
    /// Anything else; the tag keeps ad hoc streams apart.
    Aux(u32),
}

impl StreamRole {
    fn code(self) -> u64 {
        let (tag, v) = match self {
            StreamRole::Channel(k) => (1u64, k),
            StreamRole::Codes(k) => (2, k),
            StreamRole::Bits(k) => (3, k),
            StreamRole::Offsets => (4, 0),
            StreamRole::Noise(p) => (5, p),
            StreamRole::Aux(t) => (6, t),
        };
        (tag << 32) | u64::from(v)
    }
}

pub fn stream(master_seed: u64, index: u64, role: StreamRole) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&role.code().to_le_bytes());
    key[24..].copy_from_slice(b"ir-uwb\0\0");
    ChaCha8Rng::from_seed(key)
}
