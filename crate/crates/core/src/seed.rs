//! Deterministic derivation of independent RNG seeds from a master seed.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for substream `stream` under `master`; distinct streams never share state.
pub fn derive(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Seed for a named role, hashed from its bytes.
pub fn derive_named(master: u64, role: &str) -> u64 {
    let tag = role.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive(master, tag)
}
