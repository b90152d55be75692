//! Counter-based seed derivation.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the cell identified by `counters` under `master`. Distinct
/// counter tuples give statistically independent seeds.
pub fn derive_seed(master: u64, counters: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for (i, &c) in counters.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(c.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN))));
    }
    h
}
