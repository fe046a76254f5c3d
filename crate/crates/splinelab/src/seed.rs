//! Seed derivation for replicated experiments.
//!
//! Child seeds are derived from the plan's base seed and the task
//! coordinates with a splitmix64 chain, so a replicate's stream depends only
//! on `(base_seed, n, replicate)` and never on execution order or worker
//! count.

/// One splitmix64 scrambling round.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for coordinates (a, b) under `base`:
/// `splitmix64(splitmix64(base ^ splitmix64(a)) ^ splitmix64(b))`.
pub fn mix(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(a)) ^ splitmix64(b))
}

/// Salt for probe-element streams so they never collide with replicate
/// streams (which use `mix(base, n, r)` with small coordinates).
pub const PROBE_SALT: u64 = 0x7072_6F62_6573u64;
