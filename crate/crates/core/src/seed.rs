//! Seed derivation.

/// One round of the splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash of a label, used to key seed streams by name.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for one `(function, dim, trial)` unit. Each component is mixed in
/// separately, so adding a function or dimension never shifts the seeds of
/// the others.
pub fn derive_seed(base: u64, function: &str, dim: usize, trial: usize) -> u64 {
    let mut s = splitmix64(base);
    s = splitmix64(s ^ label_hash(function));
    s = splitmix64(s ^ dim as u64);
    splitmix64(s ^ trial as u64)
}

/// Independent sub-stream seed for a named purpose within one run.
pub fn substream(seed: u64, purpose: &str) -> u64 {
    splitmix64(seed ^ label_hash(purpose))
}
