//! Named sub-seeds derived from one root seed.

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `name`, item `index`, derived from `root`.
pub fn sub_seed(root: u64, name: &str, index: u64) -> u64 {
    let tag = name.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    });
    mix(mix(root ^ tag).wrapping_add(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_eq!(sub_seed(7, "ransac", 3), sub_seed(7, "ransac", 3));
        assert_ne!(sub_seed(7, "ransac", 3), sub_seed(7, "ransac", 4));
        assert_ne!(sub_seed(7, "ransac", 3), sub_seed(7, "subsample", 3));
        assert_ne!(sub_seed(7, "ransac", 3), sub_seed(8, "ransac", 3));
    }
}
