pub mod cli;
pub mod config;
pub mod curation;
pub mod eval;
pub mod geometry;
pub mod map;
pub mod obs;
pub mod planners;
pub mod sim;
pub mod train;

/// Derives an independent 64-bit seed for sub-stream `stream` (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
