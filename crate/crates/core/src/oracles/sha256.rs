//! SHA-256 references. The secure-boot fixture hashes a single 64-byte
//! block without padding, which is one compression from the initial state.

use sha2::digest::generic_array::GenericArray;
use sha2::{Digest, Sha256};

pub const H0: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

/// Standard padded digest.
pub fn sha256(message: &[u8]) -> [u8; 32] {
    Sha256::digest(message).into()
}

/// Applies the compression function to `state` for each 64-byte block.
pub fn compress(state: &mut [u32; 8], blocks: &[[u8; 64]]) {
    let blocks: Vec<_> = blocks.iter().map(|b| *GenericArray::from_slice(b)).collect();
    sha2::compress256(state, &blocks);
}

/// Digest of `blocks` without padding.
pub fn sha256_unpadded(blocks: &[[u8; 64]]) -> [u8; 32] {
    let mut h = H0;
    compress(&mut h, blocks);
    let mut out = [0u8; 32];
    for (o, w) in out.chunks_exact_mut(4).zip(h) {
        o.copy_from_slice(&w.to_be_bytes());
    }
    out
}
