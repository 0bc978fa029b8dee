//! Host-side AES-128 with per-round state capture.
//!
//! The state is kept in FIPS-197 byte order: byte `r + 4*c` is row `r` of
//! column `c`.

pub type Block = [u8; 16];

const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const INV_SBOX: [u8; 256] = {
    let mut t = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        t[SBOX[i] as usize] = i as u8;
        i += 1;
    }
    t
};

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

fn xtime(a: u8) -> u8 {
    (a << 1) ^ if a & 0x80 != 0 { 0x1b } else { 0 }
}

fn mul(mut a: u8, mut b: u8) -> u8 {
    let mut r = 0;
    while b != 0 {
        if b & 1 != 0 {
            r ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    r
}

fn sub_bytes(s: &mut Block) {
    s.iter_mut().for_each(|b| *b = SBOX[*b as usize]);
}

fn inv_sub_bytes(s: &mut Block) {
    s.iter_mut().for_each(|b| *b = INV_SBOX[*b as usize]);
}

fn shift_rows(s: &mut Block) {
    let t = *s;
    for c in 0..4 {
        for r in 0..4 {
            s[r + 4 * c] = t[r + 4 * ((c + r) % 4)];
        }
    }
}

fn inv_shift_rows(s: &mut Block) {
    let t = *s;
    for c in 0..4 {
        for r in 0..4 {
            s[r + 4 * ((c + r) % 4)] = t[r + 4 * c];
        }
    }
}

fn mix_columns(s: &mut Block) {
    for c in s.chunks_exact_mut(4) {
        let a = [c[0], c[1], c[2], c[3]];
        for r in 0..4 {
            c[r] = mul(a[r], 2) ^ mul(a[(r + 1) % 4], 3) ^ a[(r + 2) % 4] ^ a[(r + 3) % 4];
        }
    }
}

fn inv_mix_columns(s: &mut Block) {
    for c in s.chunks_exact_mut(4) {
        let a = [c[0], c[1], c[2], c[3]];
        for r in 0..4 {
            c[r] = mul(a[r], 14) ^ mul(a[(r + 1) % 4], 11) ^ mul(a[(r + 2) % 4], 13) ^ mul(a[(r + 3) % 4], 9);
        }
    }
}

fn add_round_key(s: &mut Block, k: &Block) {
    s.iter_mut().zip(k).for_each(|(b, k)| *b ^= k);
}

/// AES-128 with an expanded key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aes128 {
    round_keys: [Block; 11],
}

impl Aes128 {
    pub fn new(key: &Block) -> Self {
        let mut w = [[0u8; 4]; 44];
        for i in 0..4 {
            w[i].copy_from_slice(&key[4 * i..4 * i + 4]);
        }
        for i in 4..44 {
            let mut t = w[i - 1];
            if i % 4 == 0 {
                t.rotate_left(1);
                t.iter_mut().for_each(|b| *b = SBOX[*b as usize]);
                t[0] ^= RCON[i / 4 - 1];
            }
            for j in 0..4 {
                w[i][j] = w[i - 4][j] ^ t[j];
            }
        }
        let mut round_keys = [[0u8; 16]; 11];
        for (r, rk) in round_keys.iter_mut().enumerate() {
            for i in 0..4 {
                rk[4 * i..4 * i + 4].copy_from_slice(&w[4 * r + i]);
            }
        }
        Self { round_keys }
    }

    pub fn round_key(&self, round: usize) -> &Block {
        &self.round_keys[round]
    }

    /// Applies round `round` (1..=10) to `s` in place.
    pub fn round(&self, s: &mut Block, round: usize) {
        sub_bytes(s);
        shift_rows(s);
        if round < 10 {
            mix_columns(s);
        }
        add_round_key(s, &self.round_keys[round]);
    }

    /// Undoes round `round` in place.
    pub fn inv_round(&self, s: &mut Block, round: usize) {
        add_round_key(s, &self.round_keys[round]);
        if round < 10 {
            inv_mix_columns(s);
        }
        inv_shift_rows(s);
        inv_sub_bytes(s);
    }

    pub fn encrypt(&self, pt: &Block) -> Block {
        self.round_inputs(pt)[11]
    }

    pub fn decrypt(&self, ct: &Block) -> Block {
        let mut s = *ct;
        for r in (1..=10).rev() {
            self.inv_round(&mut s, r);
        }
        add_round_key(&mut s, &self.round_keys[0]);
        s
    }

    /// Input states of rounds 1..=10 at indices 1..=10, the plaintext at 0
    /// and the ciphertext at 11.
    pub fn round_inputs(&self, pt: &Block) -> [Block; 12] {
        let mut out = [[0u8; 16]; 12];
        out[0] = *pt;
        let mut s = *pt;
        add_round_key(&mut s, &self.round_keys[0]);
        for r in 1..=10 {
            out[r] = s;
            self.round(&mut s, r);
        }
        out[11] = s;
        out
    }

    /// Continues an encryption from the input state of round `round`.
    pub fn encrypt_from(&self, state: &Block, round: usize) -> Block {
        let mut s = *state;
        for r in round..=10 {
            self.round(&mut s, r);
        }
        s
    }

    /// Input states of rounds 1..=10 recovered from `ct` by decrypting
    /// backwards; index 11 holds `ct` itself.
    pub fn backward_round_inputs(&self, ct: &Block) -> [Block; 12] {
        let mut out = [[0u8; 16]; 12];
        out[11] = *ct;
        let mut s = *ct;
        for r in (1..=10).rev() {
            self.inv_round(&mut s, r);
            out[r] = s;
        }
        add_round_key(&mut s, &self.round_keys[0]);
        out[0] = s;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbox_tables() {
        assert_eq!(SBOX[0x53], 0xed);
        assert_eq!(INV_SBOX[0xed], 0x53);
    }

    #[test]
    fn key_schedule_last_round_key() {
        let key: Block = core::array::from_fn(|i| i as u8);
        let aes = Aes128::new(&key);
        assert_eq!(aes.round_key(10)[..4], [0x13, 0x11, 0x1d, 0x7f]);
    }

    #[test]
    fn mix_columns_inverse() {
        let mut s: Block = core::array::from_fn(|i| (i * 37 + 5) as u8);
        let t = s;
        mix_columns(&mut s);
        inv_mix_columns(&mut s);
        assert_eq!(s, t);
    }

    #[test]
    fn backward_matches_forward() {
        let aes = Aes128::new(&[7; 16]);
        let pt: Block = core::array::from_fn(|i| i as u8 * 3);
        let fwd = aes.round_inputs(&pt);
        assert_eq!(aes.backward_round_inputs(&fwd[11]), fwd);
        assert_eq!(aes.decrypt(&fwd[11]), pt);
    }
}
