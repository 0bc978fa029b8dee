//! Exploitability models: the verdict functions evaluated at halting points.

pub mod aes;
pub mod sha256;

use std::fmt;

pub use aes::{Aes128, Block};
pub use sha256::{compress, sha256, sha256_unpadded, H0};

use crate::emu::MachineState;

/// Decides whether the state at a halting point counts as a successful
/// attack. Implementations must be pure.
pub trait ExploitabilityModel: Send + Sync {
    fn name(&self) -> &str;
    fn is_exploitable(&self, state: &MachineState, halt_addr: u32) -> bool;
}

/// Exploitable iff the run stopped at one of `targets`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressReached {
    pub targets: Vec<u32>,
}

impl AddressReached {
    pub fn new(target: u32) -> Self {
        Self { targets: vec![target] }
    }
}

impl ExploitabilityModel for AddressReached {
    fn name(&self) -> &str {
        "address-reached"
    }

    fn is_exploitable(&self, _: &MachineState, halt_addr: u32) -> bool {
        self.targets.contains(&halt_addr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("region {addr:#010x}+{len} is not in RAM")]
    NotInRam { addr: u32, len: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Exploitable iff the bytes at `addr` differ from `expected` when the run
/// reaches one of `at` (any halting point when empty).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputMismatch {
    pub addr: u32,
    pub expected: Vec<u8>,
    pub at: Vec<u32>,
}

impl OutputMismatch {
    pub fn new(state: &MachineState, addr: u32, expected: Vec<u8>) -> Result<Self, OracleError> {
        if !state.mem.in_ram(addr, expected.len() as u32) {
            return Err(OracleError::NotInRam {
                addr,
                len: expected.len(),
            });
        }
        Ok(Self {
            addr,
            expected,
            at: Vec::new(),
        })
    }
}

impl ExploitabilityModel for OutputMismatch {
    fn name(&self) -> &str {
        "output-mismatch"
    }

    fn is_exploitable(&self, state: &MachineState, halt_addr: u32) -> bool {
        if !self.at.is_empty() && !self.at.contains(&halt_addr) {
            return false;
        }
        state.mem.read_bytes(self.addr, self.expected.len()) != Some(&self.expected[..])
    }
}

/// Rounds whose input state lies in the DFA window: after round 7's
/// MixColumns (and AddRoundKey) up to the final SubBytes.
pub const DFA_WINDOW: [usize; 3] = [8, 9, 10];

/// AES differential fault model. The ciphertext read at the halting point
/// is decrypted backwards with the known key; the fault is usable for DFA
/// iff one of the window states differs from the fault-free reference in
/// exactly one byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfaAes {
    aes: Aes128,
    reference: [Block; 12],
    pub ciphertext_addr: u32,
    pub at: Vec<u32>,
}

impl DfaAes {
    pub fn new(key: &Block, plaintext: &Block, ciphertext_addr: u32) -> Self {
        let aes = Aes128::new(key);
        let reference = aes.round_inputs(plaintext);
        Self {
            aes,
            reference,
            ciphertext_addr,
            at: Vec::new(),
        }
    }

    pub fn reference_ciphertext(&self) -> &Block {
        &self.reference[11]
    }

    /// The verdict for an observed ciphertext.
    pub fn check_ciphertext(&self, ct: &Block) -> bool {
        let back = self.aes.backward_round_inputs(ct);
        DFA_WINDOW.iter().any(|&r| {
            back[r]
                .iter()
                .zip(&self.reference[r])
                .filter(|(a, b)| a != b)
                .count()
                == 1
        })
    }
}

impl ExploitabilityModel for DfaAes {
    fn name(&self) -> &str {
        "dfa-aes"
    }

    fn is_exploitable(&self, state: &MachineState, halt_addr: u32) -> bool {
        if !self.at.is_empty() && !self.at.contains(&halt_addr) {
            return false;
        }
        match state.mem.read_bytes(self.ciphertext_addr, 16) {
            Some(b) => self.check_ciphertext(b.try_into().expect("16 bytes")),
            None => false,
        }
    }
}

impl fmt::Debug for dyn ExploitabilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExploitabilityModel({})", self.name())
    }
}
