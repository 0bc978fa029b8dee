//! Helpers shared by the integration tests: reference-emulator vectors and
//! brute-force campaign oracles.
#![allow(dead_code)]

pub mod naive;

use std::path::PathBuf;
use std::sync::Arc;

use faultscope::emu::{ArchLevel, Emulator, MemoryLayout, NoHooks, UbProfile, XPSR_T};
use serde::Deserialize;

pub const CODE: u32 = 0x8000;
pub const FLASH_LEN: usize = 0x800;
pub const RAM: u32 = 0x2000_0000;
pub const RAM_LEN: usize = 0x600;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// xorshift32 byte stream; must match the vector generator.
pub fn stream(seed: u32, n: usize) -> Vec<u8> {
    let mut x = seed | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 17;
            x ^= x << 5;
            (x >> 24) as u8
        })
        .collect()
}

/// One instruction executed by the reference emulator.
#[derive(Debug, Deserialize)]
pub struct Vector {
    pub class: String,
    pub code: Vec<u16>,
    pub seed: u32,
    pub regs: [u32; 15],
    pub apsr: u32,
    pub out_regs: [u32; 16],
    pub out_apsr: u32,
    pub writes: Vec<(u32, u8)>,
}

pub fn load_vectors() -> Vec<Vector> {
    let text = std::fs::read_to_string(data_path("unicorn_v6m.jsonl")).expect("vector file");
    text.lines()
        .map(|l| serde_json::from_str(l).expect("vector line"))
        .collect()
}

/// Runs one vector on our emulator. Returns a description of the first
/// difference.
pub fn check_vector(v: &Vector) -> Result<(), String> {
    let mut emu = Emulator::new(&MemoryLayout::default(), ArchLevel::V6M, Arc::new(UbProfile::default()));
    let mut flash = stream(v.seed, FLASH_LEN);
    for (i, hw) in v.code.iter().enumerate() {
        flash[2 * i..2 * i + 2].copy_from_slice(&hw.to_le_bytes());
    }
    let ram = stream(v.seed ^ 0x9E37_79B9, RAM_LEN);
    emu.state.mem.load(CODE, &flash).unwrap();
    emu.state.mem.load(RAM, &ram).unwrap();
    emu.state.regs[..15].copy_from_slice(&v.regs);
    emu.state.regs[15] = CODE;
    emu.state.xpsr = v.apsr | XPSR_T;
    emu.step(&mut NoHooks).map_err(|e| format!("{e}"))?;

    for (i, (&got, &want)) in emu.state.regs.iter().zip(&v.out_regs).enumerate() {
        if got != want {
            return Err(format!("r{i}: {got:#010x} != {want:#010x}"));
        }
    }
    if emu.state.xpsr & 0xF000_0000 != v.out_apsr {
        return Err(format!("flags {:#x} != {:#x}", emu.state.xpsr >> 28, v.out_apsr >> 28));
    }
    let after = emu.state.mem.read_bytes(RAM, RAM_LEN).unwrap();
    let writes: Vec<(u32, u8)> = (0..RAM_LEN)
        .filter(|&i| after[i] != ram[i])
        .map(|i| (RAM + i as u32, after[i]))
        .collect();
    if writes != v.writes {
        return Err(format!("memory writes {writes:?} != {:?}", v.writes));
    }
    Ok(())
}

/// Runs every vector; returns (count, mismatch descriptions).
pub fn differential() -> (usize, Vec<String>) {
    let vectors = load_vectors();
    let errors = vectors
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            check_vector(v)
                .err()
                .map(|e| format!("#{i} {} {:04x?}: {e}", v.class, v.code))
        })
        .collect();
    (vectors.len(), errors)
}
