//! Small fault-injection targets with known behavior.

use std::sync::Arc;

use super::{Program, ProgramBuilder};
use crate::campaign::CampaignConfig;
use crate::emu::{ArchLevel, Cond, Emulator, NoHooks, RunOutcome, UbProfile};
use crate::faults::FaultModelSpec;
use crate::oracles::{AddressReached, ExploitabilityModel, OutputMismatch};

pub const RAM: u32 = 0x2000_0000;

/// A program, its inputs and its attack goal.
#[derive(Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub program: Program,
    pub arch: ArchLevel,
    pub halting_points: Vec<u32>,
    /// Bytes written to memory before the run.
    pub inputs: Vec<(u32, Vec<u8>)>,
    pub oracle: Arc<dyn ExploitabilityModel>,
    pub timeout: u64,
}

impl std::fmt::Debug for Fixture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fixture").field("name", &self.name).finish_non_exhaustive()
    }
}

impl Fixture {
    pub fn emulator(&self) -> Emulator {
        let mut emu = self.program.emulator(self.arch, UbProfile::default());
        for (addr, bytes) in &self.inputs {
            emu.state.mem.load(*addr, bytes).expect("fixture input is mapped");
        }
        emu
    }

    pub fn symbol(&self, name: &str) -> u32 {
        self.program.symbol(name)
    }

    pub fn config(&self, models: Vec<FaultModelSpec>, max_order: usize) -> CampaignConfig {
        CampaignConfig {
            emulator: self.emulator(),
            models,
            oracle: self.oracle.clone(),
            halting_points: self.halting_points.clone(),
            max_order,
            timeout: self.timeout,
            excluded: Vec::new(),
            workers: 1,
            record_pruned: false,
        }
    }

    /// Fault-free run to a halting point.
    pub fn reference_run(&self) -> (Emulator, RunOutcome) {
        let mut emu = self.emulator();
        let out = emu.run_until(&mut NoHooks, &self.halting_points, self.timeout);
        (emu, out)
    }
}

/// Compares a 4-byte RAM input against a PIN stored in flash. The input
/// differs only in its last byte, so the loop runs four times before
/// denying. Goal: reach `granted`.
pub fn pin_check() -> Fixture {
    let mut b = ProgramBuilder::new(0x8000);
    b.label("start")
        .ldr_const(0, RAM)
        .ldr_addr(1, "pin", false)
        .movs(2, 0)
        .label("loop")
        .mem_reg(6, 3, 0, 2)
        .mem_reg(6, 4, 1, 2)
        .cmp(3, 4)
        .b_cond(Cond::Ne, "denied")
        .adds_imm(2, 2, 1)
        .cmp_imm(2, 4)
        .b_cond(Cond::Ne, "loop")
        .label("granted")
        .nop()
        .label("denied")
        .nop()
        .align4()
        .label("pin")
        .word(u32::from_le_bytes(*b"1234"));
    let program = b.finish().expect("pin-check assembles");
    Fixture {
        name: "pin-check",
        arch: ArchLevel::V6M,
        halting_points: vec![program.symbol("granted"), program.symbol("denied")],
        inputs: vec![(RAM, b"1239".to_vec())],
        oracle: Arc::new(AddressReached::new(program.symbol("granted"))),
        timeout: 200,
        program,
    }
}

/// Sums an 8-byte flash table in a subroutine and stores the result to
/// RAM. Goal: any change of the stored sum.
pub fn checksum() -> Fixture {
    let out = RAM + 0x100;
    let mut b = ProgramBuilder::new(0x8000);
    b.label("start")
        .ldr_addr(0, "table", false)
        .movs(1, 8)
        .bl("sum")
        .ldr_const(1, out)
        .str(0, 1, 0)
        .label("done")
        .nop()
        .label("sum")
        .push(0x4010)
        .movs(2, 0)
        .label("sum_loop")
        .ldrb(4, 0, 0)
        .adds(2, 2, 4)
        .adds_imm(0, 0, 1)
        .subs_imm(1, 1, 1)
        .b_cond(Cond::Ne, "sum_loop")
        .mov(0, 2)
        .pop(0x8010)
        .align4()
        .label("table")
        .word(0x0403_0201)
        .word(0x0807_0605);
    let program = b.finish().expect("checksum assembles");
    let done = program.symbol("done");
    let mut fx = Fixture {
        name: "checksum",
        arch: ArchLevel::V6M,
        halting_points: vec![done],
        inputs: Vec::new(),
        oracle: Arc::new(AddressReached::new(done)),
        timeout: 300,
        program,
    };
    let (emu, _) = fx.reference_run();
    let mut m = OutputMismatch::new(&emu.state, out, 36u32.to_le_bytes().to_vec()).expect("output in RAM");
    m.at = vec![done];
    fx.oracle = Arc::new(m);
    fx
}

/// Skip-call plus pointer-redirect pattern (ARMv7-M subset).
///
/// `mov r2, sp` precedes `blx r4`, which computes a digest into the stack
/// buffer. Faulting the move into `mov pc, pc` skips the call and leaves
/// the buffer zero. The comparison walks the expected digest with
/// `ldrb.w r1, [r2, #1]!`; setting its offset byte to 0xFF moves the
/// pointer into zeroed RAM. Only both faults together reach `granted`.
pub fn double_fault() -> Fixture {
    let expected = RAM + 0x10;
    let mut b = ProgramBuilder::new(0x8000);
    b.label("start")
        .sub_sp(8)
        .ldr_addr(4, "compute", true)
        .label("mov_r2_sp")
        .mov(2, 13)
        .blx(4)
        .mov(0, 13)
        .ldr_const(2, expected - 1)
        .movs(5, 0)
        .label("loop")
        .label("ldrb_pre")
        .ldrb_pre(1, 2, 1)
        .mem_reg(6, 3, 0, 5)
        .cmp(1, 3)
        .b_cond(Cond::Ne, "denied")
        .adds_imm(5, 5, 1)
        .cmp_imm(5, 4)
        .b_cond(Cond::Ne, "loop")
        .label("granted")
        .nop()
        .label("denied")
        .nop()
        .label("compute")
        .movs(1, 0x5A)
        .strb(1, 2, 0)
        .adds_imm(1, 1, 1)
        .strb(1, 2, 1)
        .adds_imm(1, 1, 1)
        .strb(1, 2, 2)
        .adds_imm(1, 1, 1)
        .strb(1, 2, 3)
        .bx(14);
    let program = b.finish().expect("double-fault assembles");
    Fixture {
        name: "double-fault",
        arch: ArchLevel::V7MSubset,
        halting_points: vec![program.symbol("granted"), program.symbol("denied")],
        inputs: vec![(expected, vec![0xDE, 0xAD, 0xBE, 0xEF])],
        oracle: Arc::new(AddressReached::new(program.symbol("granted"))),
        timeout: 300,
        program,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_free_runs_are_not_exploitable() {
        for fx in [pin_check(), checksum(), double_fault()] {
            let (emu, out) = fx.reference_run();
            let RunOutcome::HaltingPointHit { addr } = out else {
                panic!("{} did not halt: {out:?}", fx.name)
            };
            assert!(!fx.oracle.is_exploitable(&emu.state, addr), "{}", fx.name);
        }
    }

    #[test]
    fn pin_check_denies_at_last_byte() {
        let fx = pin_check();
        let (emu, out) = fx.reference_run();
        assert_eq!(out, RunOutcome::HaltingPointHit { addr: fx.symbol("denied") });
        assert_eq!(emu.state.regs[2], 3);
    }

    #[test]
    fn checksum_stores_sum() {
        let fx = checksum();
        let (emu, _) = fx.reference_run();
        assert_eq!(emu.state.mem.read_bytes(RAM + 0x100, 4), Some(&[36, 0, 0, 0][..]));
    }

    #[test]
    fn double_fault_encodings() {
        let fx = double_fault();
        let hw = fx.program.halfwords();
        let at = |sym: &str| ((fx.symbol(sym) - 0x8000) / 2) as usize;
        assert_eq!(hw[at("mov_r2_sp")], 0x466A);
        assert_eq!(&hw[at("ldrb_pre")..at("ldrb_pre") + 2], &[0xF812, 0x1F01]);
    }
}
