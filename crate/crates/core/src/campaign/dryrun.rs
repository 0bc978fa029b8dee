//! Fault-free (or prefix-faulted) runs that record the executed
//! instructions and register uses.

use serde::{Deserialize, Serialize};

use crate::emu::{ArchLevel, Emulator, FetchAction, Fetched, HookContext, Hooks, Instruction};
use crate::emu::{MachineState, RegId, RunOutcome};

/// One executed instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time: u64,
    pub addr: u32,
    /// Encoding as executed, after any fault substitution.
    pub halfwords: [u16; 2],
    pub wide: bool,
    /// The instruction was dropped by a skip fault.
    pub skipped: bool,
    /// Bitmask of registers read (bit 16 = xPSR).
    pub reads: u32,
    /// Bitmask of registers written.
    pub writes: u32,
}

impl TraceEntry {
    pub fn size(&self) -> u32 {
        if self.wide {
            4
        } else {
            2
        }
    }

    pub fn halfwords(&self) -> &[u16] {
        &self.halfwords[..self.size() as usize / 2]
    }

    /// Encoding bytes in memory order.
    pub fn bytes(&self) -> Vec<u8> {
        self.halfwords().iter().flat_map(|h| h.to_le_bytes()).collect()
    }

    pub fn uses(&self) -> u32 {
        self.reads | self.writes
    }

    pub fn reads_reg(&self, r: RegId) -> bool {
        self.reads & 1 << r.0 != 0
    }

    pub fn writes_reg(&self, r: RegId) -> bool {
        self.writes & 1 << r.0 != 0
    }
}

/// The instruction and register-use sequence of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DryRunTrace {
    /// Instruction index at which the run started.
    pub start_time: u64,
    pub arch: ArchLevel,
    pub entries: Vec<TraceEntry>,
    pub outcome: RunOutcome,
}

impl DryRunTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn timed_out(&self) -> bool {
        self.outcome == RunOutcome::Timeout
    }

    /// The run stopped on an emulator error before any halting point.
    pub fn failed(&self) -> bool {
        matches!(self.outcome, RunOutcome::Error { .. })
    }
}

/// Hooks recording a [`DryRunTrace`]. Compose after fault hooks so that
/// substituted encodings are recorded.
#[derive(Debug, Default)]
pub struct Recorder {
    pub entries: Vec<TraceEntry>,
    current: Option<TraceEntry>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    fn close(&mut self) {
        if let Some(e) = self.current.take() {
            self.entries.push(e);
        }
    }
}

impl Hooks for Recorder {
    fn before_step(&mut self, _: &HookContext, _: &mut MachineState) {
        // A step that failed never reaches `after_execute`.
        self.current = None;
    }

    fn before_fetch(&mut self, ctx: &HookContext) {
        self.current = Some(TraceEntry {
            time: ctx.instr_count,
            addr: ctx.pc,
            halfwords: [0; 2],
            wide: false,
            skipped: false,
            reads: 0,
            writes: 0,
        });
    }

    fn after_decode(&mut self, _: &HookContext, fetched: &mut Fetched) -> FetchAction {
        if let Some(e) = &mut self.current {
            e.halfwords = if fetched.wide {
                fetched.halfwords
            } else {
                [fetched.halfwords[0], 0]
            };
            e.wide = fetched.wide;
        }
        FetchAction::Execute
    }

    fn on_skip(&mut self, _: &HookContext, _: &Fetched) {
        if let Some(e) = &mut self.current {
            e.skipped = true;
        }
        self.close();
    }

    fn after_execute(&mut self, _: &HookContext, _: &Instruction) {
        self.close();
    }

    fn before_reg_read(&mut self, _: &HookContext, reg: RegId) {
        if let Some(e) = &mut self.current {
            e.reads |= 1 << reg.0;
        }
    }

    fn before_reg_write(&mut self, _: &HookContext, reg: RegId, _: &mut u32) {
        if let Some(e) = &mut self.current {
            e.writes |= 1 << reg.0;
        }
    }
}

/// Runs `emu` with `hooks` until a halting point, the absolute instruction
/// `deadline` or an error, recording the trace. The emulator is left at
/// the end of the run.
pub fn dry_run<H: Hooks>(
    emu: &mut Emulator,
    hooks: &mut H,
    halting_points: &[u32],
    deadline: u64,
) -> DryRunTrace {
    let start_time = emu.instr_count();
    let mut rec = Recorder::new();
    let outcome = emu.run_until_count(&mut (&mut *hooks, &mut rec), halting_points, deadline);
    DryRunTrace {
        start_time,
        arch: emu.arch(),
        entries: rec.entries,
        outcome,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emu::{Boot, MemoryLayout, NoHooks, UbProfile};
    use std::sync::Arc;

    fn emu(code: &[u16]) -> Emulator {
        let mut e = Emulator::new(
            &MemoryLayout::default(),
            ArchLevel::V6M,
            Arc::new(UbProfile::default()),
        );
        let bytes: Vec<u8> = code.iter().flat_map(|h| h.to_le_bytes()).collect();
        e.load_binary(&bytes, 0x8000, Boot::Explicit { pc: 0x8000, sp: 0x2000_1000 })
            .unwrap();
        e
    }

    #[test]
    fn straight_line_to_halting_point() {
        let mut e = emu(&[0xBF00; 6]);
        let t = dry_run(&mut e, &mut NoHooks, &[0x800A], 100);
        assert_eq!(t.len(), 5);
        assert_eq!(t.outcome, RunOutcome::HaltingPointHit { addr: 0x800A });
        assert_eq!(t.entries[4].time, 4);
    }

    #[test]
    fn loop_times_out_at_budget() {
        let mut e = emu(&[0xE7FE]);
        let t = dry_run(&mut e, &mut NoHooks, &[], 1000);
        assert_eq!(t.len(), 1000);
        assert!(t.timed_out());
    }

    #[test]
    fn adds_register_uses() {
        let mut e = emu(&[0x1888, 0xBF00]);
        let t = dry_run(&mut e, &mut NoHooks, &[0x8002], 10);
        let x = &t.entries[0];
        assert_eq!(x.reads, 1 << 1 | 1 << 2);
        assert_eq!(x.writes, 1 << 0 | 1 << 16);
    }

    #[test]
    fn failing_instruction_is_not_recorded() {
        let mut e = emu(&[0xBF00, 0xDE00]);
        let t = dry_run(&mut e, &mut NoHooks, &[], 10);
        assert_eq!(t.len(), 1);
        assert!(t.failed());
    }
}
