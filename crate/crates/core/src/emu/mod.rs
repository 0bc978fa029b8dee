//! Instruction-accurate ARMv6-M emulator with a declared ARMv7-M subset.
//!
//! The emulator is built to survive arbitrary (faulty) instruction streams:
//! every halfword pattern decodes to an instruction or a classified error,
//! every memory access outside the configured regions is a classified memory
//! error, and every architecturally unpredictable case is routed through a
//! [`UbProfile`] that either aborts with a classification (the default) or
//! applies behavior profiled on a specific chip.
//!
//! All observation and fault injection goes through [`Hooks`]. A hook can
//! replace the fetched encoding after decode; the replacement is decoded from
//! scratch, including width. When a 32-bit slot turns into a 16-bit
//! instruction, the second halfword of the faulted fetch is executed as the
//! next instruction.
//!
//! # Capability manifest
//!
//! | Level | Instructions |
//! |-------|--------------|
//! | v6-M  | every 16-bit Thumb instruction of ARMv6-M, `BL`, `MSR`, `MRS`, `DSB`, `DMB`, `ISB` |
//! | v7-M subset | `CBZ`/`CBNZ`, `IT`, `MOVW`/`MOVT`, 32-bit data processing with modified immediate, 32-bit `LDR`/`STR` (byte, halfword, word, signed) with 12-bit immediate, 8-bit immediate with pre/post indexing and write-back, and literal addressing, 32-bit `B` with and without condition |
//!
//! Other 32-bit encodings decode to [`DecodeError::Unsupported`] under the
//! v7-M subset and to [`DecodeError::Undefined`] under v6-M.

mod decode;
mod disasm;
mod exec;
mod hooks;
mod loader;
mod memory;
mod profile;
mod snapshot;

pub use decode::{
    decode, decode_with_ub, is_wide_prefix, AddrMode, AluOp, BarrierKind, Cond, Decoded,
    DecodeError, ExtendKind, HintKind, Instruction, MemAccess, MemSize, Op, RevKind, ShiftKind,
    WideAluOp, Width,
};
pub use disasm::disassemble;
pub use hooks::{FetchAction, Fetched, HookContext, Hooks, NoHooks};
pub use loader::{load_elf, Boot, LoadError, LoadedImage};
pub use memory::{
    AccessKind, DirtyRanges, Memory, MemoryError, MemoryErrorKind, MemoryLayout, Span,
    DEFAULT_FLASH_BASE, DEFAULT_FLASH_SIZE, DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE,
};
pub use profile::{ProfileError, UbAction, UbCondition, UbProfile};
pub use snapshot::{RestoreStats, Snapshot};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Register identifier used by hooks and fault models: 0..=15 are the core
/// registers and 16 is xPSR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RegId(pub u8);

impl RegId {
    pub const SP: RegId = RegId(13);
    pub const LR: RegId = RegId(14);
    pub const PC: RegId = RegId(15);
    pub const XPSR: RegId = RegId(16);
    pub const COUNT: usize = 17;

    pub fn all() -> impl Iterator<Item = RegId> {
        (0..Self::COUNT as u8).map(RegId)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        const NAMES: [&str; 17] = [
            "r0", "r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8", "r9", "r10", "r11", "r12",
            "sp", "lr", "pc", "xpsr",
        ];
        NAMES.get(self.index()).copied().unwrap_or("?")
    }

    pub fn parse(s: &str) -> Option<RegId> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "sp" | "r13" => Some(Self::SP),
            "lr" | "r14" => Some(Self::LR),
            "pc" | "r15" => Some(Self::PC),
            "xpsr" | "psr" => Some(Self::XPSR),
            _ => lower
                .strip_prefix('r')
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| *n <= 12)
                .map(RegId),
        }
    }
}

impl fmt::Display for RegId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<RegId> for String {
    fn from(r: RegId) -> String {
        r.name().to_string()
    }
}

impl TryFrom<String> for RegId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        RegId::parse(&s).ok_or_else(|| format!("unknown register `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum ArchLevel {
    #[default]
    #[serde(rename = "v6m")]
    V6M,
    #[serde(rename = "v7m-subset")]
    V7MSubset,
}

impl std::str::FromStr for ArchLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v6m" | "v6-m" | "armv6-m" => Ok(ArchLevel::V6M),
            "v7m-subset" | "v7m" | "v7-m" | "armv7-m" => Ok(ArchLevel::V7MSubset),
            _ => Err(format!("unknown architecture level `{s}`")),
        }
    }
}

impl fmt::Display for ArchLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchLevel::V6M => "v6m",
            ArchLevel::V7MSubset => "v7m-subset",
        })
    }
}

pub const XPSR_N: u32 = 1 << 31;
pub const XPSR_Z: u32 = 1 << 30;
pub const XPSR_C: u32 = 1 << 29;
pub const XPSR_V: u32 = 1 << 28;
pub const XPSR_T: u32 = 1 << 24;
const XPSR_IT_MASK: u32 = (0b11 << 25) | (0x3F << 10);

/// Extracts ITSTATE[7:0] from xPSR.
pub fn it_state(xpsr: u32) -> u8 {
    (((xpsr >> 25) & 0b11) | (((xpsr >> 10) & 0x3F) << 2)) as u8
}

pub fn with_it_state(xpsr: u32, it: u8) -> u32 {
    let it = it as u32;
    (xpsr & !XPSR_IT_MASK) | ((it & 0b11) << 25) | (((it >> 2) & 0x3F) << 10)
}

fn advance_it(it: u8) -> u8 {
    if it & 0b111 == 0 {
        0
    } else {
        (it & 0xE0) | ((it << 1) & 0x1F)
    }
}

/// Second half of a faulted 32-bit fetch that decoded as a 16-bit
/// instruction; it is executed by the next step if execution falls through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingHalfword {
    pub addr: u32,
    pub halfword: u16,
}

/// The complete restorable emulator state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    /// R0-R15. `regs[13]` is the active stack pointer.
    pub regs: [u32; 16],
    pub xpsr: u32,
    pub primask: bool,
    pub control: u32,
    /// The banked stack pointer not selected by CONTROL.SPSEL.
    pub inactive_sp: u32,
    pub instr_count: u64,
    pub pending: Option<PendingHalfword>,
    pub mem: Memory,
}

impl MachineState {
    pub fn new(layout: &MemoryLayout) -> Self {
        Self {
            regs: [0; 16],
            xpsr: XPSR_T,
            primask: false,
            control: 0,
            inactive_sp: 0,
            instr_count: 0,
            pending: None,
            mem: Memory::new(layout),
        }
    }

    pub fn reg(&self, r: RegId) -> u32 {
        match r.0 {
            0..=15 => self.regs[r.index()],
            _ => self.xpsr,
        }
    }

    /// Raw register write without hooks. SP writes drop bits [1:0].
    pub fn set_reg(&mut self, r: RegId, value: u32) {
        match r.0 {
            13 => self.regs[13] = value & !3,
            0..=15 => self.regs[r.index()] = value,
            _ => self.xpsr = value,
        }
    }

    pub fn pc(&self) -> u32 {
        self.regs[15]
    }

    pub fn thumb(&self) -> bool {
        self.xpsr & XPSR_T != 0
    }

    pub fn msp(&self) -> u32 {
        if self.control & 2 == 0 {
            self.regs[13]
        } else {
            self.inactive_sp
        }
    }

    pub fn psp(&self) -> u32 {
        if self.control & 2 != 0 {
            self.regs[13]
        } else {
            self.inactive_sp
        }
    }

    /// Compares registers, status and memory contents, ignoring snapshot
    /// bookkeeping.
    pub fn same_as(&self, other: &MachineState) -> bool {
        self == other
    }
}

/// Why the core stopped with a hard fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "condition")]
pub enum HardFaultCause {
    /// A profiled undefined-behavior case whose tabulated effect is a hard fault.
    Profiled(UbCondition),
    /// Execution attempted with EPSR.T clear.
    InvalidState,
    SupervisorCall,
    Breakpoint,
}

/// Coarse classification of a run-terminating error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorClass {
    InvalidAssembly,
    MemoryError,
    HardFault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EmuError {
    #[error("decode error at {addr:#010x} (encoding {encoding:#x}): {error}")]
    Decode {
        addr: u32,
        encoding: u32,
        error: DecodeError,
    },
    #[error("memory error at pc {addr:#010x}: {error}")]
    Memory { addr: u32, error: MemoryError },
    #[error("hard fault at {addr:#010x}: {cause:?}")]
    HardFault { addr: u32, cause: HardFaultCause },
}

impl EmuError {
    pub fn class(&self) -> ErrorClass {
        match self {
            EmuError::Decode { .. } => ErrorClass::InvalidAssembly,
            EmuError::Memory { .. } => ErrorClass::MemoryError,
            EmuError::HardFault { .. } => ErrorClass::HardFault,
        }
    }

    pub fn addr(&self) -> u32 {
        match self {
            EmuError::Decode { addr, .. }
            | EmuError::Memory { addr, .. }
            | EmuError::HardFault { addr, .. } => *addr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RunOutcome {
    HaltingPointHit { addr: u32 },
    Timeout,
    Error { error: EmuError },
}

/// What one call to [`Emulator::step`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub addr: u32,
    pub size: u32,
    pub skipped: bool,
    /// False when an IT block condition failed.
    pub executed: bool,
}

static NEXT_EMULATOR_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_EMULATOR_ID.fetch_add(1, Ordering::Relaxed)
}

/// An emulator instance: machine state plus configuration.
#[derive(Debug)]
pub struct Emulator {
    pub state: MachineState,
    arch: ArchLevel,
    profile: Arc<UbProfile>,
    id: u64,
}

impl Clone for Emulator {
    /// The clone gets its own identity and starts without snapshot
    /// bookkeeping; snapshots of the original restore into it by full copy.
    fn clone(&self) -> Self {
        let mut state = self.state.clone();
        state.mem.journal = Default::default();
        Self {
            state,
            arch: self.arch,
            profile: self.profile.clone(),
            id: next_id(),
        }
    }
}

impl Emulator {
    pub fn new(layout: &MemoryLayout, arch: ArchLevel, profile: Arc<UbProfile>) -> Self {
        Self::from_state(MachineState::new(layout), arch, profile)
    }

    pub fn from_state(mut state: MachineState, arch: ArchLevel, profile: Arc<UbProfile>) -> Self {
        state.mem.journal = Default::default();
        Self {
            state,
            arch,
            profile,
            id: next_id(),
        }
    }

    pub fn arch(&self) -> ArchLevel {
        self.arch
    }

    pub fn profile(&self) -> &Arc<UbProfile> {
        &self.profile
    }

    pub fn set_profile(&mut self, profile: Arc<UbProfile>) {
        self.profile = profile;
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn reg(&self, r: RegId) -> u32 {
        self.state.reg(r)
    }

    pub fn set_reg(&mut self, r: RegId, value: u32) {
        self.state.set_reg(r, value)
    }

    pub fn instr_count(&self) -> u64 {
        self.state.instr_count
    }

    fn fetch(&self, addr: u32) -> Result<u16, EmuError> {
        self.state
            .mem
            .fetch_halfword(addr)
            .map_err(|error| EmuError::Memory { addr, error })
    }

    /// Executes one instruction.
    pub fn step<H: Hooks>(&mut self, hooks: &mut H) -> Result<StepInfo, EmuError> {
        let mut ctx = HookContext {
            instr_count: self.state.instr_count,
            pc: self.state.regs[15],
        };
        hooks.before_step(&ctx, &mut self.state);
        let addr = self.state.regs[15];
        ctx.pc = addr;

        if !self.state.thumb() {
            match self.profile.action(UbCondition::ThumbBitClear) {
                UbAction::Execute | UbAction::Nop => {}
                UbAction::HardFault => {
                    return Err(EmuError::HardFault {
                        addr,
                        cause: HardFaultCause::InvalidState,
                    })
                }
                _ => {
                    return Err(EmuError::Decode {
                        addr,
                        encoding: 0,
                        error: DecodeError::Unpredictable(UbCondition::ThumbBitClear),
                    })
                }
            }
        }

        hooks.before_fetch(&ctx);
        let pending = self.state.pending.take();
        let hw1 = match pending {
            Some(p) if p.addr == addr => p.halfword,
            _ => self.fetch(addr)?,
        };
        let mut fetched = Fetched {
            addr,
            halfwords: [hw1, 0],
            wide: is_wide_prefix(hw1),
        };
        if fetched.wide {
            fetched.halfwords[1] = self.fetch(addr.wrapping_add(2))?;
        }
        let original = fetched;
        let action = hooks.after_decode(&ctx, &mut fetched);
        let mut split = None;
        if fetched.halfwords != original.halfwords || fetched.wide != original.wide {
            let now_wide = is_wide_prefix(fetched.halfwords[0]);
            if now_wide && !original.wide {
                fetched.halfwords[1] = self.fetch(addr.wrapping_add(2))?;
            } else if !now_wide && original.wide {
                split = Some(PendingHalfword {
                    addr: addr.wrapping_add(2),
                    halfword: fetched.halfwords[1],
                });
            }
            fetched.wide = now_wide;
        }
        let size = fetched.size();
        let in_it = self.arch == ArchLevel::V7MSubset && it_state(self.state.xpsr) & 0xF != 0;

        if action == FetchAction::Skip {
            hooks.on_skip(&ctx, &fetched);
            self.finish(addr.wrapping_add(size), split, in_it);
            return Ok(StepInfo {
                addr,
                size,
                skipped: true,
                executed: false,
            });
        }

        let halfwords = if fetched.wide {
            &fetched.halfwords[..]
        } else {
            &fetched.halfwords[..1]
        };
        let decoded = decode_with_ub(halfwords, self.arch).map_err(|error| EmuError::Decode {
            addr,
            encoding: fetched.encoding(),
            error,
        })?;
        let instr = decoded.instr;
        let mut ub = decoded.ub;

        let mut condition_passed = true;
        if in_it {
            let it = it_state(self.state.xpsr);
            let last = it & 0xF == 0b1000;
            if ub.is_none() && !instr.allowed_in_it_block(last) {
                ub = Some(UbCondition::ItBlock);
            }
            if ub.is_none() {
                let mut ex = exec::Exec::new(&mut self.state, hooks, ctx, addr, size, false, false);
                let flags = ex.read_flags();
                condition_passed = decode::cond_passed(it >> 4, flags);
            }
        }

        let mut special = None;
        if let Some(cond) = ub {
            match self.profile.action(cond) {
                UbAction::Abort => {
                    return Err(EmuError::Decode {
                        addr,
                        encoding: fetched.encoding(),
                        error: DecodeError::Unpredictable(cond),
                    })
                }
                UbAction::HardFault => {
                    return Err(EmuError::HardFault {
                        addr,
                        cause: HardFaultCause::Profiled(cond),
                    })
                }
                UbAction::Nop => condition_passed = false,
                UbAction::Execute => {}
                other => special = Some(other),
            }
        }

        let mut next_pc = addr.wrapping_add(size);
        if condition_passed {
            let allow_unaligned = self.profile.allow_unaligned;
            let mut ex = exec::Exec::new(
                &mut self.state,
                hooks,
                ctx,
                addr,
                size,
                !in_it,
                allow_unaligned,
            );
            let result = match special {
                Some(action) => ex.execute_special(&instr, action),
                None => ex.execute(&instr),
            };
            next_pc = ex.next_pc;
            result?;
        }
        hooks.after_execute(&ctx, &instr);
        let sets_it = matches!(instr.op, Op::It { .. }) && condition_passed;
        self.finish(next_pc, split, in_it && !sets_it);
        Ok(StepInfo {
            addr,
            size,
            skipped: false,
            executed: condition_passed,
        })
    }

    fn finish(&mut self, next_pc: u32, split: Option<PendingHalfword>, advance: bool) {
        self.state.regs[15] = next_pc;
        self.state.pending = split;
        if advance {
            let it = advance_it(it_state(self.state.xpsr));
            self.state.xpsr = with_it_state(self.state.xpsr, it);
        }
        self.state.instr_count += 1;
    }

    /// Runs until a halting point is about to execute, `max_instructions`
    /// instructions have executed, or an error occurs.
    pub fn run_until<H: Hooks>(
        &mut self,
        hooks: &mut H,
        halting_points: &[u32],
        max_instructions: u64,
    ) -> RunOutcome {
        let deadline = self.state.instr_count.saturating_add(max_instructions);
        self.run_until_count(hooks, halting_points, deadline)
    }

    /// Like [`Emulator::run_until`] with an absolute instruction-count deadline.
    pub fn run_until_count<H: Hooks>(
        &mut self,
        hooks: &mut H,
        halting_points: &[u32],
        deadline: u64,
    ) -> RunOutcome {
        loop {
            let pc = self.state.regs[15];
            if halting_points.contains(&pc) {
                return RunOutcome::HaltingPointHit { addr: pc };
            }
            if self.state.instr_count >= deadline {
                return RunOutcome::Timeout;
            }
            if let Err(error) = self.step(hooks) {
                return RunOutcome::Error { error };
            }
        }
    }
}
