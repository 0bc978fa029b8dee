//! Installation of concrete faults as emulator hooks.

use serde::{Deserialize, Serialize};

use super::{encoding_of, ConcreteFault, Effect, Lifetime, Location};
use crate::emu::{Emulator, FetchAction, Fetched, HookContext, Hooks, MachineState, RegId};

/// A fault taking effect during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub time: u64,
    /// Index of the fault in its [`FaultSet`].
    pub fault: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstallError {
    #[error("fault time {time} already passed (emulator at {now})")]
    TimePassed { time: u64, now: u64 },
    #[error("malformed fault: {0}")]
    Malformed(String),
}

/// The faults active in one run.
///
/// Effects fire by instruction index:
/// - permanent instruction faults patch memory when instruction `t` is
///   about to execute (skips instead drop every fetch of the address);
/// - transient instruction faults rewrite the fetched encoding at `t`;
/// - permanent and until-overwrite register faults modify the stored value
///   before `t`; permanent ones are re-applied to every later write;
/// - transient register faults modify the values read by instruction `t`.
#[derive(Debug, Clone, Default)]
pub struct FaultSet {
    faults: Vec<ConcreteFault>,
    read_mask: u32,
    write_mask: u32,
    instruction: bool,
    events: Option<Vec<FaultEvent>>,
}

impl FaultSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// A set that records a [`FaultEvent`] for every application.
    pub fn with_events() -> Self {
        Self {
            events: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn faults(&self) -> &[ConcreteFault] {
        &self.faults
    }

    pub fn len(&self) -> usize {
        self.faults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn take_events(&mut self) -> Vec<FaultEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Arms `fault` for the run continuing from `emu`'s current position.
    pub fn install(&mut self, fault: ConcreteFault, emu: &Emulator) -> Result<(), InstallError> {
        let now = emu.instr_count();
        if fault.point.time < now {
            return Err(InstallError::TimePassed {
                time: fault.point.time,
                now,
            });
        }
        self.push(fault)
    }

    /// Arms `fault` without a position check.
    pub fn push(&mut self, fault: ConcreteFault) -> Result<(), InstallError> {
        let malformed = |m: &str| Err(InstallError::Malformed(format!("{fault}: {m}")));
        if !fault.effect.valid_for(fault.target()) {
            return malformed("effect does not apply to this target");
        }
        let bytes = match fault.point.location {
            Location::Instruction { .. } => {
                if fault.lifetime == Lifetime::UntilOverwrite {
                    return malformed("until-overwrite instruction fault");
                }
                match fault.width {
                    Some(w @ (2 | 4)) => w as u32,
                    None if fault.effect == Effect::Skip => 2,
                    _ => return malformed("instruction width must be 2 or 4"),
                }
            }
            Location::Register { reg } => {
                if reg.index() >= RegId::COUNT {
                    return malformed("no such register");
                }
                match fault.lifetime {
                    Lifetime::Transient => self.read_mask |= 1 << reg.0,
                    Lifetime::Permanent => self.write_mask |= 1 << reg.0,
                    Lifetime::UntilOverwrite => {}
                }
                4
            }
        };
        match (fault.effect.positions(bytes), fault.point.sub_index) {
            (None, None) => {}
            (Some(n), Some(s)) if (s as u32) < n => {}
            _ => return malformed("sub-index out of range"),
        }
        if matches!(fault.point.location, Location::Instruction { .. }) {
            self.instruction = true;
        }
        self.faults.push(fault);
        Ok(())
    }

    fn log(&mut self, time: u64, fault: usize, detail: impl FnOnce() -> String) {
        if let Some(ev) = &mut self.events {
            ev.push(FaultEvent {
                time,
                fault,
                detail: detail(),
            });
        }
    }
}

impl Hooks for FaultSet {
    fn before_step(&mut self, ctx: &HookContext, state: &mut MachineState) {
        for i in 0..self.faults.len() {
            let f = &self.faults[i];
            if f.point.time != ctx.instr_count {
                continue;
            }
            let (effect, sub) = (f.effect, f.point.sub_index);
            match (f.point.location, f.lifetime) {
                (Location::Register { reg }, Lifetime::Permanent | Lifetime::UntilOverwrite) => {
                    let old = state.reg(reg);
                    let new = effect.apply_word(old, sub);
                    state.set_reg(reg, new);
                    self.log(ctx.instr_count, i, || format!("{reg} {old:#010x} -> {new:#010x}"));
                }
                (Location::Instruction { addr }, Lifetime::Permanent) if effect != Effect::Skip => {
                    let width = f.width.unwrap_or(2) as usize;
                    let Some(old) = state.mem.read_bytes(addr, width).map(<[u8]>::to_vec) else {
                        self.log(ctx.instr_count, i, || format!("insn@{addr:#x} unmapped"));
                        continue;
                    };
                    let mut new = old.clone();
                    effect.apply_bytes(&mut new, sub);
                    let sp = state.regs[13];
                    let _ = state.mem.patch(addr, &new, sp);
                    self.log(ctx.instr_count, i, || {
                        format!(
                            "insn@{addr:#x} patched {:x} -> {:x}",
                            encoding_of(&old),
                            encoding_of(&new)
                        )
                    });
                }
                _ => {}
            }
        }
    }

    fn after_decode(&mut self, ctx: &HookContext, fetched: &mut Fetched) -> FetchAction {
        if !self.instruction {
            return FetchAction::Execute;
        }
        let mut action = FetchAction::Execute;
        for i in 0..self.faults.len() {
            let f = &self.faults[i];
            let Location::Instruction { addr } = f.point.location else {
                continue;
            };
            if addr != fetched.addr {
                continue;
            }
            let (effect, sub) = (f.effect, f.point.sub_index);
            match f.lifetime {
                Lifetime::Transient if f.point.time == ctx.instr_count => {
                    if effect == Effect::Skip {
                        action = FetchAction::Skip;
                        self.log(ctx.instr_count, i, || format!("insn@{addr:#x} skipped"));
                    } else {
                        let mut bytes = fetched.bytes();
                        if sub.map_or(true, |s| effect.positions(bytes.len() as u32).unwrap_or(0) > s as u32) {
                            let old = fetched.encoding();
                            effect.apply_bytes(&mut bytes, sub);
                            fetched.set_bytes(&bytes);
                            let new = encoding_of(&bytes);
                            self.log(ctx.instr_count, i, || {
                                format!("insn@{addr:#x} fetched {old:x} -> {new:x}")
                            });
                        }
                    }
                }
                Lifetime::Permanent if effect == Effect::Skip && ctx.instr_count >= f.point.time => {
                    action = FetchAction::Skip;
                    self.log(ctx.instr_count, i, || format!("insn@{addr:#x} skipped"));
                }
                _ => {}
            }
        }
        action
    }

    fn after_reg_read(&mut self, ctx: &HookContext, reg: RegId, value: &mut u32) {
        if self.read_mask & 1 << reg.0 == 0 {
            return;
        }
        for i in 0..self.faults.len() {
            let f = &self.faults[i];
            if f.lifetime == Lifetime::Transient
                && f.point.time == ctx.instr_count
                && f.point.location == (Location::Register { reg })
            {
                let old = *value;
                *value = f.effect.apply_word(old, f.point.sub_index);
                let new = *value;
                self.log(ctx.instr_count, i, || format!("{reg} read {old:#010x} -> {new:#010x}"));
            }
        }
    }

    fn before_reg_write(&mut self, ctx: &HookContext, reg: RegId, value: &mut u32) {
        if self.write_mask & 1 << reg.0 == 0 {
            return;
        }
        for i in 0..self.faults.len() {
            let f = &self.faults[i];
            if f.lifetime == Lifetime::Permanent
                && ctx.instr_count >= f.point.time
                && f.point.location == (Location::Register { reg })
            {
                let old = *value;
                *value = f.effect.apply_word(old, f.point.sub_index);
                let new = *value;
                self.log(ctx.instr_count, i, || format!("{reg} write {old:#010x} -> {new:#010x}"));
            }
        }
    }
}
