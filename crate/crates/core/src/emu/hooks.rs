use super::{decode::is_wide_prefix, Instruction, MachineState, RegId};

/// Position of the instruction a hook fires for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HookContext {
    /// Time index of the instruction being executed.
    pub instr_count: u64,
    /// Address of the instruction being executed.
    pub pc: u32,
}

/// Raw encoding of the instruction about to execute. Hooks may rewrite the
/// halfwords in [`Hooks::after_decode`]; the emulator then decodes the
/// result from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fetched {
    pub addr: u32,
    pub halfwords: [u16; 2],
    pub wide: bool,
}

impl Fetched {
    pub fn size(&self) -> u32 {
        if self.wide {
            4
        } else {
            2
        }
    }

    /// The encoding as a number: `hw1` for 16-bit, `hw1 << 16 | hw2` for 32-bit.
    pub fn encoding(&self) -> u32 {
        if self.wide {
            (self.halfwords[0] as u32) << 16 | self.halfwords[1] as u32
        } else {
            self.halfwords[0] as u32
        }
    }

    /// Encoding bytes in memory order.
    pub fn bytes(&self) -> Vec<u8> {
        let mut out = self.halfwords[0].to_le_bytes().to_vec();
        if self.wide {
            out.extend_from_slice(&self.halfwords[1].to_le_bytes());
        }
        out
    }

    /// Replaces the encoding from memory-order bytes (2 or 4 of them).
    pub fn set_bytes(&mut self, bytes: &[u8]) {
        self.halfwords[0] = u16::from_le_bytes([bytes[0], bytes[1]]);
        if bytes.len() >= 4 {
            self.halfwords[1] = u16::from_le_bytes([bytes[2], bytes[3]]);
        }
        self.wide = is_wide_prefix(self.halfwords[0]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FetchAction {
    #[default]
    Execute,
    /// Do not execute; the instruction still consumes one time step.
    Skip,
}

/// Observation and mutation points. Every method defaults to a no-op.
///
/// `before_step` runs before anything else in a step and may change the
/// machine state directly; fault injection uses it to apply faults that are
/// due at the current time index.
#[allow(unused_variables)]
pub trait Hooks {
    fn before_step(&mut self, ctx: &HookContext, state: &mut MachineState) {}
    fn before_fetch(&mut self, ctx: &HookContext) {}
    fn after_decode(&mut self, ctx: &HookContext, fetched: &mut Fetched) -> FetchAction {
        FetchAction::Execute
    }
    fn on_skip(&mut self, ctx: &HookContext, fetched: &Fetched) {}
    fn after_execute(&mut self, ctx: &HookContext, instr: &Instruction) {}
    fn before_reg_read(&mut self, ctx: &HookContext, reg: RegId) {}
    fn after_reg_read(&mut self, ctx: &HookContext, reg: RegId, value: &mut u32) {}
    fn before_reg_write(&mut self, ctx: &HookContext, reg: RegId, value: &mut u32) {}
    fn after_reg_write(&mut self, ctx: &HookContext, reg: RegId, value: u32) {}
    fn before_mem_read(&mut self, ctx: &HookContext, addr: u32, size: u8) {}
    fn after_mem_read(&mut self, ctx: &HookContext, addr: u32, size: u8, value: &mut u32) {}
    fn before_mem_write(&mut self, ctx: &HookContext, addr: u32, size: u8, value: &mut u32) {}
    fn after_mem_write(&mut self, ctx: &HookContext, addr: u32, size: u8, value: u32) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoHooks;

impl Hooks for NoHooks {}

impl<H: Hooks + ?Sized> Hooks for &mut H {
    fn before_step(&mut self, ctx: &HookContext, state: &mut MachineState) {
        (**self).before_step(ctx, state)
    }
    fn before_fetch(&mut self, ctx: &HookContext) {
        (**self).before_fetch(ctx)
    }
    fn after_decode(&mut self, ctx: &HookContext, fetched: &mut Fetched) -> FetchAction {
        (**self).after_decode(ctx, fetched)
    }
    fn on_skip(&mut self, ctx: &HookContext, fetched: &Fetched) {
        (**self).on_skip(ctx, fetched)
    }
    fn after_execute(&mut self, ctx: &HookContext, instr: &Instruction) {
        (**self).after_execute(ctx, instr)
    }
    fn before_reg_read(&mut self, ctx: &HookContext, reg: RegId) {
        (**self).before_reg_read(ctx, reg)
    }
    fn after_reg_read(&mut self, ctx: &HookContext, reg: RegId, value: &mut u32) {
        (**self).after_reg_read(ctx, reg, value)
    }
    fn before_reg_write(&mut self, ctx: &HookContext, reg: RegId, value: &mut u32) {
        (**self).before_reg_write(ctx, reg, value)
    }
    fn after_reg_write(&mut self, ctx: &HookContext, reg: RegId, value: u32) {
        (**self).after_reg_write(ctx, reg, value)
    }
    fn before_mem_read(&mut self, ctx: &HookContext, addr: u32, size: u8) {
        (**self).before_mem_read(ctx, addr, size)
    }
    fn after_mem_read(&mut self, ctx: &HookContext, addr: u32, size: u8, value: &mut u32) {
        (**self).after_mem_read(ctx, addr, size, value)
    }
    fn before_mem_write(&mut self, ctx: &HookContext, addr: u32, size: u8, value: &mut u32) {
        (**self).before_mem_write(ctx, addr, size, value)
    }
    fn after_mem_write(&mut self, ctx: &HookContext, addr: u32, size: u8, value: u32) {
        (**self).after_mem_write(ctx, addr, size, value)
    }
}

/// Pairs run in order; for `after_decode` the first `Skip` wins.
impl<A: Hooks, B: Hooks> Hooks for (A, B) {
    fn before_step(&mut self, ctx: &HookContext, state: &mut MachineState) {
        self.0.before_step(ctx, state);
        self.1.before_step(ctx, state);
    }
    fn before_fetch(&mut self, ctx: &HookContext) {
        self.0.before_fetch(ctx);
        self.1.before_fetch(ctx);
    }
    fn after_decode(&mut self, ctx: &HookContext, fetched: &mut Fetched) -> FetchAction {
        let a = self.0.after_decode(ctx, fetched);
        let b = self.1.after_decode(ctx, fetched);
        if a == FetchAction::Skip || b == FetchAction::Skip {
            FetchAction::Skip
        } else {
            FetchAction::Execute
        }
    }
    fn on_skip(&mut self, ctx: &HookContext, fetched: &Fetched) {
        self.0.on_skip(ctx, fetched);
        self.1.on_skip(ctx, fetched);
    }
    fn after_execute(&mut self, ctx: &HookContext, instr: &Instruction) {
        self.0.after_execute(ctx, instr);
        self.1.after_execute(ctx, instr);
    }
    fn before_reg_read(&mut self, ctx: &HookContext, reg: RegId) {
        self.0.before_reg_read(ctx, reg);
        self.1.before_reg_read(ctx, reg);
    }
    fn after_reg_read(&mut self, ctx: &HookContext, reg: RegId, value: &mut u32) {
        self.0.after_reg_read(ctx, reg, value);
        self.1.after_reg_read(ctx, reg, value);
    }
    fn before_reg_write(&mut self, ctx: &HookContext, reg: RegId, value: &mut u32) {
        self.0.before_reg_write(ctx, reg, value);
        self.1.before_reg_write(ctx, reg, value);
    }
    fn after_reg_write(&mut self, ctx: &HookContext, reg: RegId, value: u32) {
        self.0.after_reg_write(ctx, reg, value);
        self.1.after_reg_write(ctx, reg, value);
    }
    fn before_mem_read(&mut self, ctx: &HookContext, addr: u32, size: u8) {
        self.0.before_mem_read(ctx, addr, size);
        self.1.before_mem_read(ctx, addr, size);
    }
    fn after_mem_read(&mut self, ctx: &HookContext, addr: u32, size: u8, value: &mut u32) {
        self.0.after_mem_read(ctx, addr, size, value);
        self.1.after_mem_read(ctx, addr, size, value);
    }
    fn before_mem_write(&mut self, ctx: &HookContext, addr: u32, size: u8, value: &mut u32) {
        self.0.before_mem_write(ctx, addr, size, value);
        self.1.before_mem_write(ctx, addr, size, value);
    }
    fn after_mem_write(&mut self, ctx: &HookContext, addr: u32, size: u8, value: u32) {
        self.0.after_mem_write(ctx, addr, size, value);
        self.1.after_mem_write(ctx, addr, size, value);
    }
}
