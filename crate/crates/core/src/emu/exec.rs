//! Instruction semantics.

use super::decode::{valid_sysm, AddrMode, AluOp, ExtendKind, MemSize, Op, RevKind, ShiftKind, WideAluOp};
use super::{
    with_it_state, AccessKind, EmuError, HardFaultCause, HookContext, Hooks, Instruction,
    MachineState, MemoryError, MemoryErrorKind, RegId, UbAction, XPSR_C, XPSR_N, XPSR_T, XPSR_V,
    XPSR_Z,
};

/// AddWithCarry: (result, carry, overflow).
pub fn add_with_carry(x: u32, y: u32, carry_in: bool) -> (u32, bool, bool) {
    let unsigned = x as u64 + y as u64 + carry_in as u64;
    let signed = x as i32 as i64 + y as i32 as i64 + carry_in as i64;
    let result = unsigned as u32;
    (result, unsigned >> 32 != 0, result as i32 as i64 != signed)
}

/// Shift with carry out; `None` carry means C is unchanged.
pub fn shift_c(value: u32, kind: ShiftKind, amount: u32) -> (u32, Option<bool>) {
    if amount == 0 {
        return (value, None);
    }
    match kind {
        ShiftKind::Lsl => match amount {
            1..=31 => (value << amount, Some((value >> (32 - amount)) & 1 == 1)),
            32 => (0, Some(value & 1 == 1)),
            _ => (0, Some(false)),
        },
        ShiftKind::Lsr => match amount {
            1..=31 => (value >> amount, Some((value >> (amount - 1)) & 1 == 1)),
            32 => (0, Some(value >> 31 == 1)),
            _ => (0, Some(false)),
        },
        ShiftKind::Asr => {
            let a = amount.min(32);
            let result = if a == 32 {
                ((value as i32) >> 31) as u32
            } else {
                ((value as i32) >> a) as u32
            };
            (result, Some((value as i32 >> (a - 1).min(31)) & 1 == 1))
        }
        ShiftKind::Ror => {
            let result = value.rotate_right(amount % 32);
            (result, Some(result >> 31 == 1))
        }
    }
}

pub(super) struct Exec<'a, H: Hooks> {
    st: &'a mut MachineState,
    hooks: &'a mut H,
    ctx: HookContext,
    addr: u32,
    size: u32,
    /// 16-bit instructions with optional flag setting set flags (outside
    /// IT blocks).
    flags16: bool,
    allow_unaligned: bool,
    pub next_pc: u32,
}

impl<'a, H: Hooks> Exec<'a, H> {
    pub fn new(
        st: &'a mut MachineState,
        hooks: &'a mut H,
        ctx: HookContext,
        addr: u32,
        size: u32,
        flags16: bool,
        allow_unaligned: bool,
    ) -> Self {
        Self {
            st,
            hooks,
            ctx,
            addr,
            size,
            flags16,
            allow_unaligned,
            next_pc: addr.wrapping_add(size),
        }
    }

    fn r(&mut self, reg: u8) -> u32 {
        let id = RegId(reg);
        self.hooks.before_reg_read(&self.ctx, id);
        let mut v = if reg == 15 {
            self.addr.wrapping_add(4)
        } else {
            self.st.regs[reg as usize]
        };
        self.hooks.after_reg_read(&self.ctx, id, &mut v);
        v
    }

    /// Register write; PC writes are BranchWritePC.
    fn w(&mut self, reg: u8, value: u32) {
        let id = RegId(reg);
        let mut v = value;
        self.hooks.before_reg_write(&self.ctx, id, &mut v);
        match reg {
            13 => self.st.regs[13] = v & !3,
            15 => self.next_pc = v & !1,
            _ => self.st.regs[reg as usize] = v,
        }
        self.hooks.after_reg_write(&self.ctx, id, v);
    }

    fn branch(&mut self, target: u32) {
        self.w(15, target);
    }

    /// BXWritePC / LoadWritePC: bit 0 becomes EPSR.T.
    fn bx_write(&mut self, target: u32) {
        let id = RegId::PC;
        let mut v = target;
        self.hooks.before_reg_write(&self.ctx, id, &mut v);
        if v & 1 == 0 {
            self.st.xpsr &= !XPSR_T;
        }
        self.next_pc = v & !1;
        self.hooks.after_reg_write(&self.ctx, id, v);
    }

    pub fn read_flags(&mut self) -> u32 {
        let id = RegId::XPSR;
        self.hooks.before_reg_read(&self.ctx, id);
        let mut v = self.st.xpsr;
        self.hooks.after_reg_read(&self.ctx, id, &mut v);
        v
    }

    fn carry(&mut self) -> bool {
        self.read_flags() & XPSR_C != 0
    }

    fn write_xpsr(&mut self, value: u32) {
        let id = RegId::XPSR;
        let mut v = value;
        self.hooks.before_reg_write(&self.ctx, id, &mut v);
        self.st.xpsr = v;
        self.hooks.after_reg_write(&self.ctx, id, v);
    }

    fn set_flags(&mut self, result: u32, c: Option<bool>, v: Option<bool>) {
        let mut x = self.st.xpsr & !(XPSR_N | XPSR_Z);
        if result >> 31 == 1 {
            x |= XPSR_N;
        }
        if result == 0 {
            x |= XPSR_Z;
        }
        if let Some(c) = c {
            x = if c { x | XPSR_C } else { x & !XPSR_C };
        }
        if let Some(v) = v {
            x = if v { x | XPSR_V } else { x & !XPSR_V };
        }
        self.write_xpsr(x);
    }

    fn check_alignment(&self, addr: u32, size: u8, access: AccessKind, strict: bool) -> Result<(), EmuError> {
        if size > 1 && addr % size as u32 != 0 && (strict || !self.allow_unaligned) {
            return Err(EmuError::Memory {
                addr: self.addr,
                error: MemoryError {
                    addr,
                    size,
                    access,
                    kind: MemoryErrorKind::Unaligned,
                },
            });
        }
        Ok(())
    }

    fn load(&mut self, addr: u32, size: u8, strict: bool) -> Result<u32, EmuError> {
        self.check_alignment(addr, size, AccessKind::Read, strict)?;
        self.hooks.before_mem_read(&self.ctx, addr, size);
        let mut v = self
            .st
            .mem
            .read(addr, size, AccessKind::Read)
            .map_err(|error| EmuError::Memory {
                addr: self.addr,
                error,
            })?;
        self.hooks.after_mem_read(&self.ctx, addr, size, &mut v);
        Ok(v)
    }

    fn store(&mut self, addr: u32, size: u8, value: u32, strict: bool) -> Result<(), EmuError> {
        self.check_alignment(addr, size, AccessKind::Write, strict)?;
        let mut v = value;
        self.hooks.before_mem_write(&self.ctx, addr, size, &mut v);
        let sp = self.st.regs[13];
        self.st
            .mem
            .write(addr, size, v, sp)
            .map_err(|error| EmuError::Memory {
                addr: self.addr,
                error,
            })?;
        self.hooks.after_mem_write(&self.ctx, addr, size, v);
        Ok(())
    }

    fn link_value(&self) -> u32 {
        self.addr.wrapping_add(self.size) | 1
    }

    fn pc_aligned(&mut self) -> u32 {
        self.r(15) & !3
    }

    pub fn execute(&mut self, instr: &Instruction) -> Result<(), EmuError> {
        let fl = self.flags16;
        match instr.op {
            Op::ShiftImm { kind, rd, rm, amount } => {
                let v = self.r(rm);
                let (res, c) = shift_c(v, kind, amount as u32);
                self.w(rd, res);
                if fl {
                    self.set_flags(res, c, None);
                }
            }
            Op::AddReg { rd, rn, rm } => {
                let (a, b) = (self.r(rn), self.r(rm));
                self.arith(rd, a, b, false, fl);
            }
            Op::SubReg { rd, rn, rm } => {
                let (a, b) = (self.r(rn), self.r(rm));
                self.arith(rd, a, !b, true, fl);
            }
            Op::AddImm { rd, rn, imm } => {
                let a = self.r(rn);
                self.arith(rd, a, imm, false, fl);
            }
            Op::SubImm { rd, rn, imm } => {
                let a = self.r(rn);
                self.arith(rd, a, !imm, true, fl);
            }
            Op::MovImm { rd, imm } => {
                self.w(rd, imm);
                if fl {
                    self.set_flags(imm, None, None);
                }
            }
            Op::CmpImm { rn, imm } => {
                let a = self.r(rn);
                self.compare(a, !imm, true);
            }
            Op::Alu { op, rdn, rm } => self.alu(op, rdn, rm, fl),
            Op::AddHigh { rdn, rm } => {
                let (a, b) = (self.r(rdn), self.r(rm));
                self.w(rdn, a.wrapping_add(b));
            }
            Op::CmpHigh { rn, rm } => {
                let (a, b) = (self.r(rn), self.r(rm));
                self.compare(a, !b, true);
            }
            Op::MovHigh { rd, rm } => {
                let v = self.r(rm);
                self.w(rd, v);
            }
            Op::Bx { rm } => {
                let t = self.r(rm);
                self.bx_write(t);
            }
            Op::Blx { rm } => {
                let t = self.r(rm);
                let lr = self.addr.wrapping_add(2) | 1;
                self.w(14, lr);
                self.bx_write(t);
            }
            Op::Mem { access, rt, addr } => {
                let size = access.size.bytes();
                let (address, wback) = match addr {
                    AddrMode::Imm {
                        rn,
                        offset,
                        add,
                        index,
                        wback,
                    } => {
                        let base = self.r(rn);
                        let offset_addr = if add {
                            base.wrapping_add(offset)
                        } else {
                            base.wrapping_sub(offset)
                        };
                        (
                            if index { offset_addr } else { base },
                            wback.then_some((rn, offset_addr)),
                        )
                    }
                    AddrMode::Reg { rn, rm } => {
                        let (a, b) = (self.r(rn), self.r(rm));
                        (a.wrapping_add(b), None)
                    }
                    AddrMode::Literal { offset, add } => {
                        let base = self.pc_aligned();
                        (
                            if add {
                                base.wrapping_add(offset)
                            } else {
                                base.wrapping_sub(offset)
                            },
                            None,
                        )
                    }
                };
                if access.load {
                    let mut v = self.load(address, size, false)?;
                    if access.signed {
                        v = match access.size {
                            MemSize::Byte => v as u8 as i8 as i32 as u32,
                            MemSize::Half => v as u16 as i16 as i32 as u32,
                            MemSize::Word => v,
                        };
                    }
                    if let Some((rn, a)) = wback {
                        self.w(rn, a);
                    }
                    if rt == 15 {
                        self.bx_write(v);
                    } else {
                        self.w(rt, v);
                    }
                } else {
                    let v = self.r(rt);
                    self.store(address, size, v, false)?;
                    if let Some((rn, a)) = wback {
                        self.w(rn, a);
                    }
                }
            }
            Op::Adr { rd, imm } => {
                let base = self.pc_aligned();
                self.w(rd, base.wrapping_add(imm));
            }
            Op::AddSpImm { rd, imm } => {
                let sp = self.r(13);
                self.w(rd, sp.wrapping_add(imm));
            }
            Op::AdjustSp { imm, sub } => {
                let sp = self.r(13);
                let v = if sub {
                    sp.wrapping_sub(imm)
                } else {
                    sp.wrapping_add(imm)
                };
                self.w(13, v);
            }
            Op::Extend { kind, rd, rm } => {
                let v = self.r(rm);
                let res = match kind {
                    ExtendKind::Sxth => v as u16 as i16 as i32 as u32,
                    ExtendKind::Sxtb => v as u8 as i8 as i32 as u32,
                    ExtendKind::Uxth => v & 0xFFFF,
                    ExtendKind::Uxtb => v & 0xFF,
                };
                self.w(rd, res);
            }
            Op::Rev { kind, rd, rm } => {
                let v = self.r(rm);
                let res = match kind {
                    RevKind::Rev => v.swap_bytes(),
                    RevKind::Rev16 => ((v >> 8) & 0x00FF_00FF) | ((v << 8) & 0xFF00_FF00),
                    RevKind::Revsh => (v as u16).swap_bytes() as i16 as i32 as u32,
                };
                self.w(rd, res);
            }
            Op::Push { regs } => {
                let sp = self.r(13);
                let n = regs.count_ones();
                let start = sp.wrapping_sub(4 * n);
                let mut a = start;
                for i in 0..15u8 {
                    if regs & (1 << i) != 0 {
                        let v = self.r(i);
                        self.store(a, 4, v, true)?;
                        a = a.wrapping_add(4);
                    }
                }
                self.w(13, start);
            }
            Op::Pop { regs } => {
                let sp = self.r(13);
                let mut a = sp;
                for i in 0..8u8 {
                    if regs & (1 << i) != 0 {
                        let v = self.load(a, 4, true)?;
                        self.w(i, v);
                        a = a.wrapping_add(4);
                    }
                }
                if regs & 0x8000 != 0 {
                    let v = self.load(a, 4, true)?;
                    self.bx_write(v);
                }
                self.w(13, sp.wrapping_add(4 * regs.count_ones()));
            }
            Op::Stm { rn, regs } => {
                let base = self.r(rn);
                let mut a = base;
                for i in 0..8u8 {
                    if regs & (1 << i) != 0 {
                        let v = self.r(i);
                        self.store(a, 4, v, true)?;
                        a = a.wrapping_add(4);
                    }
                }
                self.w(rn, base.wrapping_add(4 * regs.count_ones()));
            }
            Op::Ldm { rn, regs } => {
                let base = self.r(rn);
                let mut a = base;
                for i in 0..8u8 {
                    if regs & (1 << i) != 0 {
                        let v = self.load(a, 4, true)?;
                        self.w(i, v);
                        a = a.wrapping_add(4);
                    }
                }
                if regs & (1 << rn) == 0 {
                    self.w(rn, base.wrapping_add(4 * regs.count_ones()));
                }
            }
            Op::Cps { disable } => self.st.primask = disable,
            Op::Hint(_) | Op::Barrier(_) => {}
            Op::Bkpt { .. } => {
                return Err(EmuError::HardFault {
                    addr: self.addr,
                    cause: HardFaultCause::Breakpoint,
                })
            }
            Op::Svc { .. } => {
                return Err(EmuError::HardFault {
                    addr: self.addr,
                    cause: HardFaultCause::SupervisorCall,
                })
            }
            Op::B { cond, offset } => {
                let taken = cond == super::Cond::Al || {
                    let flags = self.read_flags();
                    super::decode::cond_passed(cond.bits(), flags)
                };
                if taken {
                    let pc = self.r_pc_implicit();
                    self.branch(pc.wrapping_add(offset as u32));
                }
            }
            Op::Bl { offset } => {
                let lr = self.link_value();
                self.w(14, lr);
                let pc = self.r_pc_implicit();
                self.branch(pc.wrapping_add(offset as u32));
            }
            Op::Msr { rn, sysm } => {
                let v = self.r(rn);
                self.write_special(sysm, v);
            }
            Op::Mrs { rd, sysm } => {
                let v = self.read_special(sysm);
                self.w(rd, v);
            }
            Op::Cbz { rn, offset, nonzero } => {
                let v = self.r(rn);
                if (v != 0) == nonzero {
                    let pc = self.r_pc_implicit();
                    self.branch(pc.wrapping_add(offset));
                }
            }
            Op::It { firstcond, mask } => {
                let x = with_it_state(self.st.xpsr, (firstcond << 4) | mask);
                self.write_xpsr(x);
            }
            Op::Movw { rd, imm } => self.w(rd, imm as u32),
            Op::Movt { rd, imm } => {
                let v = self.r(rd);
                self.w(rd, (v & 0xFFFF) | ((imm as u32) << 16));
            }
            Op::AluImm {
                op,
                setflags,
                rd,
                rn,
                imm,
                carry,
            } => self.alu_imm(op, setflags, rd, rn, imm, carry),
        }
        Ok(())
    }

    /// PC as a branch base, without a register-read event: branches use PC
    /// implicitly.
    fn r_pc_implicit(&self) -> u32 {
        self.addr.wrapping_add(4)
    }

    fn arith(&mut self, rd: u8, a: u32, b: u32, carry_in: bool, setflags: bool) {
        let (res, c, v) = add_with_carry(a, b, carry_in);
        self.w(rd, res);
        if setflags {
            self.set_flags(res, Some(c), Some(v));
        }
    }

    fn compare(&mut self, a: u32, b: u32, carry_in: bool) {
        let (res, c, v) = add_with_carry(a, b, carry_in);
        self.set_flags(res, Some(c), Some(v));
    }

    fn alu(&mut self, op: AluOp, rdn: u8, rm: u8, fl: bool) {
        let logical = |s: &mut Self, res: u32, write: bool, c: Option<bool>, fl: bool| {
            if write {
                s.w(rdn, res);
            }
            if fl {
                s.set_flags(res, c, None);
            }
        };
        match op {
            AluOp::And | AluOp::Eor | AluOp::Orr | AluOp::Bic => {
                let (a, b) = (self.r(rdn), self.r(rm));
                let res = match op {
                    AluOp::And => a & b,
                    AluOp::Eor => a ^ b,
                    AluOp::Orr => a | b,
                    _ => a & !b,
                };
                logical(self, res, true, None, fl);
            }
            AluOp::Tst => {
                let (a, b) = (self.r(rdn), self.r(rm));
                logical(self, a & b, false, None, true);
            }
            AluOp::Mvn => {
                let b = self.r(rm);
                logical(self, !b, true, None, fl);
            }
            AluOp::Mul => {
                let (a, b) = (self.r(rm), self.r(rdn));
                logical(self, a.wrapping_mul(b), true, None, fl);
            }
            AluOp::Lsl | AluOp::Lsr | AluOp::Asr | AluOp::Ror => {
                let (a, b) = (self.r(rdn), self.r(rm));
                let kind = match op {
                    AluOp::Lsl => ShiftKind::Lsl,
                    AluOp::Lsr => ShiftKind::Lsr,
                    AluOp::Asr => ShiftKind::Asr,
                    _ => ShiftKind::Ror,
                };
                let (res, c) = shift_c(a, kind, b & 0xFF);
                logical(self, res, true, c, fl);
            }
            AluOp::Adc | AluOp::Sbc => {
                let (a, b) = (self.r(rdn), self.r(rm));
                let c = self.carry();
                let b = if op == AluOp::Adc { b } else { !b };
                self.arith(rdn, a, b, c, fl);
            }
            AluOp::Rsb => {
                let a = self.r(rm);
                self.arith(rdn, !a, 0, true, fl);
            }
            AluOp::Cmp => {
                let (a, b) = (self.r(rdn), self.r(rm));
                self.compare(a, !b, true);
            }
            AluOp::Cmn => {
                let (a, b) = (self.r(rdn), self.r(rm));
                self.compare(a, b, false);
            }
        }
    }

    fn alu_imm(&mut self, op: WideAluOp, s: bool, rd: u8, rn: u8, imm: u32, carry: Option<bool>) {
        use WideAluOp::*;
        let a = if matches!(op, Mov | Mvn) { 0 } else { self.r(rn) };
        if op.is_logical() {
            let res = match op {
                And | Tst => a & imm,
                Bic => a & !imm,
                Orr => a | imm,
                Mov => imm,
                Orn => a | !imm,
                Mvn => !imm,
                _ => a ^ imm,
            };
            if !op.is_test() {
                self.w(rd, res);
            }
            if s {
                self.set_flags(res, carry, None);
            }
            return;
        }
        let (x, y, cin) = match op {
            Add | Cmn => (a, imm, false),
            Adc => (a, imm, self.carry()),
            Sbc => (a, !imm, self.carry()),
            Sub | Cmp => (a, !imm, true),
            _ => (!a, imm, true),
        };
        let (res, c, v) = add_with_carry(x, y, cin);
        if !op.is_test() {
            self.w(rd, res);
        }
        if s {
            self.set_flags(res, Some(c), Some(v));
        }
    }

    fn write_special(&mut self, sysm: u8, v: u32) {
        if !valid_sysm(sysm) {
            return;
        }
        match sysm {
            0..=3 => {
                let x = (self.st.xpsr & 0x0FFF_FFFF) | (v & 0xF000_0000);
                self.write_xpsr(x);
            }
            8 | 9 => {
                let active = (self.st.control & 2 != 0) == (sysm == 9);
                if active {
                    self.w(13, v);
                } else {
                    self.st.inactive_sp = v & !3;
                }
            }
            16 => self.st.primask = v & 1 != 0,
            20 => {
                let spsel = v & 2;
                if spsel != self.st.control & 2 {
                    std::mem::swap(&mut self.st.regs[13], &mut self.st.inactive_sp);
                }
                self.st.control = spsel;
            }
            _ => {}
        }
    }

    fn read_special(&mut self, sysm: u8) -> u32 {
        match sysm {
            0..=3 => self.read_flags() & 0xF000_0000,
            8 => {
                if self.st.control & 2 == 0 {
                    self.r(13)
                } else {
                    self.st.inactive_sp
                }
            }
            9 => {
                if self.st.control & 2 != 0 {
                    self.r(13)
                } else {
                    self.st.inactive_sp
                }
            }
            16 => self.st.primask as u32,
            20 => self.st.control,
            _ => 0,
        }
    }

    /// Executes a profiled replacement behavior for an unpredictable case.
    pub fn execute_special(&mut self, instr: &Instruction, action: UbAction) -> Result<(), EmuError> {
        let base_reg = match instr.op {
            Op::Push { .. } | Op::Pop { .. } => 13,
            Op::Ldm { rn, .. } | Op::Stm { rn, .. } => rn,
            _ => 13,
        };
        match (action, instr.op) {
            (UbAction::LoadLinkRegister, _) => {
                let base = self.r(base_reg);
                let v = self.load(base, 4, true)?;
                self.w(14, v);
            }
            (UbAction::StoreLinkRegister { post_increment }, _) => {
                let base = self.r(base_reg);
                let v = self.r(14);
                self.store(base, 4, v, true)?;
                if post_increment {
                    self.w(base_reg, base.wrapping_add(4));
                }
            }
            (UbAction::BranchToPc, op) => {
                let target = self.r(15);
                if matches!(op, Op::Blx { .. }) {
                    let lr = self.addr.wrapping_add(2) | 1;
                    self.w(14, lr);
                }
                self.branch(target);
            }
            (UbAction::ClearThumbBit, op) => {
                let rm = match op {
                    Op::Bx { rm } | Op::Blx { rm } => rm,
                    _ => 15,
                };
                let target = self.r(rm);
                if matches!(op, Op::Blx { .. }) {
                    let lr = self.addr.wrapping_add(2) | 1;
                    self.w(14, lr);
                }
                self.bx_write(target & !1);
            }
            _ => return self.execute(instr),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adds_overflow_to_zero() {
        assert_eq!(add_with_carry(0xFFFF_FFFF, 1, false), (0, true, false));
        assert_eq!(add_with_carry(0x7FFF_FFFF, 1, false), (0x8000_0000, false, true));
    }

    #[test]
    fn shifts_at_the_edges() {
        assert_eq!(shift_c(1, ShiftKind::Lsl, 32), (0, Some(true)));
        assert_eq!(shift_c(0x8000_0000, ShiftKind::Lsr, 32), (0, Some(true)));
        assert_eq!(shift_c(0x8000_0000, ShiftKind::Asr, 40), (0xFFFF_FFFF, Some(true)));
        assert_eq!(shift_c(0x8000_0001, ShiftKind::Ror, 32), (0x8000_0001, Some(true)));
        assert_eq!(shift_c(5, ShiftKind::Ror, 0), (5, None));
    }
}
