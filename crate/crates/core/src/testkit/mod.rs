//! A small Thumb assembler for building test programs.
//!
//! [`ProgramBuilder`] emits the Thumb-1 subset used by the fixtures plus a
//! few 32-bit forms (BL, pre-indexed LDRB.W). Labels may be used before
//! they are defined. Literal-pool loads (`ldr rt, =value`) collect their
//! constants into a pool placed after the code.

mod fixtures;
mod text;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use fixtures::{checksum, double_fault, pin_check, Fixture};
pub use text::assemble;

use crate::emu::{ArchLevel, Boot, Cond, Emulator, MemoryLayout, UbProfile};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic {mnemonic:?}")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("undefined label {0:?}")]
    UndefinedLabel(String),
    #[error("label {0:?} defined twice")]
    DuplicateLabel(String),
    #[error("branch to {label:?} out of range (offset {offset})")]
    OutOfRange { label: String, offset: i64 },
    #[error("operand out of range: {0}")]
    Operand(String),
}

/// An assembled flat image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub base: u32,
    pub bytes: Vec<u8>,
    pub symbols: BTreeMap<String, u32>,
}

impl Program {
    pub fn symbol(&self, name: &str) -> u32 {
        *self
            .symbols
            .get(name)
            .unwrap_or_else(|| panic!("no symbol {name:?}"))
    }

    pub fn halfwords(&self) -> Vec<u16> {
        self.bytes
            .chunks(2)
            .map(|c| u16::from_le_bytes([c[0], *c.get(1).unwrap_or(&0)]))
            .collect()
    }

    /// Loads the image into a fresh emulator with PC at `base` and SP at the
    /// top of RAM.
    pub fn emulator(&self, arch: ArchLevel, profile: UbProfile) -> Emulator {
        let layout = MemoryLayout::default();
        let mut emu = Emulator::new(&layout, arch, Arc::new(profile));
        emu.load_binary(
            &self.bytes,
            self.base,
            Boot::Explicit {
                pc: self.base,
                sp: layout.ram_base + layout.ram_size,
            },
        )
        .expect("program fits flash");
        emu
    }

    /// The symbol map in `nm` format.
    pub fn symbol_map(&self) -> String {
        self.symbols
            .iter()
            .map(|(n, a)| format!("{a:08x} T {n}\n"))
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Fixup {
    /// Conditional (`cond` < 14) or unconditional 16-bit branch.
    Branch { cond: Option<Cond>, label: String },
    Bl { label: String },
    /// `ldr rt, [pc, #…]` against a pool entry.
    Literal { rt: u8, entry: usize },
    /// `adr rd, label`
    Adr { rd: u8, label: String },
}

#[derive(Debug, Clone)]
enum Literal {
    Value(u32),
    /// Address of a label, with the Thumb bit when `thumb`.
    Label { name: String, thumb: bool },
}

/// Emits a program; see the module documentation.
#[derive(Debug, Clone)]
pub struct ProgramBuilder {
    base: u32,
    code: Vec<u8>,
    labels: BTreeMap<String, u32>,
    fixups: Vec<(usize, Fixup)>,
    pool: Vec<Literal>,
    error: Option<AsmError>,
}

fn low(r: u8) -> u16 {
    assert!(r < 8, "r{r} is not a low register");
    r as u16
}

impl ProgramBuilder {
    pub fn new(base: u32) -> Self {
        Self {
            base,
            code: Vec::new(),
            labels: BTreeMap::new(),
            fixups: Vec::new(),
            pool: Vec::new(),
            error: None,
        }
    }

    /// Address of the next emitted byte.
    pub fn here(&self) -> u32 {
        self.base + self.code.len() as u32
    }

    pub fn label(&mut self, name: &str) -> &mut Self {
        let at = self.here();
        if self.labels.insert(name.to_string(), at).is_some() && self.error.is_none() {
            self.error = Some(AsmError::DuplicateLabel(name.into()));
        }
        self
    }

    pub fn raw(&mut self, hw: u16) -> &mut Self {
        self.code.extend_from_slice(&hw.to_le_bytes());
        self
    }

    pub fn raw32(&mut self, hw1: u16, hw2: u16) -> &mut Self {
        self.raw(hw1).raw(hw2)
    }

    /// A data word, aligned to 4 bytes with a NOP pad when needed.
    pub fn word(&mut self, value: u32) -> &mut Self {
        self.align4();
        self.code.extend_from_slice(&value.to_le_bytes());
        self
    }

    pub fn align4(&mut self) -> &mut Self {
        if self.code.len() % 4 != 0 {
            self.nop();
        }
        self
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) -> bool {
        if !ok && self.error.is_none() {
            self.error = Some(AsmError::Operand(what()));
        }
        ok
    }

    pub fn nop(&mut self) -> &mut Self {
        self.raw(0xBF00)
    }

    pub fn movs(&mut self, rd: u8, imm: u32) -> &mut Self {
        self.check(imm < 256, || format!("movs #{imm}"));
        self.raw(0x2000 | low(rd) << 8 | (imm & 0xFF) as u16)
    }

    /// `mov rd, rm` with any registers (high-register form).
    pub fn mov(&mut self, rd: u8, rm: u8) -> &mut Self {
        self.raw(0x4600 | ((rd as u16 >> 3) & 1) << 7 | (rm as u16 & 15) << 3 | (rd as u16 & 7))
    }

    /// `adds rd, rn, #imm3` or `adds rdn, #imm8`.
    pub fn adds_imm(&mut self, rd: u8, rn: u8, imm: u32) -> &mut Self {
        if rd == rn && imm >= 8 {
            self.check(imm < 256, || format!("adds #{imm}"));
            self.raw(0x3000 | low(rd) << 8 | (imm & 0xFF) as u16)
        } else {
            self.check(imm < 8, || format!("adds #{imm}"));
            self.raw(0x1C00 | ((imm & 7) as u16) << 6 | low(rn) << 3 | low(rd))
        }
    }

    pub fn subs_imm(&mut self, rd: u8, rn: u8, imm: u32) -> &mut Self {
        if rd == rn && imm >= 8 {
            self.check(imm < 256, || format!("subs #{imm}"));
            self.raw(0x3800 | low(rd) << 8 | (imm & 0xFF) as u16)
        } else {
            self.check(imm < 8, || format!("subs #{imm}"));
            self.raw(0x1E00 | ((imm & 7) as u16) << 6 | low(rn) << 3 | low(rd))
        }
    }

    pub fn adds(&mut self, rd: u8, rn: u8, rm: u8) -> &mut Self {
        self.raw(0x1800 | low(rm) << 6 | low(rn) << 3 | low(rd))
    }

    pub fn subs(&mut self, rd: u8, rn: u8, rm: u8) -> &mut Self {
        self.raw(0x1A00 | low(rm) << 6 | low(rn) << 3 | low(rd))
    }

    /// 16-bit register data processing, `op` in encoding order (ANDS = 0
    /// … MVNS = 15).
    pub fn alu(&mut self, op: u8, rdn: u8, rm: u8) -> &mut Self {
        self.raw(0x4000 | (op as u16 & 15) << 6 | low(rm) << 3 | low(rdn))
    }

    pub fn cmp_imm(&mut self, rn: u8, imm: u32) -> &mut Self {
        self.check(imm < 256, || format!("cmp #{imm}"));
        self.raw(0x2800 | low(rn) << 8 | (imm & 0xFF) as u16)
    }

    pub fn cmp(&mut self, rn: u8, rm: u8) -> &mut Self {
        if rn < 8 && rm < 8 {
            self.raw(0x4280 | low(rm) << 3 | low(rn))
        } else {
            self.raw(0x4500 | ((rn as u16 >> 3) & 1) << 7 | (rm as u16 & 15) << 3 | (rn as u16 & 7))
        }
    }

    /// `lsls`/`lsrs`/`asrs rd, rm, #imm` for `kind` 0/1/2.
    pub fn shift_imm(&mut self, kind: u8, rd: u8, rm: u8, imm: u32) -> &mut Self {
        self.check(kind < 3 && imm < 32, || format!("shift #{imm}"));
        self.raw((kind as u16) << 11 | ((imm & 31) as u16) << 6 | low(rm) << 3 | low(rd))
    }

    pub fn bx(&mut self, rm: u8) -> &mut Self {
        self.raw(0x4700 | (rm as u16 & 15) << 3)
    }

    pub fn blx(&mut self, rm: u8) -> &mut Self {
        self.raw(0x4780 | (rm as u16 & 15) << 3)
    }

    /// Word/byte/halfword load or store with an immediate offset;
    /// `rn` may be SP for word accesses.
    pub fn mem_imm(&mut self, load: bool, size: u8, rt: u8, rn: u8, offset: u32) -> &mut Self {
        let l = load as u16;
        if rn == 13 {
            self.check(size == 4 && offset % 4 == 0 && offset < 1024, || format!("[sp, #{offset}]"));
            return self.raw(0x9000 | l << 11 | low(rt) << 8 | (offset / 4) as u16);
        }
        let (opc, scale) = match size {
            4 => (0x6000, 4),
            1 => (0x7000, 1),
            _ => (0x8000, 2),
        };
        self.check(offset % scale == 0 && offset / scale < 32, || format!("offset #{offset}"));
        self.raw(opc | l << 11 | ((offset / scale) as u16 & 31) << 6 | low(rn) << 3 | low(rt))
    }

    pub fn ldr(&mut self, rt: u8, rn: u8, offset: u32) -> &mut Self {
        self.mem_imm(true, 4, rt, rn, offset)
    }

    pub fn str(&mut self, rt: u8, rn: u8, offset: u32) -> &mut Self {
        self.mem_imm(false, 4, rt, rn, offset)
    }

    pub fn ldrb(&mut self, rt: u8, rn: u8, offset: u32) -> &mut Self {
        self.mem_imm(true, 1, rt, rn, offset)
    }

    pub fn strb(&mut self, rt: u8, rn: u8, offset: u32) -> &mut Self {
        self.mem_imm(false, 1, rt, rn, offset)
    }

    /// Register-offset access: `op` 0..=7 is STR, STRH, STRB, LDRSB, LDR,
    /// LDRH, LDRB, LDRSH.
    pub fn mem_reg(&mut self, op: u8, rt: u8, rn: u8, rm: u8) -> &mut Self {
        self.raw(0x5000 | (op as u16 & 7) << 9 | low(rm) << 6 | low(rn) << 3 | low(rt))
    }

    /// `ldrb.w rt, [rn, #imm]!` (ARMv7-M).
    pub fn ldrb_pre(&mut self, rt: u8, rn: u8, imm: u8) -> &mut Self {
        self.raw32(0xF810 | rn as u16 & 15, (rt as u16 & 15) << 12 | 0x0F00 | imm as u16)
    }

    /// Register list bits 0-7 plus LR (bit 14).
    pub fn push(&mut self, regs: u16) -> &mut Self {
        self.check(regs & !0x40FF == 0, || format!("push {regs:#x}"));
        self.raw(0xB400 | ((regs >> 14) & 1) << 8 | (regs & 0xFF))
    }

    /// Register list bits 0-7 plus PC (bit 15).
    pub fn pop(&mut self, regs: u16) -> &mut Self {
        self.check(regs & !0x80FF == 0, || format!("pop {regs:#x}"));
        self.raw(0xBC00 | ((regs >> 15) & 1) << 8 | (regs & 0xFF))
    }

    pub fn add_sp(&mut self, imm: u32) -> &mut Self {
        self.check(imm % 4 == 0 && imm < 512, || format!("add sp, #{imm}"));
        self.raw(0xB000 | (imm / 4) as u16)
    }

    pub fn sub_sp(&mut self, imm: u32) -> &mut Self {
        self.check(imm % 4 == 0 && imm < 512, || format!("sub sp, #{imm}"));
        self.raw(0xB080 | (imm / 4) as u16)
    }

    pub fn udf(&mut self, imm: u8) -> &mut Self {
        self.raw(0xDE00 | imm as u16)
    }

    pub fn b(&mut self, label: &str) -> &mut Self {
        self.fixup(Fixup::Branch {
            cond: None,
            label: label.into(),
        });
        self.raw(0)
    }

    pub fn b_cond(&mut self, cond: Cond, label: &str) -> &mut Self {
        self.fixup(Fixup::Branch {
            cond: Some(cond),
            label: label.into(),
        });
        self.raw(0)
    }

    pub fn bl(&mut self, label: &str) -> &mut Self {
        self.fixup(Fixup::Bl { label: label.into() });
        self.raw32(0, 0)
    }

    pub fn adr(&mut self, rd: u8, label: &str) -> &mut Self {
        low(rd);
        self.fixup(Fixup::Adr { rd, label: label.into() });
        self.raw(0)
    }

    /// `ldr rt, =value`
    pub fn ldr_const(&mut self, rt: u8, value: u32) -> &mut Self {
        self.literal(rt, Literal::Value(value))
    }

    /// `ldr rt, =label`, with the Thumb bit set when `thumb`.
    pub fn ldr_addr(&mut self, rt: u8, label: &str, thumb: bool) -> &mut Self {
        self.literal(
            rt,
            Literal::Label {
                name: label.into(),
                thumb,
            },
        )
    }

    fn literal(&mut self, rt: u8, lit: Literal) -> &mut Self {
        low(rt);
        self.pool.push(lit);
        self.fixup(Fixup::Literal {
            rt,
            entry: self.pool.len() - 1,
        });
        self.raw(0)
    }

    fn fixup(&mut self, f: Fixup) {
        self.fixups.push((self.code.len(), f));
    }

    fn resolve(&self, label: &str) -> Result<u32, AsmError> {
        self.labels
            .get(label)
            .copied()
            .ok_or_else(|| AsmError::UndefinedLabel(label.into()))
    }

    /// Places the literal pool and resolves every label.
    pub fn finish(&self) -> Result<Program, AsmError> {
        if let Some(e) = &self.error {
            return Err(e.clone());
        }
        let mut b = self.clone();
        if !self.pool.is_empty() {
            b.align4();
            b.label("__literal_pool");
        }
        let pool_at = b.here();
        for lit in &self.pool {
            let v = match lit {
                Literal::Value(v) => *v,
                Literal::Label { name, thumb } => b.resolve(name)? | *thumb as u32,
            };
            b.code.extend_from_slice(&v.to_le_bytes());
        }
        for (off, f) in &self.fixups {
            let at = self.base + *off as u32;
            let pc = at as i64 + 4;
            let put = |code: &mut Vec<u8>, o: usize, hw: u16| code[o..o + 2].copy_from_slice(&hw.to_le_bytes());
            match f {
                Fixup::Branch { cond, label } => {
                    let d = b.resolve(label)? as i64 - pc;
                    let (bits, range) = if cond.is_some() { (8, 1 << 8) } else { (11, 1 << 11) };
                    if d % 2 != 0 || d < -range || d >= range {
                        return Err(AsmError::OutOfRange {
                            label: label.clone(),
                            offset: d,
                        });
                    }
                    let imm = ((d >> 1) as u16) & ((1 << bits) - 1);
                    let hw = match cond {
                        Some(c) => 0xD000 | (c.bits() as u16) << 8 | imm,
                        None => 0xE000 | imm,
                    };
                    put(&mut b.code, *off, hw);
                }
                Fixup::Bl { label } => {
                    let d = b.resolve(label)? as i64 - pc;
                    if d % 2 != 0 || !(-(1 << 24)..(1 << 24)).contains(&d) {
                        return Err(AsmError::OutOfRange {
                            label: label.clone(),
                            offset: d,
                        });
                    }
                    let v = (d as u32) >> 1;
                    let s = (v >> 23) & 1;
                    let i1 = (v >> 22) & 1;
                    let i2 = (v >> 21) & 1;
                    let j1 = (i1 ^ 1) ^ s;
                    let j2 = (i2 ^ 1) ^ s;
                    put(&mut b.code, *off, (0xF000 | s << 10 | (v >> 11) & 0x3FF) as u16);
                    put(&mut b.code, off + 2, (0xD000 | j1 << 13 | j2 << 11 | v & 0x7FF) as u16);
                }
                Fixup::Literal { rt, entry } => {
                    let target = pool_at as i64 + 4 * *entry as i64;
                    let d = target - (pc & !3);
                    if !(0..1024).contains(&d) {
                        return Err(AsmError::OutOfRange {
                            label: format!("literal #{entry}"),
                            offset: d,
                        });
                    }
                    put(&mut b.code, *off, 0x4800 | (*rt as u16) << 8 | (d / 4) as u16);
                }
                Fixup::Adr { rd, label } => {
                    let d = b.resolve(label)? as i64 - (pc & !3);
                    if d % 4 != 0 || !(0..1024).contains(&d) {
                        return Err(AsmError::OutOfRange {
                            label: label.clone(),
                            offset: d,
                        });
                    }
                    put(&mut b.code, *off, 0xA000 | (*rd as u16) << 8 | (d / 4) as u16);
                }
            }
        }
        Ok(Program {
            base: self.base,
            bytes: b.code,
            symbols: b.labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emu::{decode, NoHooks, Op, RunOutcome};

    fn one(f: impl FnOnce(&mut ProgramBuilder)) -> Vec<u16> {
        let mut b = ProgramBuilder::new(0x8000);
        f(&mut b);
        b.finish().unwrap().halfwords()
    }

    #[test]
    fn fixed_encodings() {
        assert_eq!(one(|b| { b.bx(14); }), [0x4770]);
        assert_eq!(one(|b| { b.mov(2, 13); }), [0x466A]);
        assert_eq!(one(|b| { b.mov(15, 15); }), [0x46FF]);
        assert_eq!(one(|b| { b.ldrb_pre(1, 2, 1); }), [0xF812, 0x1F01]);
        assert_eq!(one(|b| { b.push(0x40F0); }), [0xB5F0]);
        assert_eq!(one(|b| { b.pop(0x80F0); }), [0xBDF0]);
    }

    #[test]
    fn self_branch_loops() {
        let p = {
            let mut b = ProgramBuilder::new(0x8000);
            b.label("here").b("here");
            b.finish().unwrap()
        };
        assert_eq!(p.halfwords(), [0xE7FE]);
        let mut e = p.emulator(ArchLevel::V6M, UbProfile::default());
        assert_eq!(e.run_until(&mut NoHooks, &[], 50), RunOutcome::Timeout);
        assert_eq!(e.state.pc(), 0x8000);
    }

    #[test]
    fn forward_and_backward_labels_agree() {
        let mut fwd = ProgramBuilder::new(0x8000);
        fwd.b("end").nop().label("end").nop();
        let mut back = ProgramBuilder::new(0x8000);
        back.raw(0xE000).nop().label("end").nop();
        assert_eq!(fwd.finish().unwrap().bytes, back.finish().unwrap().bytes);
    }

    #[test]
    fn bl_round_trip() {
        let mut b = ProgramBuilder::new(0x8000);
        b.bl("far").nop();
        for _ in 0..600 {
            b.nop();
        }
        b.label("far").bx(14);
        let p = b.finish().unwrap();
        let hw = p.halfwords();
        let i = decode(&hw[..2], ArchLevel::V6M).unwrap();
        assert_eq!(i.op, Op::Bl { offset: p.symbol("far") as i32 - 0x8004 });
    }

    #[test]
    fn literal_pool_after_code() {
        let mut b = ProgramBuilder::new(0x8000);
        b.ldr_const(0, 0xDEAD_BEEF).ldr_addr(1, "f", true).label("f").bx(14);
        let p = b.finish().unwrap();
        let pool = p.symbol("__literal_pool");
        assert!(pool >= 0x8006);
        let mut e = p.emulator(ArchLevel::V6M, UbProfile::default());
        e.run_until(&mut NoHooks, &[p.symbol("f")], 10);
        assert_eq!(e.state.regs[0], 0xDEAD_BEEF);
        assert_eq!(e.state.regs[1], p.symbol("f") | 1);
    }

    #[test]
    fn errors() {
        let mut b = ProgramBuilder::new(0x8000);
        b.b("nowhere");
        assert_eq!(b.finish(), Err(AsmError::UndefinedLabel("nowhere".into())));
        let mut b = ProgramBuilder::new(0x8000);
        b.b_cond(Cond::Eq, "far");
        for _ in 0..200 {
            b.nop();
        }
        b.label("far");
        assert!(matches!(b.finish(), Err(AsmError::OutOfRange { .. })));
        let mut b = ProgramBuilder::new(0x8000);
        b.movs(0, 300);
        assert!(matches!(b.finish(), Err(AsmError::Operand(_))));
    }
}
