//! Disassembly text: lowercase mnemonics, `sp`/`lr`/`pc` register names,
//! branch targets as absolute addresses.

use super::decode::{
    AddrMode, AluOp, BarrierKind, ExtendKind, HintKind, Instruction, MemSize, Op, RevKind,
    ShiftKind, WideAluOp, Width,
};
use super::RegId;

fn reg(r: u8) -> &'static str {
    RegId(r).name()
}

fn reg_list(regs: u16) -> String {
    let names: Vec<&str> = (0..16u8)
        .filter(|i| regs & (1 << i) != 0)
        .map(reg)
        .collect();
    format!("{{{}}}", names.join(", "))
}

fn sysm_name(sysm: u8) -> String {
    match sysm {
        0 => "apsr".into(),
        1 => "iapsr".into(),
        2 => "eapsr".into(),
        3 => "xpsr".into(),
        5 => "ipsr".into(),
        6 => "epsr".into(),
        7 => "iepsr".into(),
        8 => "msp".into(),
        9 => "psp".into(),
        16 => "primask".into(),
        20 => "control".into(),
        n => format!("sysm{n}"),
    }
}

fn imm(v: u32) -> String {
    if v < 10 {
        format!("#{v}")
    } else {
        format!("#{v:#x}")
    }
}

fn signed_imm(v: u32, add: bool) -> String {
    if add {
        imm(v)
    } else {
        format!("#-{}", &imm(v)[1..])
    }
}

fn target(addr: u32, offset: i64) -> String {
    format!("{:#x}", (addr as i64 + 4 + offset) as u32)
}

/// Disassembles `instr` located at `addr`.
pub fn disassemble(instr: &Instruction, addr: u32) -> String {
    match instr.op {
        Op::ShiftImm { kind, rd, rm, amount } => {
            if kind == ShiftKind::Lsl && amount == 0 {
                format!("movs {}, {}", reg(rd), reg(rm))
            } else {
                let m = match kind {
                    ShiftKind::Lsl => "lsls",
                    ShiftKind::Lsr => "lsrs",
                    ShiftKind::Asr => "asrs",
                    ShiftKind::Ror => "rors",
                };
                format!("{m} {}, {}, {}", reg(rd), reg(rm), imm(amount as u32))
            }
        }
        Op::AddReg { rd, rn, rm } => format!("adds {}, {}, {}", reg(rd), reg(rn), reg(rm)),
        Op::SubReg { rd, rn, rm } => format!("subs {}, {}, {}", reg(rd), reg(rn), reg(rm)),
        Op::AddImm { rd, rn, imm: i } | Op::SubImm { rd, rn, imm: i } => {
            let m = if matches!(instr.op, Op::AddImm { .. }) {
                "adds"
            } else {
                "subs"
            };
            // The 8-bit immediate form has a single register operand.
            if instr.encoding >> 13 == 0b001 {
                format!("{m} {}, {}", reg(rd), imm(i))
            } else {
                format!("{m} {}, {}, {}", reg(rd), reg(rn), imm(i))
            }
        }
        Op::MovImm { rd, imm: i } => format!("movs {}, {}", reg(rd), imm(i)),
        Op::CmpImm { rn, imm: i } => format!("cmp {}, {}", reg(rn), imm(i)),
        Op::Alu { op, rdn, rm } => {
            let (d, m) = (reg(rdn), reg(rm));
            match op {
                AluOp::Tst => format!("tst {d}, {m}"),
                AluOp::Cmp => format!("cmp {d}, {m}"),
                AluOp::Cmn => format!("cmn {d}, {m}"),
                AluOp::Rsb => format!("rsbs {d}, {m}, #0"),
                AluOp::Mul => format!("muls {d}, {m}, {d}"),
                _ => {
                    let name = match op {
                        AluOp::And => "ands",
                        AluOp::Eor => "eors",
                        AluOp::Lsl => "lsls",
                        AluOp::Lsr => "lsrs",
                        AluOp::Asr => "asrs",
                        AluOp::Adc => "adcs",
                        AluOp::Sbc => "sbcs",
                        AluOp::Ror => "rors",
                        AluOp::Orr => "orrs",
                        AluOp::Bic => "bics",
                        _ => "mvns",
                    };
                    format!("{name} {d}, {m}")
                }
            }
        }
        Op::AddHigh { rdn, rm } => format!("add {}, {}", reg(rdn), reg(rm)),
        Op::CmpHigh { rn, rm } => format!("cmp {}, {}", reg(rn), reg(rm)),
        Op::MovHigh { rd, rm } => format!("mov {}, {}", reg(rd), reg(rm)),
        Op::Bx { rm } => format!("bx {}", reg(rm)),
        Op::Blx { rm } => format!("blx {}", reg(rm)),
        Op::Mem { access, rt, addr: mode } => {
            let base = if access.load { "ldr" } else { "str" };
            let suffix = match (access.size, access.signed) {
                (MemSize::Word, _) => "",
                (MemSize::Byte, false) => "b",
                (MemSize::Half, false) => "h",
                (MemSize::Byte, true) => "sb",
                (MemSize::Half, true) => "sh",
            };
            let operand = match mode {
                AddrMode::Imm {
                    rn,
                    offset,
                    add,
                    index,
                    wback,
                } => {
                    if !index {
                        format!("[{}], {}", reg(rn), signed_imm(offset, add))
                    } else if offset == 0 && add && !wback {
                        format!("[{}]", reg(rn))
                    } else {
                        format!(
                            "[{}, {}]{}",
                            reg(rn),
                            signed_imm(offset, add),
                            if wback { "!" } else { "" }
                        )
                    }
                }
                AddrMode::Reg { rn, rm } => format!("[{}, {}]", reg(rn), reg(rm)),
                AddrMode::Literal { offset, add } => format!("[pc, {}]", signed_imm(offset, add)),
            };
            format!("{base}{suffix} {}, {operand}", reg(rt))
        }
        Op::Adr { rd, imm: i } => {
            format!("adr {}, {:#x}", reg(rd), (addr.wrapping_add(4) & !3).wrapping_add(i))
        }
        Op::AddSpImm { rd, imm: i } => format!("add {}, sp, {}", reg(rd), imm(i)),
        Op::AdjustSp { imm: i, sub } => {
            format!("{} sp, {}", if sub { "sub" } else { "add" }, imm(i))
        }
        Op::Extend { kind, rd, rm } => {
            let m = match kind {
                ExtendKind::Sxth => "sxth",
                ExtendKind::Sxtb => "sxtb",
                ExtendKind::Uxth => "uxth",
                ExtendKind::Uxtb => "uxtb",
            };
            format!("{m} {}, {}", reg(rd), reg(rm))
        }
        Op::Rev { kind, rd, rm } => {
            let m = match kind {
                RevKind::Rev => "rev",
                RevKind::Rev16 => "rev16",
                RevKind::Revsh => "revsh",
            };
            format!("{m} {}, {}", reg(rd), reg(rm))
        }
        Op::Push { regs } => format!("push {}", reg_list(regs)),
        Op::Pop { regs } => format!("pop {}", reg_list(regs)),
        Op::Stm { rn, regs } => format!("stm {}!, {}", reg(rn), reg_list(regs)),
        Op::Ldm { rn, regs } => format!(
            "ldm {}{}, {}",
            reg(rn),
            if regs & (1 << rn) == 0 { "!" } else { "" },
            reg_list(regs)
        ),
        Op::Cps { disable } => format!("cps{} i", if disable { "id" } else { "ie" }),
        Op::Hint(h) => match h {
            HintKind::Nop => "nop",
            HintKind::Yield => "yield",
            HintKind::Wfe => "wfe",
            HintKind::Wfi => "wfi",
            HintKind::Sev => "sev",
        }
        .into(),
        Op::Bkpt { imm: i } => format!("bkpt {}", imm(i as u32)),
        Op::Svc { imm: i } => format!("svc {}", imm(i as u32)),
        Op::B { cond, offset } => {
            let w = if instr.width == Width::Wide { ".w" } else { "" };
            format!("b{}{w} {}", cond.suffix(), target(addr, offset as i64))
        }
        Op::Bl { offset } => format!("bl {}", target(addr, offset as i64)),
        Op::Msr { rn, sysm } => format!("msr {}, {}", sysm_name(sysm), reg(rn)),
        Op::Mrs { rd, sysm } => format!("mrs {}, {}", reg(rd), sysm_name(sysm)),
        Op::Barrier(b) => match b {
            BarrierKind::Dsb => "dsb sy",
            BarrierKind::Dmb => "dmb sy",
            BarrierKind::Isb => "isb sy",
        }
        .into(),
        Op::Cbz { rn, offset, nonzero } => format!(
            "cb{}z {}, {}",
            if nonzero { "n" } else { "" },
            reg(rn),
            target(addr, offset as i64)
        ),
        Op::It { firstcond, mask } => {
            let count = 4 - mask.trailing_zeros().min(3);
            let mut s = String::from("it");
            for k in 1..count {
                let bit = (mask >> (4 - k)) & 1;
                s.push(if bit == firstcond & 1 { 't' } else { 'e' });
            }
            let cond = if firstcond >= 14 {
                "al"
            } else {
                super::Cond::from_bits(firstcond).suffix()
            };
            format!("{s} {cond}")
        }
        Op::Movw { rd, imm: i } => format!("movw {}, {}", reg(rd), imm(i as u32)),
        Op::Movt { rd, imm: i } => format!("movt {}, {}", reg(rd), imm(i as u32)),
        Op::AluImm {
            op,
            setflags,
            rd,
            rn,
            imm: i,
            ..
        } => {
            use WideAluOp::*;
            let name = match op {
                And => "and",
                Tst => "tst",
                Bic => "bic",
                Orr => "orr",
                Mov => "mov",
                Orn => "orn",
                Mvn => "mvn",
                Eor => "eor",
                Teq => "teq",
                Add => "add",
                Cmn => "cmn",
                Adc => "adc",
                Sbc => "sbc",
                Sub => "sub",
                Cmp => "cmp",
                Rsb => "rsb",
            };
            if op.is_test() {
                format!("{name} {}, {}", reg(rn), imm(i))
            } else {
                let s = if setflags { "s" } else { "" };
                if matches!(op, Mov | Mvn) {
                    format!("{name}{s}.w {}, {}", reg(rd), imm(i))
                } else {
                    format!("{name}{s}.w {}, {}, {}", reg(rd), reg(rn), imm(i))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emu::{decode, ArchLevel};

    fn dis(hw: &[u16], addr: u32) -> String {
        disassemble(&decode(hw, ArchLevel::V7MSubset).unwrap(), addr)
    }

    #[test]
    fn canonical_text() {
        assert_eq!(dis(&[0x4770], 0x8000), "bx lr");
        assert_eq!(dis(&[0x466A], 0x8000), "mov r2, sp");
        assert_eq!(dis(&[0x46FF], 0x8000), "mov pc, pc");
        assert_eq!(dis(&[0xB530], 0x8000), "push {r4, r5, lr}");
        assert_eq!(dis(&[0xE7FE], 0x8000), "b 0x8000");
        assert_eq!(dis(&[0x1888], 0x8000), "adds r0, r1, r2");
        assert_eq!(dis(&[0x3005], 0x8000), "adds r0, #5");
        assert_eq!(dis(&[0xF812, 0x1F01], 0x8000), "ldrb r1, [r2, #1]!");
        assert_eq!(dis(&[0xBF0C], 0x8000), "ite eq");
    }
}
