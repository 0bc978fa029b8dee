//! Thumb decoder for ARMv6-M plus the declared ARMv7-M subset.

use super::{ArchLevel, UbCondition};
use serde::{Deserialize, Serialize};

pub type Reg = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Width {
    Narrow,
    Wide,
}

impl Width {
    pub fn bytes(self) -> u32 {
        match self {
            Width::Narrow => 2,
            Width::Wide => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq,
    Ne,
    Cs,
    Cc,
    Mi,
    Pl,
    Vs,
    Vc,
    Hi,
    Ls,
    Ge,
    Lt,
    Gt,
    Le,
    Al,
}

impl Cond {
    pub fn from_bits(bits: u8) -> Cond {
        use Cond::*;
        [Eq, Ne, Cs, Cc, Mi, Pl, Vs, Vc, Hi, Ls, Ge, Lt, Gt, Le, Al]
            .get(bits as usize)
            .copied()
            .unwrap_or(Al)
    }

    pub fn bits(self) -> u8 {
        self as u8
    }

    pub fn suffix(self) -> &'static str {
        [
            "eq", "ne", "cs", "cc", "mi", "pl", "vs", "vc", "hi", "ls", "ge", "lt", "gt", "le", "",
        ][self as usize]
    }
}

/// Evaluates a 4-bit condition against xPSR flags. `0b1111` passes.
pub fn cond_passed(cond: u8, xpsr: u32) -> bool {
    let n = xpsr & super::XPSR_N != 0;
    let z = xpsr & super::XPSR_Z != 0;
    let c = xpsr & super::XPSR_C != 0;
    let v = xpsr & super::XPSR_V != 0;
    let base = match (cond >> 1) & 7 {
        0 => z,
        1 => c,
        2 => n,
        3 => v,
        4 => c && !z,
        5 => n == v,
        6 => n == v && !z,
        _ => true,
    };
    if cond & 1 == 1 && cond != 0b1111 {
        !base
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftKind {
    Lsl,
    Lsr,
    Asr,
    Ror,
}

/// 16-bit data-processing (register) operations, in encoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    And,
    Eor,
    Lsl,
    Lsr,
    Asr,
    Adc,
    Sbc,
    Ror,
    Tst,
    Rsb,
    Cmp,
    Cmn,
    Orr,
    Mul,
    Bic,
    Mvn,
}

impl AluOp {
    fn from_bits(bits: u16) -> AluOp {
        use AluOp::*;
        [
            And, Eor, Lsl, Lsr, Asr, Adc, Sbc, Ror, Tst, Rsb, Cmp, Cmn, Orr, Mul, Bic, Mvn,
        ][(bits & 15) as usize]
    }
}

/// 32-bit data processing with a modified immediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WideAluOp {
    And,
    Tst,
    Bic,
    Orr,
    Mov,
    Orn,
    Mvn,
    Eor,
    Teq,
    Add,
    Cmn,
    Adc,
    Sbc,
    Sub,
    Cmp,
    Rsb,
}

impl WideAluOp {
    /// Compare/test forms that only set flags.
    pub fn is_test(self) -> bool {
        matches!(self, WideAluOp::Tst | WideAluOp::Teq | WideAluOp::Cmp | WideAluOp::Cmn)
    }

    pub fn is_logical(self) -> bool {
        use WideAluOp::*;
        matches!(self, And | Tst | Bic | Orr | Mov | Orn | Mvn | Eor | Teq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemSize {
    Byte,
    Half,
    Word,
}

impl MemSize {
    pub fn bytes(self) -> u8 {
        match self {
            MemSize::Byte => 1,
            MemSize::Half => 2,
            MemSize::Word => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemAccess {
    pub size: MemSize,
    pub signed: bool,
    pub load: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AddrMode {
    /// `[rn, #±offset]`, `[rn, #±offset]!` or `[rn], #±offset`.
    Imm {
        rn: Reg,
        offset: u32,
        add: bool,
        index: bool,
        wback: bool,
    },
    /// `[rn, rm]`
    Reg { rn: Reg, rm: Reg },
    /// `[pc, #±offset]` relative to the word-aligned PC.
    Literal { offset: u32, add: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtendKind {
    Sxth,
    Sxtb,
    Uxth,
    Uxtb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RevKind {
    Rev,
    Rev16,
    Revsh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HintKind {
    Nop,
    Yield,
    Wfe,
    Wfi,
    Sev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BarrierKind {
    Dsb,
    Dmb,
    Isb,
}

/// Decoded operation. Branch offsets are relative to the instruction
/// address + 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    /// Immediate shift; `amount` is 0..=31 for LSL and 1..=32 otherwise.
    ShiftImm {
        kind: ShiftKind,
        rd: Reg,
        rm: Reg,
        amount: u8,
    },
    AddReg { rd: Reg, rn: Reg, rm: Reg },
    SubReg { rd: Reg, rn: Reg, rm: Reg },
    AddImm { rd: Reg, rn: Reg, imm: u32 },
    SubImm { rd: Reg, rn: Reg, imm: u32 },
    MovImm { rd: Reg, imm: u32 },
    CmpImm { rn: Reg, imm: u32 },
    /// 16-bit data processing: `op rdn, rm`.
    Alu { op: AluOp, rdn: Reg, rm: Reg },
    AddHigh { rdn: Reg, rm: Reg },
    CmpHigh { rn: Reg, rm: Reg },
    MovHigh { rd: Reg, rm: Reg },
    Bx { rm: Reg },
    Blx { rm: Reg },
    Mem {
        access: MemAccess,
        rt: Reg,
        addr: AddrMode,
    },
    Adr { rd: Reg, imm: u32 },
    AddSpImm { rd: Reg, imm: u32 },
    AdjustSp { imm: u32, sub: bool },
    Extend { kind: ExtendKind, rd: Reg, rm: Reg },
    Rev { kind: RevKind, rd: Reg, rm: Reg },
    /// Register mask; bit 14 is LR.
    Push { regs: u16 },
    /// Register mask; bit 15 is PC.
    Pop { regs: u16 },
    Stm { rn: Reg, regs: u16 },
    Ldm { rn: Reg, regs: u16 },
    Cps { disable: bool },
    Hint(HintKind),
    Bkpt { imm: u8 },
    Svc { imm: u8 },
    B { cond: Cond, offset: i32 },
    Bl { offset: i32 },
    Msr { rn: Reg, sysm: u8 },
    Mrs { rd: Reg, sysm: u8 },
    Barrier(BarrierKind),
    Cbz { rn: Reg, offset: u32, nonzero: bool },
    It { firstcond: u8, mask: u8 },
    Movw { rd: Reg, imm: u16 },
    Movt { rd: Reg, imm: u16 },
    AluImm {
        op: WideAluOp,
        setflags: bool,
        rd: Reg,
        rn: Reg,
        imm: u32,
        /// Carry out of the immediate expansion; `None` keeps C.
        carry: Option<bool>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Op,
    pub width: Width,
    /// `hw1` for 16-bit encodings, `hw1 << 16 | hw2` for 32-bit ones.
    pub encoding: u32,
    /// Minimum architecture level that has this instruction.
    pub arch: ArchLevel,
}

impl Instruction {
    pub fn size(&self) -> u32 {
        self.width.bytes()
    }

    /// Whether the instruction may appear at this position of an IT block.
    pub fn allowed_in_it_block(&self, last: bool) -> bool {
        match self.op {
            Op::It { .. } | Op::Cbz { .. } | Op::Cps { .. } => false,
            Op::B { cond, .. } => cond == Cond::Al && last,
            Op::Bl { .. } | Op::Bx { .. } | Op::Blx { .. } => last,
            Op::Pop { regs } if regs & 0x8000 != 0 => last,
            Op::AddHigh { rdn: 15, .. } | Op::MovHigh { rd: 15, .. } => last,
            Op::Mem { rt: 15, access, .. } if access.load => last,
            _ => true,
        }
    }
}

/// Successful decode, possibly of an unpredictable operand combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decoded {
    pub instr: Instruction,
    pub ub: Option<UbCondition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "condition")]
pub enum DecodeError {
    #[error("undefined encoding")]
    Undefined,
    #[error("unpredictable: {0}")]
    Unpredictable(UbCondition),
    #[error("instruction not available in the configured architecture")]
    NotInConfiguredArch,
    #[error("32-bit encoding outside the supported ARMv7-M subset")]
    Unsupported,
    #[error("32-bit encoding without its second halfword")]
    Truncated,
}

/// Whether `hw1` starts a 32-bit encoding.
pub fn is_wide_prefix(hw1: u16) -> bool {
    matches!(hw1 >> 11, 0b11101 | 0b11110 | 0b11111)
}

/// Decodes one instruction; unpredictable operand combinations are errors.
pub fn decode(halfwords: &[u16], arch: ArchLevel) -> Result<Instruction, DecodeError> {
    let d = decode_with_ub(halfwords, arch)?;
    match d.ub {
        Some(c) => Err(DecodeError::Unpredictable(c)),
        None => Ok(d.instr),
    }
}

/// Decodes one instruction, reporting unpredictable operand combinations
/// next to the instruction they would execute as.
pub fn decode_with_ub(halfwords: &[u16], arch: ArchLevel) -> Result<Decoded, DecodeError> {
    let hw1 = *halfwords.first().ok_or(DecodeError::Truncated)?;
    let (op, ub, level, width, encoding) = if is_wide_prefix(hw1) {
        let hw2 = *halfwords.get(1).ok_or(DecodeError::Truncated)?;
        let (op, ub, level) = decode32(hw1, hw2, arch)?;
        (op, ub, level, Width::Wide, (hw1 as u32) << 16 | hw2 as u32)
    } else {
        let (op, ub, level) = decode16(hw1)?;
        (op, ub, level, Width::Narrow, hw1 as u32)
    };
    if level > arch {
        return Err(DecodeError::NotInConfiguredArch);
    }
    Ok(Decoded {
        instr: Instruction {
            op,
            width,
            encoding,
            arch: level,
        },
        ub,
    })
}

type Partial = (Op, Option<UbCondition>, ArchLevel);

const V6: ArchLevel = ArchLevel::V6M;
const V7: ArchLevel = ArchLevel::V7MSubset;

fn ok6(op: Op) -> Result<Partial, DecodeError> {
    Ok((op, None, V6))
}

fn sign_extend(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn decode16(hw: u16) -> Result<Partial, DecodeError> {
    let r = |shift: u16| ((hw >> shift) & 7) as Reg;
    let imm5 = ((hw >> 6) & 31) as u32;
    let imm8 = (hw & 0xFF) as u32;
    let word = |load| MemAccess {
        size: MemSize::Word,
        signed: false,
        load,
    };
    match hw >> 11 {
        0b00000 => ok6(Op::ShiftImm {
            kind: ShiftKind::Lsl,
            rd: r(0),
            rm: r(3),
            amount: imm5 as u8,
        }),
        0b00001 | 0b00010 => ok6(Op::ShiftImm {
            kind: if hw >> 11 == 1 {
                ShiftKind::Lsr
            } else {
                ShiftKind::Asr
            },
            rd: r(0),
            rm: r(3),
            amount: if imm5 == 0 { 32 } else { imm5 as u8 },
        }),
        0b00011 => {
            let (rd, rn, x) = (r(0), r(3), r(6));
            ok6(match (hw >> 9) & 3 {
                0 => Op::AddReg { rd, rn, rm: x },
                1 => Op::SubReg { rd, rn, rm: x },
                2 => Op::AddImm {
                    rd,
                    rn,
                    imm: x as u32,
                },
                _ => Op::SubImm {
                    rd,
                    rn,
                    imm: x as u32,
                },
            })
        }
        0b00100 => ok6(Op::MovImm { rd: r(8), imm: imm8 }),
        0b00101 => ok6(Op::CmpImm { rn: r(8), imm: imm8 }),
        0b00110 => ok6(Op::AddImm {
            rd: r(8),
            rn: r(8),
            imm: imm8,
        }),
        0b00111 => ok6(Op::SubImm {
            rd: r(8),
            rn: r(8),
            imm: imm8,
        }),
        0b01000 => {
            if hw & 0x0400 == 0 {
                return ok6(Op::Alu {
                    op: AluOp::from_bits(hw >> 6),
                    rdn: r(0),
                    rm: r(3),
                });
            }
            let rm = ((hw >> 3) & 15) as Reg;
            let rdn = (r(0)) | (((hw >> 4) & 8) as Reg);
            match (hw >> 8) & 3 {
                0 => {
                    let ub = (rdn == 15 && rm == 15).then_some(UbCondition::AddPcPc);
                    Ok((Op::AddHigh { rdn, rm }, ub, V6))
                }
                1 => {
                    let ub = if rdn < 8 && rm < 8 {
                        Some(UbCondition::CmpBothLow)
                    } else if rdn == 15 || rm == 15 {
                        Some(UbCondition::CmpWithPc)
                    } else {
                        None
                    };
                    Ok((Op::CmpHigh { rn: rdn, rm }, ub, V6))
                }
                2 => ok6(Op::MovHigh { rd: rdn, rm }),
                _ => {
                    let link = hw & 0x80 != 0;
                    let sbz = hw & 7 != 0;
                    let ub = match (link, rm == 15, sbz) {
                        (false, true, _) => Some(UbCondition::BxPc),
                        (true, true, _) => Some(UbCondition::BlxPc),
                        (false, false, true) => Some(UbCondition::BxSbz),
                        (true, false, true) => Some(UbCondition::BlxSbz),
                        _ => None,
                    };
                    let op = if link { Op::Blx { rm } } else { Op::Bx { rm } };
                    Ok((op, ub, V6))
                }
            }
        }
        0b01001 => ok6(Op::Mem {
            access: word(true),
            rt: r(8),
            addr: AddrMode::Literal {
                offset: imm8 << 2,
                add: true,
            },
        }),
        0b01010 | 0b01011 => {
            let (size, signed, load) = match (hw >> 9) & 7 {
                0 => (MemSize::Word, false, false),
                1 => (MemSize::Half, false, false),
                2 => (MemSize::Byte, false, false),
                3 => (MemSize::Byte, true, true),
                4 => (MemSize::Word, false, true),
                5 => (MemSize::Half, false, true),
                6 => (MemSize::Byte, false, true),
                _ => (MemSize::Half, true, true),
            };
            ok6(Op::Mem {
                access: MemAccess { size, signed, load },
                rt: r(0),
                addr: AddrMode::Reg { rn: r(3), rm: r(6) },
            })
        }
        0b01100..=0b10001 => {
            let (size, load) = match hw >> 11 {
                0b01100 => (MemSize::Word, false),
                0b01101 => (MemSize::Word, true),
                0b01110 => (MemSize::Byte, false),
                0b01111 => (MemSize::Byte, true),
                0b10000 => (MemSize::Half, false),
                _ => (MemSize::Half, true),
            };
            let scale = match size {
                MemSize::Word => 2,
                MemSize::Half => 1,
                MemSize::Byte => 0,
            };
            ok6(Op::Mem {
                access: MemAccess {
                    size,
                    signed: false,
                    load,
                },
                rt: r(0),
                addr: AddrMode::Imm {
                    rn: r(3),
                    offset: imm5 << scale,
                    add: true,
                    index: true,
                    wback: false,
                },
            })
        }
        0b10010 | 0b10011 => ok6(Op::Mem {
            access: word(hw >> 11 == 0b10011),
            rt: r(8),
            addr: AddrMode::Imm {
                rn: 13,
                offset: imm8 << 2,
                add: true,
                index: true,
                wback: false,
            },
        }),
        0b10100 => ok6(Op::Adr {
            rd: r(8),
            imm: imm8 << 2,
        }),
        0b10101 => ok6(Op::AddSpImm {
            rd: r(8),
            imm: imm8 << 2,
        }),
        0b10110 | 0b10111 => decode_misc(hw),
        0b11000 => {
            let rn = r(8);
            let regs = hw & 0xFF;
            let ub = if regs == 0 {
                Some(UbCondition::StmEmpty)
            } else if regs & (1 << rn) != 0 && regs.trailing_zeros() != rn as u32 {
                Some(UbCondition::StmBaseNotLowest)
            } else {
                None
            };
            Ok((Op::Stm { rn, regs }, ub, V6))
        }
        0b11001 => {
            let regs = hw & 0xFF;
            let ub = (regs == 0).then_some(UbCondition::LdmEmpty);
            Ok((Op::Ldm { rn: r(8), regs }, ub, V6))
        }
        0b11010 | 0b11011 => match (hw >> 8) & 15 {
            0b1110 => Err(DecodeError::Undefined),
            0b1111 => ok6(Op::Svc { imm: imm8 as u8 }),
            c => ok6(Op::B {
                cond: Cond::from_bits(c as u8),
                offset: sign_extend(imm8 << 1, 9),
            }),
        },
        0b11100 => ok6(Op::B {
            cond: Cond::Al,
            offset: sign_extend(((hw & 0x7FF) as u32) << 1, 12),
        }),
        _ => Err(DecodeError::Truncated),
    }
}

fn decode_misc(hw: u16) -> Result<Partial, DecodeError> {
    let r = |shift: u16| ((hw >> shift) & 7) as Reg;
    match (hw >> 8) & 15 {
        0b0000 => ok6(Op::AdjustSp {
            imm: ((hw & 0x7F) as u32) << 2,
            sub: hw & 0x80 != 0,
        }),
        0b0001 | 0b0011 | 0b1001 | 0b1011 => Ok((
            Op::Cbz {
                rn: r(0),
                offset: ((((hw >> 9) & 1) << 6) | (((hw >> 3) & 31) << 1)) as u32,
                nonzero: hw & 0x0800 != 0,
            },
            None,
            V7,
        )),
        0b0010 => {
            let kind = match (hw >> 6) & 3 {
                0 => ExtendKind::Sxth,
                1 => ExtendKind::Sxtb,
                2 => ExtendKind::Uxth,
                _ => ExtendKind::Uxtb,
            };
            ok6(Op::Extend {
                kind,
                rd: r(0),
                rm: r(3),
            })
        }
        0b0100 | 0b0101 => {
            let regs = (hw & 0xFF) | ((hw & 0x100) << 6);
            let ub = (regs == 0).then_some(UbCondition::PushEmpty);
            Ok((Op::Push { regs }, ub, V6))
        }
        0b0110 => {
            if (hw >> 5) & 7 != 0b011 {
                return Err(DecodeError::Undefined);
            }
            let ub = (hw & 0xF != 0b0010).then_some(UbCondition::ReservedBits);
            Ok((
                Op::Cps {
                    disable: hw & 0x10 != 0,
                },
                ub,
                V6,
            ))
        }
        0b1010 => {
            let kind = match (hw >> 6) & 3 {
                0 => RevKind::Rev,
                1 => RevKind::Rev16,
                2 => return Err(DecodeError::Undefined),
                _ => RevKind::Revsh,
            };
            ok6(Op::Rev {
                kind,
                rd: r(0),
                rm: r(3),
            })
        }
        0b1100 | 0b1101 => {
            let regs = (hw & 0xFF) | ((hw & 0x100) << 7);
            let ub = (regs == 0).then_some(UbCondition::PopEmpty);
            Ok((Op::Pop { regs }, ub, V6))
        }
        0b1110 => ok6(Op::Bkpt {
            imm: (hw & 0xFF) as u8,
        }),
        0b1111 => {
            let mask = (hw & 15) as u8;
            let high = ((hw >> 4) & 15) as u8;
            if mask != 0 {
                let bad = high == 0b1111 || (high == 0b1110 && mask.count_ones() != 1);
                return Ok((
                    Op::It {
                        firstcond: high,
                        mask,
                    },
                    bad.then_some(UbCondition::ItBlock),
                    V7,
                ));
            }
            ok6(Op::Hint(match high {
                1 => HintKind::Yield,
                2 => HintKind::Wfe,
                3 => HintKind::Wfi,
                4 => HintKind::Sev,
                // Unallocated hints execute as NOP.
                _ => HintKind::Nop,
            }))
        }
        _ => Err(DecodeError::Undefined),
    }
}

/// SYSm values defined for MSR/MRS.
pub fn valid_sysm(sysm: u8) -> bool {
    matches!(sysm, 0..=3 | 5..=9 | 16 | 20)
}

fn decode32(hw1: u16, hw2: u16, arch: ArchLevel) -> Result<Partial, DecodeError> {
    // Permanently undefined, both levels.
    if hw1 & 0xFFF0 == 0xF7F0 && hw2 & 0xF000 == 0xA000 {
        return Err(DecodeError::Undefined);
    }
    if let Some(p) = decode32_v6(hw1, hw2)? {
        return Ok(p);
    }
    match decode32_v7(hw1, hw2) {
        Ok(p) => Ok(p),
        // Anything the v7 subset does not accept is simply not an ARMv6-M
        // instruction.
        Err(_) if arch == ArchLevel::V6M => Err(DecodeError::Undefined),
        Err(e) => Err(e),
    }
}

fn decode32_v6(hw1: u16, hw2: u16) -> Result<Option<Partial>, DecodeError> {
    if hw1 & 0xF800 != 0xF000 || hw2 & 0x8000 == 0 {
        return Ok(None);
    }
    if hw2 & 0xD000 == 0xD000 {
        let s = ((hw1 >> 10) & 1) as u32;
        let j1 = ((hw2 >> 13) & 1) as u32;
        let j2 = ((hw2 >> 11) & 1) as u32;
        let i1 = 1 ^ j1 ^ s;
        let i2 = 1 ^ j2 ^ s;
        let imm = (s << 24)
            | (i1 << 23)
            | (i2 << 22)
            | (((hw1 & 0x3FF) as u32) << 12)
            | (((hw2 & 0x7FF) as u32) << 1);
        return Ok(Some((
            Op::Bl {
                offset: sign_extend(imm, 25),
            },
            None,
            V6,
        )));
    }
    if hw2 & 0xD000 != 0x8000 {
        return Ok(None);
    }
    let reserved = |ok: bool| (!ok).then_some(UbCondition::ReservedBits);
    if hw1 & 0xFFE0 == 0xF380 {
        let rn = (hw1 & 15) as Reg;
        let sysm = (hw2 & 0xFF) as u8;
        let ub = reserved(hw1 & 0x10 == 0 && hw2 & 0x2F00 == 0x0800)
            .or_else(|| (rn == 13 || rn == 15).then_some(UbCondition::WideOperands))
            .or_else(|| (!valid_sysm(sysm)).then_some(UbCondition::SpecialRegister));
        return Ok(Some((Op::Msr { rn, sysm }, ub, V6)));
    }
    if hw1 & 0xFFE0 == 0xF3E0 {
        let rd = ((hw2 >> 8) & 15) as Reg;
        let sysm = (hw2 & 0xFF) as u8;
        let ub = reserved(hw1 & 0x1F == 0x0F && hw2 & 0x2000 == 0)
            .or_else(|| (rd == 13 || rd == 15).then_some(UbCondition::WideOperands))
            .or_else(|| (!valid_sysm(sysm)).then_some(UbCondition::SpecialRegister));
        return Ok(Some((Op::Mrs { rd, sysm }, ub, V6)));
    }
    if hw1 & 0xFFF0 == 0xF3B0 {
        let kind = match (hw2 >> 4) & 15 {
            4 => BarrierKind::Dsb,
            5 => BarrierKind::Dmb,
            6 => BarrierKind::Isb,
            _ => return Ok(None),
        };
        let ub = reserved(hw1 & 0xF == 0xF && hw2 & 0x2F00 == 0x0F00);
        return Ok(Some((Op::Barrier(kind), ub, V6)));
    }
    Ok(None)
}

/// ThumbExpandImm_C. Returns `None` for the unpredictable zero pattern.
fn thumb_expand_imm(imm12: u32) -> Option<(u32, Option<bool>)> {
    let imm8 = imm12 & 0xFF;
    if imm12 >> 10 == 0 {
        let v = match (imm12 >> 8) & 3 {
            0 => imm8,
            1 => (imm8 << 16) | imm8,
            2 => (imm8 << 24) | (imm8 << 8),
            _ => (imm8 << 24) | (imm8 << 16) | (imm8 << 8) | imm8,
        };
        if (imm12 >> 8) & 3 != 0 && imm8 == 0 {
            return None;
        }
        Some((v, None))
    } else {
        let unrotated = 0x80 | (imm12 & 0x7F);
        let v = unrotated.rotate_right(imm12 >> 7);
        Some((v, Some(v >> 31 == 1)))
    }
}

fn decode32_v7(hw1: u16, hw2: u16) -> Result<Partial, DecodeError> {
    let wide_ub = |bad: bool| bad.then_some(UbCondition::WideOperands);
    if hw1 & 0xF800 == 0xF000 && hw2 & 0x8000 != 0 {
        // Branches and miscellaneous control.
        return match hw2 & 0xD000 {
            0x9000 => {
                let s = ((hw1 >> 10) & 1) as u32;
                let j1 = ((hw2 >> 13) & 1) as u32;
                let j2 = ((hw2 >> 11) & 1) as u32;
                let imm = (s << 24)
                    | ((1 ^ j1 ^ s) << 23)
                    | ((1 ^ j2 ^ s) << 22)
                    | (((hw1 & 0x3FF) as u32) << 12)
                    | (((hw2 & 0x7FF) as u32) << 1);
                Ok((
                    Op::B {
                        cond: Cond::Al,
                        offset: sign_extend(imm, 25),
                    },
                    None,
                    V7,
                ))
            }
            0x8000 if (hw1 >> 7) & 7 != 7 => {
                let s = ((hw1 >> 10) & 1) as u32;
                let j1 = ((hw2 >> 13) & 1) as u32;
                let j2 = ((hw2 >> 11) & 1) as u32;
                let imm = (s << 20)
                    | (j2 << 19)
                    | (j1 << 18)
                    | (((hw1 & 0x3F) as u32) << 12)
                    | (((hw2 & 0x7FF) as u32) << 1);
                Ok((
                    Op::B {
                        cond: Cond::from_bits(((hw1 >> 6) & 15) as u8),
                        offset: sign_extend(imm, 21),
                    },
                    None,
                    V7,
                ))
            }
            0xC000 => Err(DecodeError::Undefined),
            _ => Err(DecodeError::Unsupported),
        };
    }
    if hw1 & 0xFA00 == 0xF000 && hw2 & 0x8000 == 0 {
        let rn = (hw1 & 15) as Reg;
        let rd = ((hw2 >> 8) & 15) as Reg;
        let s = hw1 & 0x10 != 0;
        let imm12 =
            (((hw1 >> 10) & 1) as u32) << 11 | (((hw2 >> 12) & 7) as u32) << 8 | (hw2 & 0xFF) as u32;
        let Some((imm, carry)) = thumb_expand_imm(imm12) else {
            return Err(DecodeError::Unpredictable(UbCondition::WideOperands));
        };
        use WideAluOp::*;
        let (op, ub) = match (hw1 >> 5) & 15 {
            0b0000 if rd == 15 && s => (Tst, wide_ub(rn == 13 || rn == 15)),
            0b0000 => (And, wide_ub(rd == 13 || rd == 15 || rn == 13 || rn == 15)),
            0b0001 => (Bic, wide_ub(rd == 13 || rd == 15 || rn == 13 || rn == 15)),
            0b0010 if rn == 15 => (Mov, wide_ub(rd == 13 || rd == 15)),
            0b0010 => (Orr, wide_ub(rd == 13 || rd == 15 || rn == 13)),
            0b0011 if rn == 15 => (Mvn, wide_ub(rd == 13 || rd == 15)),
            0b0011 => (Orn, wide_ub(rd == 13 || rd == 15 || rn == 13)),
            0b0100 if rd == 15 && s => (Teq, wide_ub(rn == 13 || rn == 15)),
            0b0100 => (Eor, wide_ub(rd == 13 || rd == 15 || rn == 13 || rn == 15)),
            0b1000 if rd == 15 && s => (Cmn, wide_ub(rn == 15)),
            0b1000 if rn == 13 => (Add, wide_ub(rd == 15)),
            0b1000 => (Add, wide_ub(rd == 13 || rd == 15 || rn == 15)),
            0b1010 => (Adc, wide_ub(rd == 13 || rd == 15 || rn == 13 || rn == 15)),
            0b1011 => (Sbc, wide_ub(rd == 13 || rd == 15 || rn == 13 || rn == 15)),
            0b1101 if rd == 15 && s => (Cmp, wide_ub(rn == 15)),
            0b1101 if rn == 13 => (Sub, wide_ub(rd == 15)),
            0b1101 => (Sub, wide_ub(rd == 13 || rd == 15 || rn == 15)),
            0b1110 => (Rsb, wide_ub(rd == 13 || rd == 15 || rn == 13 || rn == 15)),
            _ => return Err(DecodeError::Undefined),
        };
        return Ok((
            Op::AluImm {
                op,
                setflags: s,
                rd,
                rn,
                imm,
                carry: if op.is_logical() { carry } else { None },
            },
            ub,
            V7,
        ));
    }
    if hw1 & 0xFA00 == 0xF200 && hw2 & 0x8000 == 0 {
        let rd = ((hw2 >> 8) & 15) as Reg;
        let imm = ((hw1 & 15) << 12) | (((hw1 >> 10) & 1) << 11) | (((hw2 >> 12) & 7) << 8) | (hw2 & 0xFF);
        let ub = wide_ub(rd == 13 || rd == 15);
        return match (hw1 >> 4) & 0x1F {
            0b00100 => Ok((Op::Movw { rd, imm }, ub, V7)),
            0b01100 => Ok((Op::Movt { rd, imm }, ub, V7)),
            _ => Err(DecodeError::Unsupported),
        };
    }
    if hw1 & 0xFE00 == 0xF800 {
        return decode_load_store_wide(hw1, hw2);
    }
    Err(DecodeError::Unsupported)
}

fn decode_load_store_wide(hw1: u16, hw2: u16) -> Result<Partial, DecodeError> {
    let signed = hw1 & 0x100 != 0;
    let upper = hw1 & 0x80 != 0;
    let size = match (hw1 >> 5) & 3 {
        0 => MemSize::Byte,
        1 => MemSize::Half,
        2 => MemSize::Word,
        _ => return Err(DecodeError::Undefined),
    };
    let load = hw1 & 0x10 != 0;
    let rn = (hw1 & 15) as Reg;
    let rt = ((hw2 >> 12) & 15) as Reg;
    if !load && (signed || rn == 15) {
        return Err(DecodeError::Undefined);
    }
    if signed && size == MemSize::Word {
        return Err(DecodeError::Undefined);
    }
    let access = MemAccess { size, signed, load };
    let addr = if rn == 15 {
        AddrMode::Literal {
            offset: (hw2 & 0xFFF) as u32,
            add: upper,
        }
    } else if upper {
        AddrMode::Imm {
            rn,
            offset: (hw2 & 0xFFF) as u32,
            add: true,
            index: true,
            wback: false,
        }
    } else if hw2 & 0x0800 != 0 {
        let index = hw2 & 0x400 != 0;
        let add = hw2 & 0x200 != 0;
        let wback = hw2 & 0x100 != 0;
        if index && add && !wback {
            // LDRT/STRT family.
            return Err(DecodeError::Unsupported);
        }
        if !index && !wback {
            return Err(DecodeError::Undefined);
        }
        AddrMode::Imm {
            rn,
            offset: (hw2 & 0xFF) as u32,
            add,
            index,
            wback,
        }
    } else if (hw2 >> 6) & 0x3F == 0 {
        // Register offset form.
        return Err(DecodeError::Unsupported);
    } else {
        return Err(DecodeError::Undefined);
    };
    if load && rt == 15 && size != MemSize::Word {
        // Preload hints.
        return Err(DecodeError::Unsupported);
    }
    let wback = matches!(addr, AddrMode::Imm { wback: true, .. });
    let bad = if load {
        (rt == 13 && size != MemSize::Word) || (wback && rn == rt)
    } else {
        rt == 15 || (rt == 13 && size != MemSize::Word) || (wback && rn == rt)
    };
    Ok((
        Op::Mem { access, rt, addr },
        bad.then_some(UbCondition::WideOperands),
        V7,
    ))
}
