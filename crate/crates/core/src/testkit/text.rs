//! Line-oriented front end for [`ProgramBuilder`].

use super::{AsmError, Program, ProgramBuilder};
use crate::config::parse_number;
use crate::emu::{Cond, RegId};

fn reg(s: &str) -> Option<u8> {
    RegId::parse(s.trim()).filter(|r| r.0 < 16).map(|r| r.0)
}

fn imm(s: &str) -> Option<u32> {
    parse_number(s.trim().strip_prefix('#')?)
}

fn cond(s: &str) -> Option<Cond> {
    use Cond::*;
    Some(match s {
        "eq" => Eq,
        "ne" => Ne,
        "cs" | "hs" => Cs,
        "cc" | "lo" => Cc,
        "mi" => Mi,
        "pl" => Pl,
        "vs" => Vs,
        "vc" => Vc,
        "hi" => Hi,
        "ls" => Ls,
        "ge" => Ge,
        "lt" => Lt,
        "gt" => Gt,
        "le" => Le,
        _ => return None,
    })
}

/// Splits operands at top-level commas (not inside brackets or braces).
fn operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn reg_list(s: &str) -> Option<u16> {
    let inner = s.trim().strip_prefix('{')?.strip_suffix('}')?;
    let mut mask = 0u16;
    for part in inner.split(',') {
        match part.split_once('-') {
            Some((a, b)) => {
                for r in reg(a)?..=reg(b)? {
                    mask |= 1 << r;
                }
            }
            None => mask |= 1 << reg(part)?,
        }
    }
    Some(mask)
}

enum MemOperand {
    Imm(u8, u32),
    Reg(u8, u8),
}

fn mem_operand(s: &str) -> Option<MemOperand> {
    let inner = s.trim().strip_prefix('[')?.strip_suffix(']')?;
    let parts: Vec<&str> = inner.split(',').collect();
    let rn = reg(parts[0])?;
    match parts.get(1) {
        None => Some(MemOperand::Imm(rn, 0)),
        Some(p) if p.trim().starts_with('#') => Some(MemOperand::Imm(rn, imm(p)?)),
        Some(p) => Some(MemOperand::Reg(rn, reg(p)?)),
    }
}

/// Assembles source text at `base`.
///
/// One instruction per line, `label:` prefixes, `;`/`@`/`//` comments.
/// Supported: `nop movs mov adds subs cmp ands eors orrs muls lsls lsrs
/// b b<cond> bl bx blx ldr str ldrb strb push pop add sp sub sp udf`,
/// `ldr rt, =value|label` and the `.word`/`.align` directives.
pub fn assemble(source: &str, base: u32) -> Result<Program, AsmError> {
    let mut b = ProgramBuilder::new(base);
    for (n, raw) in source.lines().enumerate() {
        let line = n + 1;
        let mut text = raw;
        for marker in [";", "@", "//"] {
            if let Some(i) = text.find(marker) {
                text = &text[..i];
            }
        }
        let mut text = text.trim();
        while let Some(i) = text.find(':') {
            let name = text[..i].trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                break;
            }
            b.label(name);
            text = text[i + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let (mnemonic, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let mnemonic = mnemonic.to_ascii_lowercase();
        let ops = operands(&rest.to_ascii_lowercase());
        let ops_raw = operands(rest);
        let bad = |reason: &str| AsmError::Syntax {
            line,
            reason: format!("{reason}: {text:?}"),
        };
        let r = |i: usize| ops.get(i).and_then(|s| reg(s)).ok_or_else(|| bad("expected register"));
        let im = |i: usize| ops.get(i).and_then(|s| imm(s)).ok_or_else(|| bad("expected immediate"));
        let is_imm = |i: usize| ops.get(i).is_some_and(|s| s.starts_with('#'));
        match (mnemonic.as_str(), ops.len()) {
            ("nop", 0) => {
                b.nop();
            }
            ("movs", 2) => {
                b.movs(r(0)?, im(1)?);
            }
            ("mov", 2) => {
                b.mov(r(0)?, r(1)?);
            }
            ("adds" | "subs", 2) => {
                let (rd, v) = (r(0)?, im(1)?);
                if mnemonic == "adds" {
                    b.adds_imm(rd, rd, v);
                } else {
                    b.subs_imm(rd, rd, v);
                }
            }
            ("adds" | "subs", 3) if is_imm(2) => {
                if mnemonic == "adds" {
                    b.adds_imm(r(0)?, r(1)?, im(2)?);
                } else {
                    b.subs_imm(r(0)?, r(1)?, im(2)?);
                }
            }
            ("adds", 3) => {
                b.adds(r(0)?, r(1)?, r(2)?);
            }
            ("subs", 3) => {
                b.subs(r(0)?, r(1)?, r(2)?);
            }
            ("cmp", 2) if is_imm(1) => {
                b.cmp_imm(r(0)?, im(1)?);
            }
            ("cmp", 2) => {
                b.cmp(r(0)?, r(1)?);
            }
            ("ands" | "eors" | "orrs" | "muls", 2) => {
                let op = match mnemonic.as_str() {
                    "ands" => 0,
                    "eors" => 1,
                    "orrs" => 12,
                    _ => 13,
                };
                b.alu(op, r(0)?, r(1)?);
            }
            ("lsls" | "lsrs", 3) => {
                b.shift_imm((mnemonic == "lsrs") as u8, r(0)?, r(1)?, im(2)?);
            }
            ("add" | "sub", 2) if ops[0] == "sp" => {
                if mnemonic == "add" {
                    b.add_sp(im(1)?);
                } else {
                    b.sub_sp(im(1)?);
                }
            }
            ("b", 1) => {
                b.b(&ops_raw[0]);
            }
            ("bl", 1) => {
                b.bl(&ops_raw[0]);
            }
            ("bx", 1) => {
                b.bx(r(0)?);
            }
            ("blx", 1) => {
                b.blx(r(0)?);
            }
            ("udf", 1) => {
                let v = im(0)?;
                b.udf(u8::try_from(v).map_err(|_| bad("udf immediate"))?);
            }
            ("push" | "pop", 1) => {
                let mask = reg_list(&ops[0]).ok_or_else(|| bad("expected register list"))?;
                if mnemonic == "push" {
                    b.push(mask);
                } else {
                    b.pop(mask);
                }
            }
            ("ldr", 2) if ops[1].starts_with('=') => {
                let arg = ops_raw[1][1..].trim();
                match parse_number(arg) {
                    Some(v) => b.ldr_const(r(0)?, v),
                    None => b.ldr_addr(r(0)?, arg, false),
                };
            }
            ("ldr" | "str" | "ldrb" | "strb", 2) => {
                let load = mnemonic.starts_with("ldr");
                let size = if mnemonic.ends_with('b') { 1 } else { 4 };
                match mem_operand(&ops[1]).ok_or_else(|| bad("expected memory operand"))? {
                    MemOperand::Imm(rn, off) => {
                        b.mem_imm(load, size, r(0)?, rn, off);
                    }
                    MemOperand::Reg(rn, rm) => {
                        let op = match (load, size) {
                            (false, 4) => 0,
                            (false, _) => 2,
                            (true, 4) => 4,
                            (true, _) => 6,
                        };
                        b.mem_reg(op, r(0)?, rn, rm);
                    }
                }
            }
            (".word", 1) => {
                let v = parse_number(&ops[0]).ok_or_else(|| bad("expected number"))?;
                b.word(v);
            }
            (".align", _) => {
                b.align4();
            }
            (m, _) => {
                if let Some(c) = m.strip_prefix('b').and_then(cond) {
                    if ops.len() == 1 {
                        b.b_cond(c, &ops_raw[0]);
                        continue;
                    }
                }
                let known = [
                    "nop", "movs", "mov", "adds", "subs", "cmp", "ands", "eors", "orrs", "muls", "lsls",
                    "lsrs", "add", "sub", "b", "bl", "bx", "blx", "udf", "push", "pop", "ldr", "str",
                    "ldrb", "strb", ".word", ".align",
                ];
                if known.contains(&m) {
                    return Err(bad("wrong operands"));
                }
                return Err(AsmError::UnknownMnemonic {
                    line,
                    mnemonic: m.into(),
                });
            }
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_matches_builder() {
        let p = assemble(
            "start: movs r0, #1\n adds r0, r0, #2 ; comment\n cmp r0, #3\n beq done\n b start\ndone: bx lr\n",
            0x8000,
        )
        .unwrap();
        let mut b = ProgramBuilder::new(0x8000);
        b.label("start")
            .movs(0, 1)
            .adds_imm(0, 0, 2)
            .cmp_imm(0, 3)
            .b_cond(Cond::Eq, "done")
            .b("start")
            .label("done")
            .bx(14);
        assert_eq!(p.bytes, b.finish().unwrap().bytes);
        assert_eq!(p.symbol("done"), 0x800A);
    }

    #[test]
    fn memory_and_lists() {
        let p = assemble(
            "push {r4-r5, lr}\n ldr r0, =0x20000000\n ldrb r1, [r0, #3]\n str r1, [r0, r2]\n ldr r3, [sp, #8]\n pop {r4, r5, pc}",
            0,
        )
        .unwrap();
        let hw = p.halfwords();
        assert_eq!(hw[0], 0xB530);
        assert_eq!(hw[2], 0x78C1);
        assert_eq!(hw[3], 0x5081);
        assert_eq!(hw[4], 0x9B02);
        assert_eq!(hw[5], 0xBD30);
    }

    #[test]
    fn unknown_mnemonic() {
        assert_eq!(
            assemble("nop\n frob r0", 0),
            Err(AsmError::UnknownMnemonic {
                line: 2,
                mnemonic: "frob".into()
            })
        );
        assert!(matches!(assemble("movs r0", 0), Err(AsmError::Syntax { line: 1, .. })));
    }
}
