//! Instruction-by-instruction replay of one fault combination.
//!
//! The replay runs the same emulator and fault hooks as a campaign, so its
//! verdict is the campaign's verdict. Each step yields a [`TraceRecord`]
//! with the registers and memory bytes that changed and the fault effects
//! that fired.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::campaign::{evaluate, CampaignConfig, CampaignReport, Finding, Verdict};
use crate::emu::{decode, disassemble, Emulator, Fetched, HookContext, Hooks, Instruction};
use crate::emu::{ArchLevel, MachineState, RegId, RunOutcome};
use crate::faults::{ConcreteFault, FaultEvent, FaultSet, InstallError, Location};
use crate::oracles::ExploitabilityModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegDiff {
    pub reg: RegId,
    pub before: u32,
    pub after: u32,
}

/// A run of changed bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemDiff {
    pub addr: u32,
    pub before: Vec<u8>,
    pub after: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: u64,
    pub addr: u32,
    pub disasm: String,
    pub skipped: bool,
    pub regs: Vec<RegDiff>,
    pub mem: Vec<MemDiff>,
    pub events: Vec<FaultEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replay {
    pub verdict: Verdict,
    pub outcome: RunOutcome,
    /// Instruction index at the end of the run.
    pub end_time: u64,
    pub records: Vec<TraceRecord>,
}

struct Tap {
    arch: ArchLevel,
    text: Option<String>,
    skipped: bool,
    writes: Vec<(u32, u32)>,
}

impl Hooks for Tap {
    fn before_step(&mut self, _: &HookContext, _: &mut MachineState) {
        self.text = None;
        self.skipped = false;
        self.writes.clear();
    }

    fn on_skip(&mut self, ctx: &HookContext, fetched: &Fetched) {
        self.skipped = true;
        let hw = fetched.halfwords;
        let text = match decode(&hw[..fetched.size() as usize / 2], self.arch) {
            Ok(i) => disassemble(&i, ctx.pc),
            Err(_) => format!(".inst {:#x}", fetched.encoding()),
        };
        self.text = Some(text);
    }

    fn after_execute(&mut self, ctx: &HookContext, instr: &Instruction) {
        self.text = Some(disassemble(instr, ctx.pc));
    }

    fn after_mem_write(&mut self, _: &HookContext, addr: u32, size: u8, _: u32) {
        self.writes.push((addr, size as u32));
    }
}

fn regs_of(s: &MachineState) -> [u32; RegId::COUNT] {
    std::array::from_fn(|i| s.reg(RegId(i as u8)))
}

/// Byte ranges a step may change: its stores and the code bytes of
/// instruction faults.
fn diff_ranges(mirror: &mut [(u32, Vec<u8>)], state: &MachineState, ranges: &[(u32, u32)]) -> Vec<MemDiff> {
    let mut out: Vec<MemDiff> = Vec::new();
    for &(addr, len) in ranges {
        let Some(now) = state.mem.read_bytes(addr, len as usize) else {
            continue;
        };
        for (i, &b) in now.iter().enumerate() {
            let a = addr + i as u32;
            let before = lookup(mirror, a).unwrap_or(b);
            if before != b {
                match out.last_mut() {
                    Some(d) if d.addr + d.after.len() as u32 == a => {
                        d.before.push(before);
                        d.after.push(b);
                    }
                    _ => out.push(MemDiff {
                        addr: a,
                        before: vec![before],
                        after: vec![b],
                    }),
                }
            }
            store(mirror, a, b);
        }
    }
    out
}

fn lookup(mirror: &[(u32, Vec<u8>)], a: u32) -> Option<u8> {
    mirror.iter().rev().find_map(|(base, bytes)| {
        a.checked_sub(*base)
            .and_then(|o| bytes.get(o as usize))
            .copied()
    })
}

fn store(mirror: &mut [(u32, Vec<u8>)], a: u32, v: u8) {
    for (base, bytes) in mirror.iter_mut() {
        if let Some(b) = a.checked_sub(*base).and_then(|o| bytes.get_mut(o as usize)) {
            *b = v;
        }
    }
}

/// Replays `faults` from `start` until a halting point, `timeout`
/// instructions or an error.
pub fn replay(
    start: &Emulator,
    faults: &[ConcreteFault],
    halting_points: &[u32],
    timeout: u64,
    oracle: &dyn ExploitabilityModel,
) -> Result<Replay, InstallError> {
    let mut emu = start.clone();
    let mut set = FaultSet::with_events();
    for f in faults {
        set.install(f.clone(), &emu)?;
    }
    let deadline = emu.instr_count().saturating_add(timeout);

    // Mirror the whole RAM plus every faulted code location.
    let layout = emu.state.mem.layout();
    let ram = emu
        .state
        .mem
        .read_bytes(layout.ram_base, layout.ram_size as usize)
        .map(<[u8]>::to_vec)
        .unwrap_or_default();
    let mut mirror = vec![(layout.ram_base, ram)];
    let code: Vec<(u32, u32)> = faults
        .iter()
        .filter_map(|f| match f.point.location {
            Location::Instruction { addr } => Some((addr, f.width.unwrap_or(2) as u32)),
            Location::Register { .. } => None,
        })
        .collect();
    for &(addr, len) in &code {
        if let Some(b) = emu.state.mem.read_bytes(addr, len as usize) {
            mirror.push((addr, b.to_vec()));
        }
    }

    let mut records = Vec::new();
    let mut tap = Tap {
        arch: emu.arch(),
        text: None,
        skipped: false,
        writes: Vec::new(),
    };
    let outcome = loop {
        let pc = emu.state.pc();
        if halting_points.contains(&pc) {
            break RunOutcome::HaltingPointHit { addr: pc };
        }
        if emu.instr_count() >= deadline {
            break RunOutcome::Timeout;
        }
        let time = emu.instr_count();
        let before = regs_of(&emu.state);
        let result = emu.step(&mut (&mut set, &mut tap));
        let after = regs_of(&emu.state);
        let regs = (0..RegId::COUNT)
            .filter(|&i| before[i] != after[i])
            .map(|i| RegDiff {
                reg: RegId(i as u8),
                before: before[i],
                after: after[i],
            })
            .collect();
        let ranges: Vec<(u32, u32)> = tap.writes.iter().chain(&code).copied().collect();
        let mem = diff_ranges(&mut mirror, &emu.state, &ranges);
        let events = set.take_events();
        let addr = match &result {
            Ok(info) => info.addr,
            Err(e) => e.addr(),
        };
        records.push(TraceRecord {
            time,
            addr,
            disasm: tap.text.take().unwrap_or_default(),
            skipped: tap.skipped,
            regs,
            mem,
            events,
        });
        if let Err(error) = result {
            break RunOutcome::Error { error };
        }
    };
    Ok(Replay {
        verdict: evaluate(oracle, &emu.state, &outcome),
        outcome,
        end_time: emu.instr_count(),
        records,
    })
}

impl Replay {
    /// Human-readable listing.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = write!(s, "{:>8} {:08x}  {:<28}", r.time, r.addr, r.disasm);
            if r.skipped {
                s.push_str(" (skipped)");
            }
            for d in &r.regs {
                let _ = write!(s, " {}={:#x}->{:#x}", d.reg, d.before, d.after);
            }
            for d in &r.mem {
                let _ = write!(s, " [{:#x}] {}->{}", d.addr, hex(&d.before), hex(&d.after));
            }
            s.push('\n');
            for e in &r.events {
                let _ = writeln!(s, "         fault #{}: {}", e.fault, e.detail);
            }
        }
        let _ = writeln!(s, "outcome: {} at {} ({})", outcome_text(&self.outcome), self.end_time, self.verdict);
        s
    }
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn outcome_text(o: &RunOutcome) -> String {
    match o {
        RunOutcome::HaltingPointHit { addr } => format!("halting point {addr:#x}"),
        RunOutcome::Timeout => "timeout".into(),
        RunOutcome::Error { error } => error.to_string(),
    }
}

/// A reported combination whose replay disagrees with the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFailure {
    pub index: usize,
    pub reason: String,
}

impl fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "finding {}: {}", self.index, self.reason)
    }
}

/// Checks one finding against a replay from the campaign's start state.
pub fn audit_finding(config: &CampaignConfig, finding: &Finding) -> Result<(), String> {
    let r = replay(
        &config.emulator,
        &finding.faults,
        &config.halting_points,
        config.timeout,
        config.oracle.as_ref(),
    )
    .map_err(|e| e.to_string())?;
    if r.verdict != Verdict::Exploitable {
        return Err(format!("replay verdict {}", r.verdict));
    }
    if r.outcome != (RunOutcome::HaltingPointHit { addr: finding.halt_addr }) || r.end_time != finding.halt_time {
        return Err(format!(
            "replay ended at {} ({:?}), report says {} at {:#x}",
            r.end_time, r.outcome, finding.halt_time, finding.halt_addr
        ));
    }
    Ok(())
}

/// Replays every reported combination. Returns the failures.
pub fn audit(config: &CampaignConfig, report: &CampaignReport) -> Vec<AuditFailure> {
    report
        .exploitable
        .iter()
        .enumerate()
        .filter_map(|(index, f)| {
            audit_finding(config, f)
                .err()
                .map(|reason| AuditFailure { index, reason })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{Effect, InjectionPoint, Lifetime};
    use crate::testkit;

    fn skip_at(time: u64, addr: u32) -> ConcreteFault {
        ConcreteFault {
            point: InjectionPoint {
                time,
                location: Location::Instruction { addr },
                sub_index: None,
                model: "m5".into(),
            },
            lifetime: Lifetime::Transient,
            effect: Effect::Skip,
            width: Some(2),
            original: None,
            faulted: None,
        }
    }

    #[test]
    fn empty_combination_matches_fault_free_run() {
        let fx = testkit::pin_check();
        let r = replay(&fx.emulator(), &[], &fx.halting_points, fx.timeout, fx.oracle.as_ref()).unwrap();
        assert_eq!(r.verdict, Verdict::OracleRejected);
        let (emu, out) = fx.reference_run();
        assert_eq!(r.outcome, out);
        assert_eq!(r.end_time, emu.instr_count());
        assert!(r.records[0].disasm.starts_with("ldr r0, [pc, #"));
    }

    #[test]
    fn skipped_instruction_has_no_register_diff() {
        let fx = testkit::checksum();
        // `movs r1, #8` is the second instruction.
        let r = replay(&fx.emulator(), &[skip_at(1, 0x8002)], &fx.halting_points, fx.timeout, fx.oracle.as_ref())
            .unwrap();
        let rec = &r.records[1];
        assert!(rec.skipped);
        assert_eq!(rec.events.len(), 1);
        assert!(rec.regs.iter().all(|d| d.reg != RegId(1)));
        assert_eq!(r.records.iter().map(|x| x.events.len()).sum::<usize>(), 1);
    }

    #[test]
    fn diffs_rebuild_final_state() {
        let fx = testkit::checksum();
        let start = fx.emulator();
        let r = replay(&start, &[], &fx.halting_points, fx.timeout, fx.oracle.as_ref()).unwrap();
        let mut regs = regs_of(&start.state);
        let mut state = start.state.clone();
        for rec in &r.records {
            for d in &rec.regs {
                assert_eq!(regs[d.reg.index()], d.before);
                regs[d.reg.index()] = d.after;
            }
            for d in &rec.mem {
                state.mem.load(d.addr, &d.after).unwrap();
            }
        }
        let (end, _) = fx.reference_run();
        assert_eq!(regs, regs_of(&end.state));
        assert_eq!(state.mem, end.state.mem);
    }
}
