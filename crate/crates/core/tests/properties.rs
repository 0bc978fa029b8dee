//! Property tests for the emulator, fault enumeration, campaign and exports.

use std::collections::HashSet;

use faultscope::campaign::{dry_run, generate_model_sequences, run_campaign, DryRunTrace};
use faultscope::emu::{decode, decode_with_ub, disassemble, DecodeError, ArchLevel, NoHooks, RegId, UbProfile};
use faultscope::emu::{XPSR_C, XPSR_N, XPSR_V, XPSR_Z};
use faultscope::faults::{catalog_model, catalog_models, enumerate_faults, FaultSet, FaultTarget, Lifetime};
use faultscope::oracles::Aes128;
use faultscope::report::{bin_index, HeatmapGrid};
use faultscope::testkit::{self, assemble, Fixture};
use faultscope::tracer;
use faultscope::CampaignReport;
use proptest::prelude::*;

fn baseline(fx: &Fixture) -> DryRunTrace {
    let mut emu = fx.emulator();
    let deadline = emu.instr_count() + fx.timeout;
    dry_run(&mut emu, &mut NoHooks, &fx.halting_points, deadline)
}

fn model_id() -> impl Strategy<Value = String> {
    (1..=24u32).prop_map(|i| format!("m{i}"))
}

fn lo() -> impl Strategy<Value = u8> {
    0..8u8
}

/// One line of assembler source in the subset both directions support.
fn asm_line() -> impl Strategy<Value = String> {
    prop_oneof![
        (lo(), any::<u8>()).prop_map(|(d, i)| format!("movs r{d}, #{i}")),
        (lo(), lo(), 0..8u8).prop_map(|(d, n, i)| format!("adds r{d}, r{n}, #{i}")),
        (lo(), lo(), 0..8u8).prop_map(|(d, n, i)| format!("subs r{d}, r{n}, #{i}")),
        (lo(), lo(), lo()).prop_map(|(d, n, m)| format!("adds r{d}, r{n}, r{m}")),
        (lo(), lo(), lo()).prop_map(|(d, n, m)| format!("subs r{d}, r{n}, r{m}")),
        (lo(), any::<u8>()).prop_map(|(n, i)| format!("cmp r{n}, #{i}")),
        (lo(), lo()).prop_map(|(n, m)| format!("cmp r{n}, r{m}")),
        (prop::sample::select(vec!["ands", "eors", "orrs"]), lo(), lo())
            .prop_map(|(op, d, m)| format!("{op} r{d}, r{m}")),
        (prop::sample::select(vec!["lsls", "lsrs"]), lo(), lo(), 1..32u8)
            .prop_map(|(op, d, m, i)| format!("{op} r{d}, r{m}, #{i}")),
        (0..13u8, 0..13u8).prop_map(|(d, m)| format!("mov r{d}, r{m}")),
        (prop::sample::select(vec!["ldr", "str"]), lo(), lo(), 0..32u32)
            .prop_map(|(op, t, n, i)| format!("{op} r{t}, [r{n}, #{}]", i * 4)),
        (prop::sample::select(vec!["ldrb", "strb"]), lo(), lo(), 0..32u32)
            .prop_map(|(op, t, n, i)| format!("{op} r{t}, [r{n}, #{i}]")),
        (prop::sample::select(vec!["ldr", "str", "ldrb", "strb"]), lo(), lo(), lo())
            .prop_map(|(op, t, n, m)| format!("{op} r{t}, [r{n}, r{m}]")),
        (1..256u16).prop_map(|m| format!("push {{{}}}", list(m))),
        (1..256u16).prop_map(|m| format!("pop {{{}}}", list(m))),
        Just("nop".to_string()),
    ]
}

/// Encodings that decode at the extended level but not under v6-M: every
/// narrow one plus a strided sample of the wide space.
fn v7_only_encodings() -> Vec<[u16; 2]> {
    let narrow = (0..=u16::MAX).map(|h| [h, 0xBF00]);
    let wide = (0xE800..=u16::MAX).step_by(7).flat_map(|h| [0x0000, 0x8F4F, 0xF0F0].map(|l| [h, l]));
    narrow
        .chain(wide)
        .filter(|hw| {
            decode_with_ub(hw, ArchLevel::V7MSubset).is_ok()
                && decode_with_ub(hw, ArchLevel::V6M) == Err(DecodeError::NotInConfiguredArch)
        })
        .collect()
}

fn list(mask: u16) -> String {
    (0..8).filter(|i| mask & 1 << i != 0).map(|i| format!("r{i}")).collect::<Vec<_>>().join(", ")
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn assemble_disassemble_round_trip(line in asm_line()) {
        let prog = assemble(&line, 0x8000).unwrap();
        let hw = prog.halfwords();
        let instr = decode(&hw, ArchLevel::V6M).unwrap();
        let text = disassemble(&instr, 0x8000);
        let again = assemble(&text, 0x8000).unwrap_or_else(|e| panic!("{line} -> {text}: {e}"));
        prop_assert_eq!(again.bytes, prog.bytes, "{} -> {}", line, text);
    }

    /// Every encoding accepted at the baseline level decodes identically at
    /// the extended level, and anything only the extended level accepts is
    /// refused under v6-M.
    #[test]
    fn v6m_is_a_subset_of_v7m(hw1 in any::<u16>(), hw2 in any::<u16>()) {
        let hw = [hw1, hw2];
        if let Ok(i) = decode(&hw, ArchLevel::V6M) {
            prop_assert_eq!(decode(&hw, ArchLevel::V7MSubset).ok(), Some(i));
        }
    }

    /// The v6-M emulator never retires an instruction that decodes only at
    /// the extended level.
    #[test]
    fn v6m_never_executes_v7_only(hw in prop::sample::select(v7_only_encodings())) {
        prop_assert_eq!(decode_with_ub(&hw, ArchLevel::V6M).err(), Some(DecodeError::NotInConfiguredArch));
        let mut b = testkit::ProgramBuilder::new(0x8000);
        b.raw(hw[0]).raw(hw[1]).nop().nop();
        let mut emu = b.finish().unwrap().emulator(ArchLevel::V6M, UbProfile::default());
        prop_assert!(emu.step(&mut NoHooks).is_err());
        prop_assert_eq!(emu.instr_count(), 0);
    }

    /// NZCV of ADDS/SUBS against 64-bit arithmetic.
    #[test]
    fn flag_execution_matches_oracle(x in any::<u32>(), y in any::<u32>(), op in 0..2u8) {
        let src = if op == 0 { "adds r2, r0, r1" } else { "subs r2, r0, r1" };
        let mut emu = assemble(src, 0x8000).unwrap().emulator(ArchLevel::V6M, UbProfile::default());
        emu.set_reg(RegId(0), x);
        emu.set_reg(RegId(1), y);
        emu.step(&mut NoHooks).unwrap();
        let (y_eff, c) = if op == 0 { (y, 0) } else { (!y, 1) };
        let wide = x as u64 + y_eff as u64 + c;
        let signed = x as i32 as i64 + y_eff as i32 as i64 + c as i64;
        let r = wide as u32;
        let (carry, overflow) = (wide >> 32 != 0, signed != r as i32 as i64);
        let xpsr = emu.state.xpsr;
        prop_assert_eq!(emu.reg(RegId(2)), r);
        prop_assert_eq!(xpsr & XPSR_N != 0, r >> 31 == 1);
        prop_assert_eq!(xpsr & XPSR_Z != 0, r == 0);
        prop_assert_eq!(xpsr & XPSR_C != 0, carry);
        prop_assert_eq!(xpsr & XPSR_V != 0, overflow);
    }

    #[test]
    fn aes_inverse_and_backward_consistency(key in any::<[u8; 16]>(), pt in any::<[u8; 16]>(), round in 1..=10usize) {
        let aes = Aes128::new(&key);
        let ct = aes.encrypt(&pt);
        prop_assert_eq!(aes.decrypt(&ct), pt);
        let fwd = aes.round_inputs(&pt);
        prop_assert_eq!(fwd[11], ct);
        prop_assert_eq!(aes.backward_round_inputs(&ct), fwd);
        prop_assert_eq!(aes.encrypt_from(&fwd[round], round), ct);
    }

    #[test]
    fn bins_stay_in_range(t in any::<u64>(), length in 1..1_000_000u64, bins in 1..500usize) {
        let b = bin_index(t, length, bins);
        prop_assert!(b < bins);
        if t < length {
            let lo = (b as u128 * length as u128).div_ceil(bins as u128);
            prop_assert!(t as u128 >= lo);
        }
    }
}

fn sequence_count(p: usize, q: usize, max_order: usize) -> usize {
    fn binom(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }
    let fact = |n: usize| (1..=n).product::<usize>();
    (1..=max_order)
        .map(|k| (0..=k.min(p)).map(|i| binom(p, i) * binom(q, k - i) * fact(k - i)).sum::<usize>())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// Distinct models: permanent ones keep their relative order, the rest
    /// appear in every order.
    #[test]
    fn sequence_count_law(p in 0..=4usize, q in 0..=4usize, max_order in 1..=3usize) {
        prop_assume!(p + q >= 1 && p + q <= 4);
        let names: Vec<String> = (0..p + q).map(|i| format!("x{i}")).collect();
        let ids: Vec<&str> = names.iter().map(String::as_str).collect();
        let perm: Vec<bool> = (0..p + q).map(|i| i < p).collect();
        let seqs = generate_model_sequences(&ids, &perm, max_order);
        prop_assert_eq!(seqs.len(), sequence_count(p, q, max_order));
        let distinct: HashSet<&Vec<usize>> = seqs.iter().collect();
        prop_assert_eq!(distinct.len(), seqs.len());
        for s in &seqs {
            let perms: Vec<usize> = s.iter().copied().filter(|&i| i < p).collect();
            prop_assert!(s.starts_with(&perms));
            prop_assert!(perms.windows(2).all(|w| w[0] < w[1]));
        }
    }

    /// Point counts follow from the trace alone: sub-positions per executed
    /// instruction or per register use, once per address or register for
    /// permanent models.
    #[test]
    fn enumeration_is_exhaustive(id in model_id(), fixture in 0..3usize) {
        let fx = [testkit::pin_check, testkit::checksum, testkit::double_fault][fixture]();
        let trace = baseline(&fx);
        let model = catalog_model(&id).unwrap();
        let faults = enumerate_faults(&model, &trace, &[]);
        let mask = model.register_mask();
        let per = |bytes: u32| model.effect.positions(bytes).unwrap_or(1) as usize;
        let expected: usize = match (model.target, model.lifetime) {
            (FaultTarget::Instruction, Lifetime::Permanent) => {
                let mut seen = HashSet::new();
                trace.entries.iter().filter(|e| seen.insert(e.addr)).map(|e| per(e.size())).sum()
            }
            (FaultTarget::Instruction, _) => trace.entries.iter().map(|e| per(e.size())).sum(),
            (FaultTarget::Register, Lifetime::Permanent) => {
                let used = trace.entries.iter().fold(0, |m, e| m | (e.uses() & mask));
                used.count_ones() as usize * per(4)
            }
            (FaultTarget::Register, _) => {
                trace.entries.iter().map(|e| (e.uses() & mask).count_ones() as usize * per(4)).sum()
            }
        };
        prop_assert_eq!(faults.len(), expected);
        let points: HashSet<_> = faults.iter().map(|f| &f.point).collect();
        prop_assert_eq!(points.len(), faults.len());
        if model.is_permanent() {
            prop_assert!(faults.iter().all(|f| f.time() == trace.start_time));
        }
    }

    /// A first-order campaign never runs more combinations than it has points.
    #[test]
    fn runs_bounded_by_points(id in model_id(), fixture in 0..3usize) {
        let fx = [testkit::pin_check, testkit::checksum, testkit::double_fault][fixture]();
        let r = run_campaign(&fx.config(vec![catalog_model(&id).unwrap()], 1)).unwrap();
        let c = &r.counters;
        prop_assert!(c.runs <= c.points);
        prop_assert_eq!(c.runs + c.pruned, c.instantiations);
        prop_assert_eq!(
            c.exploitable + c.oracle_rejected + c.timeouts + c.invalid_assembly + c.memory_errors + c.hard_faults,
            c.runs
        );
        prop_assert_eq!(r.exploitable.len() as u64, c.exploitable);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// Same configuration, same results, whatever the worker count.
    #[test]
    fn campaigns_are_deterministic(
        ids in prop::sample::subsequence((1..=24).map(|i| format!("m{i}")).collect::<Vec<_>>(), 1..=3),
        workers in 1..=4usize,
    ) {
        let fx = testkit::pin_check();
        let models = ids.iter().map(|id| catalog_model(id).unwrap()).collect();
        let mut cfg = fx.config(models, 1);
        let a = run_campaign(&cfg).unwrap();
        cfg.workers = workers;
        let b = run_campaign(&cfg).unwrap();
        prop_assert!(a.same_results(&b));
        prop_assert_eq!(&a.counters, &b.counters);
    }

    /// A transient register fault changes only what the faulted instruction
    /// writes when nothing downstream reads those registers.
    #[test]
    fn transient_register_faults_stay_local(a in any::<u8>(), b in any::<u8>(), id in 20..=24u32) {
        let src = format!(
            "movs r0, #{a}\nmovs r1, #{b}\nadds r2, r0, r1\nsubs r3, r0, r1\nmov r4, r1\nlsls r5, r0, #3\nend: b end\n"
        );
        let prog = assemble(&src, 0x8000).unwrap();
        let start = prog.emulator(ArchLevel::V6M, UbProfile::default());
        let halts = [prog.symbol("end")];
        let mut emu = start.clone();
        let trace = dry_run(&mut emu, &mut NoHooks, &halts, 100);
        let reference = emu.state.clone();
        let model = catalog_model(&format!("m{id}")).unwrap();
        for fault in enumerate_faults(&model, &trace, &[]) {
            let entry = trace.entries.iter().find(|e| e.time == fault.time()).unwrap();
            let mut emu = start.clone();
            let mut set = FaultSet::new();
            emu.run_until_count(&mut set, &[], fault.time());
            set.install(fault.clone(), &emu).unwrap();
            emu.run_until_count(&mut set, &halts, 100);
            for r in 0..16u8 {
                if emu.state.reg(RegId(r)) != reference.reg(RegId(r)) {
                    prop_assert!(entry.writes_reg(RegId(r)), "{:?} changed r{}", fault.point, r);
                }
            }
        }
    }

    /// Replay diffs list only values that actually changed.
    #[test]
    fn trace_diffs_are_minimal(id in model_id(), pick in any::<prop::sample::Index>()) {
        let fx = testkit::checksum();
        let trace = baseline(&fx);
        let faults = enumerate_faults(&catalog_model(&id).unwrap(), &trace, &[]);
        prop_assume!(!faults.is_empty());
        let fault = pick.get(&faults).clone();
        let cfg = fx.config(Vec::new(), 1);
        let replay = tracer::replay(&cfg.emulator, &[fault], &cfg.halting_points, cfg.timeout, cfg.oracle.as_ref()).unwrap();
        for rec in &replay.records {
            prop_assert!(rec.regs.iter().all(|d| d.before != d.after));
            prop_assert!(rec.mem.iter().all(|d| d.before.len() == d.after.len()
                && d.before.iter().zip(&d.after).all(|(x, y)| x != y)));
        }
    }

    #[test]
    fn report_json_and_heatmap(ids in prop::sample::subsequence(vec!["m5", "m6", "m8", "m15", "m20", "m24"], 1..=2)) {
        let fx = testkit::pin_check();
        let models = ids.iter().map(|id| catalog_model(id).unwrap()).collect();
        let r = run_campaign(&fx.config(models, 1)).unwrap();
        let back = CampaignReport::from_json(&r.to_json()).unwrap();
        prop_assert!(back.same_results(&r));
        prop_assert_eq!(&back.counters, &r.counters);
        let h = HeatmapGrid::from_report(&r, 50);
        for id in &ids {
            let n = r.exploitable.iter().filter(|f| f.sequence == [*id]).count() as u64;
            prop_assert_eq!(h.row_sum(id), n);
        }
    }
}

#[test]
fn catalog_has_24_distinct_models() {
    let models = catalog_models();
    assert_eq!(models.len(), 24);
    let ids: HashSet<_> = models.iter().map(|m| &m.id).collect();
    assert_eq!(ids.len(), 24);
}
