//! Brute-force campaign oracles. Every node is rebuilt by re-running the
//! program from the start state, with no snapshots, cursors or threads.

use std::collections::HashSet;

use faultscope::campaign::{
    dry_run, evaluate, generate_model_sequences, order_models, CampaignConfig, Counters, DryRunTrace,
    Finding, Verdict,
};
use faultscope::emu::{Emulator, NoHooks, RunOutcome};
use faultscope::faults::{enumerate_faults, ConcreteFault, FaultModelSpec, FaultSet, InjectionPoint};

struct Ctx<'a> {
    cfg: &'a CampaignConfig,
    models: Vec<FaultModelSpec>,
    deadline: u64,
    baseline: DryRunTrace,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a CampaignConfig) -> Self {
        let mut emu = cfg.emulator.clone();
        let deadline = emu.instr_count() + cfg.timeout;
        let baseline = dry_run(&mut emu, &mut NoHooks, &cfg.halting_points, deadline);
        Self {
            cfg,
            models: order_models(&cfg.models),
            deadline,
            baseline,
        }
    }

    fn sequences(&self) -> Vec<Vec<usize>> {
        let ids: Vec<&str> = self.models.iter().map(|m| m.id.as_str()).collect();
        let perm: Vec<bool> = self.models.iter().map(|m| m.is_permanent()).collect();
        generate_model_sequences(&ids, &perm, self.cfg.max_order)
    }

    /// Restarts from the initial state and installs `faults` one by one at
    /// their times. `None` when a fault cannot be installed.
    fn rebuild(&self, faults: &[ConcreteFault]) -> Option<(Emulator, FaultSet)> {
        let mut emu = self.cfg.emulator.clone();
        let mut set = FaultSet::new();
        for f in faults {
            if emu.instr_count() < f.time() {
                let out = emu.run_until_count(&mut set, &[], f.time());
                assert_eq!(out, RunOutcome::Timeout, "parent run ended before a child fault");
            }
            set.install(f.clone(), &emu).ok()?;
        }
        Some((emu, set))
    }

    fn children(&self, seq: &[usize], faults: &[ConcreteFault], trace: &DryRunTrace) -> Vec<ConcreteFault> {
        let j = faults.len();
        let model = &self.models[seq[j]];
        let mut v = enumerate_faults(model, trace, &self.cfg.excluded);
        if j > 0 && self.models[seq[j - 1]].id == model.id {
            v.retain(|f| f.point > faults[j - 1].point);
        }
        v
    }

    /// Dry run after `faults`; `None` if they cannot be installed.
    fn node_trace(&self, faults: &[ConcreteFault]) -> Option<(DryRunTrace, Verdict)> {
        let (mut emu, mut set) = self.rebuild(faults)?;
        let trace = dry_run(&mut emu, &mut set, &self.cfg.halting_points, self.deadline);
        let verdict = evaluate(self.cfg.oracle.as_ref(), &emu.state, &trace.outcome);
        Some((trace, verdict))
    }
}

fn sorted_points(faults: &[ConcreteFault]) -> Vec<InjectionPoint> {
    let mut v: Vec<InjectionPoint> = faults.iter().map(|f| f.point.clone()).collect();
    v.sort();
    v
}

fn has_known_subset(points: &[InjectionPoint], known: &HashSet<Vec<InjectionPoint>>) -> bool {
    let n = points.len();
    (1u32..(1 << n) - 1).any(|mask| {
        let sub: Vec<InjectionPoint> = (0..n).filter(|i| mask & 1 << i != 0).map(|i| points[i].clone()).collect();
        known.contains(&sub)
    })
}

/// Result of the naive full-restart campaign.
pub struct Naive {
    pub findings: Vec<Finding>,
    pub counters: Counters,
}

/// Same search semantics as the campaign (phase-wise subset pruning,
/// same-model ordering) but every execution restarts from scratch.
pub fn full_restart(cfg: &CampaignConfig) -> Naive {
    let ctx = Ctx::new(cfg);
    let sequences = ctx.sequences();
    let mut out = Naive {
        findings: Vec::new(),
        counters: Counters::default(),
    };
    let mut known = HashSet::new();
    for k in 1..=cfg.max_order {
        let mut found = Vec::new();
        for seq in sequences.iter().filter(|s| s.len() == k) {
            visit(&ctx, seq, Vec::new(), &known, &mut found, &mut out.counters);
        }
        for f in &found {
            known.insert(sorted_points(&f.faults));
        }
        out.findings.extend(found);
    }
    out.counters.sequences = sequences.len() as u64;
    out.findings
        .sort_by(|a, b| (a.order(), a.points(), &a.sequence).cmp(&(b.order(), b.points(), &b.sequence)));
    out
}

fn visit(
    ctx: &Ctx<'_>,
    seq: &[usize],
    faults: Vec<ConcreteFault>,
    known: &HashSet<Vec<InjectionPoint>>,
    found: &mut Vec<Finding>,
    c: &mut Counters,
) {
    let (j, k) = (faults.len(), seq.len());
    if j == k {
        let Some((mut emu, mut set)) = ctx.rebuild(&faults) else { return };
        let out = emu.run_until_count(&mut set, &ctx.cfg.halting_points, ctx.deadline);
        let verdict = evaluate(ctx.cfg.oracle.as_ref(), &emu.state, &out);
        c.runs += 1;
        c.instantiations += 1;
        c.count(verdict);
        if let (RunOutcome::HaltingPointHit { addr }, true) = (out, verdict.is_exploitable()) {
            found.push(Finding {
                sequence: seq.iter().map(|&i| ctx.models[i].id.clone()).collect(),
                faults,
                halt_addr: addr,
                halt_time: emu.instr_count(),
            });
        }
        return;
    }
    let trace = if j == 0 {
        ctx.baseline.clone()
    } else {
        let Some((trace, verdict)) = ctx.node_trace(&faults) else { return };
        c.dry_runs += 1;
        if verdict == Verdict::Exploitable && j + 1 == k {
            let n = ctx.children(seq, &faults, &trace).len() as u64;
            c.points += n;
            c.pruned += n;
            c.instantiations += n;
        }
        if !matches!(verdict, Verdict::OracleRejected | Verdict::Timeout) {
            return;
        }
        trace
    };
    let children = ctx.children(seq, &faults, &trace);
    c.points += children.len() as u64;
    for child in children {
        let mut all = faults.clone();
        all.push(child);
        if has_known_subset(&sorted_points(&all), known) {
            if j + 1 == k {
                c.pruned += 1;
                c.instantiations += 1;
            }
            continue;
        }
        visit(ctx, seq, all, known, found, c);
    }
}

/// Number of sequence instantiations without any pruning: every node whose
/// dry run reaches a halting point or the deadline is expanded.
pub fn unpruned_count(cfg: &CampaignConfig) -> u64 {
    let ctx = Ctx::new(cfg);
    ctx.sequences()
        .iter()
        .map(|seq| count(&ctx, seq, Vec::new()))
        .sum()
}

fn count(ctx: &Ctx<'_>, seq: &[usize], faults: Vec<ConcreteFault>) -> u64 {
    let j = faults.len();
    if j == seq.len() {
        return u64::from(ctx.rebuild(&faults).is_some());
    }
    let trace = if j == 0 {
        ctx.baseline.clone()
    } else {
        match ctx.node_trace(&faults) {
            Some((t, Verdict::Exploitable | Verdict::OracleRejected | Verdict::Timeout)) => t,
            _ => return 0,
        }
    };
    ctx.children(seq, &faults, &trace)
        .into_iter()
        .map(|child| {
            let mut all = faults.clone();
            all.push(child);
            count(ctx, seq, all)
        })
        .sum()
}
