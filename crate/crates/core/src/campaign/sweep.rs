//! Per-worker search over one model sequence.

use std::collections::HashSet;

use super::schedule::Job;
use super::{dry_run, evaluate, Counters, Finding, PrunedCombination, Verdict};
use crate::emu::{Emulator, RunOutcome, Snapshot};
use crate::faults::{enumerate_faults, ConcreteFault, FaultSet, InjectionPoint};

/// A set of injection points in canonical (sorted) order.
pub(crate) type PointSet = Vec<InjectionPoint>;

pub(crate) fn point_set(faults: &[ConcreteFault]) -> PointSet {
    let mut v: Vec<InjectionPoint> = faults.iter().map(|f| f.point.clone()).collect();
    v.sort();
    v
}

/// The first proper, non-empty subset of `points` found in `known`.
pub(crate) fn known_subset(points: &[InjectionPoint], known: &HashSet<PointSet>) -> Option<PointSet> {
    let n = points.len();
    if known.is_empty() || n < 2 {
        return None;
    }
    let full = (1u32 << n) - 1;
    for mask in 1..full {
        let sub: PointSet = (0..n)
            .filter(|i| mask & 1 << i != 0)
            .map(|i| points[i].clone())
            .collect();
        if known.contains(&sub) {
            return Some(sub);
        }
    }
    None
}

/// Results of one worker.
#[derive(Debug, Default)]
pub(crate) struct Sink {
    pub findings: Vec<Finding>,
    pub pruned: Vec<PrunedCombination>,
    pub counters: Counters,
}

pub(crate) struct Worker<'a> {
    job: &'a Job<'a>,
    known: &'a HashSet<PointSet>,
    pub emu: Emulator,
    /// Fault-free state at the last queue item's time.
    cursor: Snapshot,
    pub sink: Sink,
}

impl<'a> Worker<'a> {
    pub fn new(job: &'a Job<'a>, known: &'a HashSet<PointSet>) -> Self {
        let mut emu = job.config.emulator.clone();
        let cursor = emu.snapshot();
        Self {
            job,
            known,
            emu,
            cursor,
            sink: Sink::default(),
        }
    }

    /// Handles one first-model injection point of `seq`. Items must arrive
    /// in non-decreasing time order.
    pub fn run_item(&mut self, seq: &[usize], fault: &ConcreteFault) {
        self.emu.restore(&self.cursor);
        if self.emu.instr_count() < fault.time() {
            let out = self
                .emu
                .run_until_count(&mut crate::emu::NoHooks, &[], fault.time());
            debug_assert_eq!(out, RunOutcome::Timeout);
            self.emu.refresh(&mut self.cursor);
        }
        let mut faults = FaultSet::new();
        if let Err(e) = faults.install(fault.clone(), &self.emu) {
            log::warn!("skipping {fault}: {e}");
            return;
        }
        self.node(seq, faults);
    }

    /// The emulator stands at the time of the last fault in `faults`.
    fn node(&mut self, seq: &[usize], mut faults: FaultSet) {
        let job = self.job;
        let cfg = job.config;
        let (j, k) = (faults.len(), seq.len());
        if j == k {
            let out = self.emu.run_until_count(&mut faults, &cfg.halting_points, job.deadline);
            let verdict = evaluate(cfg.oracle.as_ref(), &self.emu.state, &out);
            let c = &mut self.sink.counters;
            c.runs += 1;
            c.instantiations += 1;
            c.count(verdict);
            if let RunOutcome::HaltingPointHit { addr } = out {
                if verdict.is_exploitable() {
                    self.sink.findings.push(Finding {
                        sequence: seq.iter().map(|&i| job.models[i].id.clone()).collect(),
                        faults: faults.faults().to_vec(),
                        halt_addr: addr,
                        halt_time: self.emu.instr_count(),
                    });
                }
            }
            return;
        }

        let mut cursor = self.emu.snapshot();
        let trace = dry_run(&mut self.emu, &mut faults, &cfg.halting_points, job.deadline);
        let verdict = evaluate(cfg.oracle.as_ref(), &self.emu.state, &trace.outcome);
        self.sink.counters.dry_runs += 1;
        if verdict == Verdict::Exploitable || !verdict.continues() {
            if verdict == Verdict::Exploitable && j + 1 == k {
                let children = self.children(seq, &faults, &trace);
                self.sink.counters.points += children.len() as u64;
                self.sink.counters.pruned += children.len() as u64;
                self.sink.counters.instantiations += children.len() as u64;
                if cfg.record_pruned {
                    let subset = point_set(faults.faults());
                    for child in children {
                        let mut all = faults.faults().to_vec();
                        all.push(child);
                        self.sink.pruned.push(PrunedCombination {
                            faults: point_set(&all),
                            subset: subset.clone(),
                        });
                    }
                }
            }
            self.emu.release(cursor);
            return;
        }

        let children = self.children(seq, &faults, &trace);
        self.sink.counters.points += children.len() as u64;
        for child in children {
            let mut all = faults.faults().to_vec();
            all.push(child.clone());
            let points = point_set(&all);
            if let Some(subset) = known_subset(&points, self.known) {
                if j + 1 == k {
                    self.sink.counters.pruned += 1;
                    self.sink.counters.instantiations += 1;
                    if cfg.record_pruned {
                        self.sink.pruned.push(PrunedCombination { faults: points, subset });
                    }
                }
                continue;
            }
            self.emu.restore(&cursor);
            if self.emu.instr_count() < child.time() {
                let out = self.emu.run_until_count(&mut faults, &[], child.time());
                debug_assert_eq!(out, RunOutcome::Timeout);
                self.emu.refresh(&mut cursor);
            }
            let mut next = faults.clone();
            if let Err(e) = next.install(child, &self.emu) {
                log::warn!("skipping child fault: {e}");
                continue;
            }
            self.node(seq, next);
        }
        self.emu.release(cursor);
    }

    /// Faults of the next model over `trace`. When the model repeats the
    /// previous one, only points after the parent's are kept so that each
    /// unordered combination is visited once.
    fn children(&self, seq: &[usize], faults: &FaultSet, trace: &super::DryRunTrace) -> Vec<ConcreteFault> {
        let j = faults.len();
        let model = &self.job.models[seq[j]];
        let mut v = enumerate_faults(model, trace, &self.job.config.excluded);
        if j > 0 && self.job.models[seq[j - 1]].id == model.id {
            let parent = &faults.faults()[j - 1].point;
            v.retain(|f| &f.point > parent);
        }
        v
    }
}

