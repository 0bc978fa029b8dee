//! Phase-wise pull-queue scheduling over worker threads.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::sweep::{point_set, PointSet, Sink, Worker};
use super::{CampaignConfig, Counters, DryRunTrace, Finding, PrunedCombination};
use crate::faults::{enumerate_faults, ConcreteFault, FaultModelSpec};

pub(crate) struct Job<'a> {
    pub config: &'a CampaignConfig,
    /// Models after reordering; sequences index into this.
    pub models: &'a [FaultModelSpec],
    pub baseline: &'a DryRunTrace,
    /// Absolute instruction count at which every run stops.
    pub deadline: u64,
}

#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub findings: Vec<Finding>,
    pub pruned: Vec<PrunedCombination>,
    pub counters: Counters,
    pub max_active: usize,
    pub queue_items: u64,
}

struct Item<'s> {
    seq: &'s [usize],
    fault: ConcreteFault,
}

/// Runs the sequences phase by phase, shortest first.
pub(crate) fn run_phases(job: &Job<'_>, sequences: &[Vec<usize>]) -> Outcome {
    let mut out = Outcome::default();
    let mut known: HashSet<PointSet> = HashSet::new();
    let max_len = sequences.iter().map(Vec::len).max().unwrap_or(0);
    for k in 1..=max_len {
        let mut items = Vec::new();
        for (si, seq) in sequences.iter().enumerate().filter(|(_, s)| s.len() == k) {
            let faults = enumerate_faults(&job.models[seq[0]], job.baseline, &job.config.excluded);
            out.counters.points += faults.len() as u64;
            for (pi, fault) in faults.into_iter().enumerate() {
                items.push((fault.time(), si, pi, Item { seq, fault }));
            }
        }
        // Time order lets each worker's cursor move forward only.
        items.sort_by_key(|(t, si, pi, _)| (*t, *si, *pi));
        let items: Vec<Item> = items.into_iter().map(|(_, _, _, it)| it).collect();
        out.queue_items += items.len() as u64;

        let (sinks, active) = run_queue(job, &known, &items);
        out.max_active = out.max_active.max(active);
        for sink in sinks {
            out.counters.add(&sink.counters);
            for f in &sink.findings {
                known.insert(point_set(&f.faults));
            }
            out.findings.extend(sink.findings);
            out.pruned.extend(sink.pruned);
        }
        log::info!(
            "order {k}: {} items, {} exploitable so far",
            items.len(),
            out.findings.len()
        );
    }
    out
}

fn run_queue(job: &Job<'_>, known: &HashSet<PointSet>, items: &[Item<'_>]) -> (Vec<Sink>, usize) {
    let n = job.config.workers.min(items.len());
    if n == 0 {
        return (Vec::new(), 0);
    }
    if n == 1 {
        let mut w = Worker::new(job, known);
        for it in items {
            w.run_item(it.seq, &it.fault);
        }
        return (vec![w.sink], 1);
    }
    let next = AtomicUsize::new(0);
    let sinks = Mutex::new(Vec::with_capacity(n));
    let active = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..n {
            s.spawn(|| {
                let mut w = Worker::new(job, known);
                let mut took = false;
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(it) = items.get(i) else { break };
                    if !took {
                        took = true;
                        active.fetch_add(1, Ordering::Relaxed);
                    }
                    w.run_item(it.seq, &it.fault);
                }
                sinks.lock().expect("sink lock").push(w.sink);
            });
        }
    });
    (sinks.into_inner().expect("sink lock"), active.into_inner())
}
