//! Exhaustive fault campaigns.
//!
//! A campaign runs every model sequence up to `max_order`. Order-`k`
//! sequences form one phase. Within a phase, the first-model injection
//! points over the baseline trace are pulled from a shared queue by the
//! workers. Each worker advances a private emulator to the point, installs
//! the fault and either evaluates the run (last model) or dry-runs from
//! there and recurses with the next model.
//!
//! Combinations that contain an exploitable combination found in an earlier
//! phase are skipped and counted as pruned. The set of known exploitable
//! combinations only changes between phases, so results do not depend on
//! the number of workers or on scheduling.

mod dryrun;
mod schedule;
mod sequences;
mod sweep;

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use dryrun::{dry_run, DryRunTrace, Recorder, TraceEntry};
pub use sequences::generate_model_sequences;

use crate::emu::{Emulator, ErrorClass, MachineState, NoHooks, RunOutcome};
use crate::faults::{AddrRange, ConcreteFault, FaultModelSpec, FaultTarget, InjectionPoint};
use crate::oracles::ExploitabilityModel;

/// Everything a campaign needs. `emulator` is the prepared start state.
#[derive(Clone)]
pub struct CampaignConfig {
    pub emulator: Emulator,
    pub models: Vec<FaultModelSpec>,
    pub oracle: Arc<dyn ExploitabilityModel>,
    pub halting_points: Vec<u32>,
    pub max_order: usize,
    /// Instruction budget per run, counted from the start state.
    pub timeout: u64,
    pub excluded: Vec<AddrRange>,
    pub workers: usize,
    /// Keep the list of pruned combinations in the report.
    pub record_pruned: bool,
}

impl CampaignConfig {
    pub fn new(emulator: Emulator, models: Vec<FaultModelSpec>, oracle: Arc<dyn ExploitabilityModel>) -> Self {
        Self {
            emulator,
            models,
            oracle,
            halting_points: Vec::new(),
            max_order: 1,
            timeout: 100_000,
            excluded: Vec::new(),
            workers: 1,
            record_pruned: false,
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.models.is_empty() {
            return Err(CampaignError::Config("no fault models".into()));
        }
        if self.max_order == 0 {
            return Err(CampaignError::Config("max_order must be at least 1".into()));
        }
        if self.timeout == 0 {
            return Err(CampaignError::Config("timeout must be positive".into()));
        }
        if self.workers == 0 {
            return Err(CampaignError::Config("worker count must be at least 1".into()));
        }
        crate::faults::check_models(&self.models).map_err(|e| CampaignError::Config(e.to_string()))
    }
}

impl fmt::Debug for CampaignConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CampaignConfig")
            .field("models", &self.models)
            .field("oracle", &self.oracle.name())
            .field("halting_points", &self.halting_points)
            .field("max_order", &self.max_order)
            .field("timeout", &self.timeout)
            .field("excluded", &self.excluded)
            .field("workers", &self.workers)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CampaignError {
    #[error("invalid campaign configuration: {0}")]
    Config(String),
}

/// Result class of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Exploitable,
    /// A halting point was reached but the oracle rejected the state.
    OracleRejected,
    Timeout,
    InvalidAssembly,
    MemoryError,
    HardFault,
}

impl Verdict {
    pub fn is_exploitable(self) -> bool {
        self == Verdict::Exploitable
    }

    /// Whether the run ended with valid machine code, so the next model
    /// may be applied on top of it.
    pub fn continues(self) -> bool {
        matches!(self, Verdict::OracleRejected | Verdict::Timeout)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Exploitable => "exploitable",
            Verdict::OracleRejected => "oracle-rejected",
            Verdict::Timeout => "timeout",
            Verdict::InvalidAssembly => "invalid-assembly",
            Verdict::MemoryError => "memory-error",
            Verdict::HardFault => "hard-fault",
        };
        f.write_str(s)
    }
}

/// Classifies a finished run.
pub fn evaluate(oracle: &dyn ExploitabilityModel, state: &MachineState, outcome: &RunOutcome) -> Verdict {
    match outcome {
        RunOutcome::HaltingPointHit { addr } => {
            if oracle.is_exploitable(state, *addr) {
                Verdict::Exploitable
            } else {
                Verdict::OracleRejected
            }
        }
        RunOutcome::Timeout => Verdict::Timeout,
        RunOutcome::Error { error } => match error.class() {
            ErrorClass::InvalidAssembly => Verdict::InvalidAssembly,
            ErrorClass::MemoryError => Verdict::MemoryError,
            ErrorClass::HardFault => Verdict::HardFault,
        },
    }
}

/// An exploitable fault combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    /// Model ids in injection order.
    pub sequence: Vec<String>,
    pub faults: Vec<ConcreteFault>,
    pub halt_addr: u32,
    /// Instruction index at which the halting point was reached.
    pub halt_time: u64,
}

impl Finding {
    pub fn order(&self) -> usize {
        self.faults.len()
    }

    pub fn points(&self) -> Vec<&InjectionPoint> {
        self.faults.iter().map(|f| &f.point).collect()
    }
}

/// A combination that was not executed, with the exploitable subset that
/// made it redundant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedCombination {
    pub faults: Vec<InjectionPoint>,
    pub subset: Vec<InjectionPoint>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub sequences: u64,
    /// Injection points enumerated over all levels.
    pub points: u64,
    /// Full-length combinations considered: `runs + pruned`.
    pub instantiations: u64,
    /// Runs of full-length combinations.
    pub runs: u64,
    /// Dry runs for intermediate levels.
    pub dry_runs: u64,
    pub pruned: u64,
    pub exploitable: u64,
    pub oracle_rejected: u64,
    pub timeouts: u64,
    pub invalid_assembly: u64,
    pub memory_errors: u64,
    pub hard_faults: u64,
}

impl Counters {
    fn add(&mut self, o: &Counters) {
        self.sequences += o.sequences;
        self.points += o.points;
        self.instantiations += o.instantiations;
        self.runs += o.runs;
        self.dry_runs += o.dry_runs;
        self.pruned += o.pruned;
        self.exploitable += o.exploitable;
        self.oracle_rejected += o.oracle_rejected;
        self.timeouts += o.timeouts;
        self.invalid_assembly += o.invalid_assembly;
        self.memory_errors += o.memory_errors;
        self.hard_faults += o.hard_faults;
    }

    pub fn count(&mut self, v: Verdict) {
        match v {
            Verdict::Exploitable => self.exploitable += 1,
            Verdict::OracleRejected => self.oracle_rejected += 1,
            Verdict::Timeout => self.timeouts += 1,
            Verdict::InvalidAssembly => self.invalid_assembly += 1,
            Verdict::MemoryError => self.memory_errors += 1,
            Verdict::HardFault => self.hard_faults += 1,
        }
    }
}

/// Execution statistics. Not part of the result proper.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub workers: usize,
    /// Most workers that took at least one queue item in a phase.
    pub max_active_workers: usize,
    /// Queue items handed out over all phases.
    pub queue_items: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Baseline {
    pub start_time: u64,
    pub length: usize,
    pub outcome: RunOutcome,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub oracle: String,
    pub models: Vec<FaultModelSpec>,
    pub sequences: Vec<Vec<String>>,
    pub max_order: usize,
    pub timeout: u64,
    pub halting_points: Vec<u32>,
    pub baseline: Baseline,
    pub exploitable: Vec<Finding>,
    pub counters: Counters,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pruned: Vec<PrunedCombination>,
    pub stats: RunStats,
}

impl CampaignReport {
    /// Equality ignoring execution statistics.
    pub fn same_results(&self, other: &CampaignReport) -> bool {
        CampaignReport {
            stats: RunStats::default(),
            ..self.clone()
        } == CampaignReport {
            stats: RunStats::default(),
            ..other.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Sorts models so that permanent instruction models precede permanent
/// register models. Relative order is otherwise kept.
pub fn order_models(models: &[FaultModelSpec]) -> Vec<FaultModelSpec> {
    let mut v = models.to_vec();
    v.sort_by_key(|m| match (m.is_permanent(), m.target) {
        (true, FaultTarget::Instruction) => 0,
        (true, FaultTarget::Register) => 1,
        (false, _) => 2,
    });
    v
}

/// Runs a complete campaign.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    config.validate()?;
    let started = Instant::now();
    let models = order_models(&config.models);
    let ids: Vec<&str> = models.iter().map(|m| m.id.as_str()).collect();
    let permanent: Vec<bool> = models.iter().map(|m| m.is_permanent()).collect();
    let sequences = generate_model_sequences(&ids, &permanent, config.max_order);

    let mut emu = config.emulator.clone();
    let deadline = emu.instr_count().saturating_add(config.timeout);
    let baseline_trace = dry_run(&mut emu, &mut NoHooks, &config.halting_points, deadline);
    let baseline_verdict = evaluate(config.oracle.as_ref(), &emu.state, &baseline_trace.outcome);
    log::info!(
        "baseline: {} instructions, {:?} ({})",
        baseline_trace.len(),
        baseline_trace.outcome,
        baseline_verdict
    );

    let job = schedule::Job {
        config,
        models: &models,
        baseline: &baseline_trace,
        deadline,
    };
    let outcome = schedule::run_phases(&job, &sequences);

    let mut counters = outcome.counters;
    counters.sequences = sequences.len() as u64;
    let mut exploitable = outcome.findings;
    exploitable.sort_by(|a, b| {
        (a.order(), a.points(), &a.sequence).cmp(&(b.order(), b.points(), &b.sequence))
    });
    let mut pruned = outcome.pruned;
    pruned.sort_by(|a, b| (a.faults.len(), &a.faults, &a.subset).cmp(&(b.faults.len(), &b.faults, &b.subset)));

    Ok(CampaignReport {
        oracle: config.oracle.name().to_string(),
        sequences: sequences
            .iter()
            .map(|s| s.iter().map(|&i| models[i].id.clone()).collect())
            .collect(),
        models,
        max_order: config.max_order,
        timeout: config.timeout,
        halting_points: config.halting_points.clone(),
        baseline: Baseline {
            start_time: baseline_trace.start_time,
            length: baseline_trace.len(),
            outcome: baseline_trace.outcome,
            verdict: baseline_verdict,
        },
        exploitable,
        counters,
        pruned,
        stats: RunStats {
            workers: config.workers,
            max_active_workers: outcome.max_active,
            queue_items: outcome.queue_items,
            wall_ms: started.elapsed().as_millis() as u64,
        },
    })
}
