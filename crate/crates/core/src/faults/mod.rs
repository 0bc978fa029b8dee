//! Fault models, their injection points and installation into an emulator.
//!
//! A [`FaultModelSpec`] is a declarative family of faults. Walking a dry-run
//! trace with [`enumerate_faults`] expands it into [`ConcreteFault`]s, one
//! per injection point. A [`FaultSet`] installs concrete faults as emulator
//! hooks; every effect is keyed to the instruction index, so the same set
//! behaves identically whether it is installed at the start of a run or
//! right before the faulted instruction.

mod inject;
mod points;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::addr_serde;
use crate::emu::{Instruction, Op, RegId};

pub use inject::{FaultEvent, FaultSet, InstallError};
pub use points::{enumerate_faults, enumerate_injection_points};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultTarget {
    Instruction,
    Register,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lifetime {
    /// Active from the start of the run; re-asserted on every register write.
    Permanent,
    /// Applied once; the next write to the register removes it.
    UntilOverwrite,
    /// Active for a single instruction execution.
    Transient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Effect {
    Skip,
    ByteSet,
    ByteClear,
    BitFlip,
    BitSet,
    BitClear,
    Clear,
    Fill,
}

impl Effect {
    fn valid_for(self, target: FaultTarget) -> bool {
        match self {
            Effect::Skip => target == FaultTarget::Instruction,
            Effect::Clear | Effect::Fill | Effect::BitSet | Effect::BitClear => {
                target == FaultTarget::Register
            }
            Effect::ByteSet | Effect::ByteClear | Effect::BitFlip => true,
        }
    }

    /// Number of sub-positions over a value of `bytes` bytes, or `None` for
    /// effects without a sub-index.
    pub fn positions(self, bytes: u32) -> Option<u32> {
        match self {
            Effect::ByteSet | Effect::ByteClear => Some(bytes),
            Effect::BitFlip | Effect::BitSet | Effect::BitClear => Some(bytes * 8),
            Effect::Skip | Effect::Clear | Effect::Fill => None,
        }
    }

    /// Applies the effect to a register value.
    pub fn apply_word(self, value: u32, sub: Option<u8>) -> u32 {
        let s = sub.unwrap_or(0) as u32;
        match self {
            Effect::ByteSet => value | 0xFF << (8 * s),
            Effect::ByteClear => value & !(0xFF << (8 * s)),
            Effect::BitFlip => value ^ 1 << s,
            Effect::BitSet => value | 1 << s,
            Effect::BitClear => value & !(1 << s),
            Effect::Clear => 0,
            Effect::Fill => u32::MAX,
            Effect::Skip => value,
        }
    }

    /// Applies the effect to encoding bytes in memory order. Bit `i` is bit
    /// `i % 8` of byte `i / 8`.
    pub fn apply_bytes(self, bytes: &mut [u8], sub: Option<u8>) {
        let s = sub.unwrap_or(0) as usize;
        match self {
            Effect::ByteSet => bytes[s] = 0xFF,
            Effect::ByteClear => bytes[s] = 0,
            Effect::BitFlip => bytes[s / 8] ^= 1 << (s % 8),
            Effect::BitSet => bytes[s / 8] |= 1 << (s % 8),
            Effect::BitClear => bytes[s / 8] &= !(1 << (s % 8)),
            Effect::Clear => bytes.fill(0),
            Effect::Fill => bytes.fill(0xFF),
            Effect::Skip => {}
        }
    }
}

/// Half-open address range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AddrRange {
    #[serde(with = "addr_serde")]
    pub start: u32,
    #[serde(with = "addr_serde")]
    pub end: u32,
}

impl AddrRange {
    pub fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.start && addr < self.end
    }
}

/// Coarse instruction classes for model filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstrClass {
    Branch,
    LoadStore,
    DataProcessing,
    System,
    /// Encodings that do not decode in the configured architecture.
    Invalid,
}

impl InstrClass {
    pub fn of(instr: &Instruction) -> InstrClass {
        match instr.op {
            Op::B { .. } | Op::Bl { .. } | Op::Bx { .. } | Op::Blx { .. } | Op::Cbz { .. } => {
                InstrClass::Branch
            }
            Op::MovHigh { rd: 15, .. } | Op::AddHigh { rdn: 15, .. } => InstrClass::Branch,
            Op::Pop { regs } if regs & 0x8000 != 0 => InstrClass::Branch,
            Op::Mem { .. } | Op::Push { .. } | Op::Pop { .. } | Op::Stm { .. } | Op::Ldm { .. } => {
                InstrClass::LoadStore
            }
            Op::Cps { .. }
            | Op::Hint(_)
            | Op::Bkpt { .. }
            | Op::Svc { .. }
            | Op::Msr { .. }
            | Op::Mrs { .. }
            | Op::Barrier(_)
            | Op::It { .. } => InstrClass::System,
            _ => InstrClass::DataProcessing,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultFilters {
    /// Registers a register model may target. `None` selects R0-R12, LR
    /// and xPSR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registers: Option<Vec<RegId>>,
    /// Instructions in these ranges are never faulted (and their register
    /// uses are not injection points).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude_ranges: Vec<AddrRange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude_classes: Vec<InstrClass>,
}

/// Registers targeted by register models unless filtered otherwise.
pub fn default_registers() -> Vec<RegId> {
    (0..13).map(RegId).chain([RegId::LR, RegId::XPSR]).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("fault model {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("duplicate fault model id {0}")]
    Duplicate(String),
    #[error("cannot read fault models from {path}: {reason}")]
    Read { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultModelSpec {
    pub id: String,
    pub target: FaultTarget,
    pub lifetime: Lifetime,
    pub effect: Effect,
    #[serde(default)]
    pub filters: FaultFilters,
}

impl FaultModelSpec {
    pub fn new(
        id: impl Into<String>,
        target: FaultTarget,
        lifetime: Lifetime,
        effect: Effect,
    ) -> Result<Self, ModelError> {
        let spec = Self {
            id: id.into(),
            target,
            lifetime,
            effect,
            filters: FaultFilters::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_filters(mut self, filters: FaultFilters) -> Self {
        self.filters = filters;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |reason: &str| ModelError::Invalid {
            id: self.id.clone(),
            reason: reason.into(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if !self.effect.valid_for(self.target) {
            return Err(invalid(&format!(
                "effect {:?} does not apply to {:?} targets",
                self.effect, self.target
            )));
        }
        if self.lifetime == Lifetime::UntilOverwrite && self.target != FaultTarget::Register {
            return Err(invalid("until-overwrite applies to registers only"));
        }
        if self.filters.registers.as_ref().is_some_and(|r| r.is_empty()) {
            return Err(invalid("empty register allowlist"));
        }
        Ok(())
    }

    pub fn is_permanent(&self) -> bool {
        self.lifetime == Lifetime::Permanent
    }

    /// Bitmask (bit = register index) of registers this model may target.
    pub fn register_mask(&self) -> u32 {
        let regs = match &self.filters.registers {
            Some(r) => r.clone(),
            None => default_registers(),
        };
        regs.iter().fold(0, |m, r| m | 1 << r.0)
    }
}

impl fmt::Display for FaultModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} {} {})",
            self.id,
            kebab(&self.lifetime),
            kebab(&self.target),
            kebab(&self.effect)
        )
    }
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Name of the built-in 24-model catalog.
pub const CATALOG_PRESET: &str = "catalog";

/// The 24 reference models `m1`..`m24`: instruction models 1-8, register
/// models 9-24.
pub fn catalog_models() -> Vec<FaultModelSpec> {
    use Effect::*;
    use FaultTarget::*;
    use Lifetime::*;
    let rows: [(FaultTarget, Lifetime, Effect); 24] = [
        (Instruction, Permanent, Skip),
        (Instruction, Permanent, ByteSet),
        (Instruction, Permanent, ByteClear),
        (Instruction, Permanent, BitFlip),
        (Instruction, Transient, Skip),
        (Instruction, Transient, ByteSet),
        (Instruction, Transient, ByteClear),
        (Instruction, Transient, BitFlip),
        (Register, Permanent, Clear),
        (Register, Permanent, Fill),
        (Register, Permanent, ByteSet),
        (Register, Permanent, ByteClear),
        (Register, Permanent, BitSet),
        (Register, Permanent, BitClear),
        (Register, UntilOverwrite, Clear),
        (Register, UntilOverwrite, Fill),
        (Register, UntilOverwrite, ByteSet),
        (Register, UntilOverwrite, ByteClear),
        (Register, UntilOverwrite, BitFlip),
        (Register, Transient, Clear),
        (Register, Transient, Fill),
        (Register, Transient, ByteSet),
        (Register, Transient, ByteClear),
        (Register, Transient, BitFlip),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(t, l, e))| {
            FaultModelSpec::new(format!("m{}", i + 1), t, l, e).expect("catalog rows are valid")
        })
        .collect()
}

/// Looks up one model of the built-in catalog by id (`m1`..`m24`).
pub fn catalog_model(id: &str) -> Option<FaultModelSpec> {
    catalog_models().into_iter().find(|m| m.id == id)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelFile {
    List(Vec<FaultModelSpec>),
    Wrapped { models: Vec<FaultModelSpec> },
}

/// Parses a JSON model catalog: either a list of models or `{"models": [...]}`.
pub fn models_from_json(text: &str) -> Result<Vec<FaultModelSpec>, ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Read {
        path: "<inline>".into(),
        reason: e.to_string(),
    })?;
    let models = match file {
        ModelFile::List(m) | ModelFile::Wrapped { models: m } => m,
    };
    check_models(&models)?;
    Ok(models)
}

/// Validates a model list. An id may repeat (to apply one model several
/// times in a combination) only with an identical definition.
pub fn check_models(models: &[FaultModelSpec]) -> Result<(), ModelError> {
    let mut seen = std::collections::HashMap::new();
    for m in models {
        m.validate()?;
        if let Some(prev) = seen.insert(m.id.as_str(), m) {
            if prev != m {
                return Err(ModelError::Duplicate(m.id.clone()));
            }
        }
    }
    Ok(())
}

/// Resolves a model selection: the catalog name, a comma-separated list of
/// catalog ids (`m5,m6`), or a path to a JSON catalog.
pub fn resolve_models(selection: &str) -> Result<Vec<FaultModelSpec>, ModelError> {
    if selection == CATALOG_PRESET {
        return Ok(catalog_models());
    }
    let ids: Vec<&str> = selection.split(',').map(str::trim).collect();
    if let Some(models) = ids
        .iter()
        .map(|id| catalog_model(id))
        .collect::<Option<Vec<_>>>()
    {
        check_models(&models)?;
        return Ok(models);
    }
    let path = Path::new(selection);
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Read {
        path: selection.into(),
        reason: e.to_string(),
    })?;
    models_from_json(&text).map_err(|e| match e {
        ModelError::Read { reason, .. } => ModelError::Read {
            path: selection.into(),
            reason,
        },
        other => other,
    })
}

/// Where a fault lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Location {
    Instruction { addr: u32 },
    Register { reg: RegId },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Instruction { addr } => write!(f, "insn@{addr:#x}"),
            Location::Register { reg } => write!(f, "{reg}"),
        }
    }
}

/// One position where a model applies. The derived ordering is
/// (time, target kind, target id, sub-index, model).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InjectionPoint {
    pub time: u64,
    pub location: Location,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_index: Option<u8>,
    pub model: String,
}

/// A materialised fault: everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConcreteFault {
    #[serde(flatten)]
    pub point: InjectionPoint,
    pub lifetime: Lifetime,
    pub effect: Effect,
    /// Instruction size in bytes (instruction faults only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u8>,
    /// Encoding seen in the dry run (instruction faults only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<u32>,
    /// Encoding after the fault, absent for skips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faulted: Option<u32>,
}

impl ConcreteFault {
    pub fn time(&self) -> u64 {
        self.point.time
    }

    pub fn target(&self) -> FaultTarget {
        match self.point.location {
            Location::Instruction { .. } => FaultTarget::Instruction,
            Location::Register { .. } => FaultTarget::Register,
        }
    }
}

impl fmt::Display for ConcreteFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} {} {} {} {}",
            self.point.time,
            self.point.model,
            kebab(&self.lifetime),
            kebab(&self.effect),
            self.point.location
        )?;
        if let Some(s) = self.point.sub_index {
            let unit = match self.effect {
                Effect::ByteSet | Effect::ByteClear => "byte",
                _ => "bit",
            };
            write!(f, " {unit} {s}")?;
        }
        if let (Some(o), Some(w)) = (self.original, self.width) {
            let digits = w as usize * 2;
            match self.faulted {
                Some(n) => write!(f, " ({o:0digits$x} -> {n:0digits$x})")?,
                None => write!(f, " ({o:0digits$x} skipped)")?,
            }
        }
        Ok(())
    }
}

/// Encoding number (`hw1` or `hw1 << 16 | hw2`) from memory-order bytes.
pub(crate) fn encoding_of(bytes: &[u8]) -> u32 {
    let hw = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]) as u32;
    if bytes.len() >= 4 {
        hw(0) << 16 | hw(2)
    } else {
        hw(0)
    }
}
