//! Undefined-behavior profiles.
//!
//! A profile maps each architecturally unpredictable case to an action. The
//! default profile aborts on every case; `xmc1100` and `stm32f407` carry the
//! behavior measured on those chips.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// An undefined-behavior case, identified by instruction and condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UbCondition {
    /// `ADD Rdn, Rm` with Rdn == Rm == PC.
    AddPcPc,
    /// High-register `CMP Rn, Rm` with both registers in R0-R7.
    CmpBothLow,
    /// High-register `CMP` naming PC.
    CmpWithPc,
    BxPc,
    BlxPc,
    /// `BX` with a nonzero value in encoding bits [2:0].
    BxSbz,
    BlxSbz,
    PopEmpty,
    PushEmpty,
    LdmEmpty,
    StmEmpty,
    /// `STM Rn!` with Rn in the list but not the lowest register.
    StmBaseNotLowest,
    /// Should-be-zero/should-be-one bits with the wrong value.
    ReservedBits,
    /// `MSR`/`MRS` with an unassigned special register number.
    SpecialRegister,
    /// Instruction not permitted at its position in an IT block, or a
    /// malformed `IT`.
    ItBlock,
    /// 32-bit instruction with SP/PC operands the architecture forbids.
    WideOperands,
    /// Execution with EPSR.T clear.
    ThumbBitClear,
}

impl UbCondition {
    pub const ALL: [UbCondition; 17] = [
        UbCondition::AddPcPc,
        UbCondition::CmpBothLow,
        UbCondition::CmpWithPc,
        UbCondition::BxPc,
        UbCondition::BlxPc,
        UbCondition::BxSbz,
        UbCondition::BlxSbz,
        UbCondition::PopEmpty,
        UbCondition::PushEmpty,
        UbCondition::LdmEmpty,
        UbCondition::StmEmpty,
        UbCondition::StmBaseNotLowest,
        UbCondition::ReservedBits,
        UbCondition::SpecialRegister,
        UbCondition::ItBlock,
        UbCondition::WideOperands,
        UbCondition::ThumbBitClear,
    ];

    /// (instruction class, condition) pair used in profile files.
    pub fn key(self) -> (&'static str, &'static str) {
        use UbCondition::*;
        match self {
            AddPcPc => ("add", "rdn-and-rm-are-pc"),
            CmpBothLow => ("cmp", "both-low-registers"),
            CmpWithPc => ("cmp", "register-is-pc"),
            BxPc => ("bx", "rm-is-pc"),
            BlxPc => ("blx", "rm-is-pc"),
            BxSbz => ("bx", "low-bits-not-zero"),
            BlxSbz => ("blx", "low-bits-not-zero"),
            PopEmpty => ("pop", "empty-register-list"),
            PushEmpty => ("push", "empty-register-list"),
            LdmEmpty => ("ldm", "empty-register-list"),
            StmEmpty => ("stm", "empty-register-list"),
            StmBaseNotLowest => ("stm", "base-in-list-not-lowest"),
            ReservedBits => ("any", "reserved-bits"),
            SpecialRegister => ("msr-mrs", "invalid-special-register"),
            ItBlock => ("it", "invalid-in-it-block"),
            WideOperands => ("wide", "forbidden-operands"),
            ThumbBitClear => ("any", "thumb-bit-clear"),
        }
    }

    pub fn from_key(instruction: &str, condition: &str) -> Option<UbCondition> {
        Self::ALL
            .into_iter()
            .find(|c| c.key() == (instruction, condition))
    }
}

impl fmt::Display for UbCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (i, c) = self.key();
        write!(f, "{i}: {c}")
    }
}

/// What the emulator does when it meets an undefined-behavior case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum UbAction {
    /// Stop with an `Unpredictable` classification.
    #[default]
    Abort,
    HardFault,
    Nop,
    /// Execute with the ordinary semantics of the decoded instruction.
    Execute,
    /// `LDR LR, [base]` with the base register unchanged.
    LoadLinkRegister,
    /// `STR LR, [base]`, optionally followed by `base += 4`.
    StoreLinkRegister {
        #[serde(default)]
        post_increment: bool,
    },
    /// Branch to the value read from PC (instruction address + 4) keeping
    /// the Thumb state; `BLX` also sets LR.
    BranchToPc,
    /// Branch to Rm with bit 0 cleared and clear EPSR.T.
    ClearThumbBit,
}

impl UbAction {
    /// Whether the action makes sense for the condition.
    pub fn applies_to(self, cond: UbCondition) -> bool {
        use UbCondition::*;
        match self {
            UbAction::Abort | UbAction::HardFault | UbAction::Nop | UbAction::Execute => true,
            UbAction::LoadLinkRegister => matches!(cond, PopEmpty | LdmEmpty),
            UbAction::StoreLinkRegister { .. } => matches!(cond, PushEmpty | StmEmpty),
            UbAction::BranchToPc => matches!(cond, BxPc | BlxPc),
            UbAction::ClearThumbBit => matches!(cond, BxSbz | BlxSbz),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("unknown undefined-behavior case `{0}` / `{1}`")]
    UnknownCondition(String, String),
    #[error("action {1:?} does not apply to `{0}`")]
    InapplicableAction(UbCondition, UbAction),
    #[error("reading profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing profile: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileEntry {
    instruction: String,
    condition: String,
    action: UbAction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileFile {
    name: String,
    #[serde(default)]
    allow_unaligned: bool,
    #[serde(default)]
    entries: Vec<ProfileEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UbProfile {
    pub name: String,
    pub entries: BTreeMap<UbCondition, UbAction>,
    /// Permit unaligned halfword/word data accesses (LDM/STM/PUSH/POP stay
    /// alignment-checked).
    pub allow_unaligned: bool,
}

impl Default for UbProfile {
    fn default() -> Self {
        Self::abort_all()
    }
}

impl UbProfile {
    pub const BUILTIN: [&'static str; 3] = ["default", "xmc1100", "stm32f407"];

    pub fn abort_all() -> Self {
        Self {
            name: "default".into(),
            entries: BTreeMap::new(),
            allow_unaligned: false,
        }
    }

    /// Infineon XMC1100 (Cortex-M0).
    pub fn xmc1100() -> Self {
        use UbAction::*;
        use UbCondition::*;
        Self {
            name: "xmc1100".into(),
            entries: [
                (AddPcPc, HardFault),
                (CmpBothLow, Execute),
                (BxPc, BranchToPc),
                (BlxPc, BranchToPc),
                (BxSbz, ClearThumbBit),
                (BlxSbz, ClearThumbBit),
                (PopEmpty, LoadLinkRegister),
                (PushEmpty, StoreLinkRegister { post_increment: false }),
                (LdmEmpty, LoadLinkRegister),
                (StmEmpty, StoreLinkRegister { post_increment: true }),
                (StmBaseNotLowest, Execute),
                (ThumbBitClear, HardFault),
            ]
            .into_iter()
            .collect(),
            allow_unaligned: false,
        }
    }

    /// ST STM32F407 (Cortex-M4), restricted to the ARMv6-M cases.
    pub fn stm32f407() -> Self {
        use UbAction::*;
        use UbCondition::*;
        Self {
            name: "stm32f407".into(),
            entries: [
                (AddPcPc, HardFault),
                (CmpBothLow, Execute),
                (BxPc, HardFault),
                (BlxPc, HardFault),
                (BxSbz, Execute),
                (BlxSbz, Execute),
                (PopEmpty, Nop),
                (PushEmpty, Nop),
                (LdmEmpty, Nop),
                (StmEmpty, Nop),
                (StmBaseNotLowest, Execute),
                (ThumbBitClear, HardFault),
            ]
            .into_iter()
            .collect(),
            allow_unaligned: false,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "default" | "abort" => Some(Self::abort_all()),
            "xmc1100" => Some(Self::xmc1100()),
            "stm32f407" => Some(Self::stm32f407()),
            _ => None,
        }
    }

    /// A built-in name or a path to a JSON profile.
    pub fn resolve(name_or_path: &str) -> Result<Self, ProfileError> {
        if let Some(p) = Self::builtin(name_or_path) {
            return Ok(p);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::from_json(&std::fs::read_to_string(path)?);
        }
        Err(ProfileError::UnknownProfile(name_or_path.into()))
    }

    pub fn action(&self, cond: UbCondition) -> UbAction {
        self.entries.get(&cond).copied().unwrap_or(UbAction::Abort)
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let file: ProfileFile = serde_json::from_str(text)?;
        let mut entries = BTreeMap::new();
        for e in file.entries {
            let cond = UbCondition::from_key(&e.instruction, &e.condition)
                .ok_or_else(|| ProfileError::UnknownCondition(e.instruction, e.condition))?;
            if !e.action.applies_to(cond) {
                return Err(ProfileError::InapplicableAction(cond, e.action));
            }
            entries.insert(cond, e.action);
        }
        Ok(Self {
            name: file.name,
            entries,
            allow_unaligned: file.allow_unaligned,
        })
    }

    pub fn to_json(&self) -> String {
        let file = ProfileFile {
            name: self.name.clone(),
            allow_unaligned: self.allow_unaligned,
            entries: self
                .entries
                .iter()
                .map(|(c, a)| {
                    let (i, k) = c.key();
                    ProfileEntry {
                        instruction: i.into(),
                        condition: k.into(),
                        action: *a,
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_unique_and_parse_back() {
        for c in UbCondition::ALL {
            let (i, k) = c.key();
            assert_eq!(UbCondition::from_key(i, k), Some(c));
        }
    }

    #[test]
    fn json_round_trip() {
        for name in UbProfile::BUILTIN {
            let p = UbProfile::builtin(name).unwrap();
            assert_eq!(UbProfile::from_json(&p.to_json()).unwrap(), p);
        }
    }

    #[test]
    fn rejects_inapplicable_action() {
        let text = r#"{"name":"x","entries":[
            {"instruction":"add","condition":"rdn-and-rm-are-pc","action":{"kind":"load-link-register"}}]}"#;
        assert!(matches!(
            UbProfile::from_json(text),
            Err(ProfileError::InapplicableAction(..))
        ));
    }
}
