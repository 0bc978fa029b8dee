//! Campaign configuration files and symbol maps.
//!
//! A campaign file is JSON. Paths are relative to the file's directory and
//! addresses are numbers, `"0x…"` strings or symbol names (optionally with
//! `+offset`) resolved through the symbol map.
//!
//! ```json
//! {
//!   "binary": "secure_boot.bin",
//!   "base": "0x8000",
//!   "symbols": "secure_boot.sym",
//!   "arch": "v6m",
//!   "profile": "default",
//!   "models": "m5,m6",
//!   "oracle": { "name": "address-reached", "target": "execute_firmware" },
//!   "halting_points": ["execute_firmware", "report_error"],
//!   "timeout": 100000,
//!   "max_order": 1,
//!   "workers": 4,
//!   "excluded": [{ "start": "0x8000", "end": "0x8010" }]
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::campaign::CampaignConfig;
use crate::emu::{ArchLevel, Boot, Emulator, MemoryLayout, NoHooks, RunOutcome, UbProfile};
use crate::faults::{resolve_models, AddrRange, FaultModelSpec};
use crate::oracles::{AddressReached, Block, DfaAes, ExploitabilityModel, OutputMismatch};

/// Serde helpers for addresses written as numbers or hex strings.
pub(crate) mod addr_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => u32::try_from(n).map_err(de::Error::custom),
            Raw::S(s) => super::parse_number(&s)
                .ok_or_else(|| de::Error::custom(format!("invalid address {s:?}"))),
        }
    }
}

/// Parses a decimal or `0x` hexadecimal number.
pub fn parse_number(s: &str) -> Option<u32> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u32::from_str_radix(&h.replace('_', ""), 16).ok(),
        None => s.parse().ok(),
    }
}

pub fn parse_hex_bytes(s: &str) -> Option<Vec<u8>> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error(transparent)]
    Models(#[from] crate::faults::ModelError),
    #[error(transparent)]
    Profile(#[from] crate::emu::ProfileError),
    #[error(transparent)]
    Load(#[from] crate::emu::LoadError),
    #[error(transparent)]
    Oracle(#[from] crate::oracles::OracleError),
}

fn read(path: &Path) -> Result<Vec<u8>, ConfigError> {
    std::fs::read(path).map_err(|e| ConfigError::Read {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// Name-to-address map, read from `nm` output (`<hex> <type> <name>`) or
/// `<name> <hex>` / `<name> = <hex>` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbols(pub BTreeMap<String, u32>);

impl Symbols {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().filter(|p| *p != "=").collect();
            let hex = |s: &str| u32::from_str_radix(s.trim_start_matches("0x"), 16).ok();
            let entry = match parts.as_slice() {
                [addr, _kind, name] => hex(addr).map(|a| (name.to_string(), a)),
                [name, addr] => hex(addr).map(|a| (name.to_string(), a)),
                _ => None,
            };
            let (name, addr) =
                entry.ok_or_else(|| ConfigError::Invalid(format!("symbol map line {}: {line:?}", n + 1)))?;
            map.insert(name, addr);
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = read(path)?;
        Self::parse(&String::from_utf8_lossy(&bytes))
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.0.get(name).copied()
    }

    /// Resolves `name`, `name+off`, a decimal or a hex number.
    pub fn resolve(&self, s: &str) -> Result<u32, ConfigError> {
        if let Some(v) = parse_number(s) {
            return Ok(v);
        }
        let (name, off) = match s.split_once('+') {
            Some((n, o)) => (
                n.trim(),
                parse_number(o).ok_or_else(|| ConfigError::Invalid(format!("bad offset in {s:?}")))?,
            ),
            None => (s.trim(), 0),
        };
        self.get(name)
            .map(|a| a.wrapping_add(off))
            .ok_or_else(|| ConfigError::UnknownSymbol(name.into()))
    }

    /// Like [`Symbols::resolve`] with the Thumb bit cleared.
    pub fn resolve_code(&self, s: &str) -> Result<u32, ConfigError> {
        self.resolve(s).map(|a| a & !1)
    }
}

/// An address given as a number or a string to resolve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AddrRef {
    Number(u32),
    Name(String),
}

impl AddrRef {
    fn code(&self, syms: &Symbols) -> Result<u32, ConfigError> {
        match self {
            AddrRef::Number(n) => Ok(n & !1),
            AddrRef::Name(s) => syms.resolve_code(s),
        }
    }

    fn data(&self, syms: &Symbols) -> Result<u32, ConfigError> {
        match self {
            AddrRef::Number(n) => Ok(*n),
            AddrRef::Name(s) => syms.resolve(s),
        }
    }
}

/// Built-in exploitability models with their parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum OracleSpec {
    AddressReached {
        target: AddrRef,
    },
    OutputMismatch {
        addr: AddrRef,
        /// Hex bytes. When absent, the fault-free run's output is used.
        #[serde(default)]
        expected: Option<String>,
        #[serde(default)]
        len: Option<usize>,
        #[serde(default)]
        at: Vec<AddrRef>,
    },
    DfaAes {
        key: String,
        plaintext: String,
        ciphertext: AddrRef,
        #[serde(default)]
        at: Vec<AddrRef>,
    },
}

impl OracleSpec {
    pub const NAMES: [&'static str; 3] = ["address-reached", "output-mismatch", "dfa-aes"];

    /// Builds the model. `reference` is the fault-free end state, used by
    /// output-mismatch without explicit expected bytes.
    pub fn build(
        &self,
        syms: &Symbols,
        start: &Emulator,
        reference: &Emulator,
    ) -> Result<Arc<dyn ExploitabilityModel>, ConfigError> {
        let block = |s: &str, what: &str| -> Result<Block, ConfigError> {
            parse_hex_bytes(s)
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| ConfigError::Invalid(format!("{what} must be 16 hex bytes")))
        };
        let codes = |v: &[AddrRef]| v.iter().map(|a| a.code(syms)).collect::<Result<Vec<_>, _>>();
        Ok(match self {
            OracleSpec::AddressReached { target } => Arc::new(AddressReached::new(target.code(syms)?)),
            OracleSpec::OutputMismatch { addr, expected, len, at } => {
                let addr = addr.data(syms)?;
                let expected = match (expected, len) {
                    (Some(hex), _) => parse_hex_bytes(hex)
                        .ok_or_else(|| ConfigError::Invalid("expected must be hex bytes".into()))?,
                    (None, Some(len)) => reference
                        .state
                        .mem
                        .read_bytes(addr, *len)
                        .ok_or_else(|| ConfigError::Invalid("output region unmapped".into()))?
                        .to_vec(),
                    (None, None) => {
                        return Err(ConfigError::Invalid("output-mismatch needs expected or len".into()))
                    }
                };
                let mut m = OutputMismatch::new(&start.state, addr, expected)?;
                m.at = codes(at)?;
                Arc::new(m)
            }
            OracleSpec::DfaAes { key, plaintext, ciphertext, at } => {
                let mut m = DfaAes::new(&block(key, "key")?, &block(plaintext, "plaintext")?, ciphertext.data(syms)?);
                m.at = codes(at)?;
                Arc::new(m)
            }
        })
    }

    /// Switches to another built-in model, keeping compatible parameters.
    pub fn rename(&self, name: &str) -> Result<OracleSpec, ConfigError> {
        let mut v = serde_json::to_value(self).expect("oracle spec serializes");
        v["name"] = name.into();
        serde_json::from_value(v)
            .map_err(|e| ConfigError::Invalid(format!("oracle {name}: {e}")))
    }
}

/// Bytes written to memory after loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryInit {
    pub addr: AddrRef,
    pub hex: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSelection {
    Named(String),
    Inline(Vec<FaultModelSpec>),
}

/// The campaign file. Every field can be overridden from the command line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    pub binary: Option<PathBuf>,
    /// Load address of a flat binary. ELF files carry their own.
    #[serde(default, with = "opt_addr")]
    pub base: Option<u32>,
    /// Explicit entry point; defaults to the vector table (flat) or ELF entry.
    pub entry: Option<AddrRef>,
    #[serde(default, with = "opt_addr")]
    pub sp: Option<u32>,
    pub symbols: Option<PathBuf>,
    pub memory: Option<MemoryLayout>,
    pub arch: Option<ArchLevel>,
    pub profile: Option<String>,
    pub models: Option<ModelSelection>,
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub halting_points: Vec<AddrRef>,
    /// Run the fault-free program up to this address before the campaign.
    pub start: Option<AddrRef>,
    #[serde(default)]
    pub inputs: Vec<MemoryInit>,
    pub timeout: Option<u64>,
    pub max_order: Option<usize>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub excluded: Vec<AddrRange>,
    #[serde(default)]
    pub record_pruned: bool,
}

mod opt_addr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u32>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => super::addr_serde::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u32>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "super::addr_serde")] u32);
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

pub const DEFAULT_TIMEOUT: u64 = 100_000;
pub const DEFAULT_BASE: u32 = crate::emu::DEFAULT_FLASH_BASE;

impl CampaignFile {
    /// Reads a campaign file, making relative paths absolute.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let mut f: CampaignFile = serde_json::from_slice(&text)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        };
        fix(&mut f.binary);
        fix(&mut f.symbols);
        if let Some(ModelSelection::Named(sel)) = &mut f.models {
            let candidate = dir.join(&*sel);
            if candidate.is_file() {
                *sel = candidate.to_string_lossy().into_owned();
            }
        }
        if let Some(p) = &mut f.profile {
            let candidate = dir.join(&*p);
            if UbProfile::builtin(p).is_none() && candidate.is_file() {
                *p = candidate.to_string_lossy().into_owned();
            }
        }
        Ok(f)
    }

    pub fn symbols(&self) -> Result<Symbols, ConfigError> {
        match &self.symbols {
            Some(p) => Symbols::load(p),
            None => Ok(Symbols::default()),
        }
    }

    /// Loads the binary and runs it to `start`. Returns the start state.
    pub fn prepare_emulator(&self, syms: &Symbols) -> Result<Emulator, ConfigError> {
        let path = self
            .binary
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("no binary given".into()))?;
        let bytes = read(path)?;
        let profile = UbProfile::resolve(self.profile.as_deref().unwrap_or("default"))?;
        let layout = self.memory.unwrap_or_default();
        let mut emu = Emulator::new(&layout, self.arch.unwrap_or(ArchLevel::V6M), Arc::new(profile));
        let entry = self.entry.as_ref().map(|e| e.code(syms)).transpose()?;
        if bytes.starts_with(b"\x7fELF") {
            let boot = entry.map(|pc| Boot::Explicit {
                pc,
                sp: self.sp.unwrap_or(layout.ram_base.wrapping_add(layout.ram_size)),
            });
            emu.load_elf(&bytes, boot)?;
        } else {
            let boot = match entry {
                Some(pc) => Boot::Explicit {
                    pc,
                    sp: self.sp.unwrap_or(layout.ram_base.wrapping_add(layout.ram_size)),
                },
                None => Boot::VectorTable,
            };
            emu.load_binary(&bytes, self.base.unwrap_or(DEFAULT_BASE), boot)?;
        }
        for init in &self.inputs {
            let data = parse_hex_bytes(&init.hex)
                .ok_or_else(|| ConfigError::Invalid(format!("bad hex input {:?}", init.hex)))?;
            let addr = init.addr.data(syms)?;
            emu.state
                .mem
                .load(addr, &data)
                .map_err(|e| ConfigError::Invalid(format!("input at {addr:#x}: {e}")))?;
        }
        if let Some(start) = &self.start {
            let target = start.code(syms)?;
            let budget = self.timeout.unwrap_or(DEFAULT_TIMEOUT);
            match emu.run_until(&mut NoHooks, &[target], budget) {
                RunOutcome::HaltingPointHit { .. } => {}
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "start point {target:#x} not reached: {other:?}"
                    )))
                }
            }
        }
        Ok(emu)
    }

    pub fn models(&self) -> Result<Vec<FaultModelSpec>, ConfigError> {
        match &self.models {
            None => Ok(resolve_models(crate::faults::CATALOG_PRESET)?),
            Some(ModelSelection::Named(s)) => Ok(resolve_models(s)?),
            Some(ModelSelection::Inline(v)) => {
                crate::faults::check_models(v)?;
                Ok(v.clone())
            }
        }
    }

    pub fn halting_points(&self, syms: &Symbols) -> Result<Vec<u32>, ConfigError> {
        self.halting_points.iter().map(|a| a.code(syms)).collect()
    }

    /// Builds the complete campaign configuration.
    pub fn build(&self) -> Result<CampaignConfig, ConfigError> {
        let syms = self.symbols()?;
        let emulator = self.prepare_emulator(&syms)?;
        let halting_points = self.halting_points(&syms)?;
        if halting_points.is_empty() {
            return Err(ConfigError::Invalid("no halting points".into()));
        }
        let timeout = self.timeout.unwrap_or(DEFAULT_TIMEOUT);
        let spec = self
            .oracle
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("no oracle given".into()))?;
        let mut reference = emulator.clone();
        reference.run_until(&mut NoHooks, &halting_points, timeout);
        let oracle = spec.build(&syms, &emulator, &reference)?;
        let config = CampaignConfig {
            emulator,
            models: self.models()?,
            oracle,
            halting_points,
            max_order: self.max_order.unwrap_or(1),
            timeout,
            excluded: self.excluded.clone(),
            workers: self.workers.unwrap_or(1),
            record_pruned: self.record_pruned,
        };
        config
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_hex() {
        assert_eq!(parse_number("0x8000"), Some(0x8000));
        assert_eq!(parse_number("42"), Some(42));
        assert_eq!(parse_number("zz"), None);
        assert_eq!(parse_hex_bytes("00 ff10"), Some(vec![0, 0xff, 0x10]));
        assert_eq!(parse_hex_bytes("abc"), None);
    }

    #[test]
    fn symbol_maps() {
        let s = Symbols::parse("00008001 T main\n20000000 B out\nflag = 0x20000010\n").unwrap();
        assert_eq!(s.resolve_code("main").unwrap(), 0x8000);
        assert_eq!(s.resolve("out+4").unwrap(), 0x2000_0004);
        assert_eq!(s.resolve("flag").unwrap(), 0x2000_0010);
        assert!(matches!(s.resolve("nope"), Err(ConfigError::UnknownSymbol(_))));
    }

    #[test]
    fn campaign_file_parses() {
        let f: CampaignFile = serde_json::from_str(
            r#"{"binary":"a.bin","base":"0x8000","models":"m5","halting_points":["done",32768],
                "oracle":{"name":"address-reached","target":"win"},
                "excluded":[{"start":"0x8000","end":16}]}"#,
        )
        .unwrap();
        assert_eq!(f.base, Some(0x8000));
        assert_eq!(f.excluded[0], AddrRange::new(0x8000, 16));
        assert_eq!(f.halting_points[1], AddrRef::Number(0x8000));
        let renamed = f.oracle.unwrap().rename("output-mismatch");
        assert!(renamed.is_err());
        assert!(serde_json::from_str::<CampaignFile>(r#"{"bogus":1}"#).is_err());
    }
}
