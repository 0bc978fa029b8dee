//! Exhaustive fault-injection simulation for ARM-M (Thumb) machine code.
//!
//! The crate is organised in layers:
//!
//! * [`emu`] is an instruction-accurate ARMv6-M emulator (plus a declared
//!   ARMv7-M subset) that stays correct when fed faulty encodings, exposes
//!   hooks on every fetch/register/memory access and supports cheap
//!   snapshot/restore.
//! * [`faults`] describes fault models, enumerates their injection points
//!   over a dry-run trace and installs concrete faults into an emulator.
//! * [`campaign`] drives exhaustive first- and higher-order campaigns with
//!   subset pruning and a pull-queue worker pool.
//! * [`tracer`] replays a single fault combination instruction by
//!   instruction.
//! * [`oracles`] holds the exploitability models and the host-side AES and
//!   SHA-256 references they rely on.
//! * [`report`] and [`config`] cover the JSON report/config formats and the
//!   heatmap/scatter exports used by the command-line front end.
//! * [`testkit`] is a tiny Thumb assembler used to build test fixtures.

pub mod campaign;
pub mod config;
pub mod emu;
pub mod faults;
pub mod oracles;
pub mod report;
pub mod testkit;
pub mod tracer;

pub use campaign::{run_campaign, CampaignConfig, CampaignReport};
pub use emu::{ArchLevel, Emulator, MachineState, RegId};
pub use faults::{ConcreteFault, FaultModelSpec, InjectionPoint};
