//! Flat flash + RAM memory map with write journaling for incremental snapshots.

use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_FLASH_BASE: u32 = 0x0000_8000;
pub const DEFAULT_FLASH_SIZE: u32 = 0x0004_0000;
pub const DEFAULT_RAM_BASE: u32 = 0x2000_0000;
pub const DEFAULT_RAM_SIZE: u32 = 0x0001_0000;

/// Layout of the two memory regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLayout {
    pub flash_base: u32,
    pub flash_size: u32,
    pub ram_base: u32,
    pub ram_size: u32,
}

impl Default for MemoryLayout {
    fn default() -> Self {
        Self {
            flash_base: DEFAULT_FLASH_BASE,
            flash_size: DEFAULT_FLASH_SIZE,
            ram_base: DEFAULT_RAM_BASE,
            ram_size: DEFAULT_RAM_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessKind {
    Read,
    Write,
    Fetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryErrorKind {
    Unmapped,
    Unaligned,
    ReadOnly,
}

/// A classified memory access failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind:?} {access:?} of {size} byte(s) at {addr:#010x}")]
pub struct MemoryError {
    pub addr: u32,
    pub size: u8,
    pub access: AccessKind,
    pub kind: MemoryErrorKind,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Region {
    pub base: u32,
    pub data: Vec<u8>,
}

impl Region {
    fn offset(&self, addr: u32, size: u32) -> Option<usize> {
        let off = addr.wrapping_sub(self.base) as u64;
        if addr >= self.base && off + size as u64 <= self.data.len() as u64 {
            Some(off as usize)
        } else {
            None
        }
    }

    pub fn end(&self) -> u64 {
        self.base as u64 + self.data.len() as u64
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("base", &format_args!("{:#010x}", self.base))
            .field("len", &self.data.len())
            .finish()
    }
}

/// Byte range inside RAM, as offsets from the RAM base (half-open).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: u32,
    pub end: u32,
}

impl Span {
    fn hull(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// The two tracked write ranges of one snapshot: one anchored at the start of
/// RAM and one anchored at the stack pointer. A write is attributed to the
/// range whose anchor is nearer and grows that range's hull.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DirtyRanges {
    pub low: Option<Span>,
    pub stack: Option<Span>,
}

impl DirtyRanges {
    pub fn mark(&mut self, span: Span, sp_offset: Option<u32>) {
        let near_stack = match sp_offset {
            Some(sp) => span.start.abs_diff(sp) < span.start,
            None => false,
        };
        self.mark_in(near_stack, span);
    }

    fn mark_in(&mut self, stack: bool, span: Span) {
        let slot = if stack { &mut self.stack } else { &mut self.low };
        *slot = Some(match *slot {
            Some(existing) => existing.hull(span),
            None => span,
        });
    }

    pub fn merge(&mut self, other: &DirtyRanges) {
        if let Some(s) = other.low {
            self.mark_in(false, s);
        }
        if let Some(s) = other.stack {
            self.mark_in(true, s);
        }
    }

    pub fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        self.low.iter().chain(self.stack.iter()).copied()
    }

    pub fn clear(&mut self) {
        *self = DirtyRanges::default();
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct JournalSlot {
    pub generation: u64,
    pub live: bool,
    pub dirty: DirtyRanges,
}

/// Per-snapshot dirty range trackers fed by every RAM write.
#[derive(Debug, Clone, Default)]
pub(crate) struct Journal {
    pub slots: Vec<JournalSlot>,
    pub next_generation: u64,
    pub any_live: bool,
}

impl Journal {
    pub fn allocate(&mut self) -> (usize, u64) {
        self.next_generation += 1;
        let generation = self.next_generation;
        let idx = match self.slots.iter().position(|s| !s.live) {
            Some(i) => i,
            None => {
                self.slots.push(JournalSlot::default());
                self.slots.len() - 1
            }
        };
        self.slots[idx] = JournalSlot {
            generation,
            live: true,
            dirty: DirtyRanges::default(),
        };
        self.any_live = true;
        (idx, generation)
    }

    pub fn is_current(&self, slot: usize, generation: u64) -> bool {
        self.slots
            .get(slot)
            .map(|s| s.live && s.generation == generation)
            .unwrap_or(false)
    }

    pub fn release(&mut self, slot: usize, generation: u64) {
        if self.is_current(slot, generation) {
            self.slots[slot].live = false;
        }
        self.any_live = self.slots.iter().any(|s| s.live);
    }

    fn mark(&mut self, span: Span, sp_offset: Option<u32>) {
        for s in self.slots.iter_mut().filter(|s| s.live) {
            s.dirty.mark(span, sp_offset);
        }
    }

    /// Marks `ranges` dirty in every live slot except `except`.
    pub fn mark_others(&mut self, except: usize, ranges: &DirtyRanges) {
        for (i, s) in self.slots.iter_mut().enumerate() {
            if i != except && s.live {
                s.dirty.merge(ranges);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct PatchRecord {
    pub addr: u32,
    pub original: Vec<u8>,
    pub patched: Vec<u8>,
}

/// The emulated address space: a flash region and a RAM region, both
/// little-endian. Writes to flash from instructions fail with `ReadOnly`;
/// code patches (permanent instruction faults) go through [`Memory::patch`]
/// and are undone by snapshot restore.
#[derive(Debug, Clone)]
pub struct Memory {
    pub flash: Region,
    pub ram: Region,
    pub(crate) journal: Journal,
    pub(crate) patches: Vec<PatchRecord>,
}

impl PartialEq for Memory {
    fn eq(&self, other: &Self) -> bool {
        self.flash == other.flash && self.ram == other.ram
    }
}

impl Eq for Memory {}

impl Memory {
    pub fn new(layout: &MemoryLayout) -> Self {
        Self {
            flash: Region {
                base: layout.flash_base,
                data: vec![0; layout.flash_size as usize],
            },
            ram: Region {
                base: layout.ram_base,
                data: vec![0; layout.ram_size as usize],
            },
            journal: Journal::default(),
            patches: Vec::new(),
        }
    }

    pub fn layout(&self) -> MemoryLayout {
        MemoryLayout {
            flash_base: self.flash.base,
            flash_size: self.flash.data.len() as u32,
            ram_base: self.ram.base,
            ram_size: self.ram.data.len() as u32,
        }
    }

    pub fn is_mapped(&self, addr: u32, size: u32) -> bool {
        self.flash.offset(addr, size).is_some() || self.ram.offset(addr, size).is_some()
    }

    pub fn in_ram(&self, addr: u32, size: u32) -> bool {
        self.ram.offset(addr, size).is_some()
    }

    pub fn in_flash(&self, addr: u32, size: u32) -> bool {
        self.flash.offset(addr, size).is_some()
    }

    fn slice(&self, addr: u32, size: u32) -> Option<&[u8]> {
        if let Some(off) = self.flash.offset(addr, size) {
            return Some(&self.flash.data[off..off + size as usize]);
        }
        if let Some(off) = self.ram.offset(addr, size) {
            return Some(&self.ram.data[off..off + size as usize]);
        }
        None
    }

    /// Reads `size` (1, 2 or 4) bytes. Alignment is the caller's concern.
    pub fn read(&self, addr: u32, size: u8, access: AccessKind) -> Result<u32, MemoryError> {
        let bytes = self.slice(addr, size as u32).ok_or(MemoryError {
            addr,
            size,
            access,
            kind: MemoryErrorKind::Unmapped,
        })?;
        Ok(match size {
            1 => bytes[0] as u32,
            2 => u16::from_le_bytes([bytes[0], bytes[1]]) as u32,
            _ => u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        })
    }

    pub fn fetch_halfword(&self, addr: u32) -> Result<u16, MemoryError> {
        if addr & 1 != 0 {
            return Err(MemoryError {
                addr,
                size: 2,
                access: AccessKind::Fetch,
                kind: MemoryErrorKind::Unaligned,
            });
        }
        self.read(addr, 2, AccessKind::Fetch).map(|v| v as u16)
    }

    /// Writes to RAM; flash is read-only for data accesses.
    pub fn write(&mut self, addr: u32, size: u8, value: u32, sp: u32) -> Result<(), MemoryError> {
        let Some(off) = self.ram.offset(addr, size as u32) else {
            let kind = if self.flash.offset(addr, size as u32).is_some() {
                MemoryErrorKind::ReadOnly
            } else {
                MemoryErrorKind::Unmapped
            };
            return Err(MemoryError {
                addr,
                size,
                access: AccessKind::Write,
                kind,
            });
        };
        if self.journal.any_live {
            let sp_off = self
                .ram
                .offset(sp, 0)
                .map(|o| o as u32);
            self.journal.mark(
                Span {
                    start: off as u32,
                    end: off as u32 + size as u32,
                },
                sp_off,
            );
        }
        let bytes = value.to_le_bytes();
        self.ram.data[off..off + size as usize].copy_from_slice(&bytes[..size as usize]);
        Ok(())
    }

    /// Raw byte read without access classification (tooling, oracles).
    pub fn read_bytes(&self, addr: u32, len: usize) -> Option<&[u8]> {
        self.slice(addr, len as u32)
    }

    /// Loads bytes into flash or RAM ignoring write protection (image loading).
    pub fn load(&mut self, addr: u32, bytes: &[u8]) -> Result<(), MemoryError> {
        let size = bytes.len() as u32;
        let region = if self.flash.offset(addr, size).is_some() {
            &mut self.flash
        } else if self.ram.offset(addr, size).is_some() {
            &mut self.ram
        } else {
            return Err(MemoryError {
                addr,
                size: bytes.len().min(255) as u8,
                access: AccessKind::Write,
                kind: MemoryErrorKind::Unmapped,
            });
        };
        let off = region.offset(addr, size).unwrap_or_default();
        region.data[off..off + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    /// Overwrites code bytes (flash or RAM), recording the original content
    /// so that a snapshot restore can undo the patch.
    pub fn patch(&mut self, addr: u32, bytes: &[u8], sp: u32) -> Result<(), MemoryError> {
        let original = self
            .slice(addr, bytes.len() as u32)
            .ok_or(MemoryError {
                addr,
                size: bytes.len() as u8,
                access: AccessKind::Write,
                kind: MemoryErrorKind::Unmapped,
            })?
            .to_vec();
        if let Some(off) = self.ram.offset(addr, bytes.len() as u32) {
            if self.journal.any_live {
                let sp_off = self.ram.offset(sp, 0).map(|o| o as u32);
                self.journal.mark(
                    Span {
                        start: off as u32,
                        end: (off + bytes.len()) as u32,
                    },
                    sp_off,
                );
            }
        }
        self.patches.push(PatchRecord {
            addr,
            original,
            patched: bytes.to_vec(),
        });
        self.load(addr, bytes)
    }
}
