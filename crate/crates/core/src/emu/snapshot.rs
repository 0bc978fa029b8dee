//! Snapshot/restore with incremental RAM copies.
//!
//! The first capture copies all of RAM. Afterwards each snapshot owns a
//! journal slot in the emulator's memory that records, as two ranges, which
//! RAM bytes were written since the snapshot was last synchronised. Restore
//! and refresh copy only those ranges. A restore into an emulator other than
//! the one that took the snapshot falls back to a full copy.

use super::memory::{DirtyRanges, PatchRecord, Span};
use super::{Emulator, PendingHalfword};

#[derive(Debug)]
pub struct Snapshot {
    emu_id: u64,
    slot: usize,
    generation: u64,
    regs: [u32; 16],
    xpsr: u32,
    primask: bool,
    control: u32,
    inactive_sp: u32,
    instr_count: u64,
    pending: Option<PendingHalfword>,
    ram: Vec<u8>,
    patches: Vec<PatchRecord>,
}

impl Snapshot {
    pub fn instr_count(&self) -> u64 {
        self.instr_count
    }

    pub fn pc(&self) -> u32 {
        self.regs[15]
    }
}

/// How much RAM a restore or refresh copied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RestoreStats {
    pub ranges: usize,
    pub bytes: usize,
}

impl Emulator {
    /// Captures the full state.
    pub fn snapshot(&mut self) -> Snapshot {
        let (slot, generation) = self.state.mem.journal.allocate();
        let s = &self.state;
        Snapshot {
            emu_id: self.id,
            slot,
            generation,
            regs: s.regs,
            xpsr: s.xpsr,
            primask: s.primask,
            control: s.control,
            inactive_sp: s.inactive_sp,
            instr_count: s.instr_count,
            pending: s.pending,
            ram: s.mem.ram.data.clone(),
            patches: s.mem.patches.clone(),
        }
    }

    fn owns(&self, snap: &Snapshot) -> bool {
        snap.emu_id == self.id && self.state.mem.journal.is_current(snap.slot, snap.generation)
    }

    fn copy_core_into(&self, snap: &mut Snapshot) {
        let s = &self.state;
        snap.regs = s.regs;
        snap.xpsr = s.xpsr;
        snap.primask = s.primask;
        snap.control = s.control;
        snap.inactive_sp = s.inactive_sp;
        snap.instr_count = s.instr_count;
        snap.pending = s.pending;
        if snap.patches != s.mem.patches {
            snap.patches = s.mem.patches.clone();
        }
    }

    /// Re-captures the current state into an existing snapshot, copying only
    /// RAM written since the snapshot was last synchronised.
    pub fn refresh(&mut self, snap: &mut Snapshot) -> RestoreStats {
        if !self.owns(snap) {
            let fresh = self.snapshot();
            let old = std::mem::replace(snap, fresh);
            self.release(old);
            return RestoreStats {
                ranges: 1,
                bytes: snap.ram.len(),
            };
        }
        let dirty = std::mem::take(&mut self.state.mem.journal.slots[snap.slot].dirty);
        let stats = copy_spans(&self.state.mem.ram.data, &mut snap.ram, &dirty);
        self.copy_core_into(snap);
        stats
    }

    /// Restores registers, RAM and code patches.
    pub fn restore(&mut self, snap: &Snapshot) -> RestoreStats {
        let s = &mut self.state;
        s.regs = snap.regs;
        s.xpsr = snap.xpsr;
        s.primask = snap.primask;
        s.control = snap.control;
        s.inactive_sp = snap.inactive_sp;
        s.instr_count = snap.instr_count;
        s.pending = snap.pending;
        restore_patches(self, &snap.patches);

        let owned = self.owns(snap);
        let mem = &mut self.state.mem;
        if owned {
            let dirty = std::mem::take(&mut mem.journal.slots[snap.slot].dirty);
            let stats = copy_spans(&snap.ram, &mut mem.ram.data, &dirty);
            mem.journal.mark_others(snap.slot, &dirty);
            stats
        } else {
            if mem.ram.data.len() != snap.ram.len() {
                mem.ram.data.resize(snap.ram.len(), 0);
            }
            mem.ram.data.copy_from_slice(&snap.ram);
            let all = DirtyRanges {
                low: Some(Span {
                    start: 0,
                    end: snap.ram.len() as u32,
                }),
                stack: None,
            };
            mem.journal.mark_others(usize::MAX, &all);
            RestoreStats {
                ranges: 1,
                bytes: snap.ram.len(),
            }
        }
    }

    /// Frees the snapshot's journal slot.
    pub fn release(&mut self, snap: Snapshot) {
        if snap.emu_id == self.id {
            self.state.mem.journal.release(snap.slot, snap.generation);
        }
    }
}

fn copy_spans(src: &[u8], dst: &mut [u8], dirty: &DirtyRanges) -> RestoreStats {
    let mut stats = RestoreStats::default();
    for span in dirty.spans() {
        let (a, b) = (span.start as usize, (span.end as usize).min(src.len()));
        if a < b {
            dst[a..b].copy_from_slice(&src[a..b]);
            stats.ranges += 1;
            stats.bytes += b - a;
        }
    }
    stats
}

/// Brings the flash patch log in line with `target`: patches past the common
/// prefix are undone (newest first) and the target's remaining patches are
/// re-applied. RAM-resident patches are covered by the RAM copy.
fn restore_patches(emu: &mut Emulator, target: &[PatchRecord]) {
    let mem = &mut emu.state.mem;
    if mem.patches.as_slice() == target {
        return;
    }
    let common = mem
        .patches
        .iter()
        .zip(target)
        .take_while(|(a, b)| a == b)
        .count();
    while mem.patches.len() > common {
        if let Some(p) = mem.patches.pop() {
            if mem.in_flash(p.addr, p.original.len() as u32) {
                let _ = mem.load(p.addr, &p.original);
            }
        }
    }
    for p in &target[common..] {
        if mem.in_flash(p.addr, p.patched.len() as u32) {
            let _ = mem.load(p.addr, &p.patched);
        }
        mem.patches.push(p.clone());
    }
}
