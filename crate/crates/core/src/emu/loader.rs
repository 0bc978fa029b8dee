//! Flat image and ELF loading.

use super::{Emulator, MachineState, XPSR_T};
use goblin::elf::{program_header::PT_LOAD, Elf};

/// How PC and SP are initialised after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boot {
    /// Initial SP at `base`, reset vector at `base + 4`.
    VectorTable,
    Explicit { pc: u32, sp: u32 },
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("image of {len} bytes at {base:#010x} does not fit the memory map")]
    ImageTooLarge { base: u32, len: usize },
    #[error("image base {0:#010x} is misaligned")]
    MisalignedBase(u32),
    #[error("invalid ELF: {0}")]
    Elf(String),
    #[error("ELF is not a 32-bit little-endian ARM image")]
    NotArm,
}

/// Loadable content of an ELF file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedImage {
    pub segments: Vec<(u32, Vec<u8>)>,
    pub entry: u32,
}

/// Extracts PT_LOAD segments (at their physical addresses) and the entry point.
pub fn load_elf(bytes: &[u8]) -> Result<LoadedImage, LoadError> {
    let elf = Elf::parse(bytes).map_err(|e| LoadError::Elf(e.to_string()))?;
    if elf.is_64 || !elf.little_endian || elf.header.e_machine != goblin::elf::header::EM_ARM {
        return Err(LoadError::NotArm);
    }
    let mut segments = Vec::new();
    for ph in elf.program_headers.iter().filter(|p| p.p_type == PT_LOAD) {
        if ph.p_filesz == 0 {
            continue;
        }
        let start = ph.p_offset as usize;
        let end = start
            .checked_add(ph.p_filesz as usize)
            .filter(|e| *e <= bytes.len())
            .ok_or_else(|| LoadError::Elf("segment outside file".into()))?;
        segments.push((ph.p_paddr as u32, bytes[start..end].to_vec()));
    }
    Ok(LoadedImage {
        segments,
        entry: elf.entry as u32,
    })
}

impl MachineState {
    fn place(&mut self, base: u32, image: &[u8]) -> Result<(), LoadError> {
        let too_large = LoadError::ImageTooLarge {
            base,
            len: image.len(),
        };
        if image.len() > u32::MAX as usize {
            return Err(too_large);
        }
        if !self.mem.is_mapped(base, image.len() as u32) && !image.is_empty() {
            return Err(too_large);
        }
        self.mem.load(base, image).map_err(|_| too_large)
    }

    fn boot(&mut self, base: u32, boot: Boot) -> Result<(), LoadError> {
        let (pc, sp) = match boot {
            Boot::Explicit { pc, sp } => (pc, sp),
            Boot::VectorTable => {
                if base % 4 != 0 {
                    return Err(LoadError::MisalignedBase(base));
                }
                let read = |a| {
                    self.mem
                        .read(a, 4, super::AccessKind::Read)
                        .map_err(|_| LoadError::ImageTooLarge { base, len: 8 })
                };
                (read(base.wrapping_add(4))?, read(base)?)
            }
        };
        self.regs[15] = pc & !1;
        self.regs[13] = sp & !3;
        self.xpsr |= XPSR_T;
        Ok(())
    }
}

impl Emulator {
    /// Copies a flat image to `base` and initialises PC/SP.
    pub fn load_binary(&mut self, image: &[u8], base: u32, boot: Boot) -> Result<(), LoadError> {
        if base % 2 != 0 {
            return Err(LoadError::MisalignedBase(base));
        }
        self.state.place(base, image)?;
        self.state.boot(base, boot)
    }

    /// Loads an ELF image. Without an explicit boot, PC is the ELF entry and
    /// SP is the first word of the lowest segment when that looks like an
    /// initial stack pointer, else the top of RAM.
    pub fn load_elf(&mut self, bytes: &[u8], boot: Option<Boot>) -> Result<u32, LoadError> {
        let img = load_elf(bytes)?;
        for (addr, data) in &img.segments {
            self.state.place(*addr, data)?;
        }
        let boot = boot.unwrap_or_else(|| {
            let ram = self.state.mem.layout();
            let ram_end = ram.ram_base.wrapping_add(ram.ram_size);
            let lowest = img.segments.iter().map(|(a, _)| *a).min();
            let sp = lowest
                .and_then(|a| self.state.mem.read(a, 4, super::AccessKind::Read).ok())
                .filter(|sp| *sp > ram.ram_base && *sp <= ram_end)
                .unwrap_or(ram_end);
            Boot::Explicit { pc: img.entry, sp }
        });
        self.state.boot(0, boot)?;
        Ok(img.entry)
    }
}
