//! STM32F0xx memory map: flash, its boot alias at address 0, and SRAM.
//!
//! Every access is classified by region, direction and purpose so the
//! counters can tell RAM data reads, RAM writes and flash data reads apart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// Flash, whether addressed directly or through the alias.
    Flash,
    Ram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Fetch,
    Data,
}

/// Classification of one bus access. A fetch is always a read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessClass {
    pub region: Region,
    pub direction: Direction,
    pub purpose: Purpose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("access to unmapped address {address:#010x}")]
    Unmapped { address: u32 },
    #[error("unaligned {size}-byte access at {address:#010x}")]
    Unaligned { address: u32, size: u8 },
    #[error("write to read-only flash at {address:#010x}")]
    FlashWrite { address: u32 },
    #[error("invalid access size {size}")]
    InvalidSize { size: u8 },
}

impl MemoryError {
    pub fn address(&self) -> Option<u32> {
        match *self {
            MemoryError::Unmapped { address }
            | MemoryError::Unaligned { address, .. }
            | MemoryError::FlashWrite { address } => Some(address),
            MemoryError::InvalidSize { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("{name} size {size:#x} must be a power of two of at least 1 KiB")]
    BadSize { name: &'static str, size: u32 },
    #[error("{name} base {base:#010x} is not aligned to its size")]
    Misaligned { name: &'static str, base: u32 },
    #[error("regions overlap")]
    Overlap,
}

/// Placement and size of the three regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLayout {
    pub flash_base: u32,
    pub flash_size: u32,
    pub alias_base: u32,
    pub ram_base: u32,
    pub ram_size: u32,
}

impl Default for MemoryLayout {
    /// STM32F051: 64 KiB flash, 8 KiB SRAM.
    fn default() -> Self {
        MemoryLayout {
            flash_base: 0x0800_0000,
            flash_size: 64 * 1024,
            alias_base: 0x0000_0000,
            ram_base: 0x2000_0000,
            ram_size: 8 * 1024,
        }
    }
}

impl MemoryLayout {
    pub fn validate(&self) -> Result<(), LayoutError> {
        for (name, base, size) in [
            ("flash", self.flash_base, self.flash_size),
            ("ram", self.ram_base, self.ram_size),
        ] {
            if !size.is_power_of_two() || size < 1024 {
                return Err(LayoutError::BadSize { name, size });
            }
            if base % size != 0 {
                return Err(LayoutError::Misaligned { name, base });
            }
        }
        if self.alias_base % self.flash_size != 0 {
            return Err(LayoutError::Misaligned { name: "alias", base: self.alias_base });
        }
        let ranges = [
            (self.flash_base, self.flash_size),
            (self.alias_base, self.flash_size),
            (self.ram_base, self.ram_size),
        ];
        for (i, a) in ranges.iter().enumerate() {
            for b in &ranges[i + 1..] {
                let (a0, a1) = (u64::from(a.0), u64::from(a.0) + u64::from(a.1));
                let (b0, b1) = (u64::from(b.0), u64::from(b.0) + u64::from(b.1));
                if a0 < b1 && b0 < a1 {
                    return Err(LayoutError::Overlap);
                }
            }
        }
        Ok(())
    }

    /// First address past the end of RAM; the conventional initial stack top.
    pub fn ram_end(&self) -> u32 {
        self.ram_base.wrapping_add(self.ram_size)
    }

    fn in_range(address: u32, len: u32, base: u32, size: u32) -> bool {
        let start = u64::from(address);
        let end = start + u64::from(len);
        start >= u64::from(base) && end <= u64::from(base) + u64::from(size)
    }

    /// Region and byte offset for an access of `len` bytes, if fully mapped.
    pub fn locate(&self, address: u32, len: u32) -> Option<(Region, usize)> {
        if Self::in_range(address, len, self.flash_base, self.flash_size) {
            Some((Region::Flash, (address - self.flash_base) as usize))
        } else if Self::in_range(address, len, self.alias_base, self.flash_size) {
            Some((Region::Flash, (address - self.alias_base) as usize))
        } else if Self::in_range(address, len, self.ram_base, self.ram_size) {
            Some((Region::Ram, (address - self.ram_base) as usize))
        } else {
            None
        }
    }

    /// Region of a mapped address, without touching memory.
    pub fn region_of(&self, address: u32) -> Option<Region> {
        self.locate(address, 1).map(|(region, _)| region)
    }

    /// Canonical flash address for a flash or alias address.
    pub fn canonical_flash(&self, address: u32) -> Option<u32> {
        match self.locate(address, 1) {
            Some((Region::Flash, offset)) => Some(self.flash_base + offset as u32),
            _ => None,
        }
    }
}

/// Data bus used by the executor.
pub trait Bus {
    fn read(&self, address: u32, size: u8, purpose: Purpose)
        -> Result<(u32, AccessClass), MemoryError>;
    fn write(&mut self, address: u32, size: u8, value: u32) -> Result<AccessClass, MemoryError>;
}

/// Backing store for the memory map. Uninitialized memory reads as zero.
#[derive(Debug, Clone)]
pub struct MemoryMap {
    layout: MemoryLayout,
    flash: Vec<u8>,
    ram: Vec<u8>,
}

fn check_size(address: u32, size: u8) -> Result<(), MemoryError> {
    match size {
        1 | 2 | 4 => {}
        _ => return Err(MemoryError::InvalidSize { size }),
    }
    if address % u32::from(size) != 0 {
        return Err(MemoryError::Unaligned { address, size });
    }
    Ok(())
}

impl MemoryMap {
    pub fn new(layout: MemoryLayout) -> Result<Self, LayoutError> {
        layout.validate()?;
        Ok(MemoryMap {
            layout,
            flash: vec![0; layout.flash_size as usize],
            ram: vec![0; layout.ram_size as usize],
        })
    }

    pub fn layout(&self) -> &MemoryLayout {
        &self.layout
    }

    /// Copies `bytes` into memory, bypassing flash write protection.
    /// Returns the region written, or `None` if the range is not fully
    /// inside one region.
    pub fn load_bytes(&mut self, address: u32, bytes: &[u8]) -> Option<Region> {
        let len = u32::try_from(bytes.len()).ok()?;
        let (region, offset) = self.layout.locate(address, len.max(1))?;
        let store = match region {
            Region::Flash => &mut self.flash,
            Region::Ram => &mut self.ram,
        };
        store[offset..offset + bytes.len()].copy_from_slice(bytes);
        Some(region)
    }

    /// Reads raw bytes without classification, e.g. for static analysis.
    pub fn peek(&self, address: u32, len: usize) -> Option<&[u8]> {
        let (region, offset) = self.layout.locate(address, u32::try_from(len).ok()?)?;
        let store = match region {
            Region::Flash => &self.flash,
            Region::Ram => &self.ram,
        };
        Some(&store[offset..offset + len])
    }

    pub fn peek_u16(&self, address: u32) -> Option<u16> {
        self.peek(address, 2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn peek_u32(&self, address: u32) -> Option<u32> {
        self.peek(address, 4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl Bus for MemoryMap {
    fn read(
        &self,
        address: u32,
        size: u8,
        purpose: Purpose,
    ) -> Result<(u32, AccessClass), MemoryError> {
        check_size(address, size)?;
        let (region, offset) = self
            .layout
            .locate(address, u32::from(size))
            .ok_or(MemoryError::Unmapped { address })?;
        let store = match region {
            Region::Flash => &self.flash,
            Region::Ram => &self.ram,
        };
        let mut buf = [0u8; 4];
        buf[..usize::from(size)].copy_from_slice(&store[offset..offset + usize::from(size)]);
        let class = AccessClass { region, direction: Direction::Read, purpose };
        Ok((u32::from_le_bytes(buf), class))
    }

    fn write(&mut self, address: u32, size: u8, value: u32) -> Result<AccessClass, MemoryError> {
        check_size(address, size)?;
        let (region, offset) = self
            .layout
            .locate(address, u32::from(size))
            .ok_or(MemoryError::Unmapped { address })?;
        if region == Region::Flash {
            return Err(MemoryError::FlashWrite { address });
        }
        let bytes = value.to_le_bytes();
        self.ram[offset..offset + usize::from(size)].copy_from_slice(&bytes[..usize::from(size)]);
        Ok(AccessClass { region, direction: Direction::Write, purpose: Purpose::Data })
    }
}
