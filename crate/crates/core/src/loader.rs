//! Loading raw binaries and little-endian ELF32 executables into a
//! [`MemoryMap`].

use object::elf;
use object::read::elf::{FileHeader, ProgramHeader};
use object::LittleEndian;
use serde::Serialize;
use thiserror::Error;

use crate::memory::{MemoryMap, Region};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("segment at {address:#010x} ({len} bytes) is outside mapped memory")]
    SegmentOutOfRange { address: u32, len: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Image<'a> {
    Raw { bytes: &'a [u8], base: u32 },
    Elf(&'a [u8]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub address: u32,
    pub len: u32,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub segments: Vec<Segment>,
    /// ELF entry point with the Thumb bit cleared; `None` for raw images.
    pub entry: Option<u32>,
    /// Initial stack pointer from the vector table at the flash base.
    pub initial_sp: u32,
    /// Reset handler from the vector table, Thumb bit cleared.
    pub reset_vector: u32,
}

pub fn load_image(map: &mut MemoryMap, image: Image<'_>) -> Result<LoadReport, LoadError> {
    let mut segments = Vec::new();
    let entry = match image {
        Image::Raw { bytes, base } => {
            segments.push(place(map, base, bytes)?);
            None
        }
        Image::Elf(data) => {
            let (entry, segs) = load_elf(map, data)?;
            segments = segs;
            Some(entry)
        }
    };
    let flash_base = map.layout().flash_base;
    let initial_sp = map.peek_u32(flash_base).unwrap_or(0);
    let reset_vector = map.peek_u32(flash_base + 4).unwrap_or(0) & !1;
    Ok(LoadReport { segments, entry, initial_sp, reset_vector })
}

fn place(map: &mut MemoryMap, address: u32, bytes: &[u8]) -> Result<Segment, LoadError> {
    let len = u32::try_from(bytes.len())
        .map_err(|_| LoadError::MalformedImage("image larger than 4 GiB".into()))?;
    let region = map
        .load_bytes(address, bytes)
        .ok_or(LoadError::SegmentOutOfRange { address, len })?;
    Ok(Segment { address, len, region })
}

fn load_elf(map: &mut MemoryMap, data: &[u8]) -> Result<(u32, Vec<Segment>), LoadError> {
    let malformed = |e: object::Error| LoadError::MalformedImage(e.to_string());
    let header = elf::FileHeader32::<LittleEndian>::parse(data).map_err(malformed)?;
    let endian = header.endian().map_err(malformed)?;
    if header.e_machine(endian) != elf::EM_ARM {
        return Err(LoadError::MalformedImage(format!(
            "not an ARM executable (e_machine = {})",
            header.e_machine(endian)
        )));
    }
    let mut segments = Vec::new();
    for ph in header.program_headers(endian, data).map_err(malformed)? {
        if ph.p_type(endian) != elf::PT_LOAD || ph.p_memsz(endian) == 0 {
            continue;
        }
        let address = ph.p_paddr(endian);
        let file_bytes = ph
            .data(endian, data)
            .map_err(|()| LoadError::MalformedImage("segment data out of bounds".into()))?;
        let memsz = ph.p_memsz(endian);
        let filesz = ph.p_filesz(endian);
        if memsz < filesz {
            return Err(LoadError::MalformedImage("p_memsz smaller than p_filesz".into()));
        }
        let mut bytes = file_bytes.to_vec();
        bytes.resize(memsz as usize, 0);
        segments.push(place(map, address, &bytes)?);
    }
    Ok((header.e_entry(endian) & !1, segments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{Bus, MemoryLayout, Purpose};

    fn map() -> MemoryMap {
        MemoryMap::new(MemoryLayout::default()).unwrap()
    }

    /// Minimal ELF32 executable with one PT_LOAD segment.
    pub(crate) fn tiny_elf(paddr: u32, entry: u32, payload: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        let phoff = 52u32;
        let data_off = 52 + 32;
        out.extend_from_slice(&[0x7F, b'E', b'L', b'F', 1, 1, 1, 0]);
        out.extend_from_slice(&[0; 8]);
        out.extend_from_slice(&2u16.to_le_bytes()); // ET_EXEC
        out.extend_from_slice(&40u16.to_le_bytes()); // EM_ARM
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&entry.to_le_bytes());
        out.extend_from_slice(&phoff.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes()); // shoff
        out.extend_from_slice(&0x0500_0200u32.to_le_bytes());
        out.extend_from_slice(&52u16.to_le_bytes());
        out.extend_from_slice(&32u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&40u16.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        let len = payload.len() as u32;
        for word in [1u32, data_off, paddr, paddr, len, len, 5, 4] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn raw_image_reads_back() {
        let mut m = map();
        let r = load_image(&mut m, Image::Raw { bytes: &[1, 2, 3, 4], base: 0x0800_0000 })
            .unwrap();
        assert_eq!(r.segments.len(), 1);
        assert_eq!(r.entry, None);
        assert_eq!(m.read(0x0800_0000, 4, Purpose::Data).unwrap().0, 0x0403_0201);
    }

    #[test]
    fn elf_entry_clears_thumb_bit() {
        let mut payload = vec![0u8; 16];
        payload[0..4].copy_from_slice(&0x2000_2000u32.to_le_bytes());
        payload[4..8].copy_from_slice(&0x0800_0009u32.to_le_bytes());
        let elf = tiny_elf(0x0800_0000, 0x0800_0009, &payload);
        let mut m = map();
        let r = load_image(&mut m, Image::Elf(&elf)).unwrap();
        assert_eq!(r.entry, Some(0x0800_0008));
        assert_eq!(r.initial_sp, 0x2000_2000);
        assert_eq!(r.reset_vector, 0x0800_0008);
        assert_eq!(r.segments[0].region, Region::Flash);
    }

    #[test]
    fn elf_segment_out_of_range() {
        let elf = tiny_elf(0x6000_0000, 0x6000_0001, &[0; 8]);
        assert_eq!(
            load_image(&mut map(), Image::Elf(&elf)),
            Err(LoadError::SegmentOutOfRange { address: 0x6000_0000, len: 8 })
        );
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(
            load_image(&mut map(), Image::Elf(b"not an elf at all, clearly")),
            Err(LoadError::MalformedImage(_))
        ));
    }

    #[test]
    fn raw_image_past_flash_end() {
        let bytes = vec![0u8; 64 * 1024 + 2];
        assert!(matches!(
            load_image(&mut map(), Image::Raw { bytes: &bytes, base: 0x0800_0000 }),
            Err(LoadError::SegmentOutOfRange { .. })
        ));
    }
}
