use super::{get_u24, put_u24, FormatError, PageAddr, CRC16};

pub const VERSION_RECORD_SIZE: usize = 16;
const MAGIC: [u8; 2] = *b"VR";
const FLAGS_AT: usize = 12;
const CRC_AT: usize = 13;
const FLAG_VALID: u8 = 0x01;

/// One slot of the version directory.
///
/// The CRC covers bytes `0..12` only, so the valid bit in `flags` can be
/// cleared in place (a 1 -> 0 program) to revoke the version.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VersionRecord {
    pub version: u32,
    pub root: PageAddr,
    pub cursor: PageAddr,
    pub flags: u8,
}

impl VersionRecord {
    pub fn new(version: u32, root: PageAddr, cursor: PageAddr) -> Self {
        Self {
            version,
            root,
            cursor,
            flags: 0xFF,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.flags & FLAG_VALID != 0
    }

    pub fn revoked(mut self) -> Self {
        self.flags &= !FLAG_VALID;
        self
    }

    pub fn encode(&self) -> [u8; VERSION_RECORD_SIZE] {
        let mut b = [0xFF; VERSION_RECORD_SIZE];
        b[0..2].copy_from_slice(&MAGIC);
        b[2..6].copy_from_slice(&self.version.to_be_bytes());
        put_u24(&mut b, 6, self.root.get());
        put_u24(&mut b, 9, self.cursor.get());
        b[FLAGS_AT] = self.flags;
        let crc = CRC16.checksum(&b[..FLAGS_AT]);
        b[CRC_AT..CRC_AT + 2].copy_from_slice(&crc.to_be_bytes());
        b
    }

    /// `Ok(None)` for an erased slot.
    pub fn decode(b: &[u8]) -> Result<Option<Self>, FormatError> {
        let b = &b[..VERSION_RECORD_SIZE];
        if b.iter().all(|&x| x == 0xFF) {
            return Ok(None);
        }
        if b[0..2] != MAGIC {
            return Err(FormatError::BadMagic {
                expected: MAGIC[0],
                found: b[0],
            });
        }
        let stored = u16::from_be_bytes([b[CRC_AT], b[CRC_AT + 1]]);
        let computed = CRC16.checksum(&b[..FLAGS_AT]);
        if stored != computed {
            return Err(FormatError::BadCrc { stored, computed });
        }
        Ok(Some(Self {
            version: u32::from_be_bytes(b[2..6].try_into().unwrap()),
            root: PageAddr::new(get_u24(b, 6))?,
            cursor: PageAddr::new(get_u24(b, 9))?,
            flags: b[FLAGS_AT],
        }))
    }

    pub const fn flags_offset() -> usize {
        FLAGS_AT
    }
}
