use super::{check_magic, check_seal, seal, CellEntry, FormatError, NODE_MAGIC};
use crate::flash::{PageBuf, PAGE_SIZE};
use crate::geometry::CELLS_PER_NODE;

const LEVEL_AT: usize = 1;
const COVER_AT: usize = 2;
const RESERVED: std::ops::Range<usize> = 5..11;
const CRC_AT: usize = 11;
/// First byte of the 81 x 3 entry area.
pub const NODE_ENTRY_OFFSET: usize = 13;
pub const MAX_NODE_LEVEL: u8 = 5;

/// A 9x9 quadtree node.
///
/// `cover` lists records that apply to the whole cell of this node; only the
/// root uses it, for zones that contain the entire world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePage {
    pub level: u8,
    pub cover: CellEntry,
    pub entries: [CellEntry; CELLS_PER_NODE],
}

impl NodePage {
    pub fn empty(level: u8) -> Self {
        Self {
            level,
            cover: CellEntry::Empty,
            entries: [CellEntry::Empty; CELLS_PER_NODE],
        }
    }

    pub fn entry_offset(slot: usize) -> usize {
        NODE_ENTRY_OFFSET + 3 * slot
    }

    pub fn is_empty(&self) -> bool {
        self.cover.is_empty() && self.entries.iter().all(|e| e.is_empty())
    }

    pub fn encode(&self) -> Result<PageBuf, FormatError> {
        if self.level > MAX_NODE_LEVEL {
            return Err(FormatError::BadField {
                field: "node level",
                value: self.level as i64,
            });
        }
        if let CellEntry::Child(_) = self.cover {
            return Err(FormatError::BadField {
                field: "cover entry tag",
                value: 0,
            });
        }
        let mut buf = [0xFF; PAGE_SIZE];
        buf[0] = NODE_MAGIC;
        buf[LEVEL_AT] = self.level;
        buf[COVER_AT..COVER_AT + 3].copy_from_slice(&self.cover.encode());
        for (slot, e) in self.entries.iter().enumerate() {
            let at = Self::entry_offset(slot);
            buf[at..at + 3].copy_from_slice(&e.encode());
        }
        seal(&mut buf, CRC_AT);
        Ok(buf)
    }

    pub fn decode(buf: &PageBuf) -> Result<Self, FormatError> {
        check_magic(buf[0], NODE_MAGIC)?;
        check_seal(buf, CRC_AT)?;
        let level = buf[LEVEL_AT];
        if level > MAX_NODE_LEVEL {
            return Err(FormatError::BadField {
                field: "node level",
                value: level as i64,
            });
        }
        if let Some(&b) = buf[RESERVED].iter().find(|&&b| b != 0xFF) {
            return Err(FormatError::BadField {
                field: "node reserved byte",
                value: b as i64,
            });
        }
        let cover = CellEntry::decode(&buf[COVER_AT..])?;
        if let CellEntry::Child(_) = cover {
            return Err(FormatError::BadField {
                field: "cover entry tag",
                value: 0,
            });
        }
        let mut entries = [CellEntry::Empty; CELLS_PER_NODE];
        for (slot, e) in entries.iter_mut().enumerate() {
            *e = CellEntry::decode(&buf[Self::entry_offset(slot)..])?;
        }
        Ok(Self {
            level,
            cover,
            entries,
        })
    }
}
