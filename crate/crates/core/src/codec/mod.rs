//! On-flash page layouts. Every page kind is exactly 256 bytes, big-endian,
//! and protected by a CRC-16/CCITT. See `FORMAT.md` for the offset tables.

mod config;
mod leaf;
mod node;
mod object;
mod version;

pub use config::{ConfigPage, FORMAT_VERSION};
pub use leaf::{LeafListPage, LeafRecord, RecordKind, LEAF_RECORDS_PER_PAGE};
pub use node::{NodePage, MAX_NODE_LEVEL, NODE_ENTRY_OFFSET};
pub use object::{zone_page_count, zone_pages, ObjectPage, HEAD_VERTEX_CAPACITY, TAIL_VERTEX_CAPACITY};
pub use version::{VersionRecord, VERSION_RECORD_SIZE};

use crc::{Crc, CRC_16_IBM_3740};
use thiserror::Error;

use crate::flash::PageBuf;

pub(crate) const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub const NODE_MAGIC: u8 = 0x51;
pub const LEAF_MAGIC: u8 = 0x4C;
pub const OBJECT_MAGIC: u8 = 0x4F;
pub const VERTEX_MAGIC: u8 = 0x56;

/// Encoded "no page" in any 3-byte address field.
pub const NO_PAGE: u32 = 0x00FF_FFFF;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:#04x}, found {found:#04x}")]
    BadMagic { expected: u8, found: u8 },
    #[error("crc mismatch: stored {stored:#06x}, computed {computed:#06x}")]
    BadCrc { stored: u16, computed: u16 },
    #[error("invalid cell entry tag in word {0:#08x}")]
    BadTag(u32),
    #[error("invalid {field}: {value}")]
    BadField { field: &'static str, value: i64 },
    #[error("page address {0} exceeds the 22-bit address space")]
    AddressTooLarge(u32),
    #[error("{0} does not fit in one page")]
    Overflow(&'static str),
}

/// A page address inside the 22-bit address space of cell entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PageAddr(u32);

impl PageAddr {
    pub const MAX: u32 = (1 << 22) - 1;

    pub fn new(addr: u32) -> Result<Self, FormatError> {
        if addr > Self::MAX {
            return Err(FormatError::AddressTooLarge(addr));
        }
        Ok(Self(addr))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl std::fmt::Display for PageAddr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One 24-bit slot of a node: `0xFFFFFF` is empty, otherwise the top two bits
/// tag the low 22-bit page address (`00` child node, `01` leaf list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CellEntry {
    #[default]
    Empty,
    Child(PageAddr),
    LeafList(PageAddr),
}

const TAG_CHILD: u32 = 0b00;
const TAG_LIST: u32 = 0b01;

impl CellEntry {
    pub fn to_word(self) -> u32 {
        match self {
            CellEntry::Empty => NO_PAGE,
            CellEntry::Child(a) => (TAG_CHILD << 22) | a.0,
            CellEntry::LeafList(a) => (TAG_LIST << 22) | a.0,
        }
    }

    pub fn from_word(word: u32) -> Result<Self, FormatError> {
        if word == NO_PAGE {
            return Ok(CellEntry::Empty);
        }
        let addr = PageAddr(word & PageAddr::MAX);
        match word >> 22 {
            TAG_CHILD => Ok(CellEntry::Child(addr)),
            TAG_LIST => Ok(CellEntry::LeafList(addr)),
            _ => Err(FormatError::BadTag(word)),
        }
    }

    pub fn encode(self) -> [u8; 3] {
        let w = self.to_word();
        [(w >> 16) as u8, (w >> 8) as u8, w as u8]
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        Self::from_word(get_u24(bytes, 0))
    }

    pub fn is_empty(self) -> bool {
        self == CellEntry::Empty
    }

    pub fn page(self) -> Option<PageAddr> {
        match self {
            CellEntry::Empty => None,
            CellEntry::Child(a) | CellEntry::LeafList(a) => Some(a),
        }
    }
}

pub(crate) fn get_u24(buf: &[u8], at: usize) -> u32 {
    (buf[at] as u32) << 16 | (buf[at + 1] as u32) << 8 | buf[at + 2] as u32
}

pub(crate) fn put_u24(buf: &mut [u8], at: usize, v: u32) {
    debug_assert!(v <= NO_PAGE);
    buf[at] = (v >> 16) as u8;
    buf[at + 1] = (v >> 8) as u8;
    buf[at + 2] = v as u8;
}

pub(crate) fn put_opt_addr(buf: &mut [u8], at: usize, addr: Option<PageAddr>) {
    put_u24(buf, at, addr.map_or(NO_PAGE, PageAddr::get));
}

pub(crate) fn get_opt_addr(buf: &[u8], at: usize) -> Result<Option<PageAddr>, FormatError> {
    match get_u24(buf, at) {
        NO_PAGE => Ok(None),
        v => PageAddr::new(v).map(Some),
    }
}

pub(crate) fn check_magic(found: u8, expected: u8) -> Result<(), FormatError> {
    if found != expected {
        return Err(FormatError::BadMagic { expected, found });
    }
    Ok(())
}

/// CRC over the page excluding the two bytes at `crc_at`.
pub(crate) fn page_crc(buf: &PageBuf, crc_at: usize) -> u16 {
    let mut digest = CRC16.digest();
    digest.update(&buf[..crc_at]);
    digest.update(&buf[crc_at + 2..]);
    digest.finalize()
}

pub(crate) fn seal(buf: &mut PageBuf, crc_at: usize) {
    let crc = page_crc(buf, crc_at);
    buf[crc_at..crc_at + 2].copy_from_slice(&crc.to_be_bytes());
}

pub(crate) fn check_seal(buf: &PageBuf, crc_at: usize) -> Result<(), FormatError> {
    let stored = u16::from_be_bytes([buf[crc_at], buf[crc_at + 1]]);
    let computed = page_crc(buf, crc_at);
    if stored != computed {
        return Err(FormatError::BadCrc { stored, computed });
    }
    Ok(())
}

/// Any data-region page, dispatched on its magic byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyPage {
    Node(NodePage),
    Leaf(LeafListPage),
    Object(ObjectPage),
}

impl AnyPage {
    pub fn decode(buf: &PageBuf) -> Result<Self, FormatError> {
        match buf[0] {
            NODE_MAGIC => NodePage::decode(buf).map(AnyPage::Node),
            LEAF_MAGIC => LeafListPage::decode(buf).map(AnyPage::Leaf),
            OBJECT_MAGIC | VERTEX_MAGIC => ObjectPage::decode(buf).map(AnyPage::Object),
            found => Err(FormatError::BadMagic {
                expected: NODE_MAGIC,
                found,
            }),
        }
    }

    /// Pages this page points at.
    pub fn links(&self) -> Vec<PageAddr> {
        match self {
            AnyPage::Node(n) => std::iter::once(n.cover)
                .chain(n.entries.iter().copied())
                .filter_map(CellEntry::page)
                .collect(),
            AnyPage::Leaf(l) => l
                .next
                .into_iter()
                .chain(l.records.iter().map(|r| r.object))
                .collect(),
            AnyPage::Object(o) => o.next().into_iter().collect(),
        }
    }
}
