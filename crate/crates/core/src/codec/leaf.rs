use super::{
    check_magic, check_seal, get_opt_addr, get_u24, put_opt_addr, put_u24, seal, FormatError,
    PageAddr, LEAF_MAGIC,
};
use crate::flash::{PageBuf, PAGE_SIZE};

const COUNT_AT: usize = 1;
const NEXT_AT: usize = 2;
const RECORDS_AT: usize = 5;
const CRC_AT: usize = PAGE_SIZE - 2;
pub const LEAF_RECORDS_PER_PAGE: usize = (PAGE_SIZE - RECORDS_AT) / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum RecordKind {
    Point = 0,
    ZoneInside = 1,
    ZoneEdge = 2,
}

impl RecordKind {
    pub fn from_byte(b: u8) -> Result<Self, FormatError> {
        match b {
            0 => Ok(RecordKind::Point),
            1 => Ok(RecordKind::ZoneInside),
            2 => Ok(RecordKind::ZoneEdge),
            _ => Err(FormatError::BadField {
                field: "leaf record kind",
                value: b as i64,
            }),
        }
    }

    pub fn is_zone(self) -> bool {
        self != RecordKind::Point
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LeafRecord {
    pub kind: RecordKind,
    pub object: PageAddr,
}

impl LeafRecord {
    pub fn new(kind: RecordKind, object: PageAddr) -> Self {
        Self { kind, object }
    }
}

/// One page of a cell's object list; longer lists chain through `next`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafListPage {
    pub next: Option<PageAddr>,
    pub records: Vec<LeafRecord>,
}

impl LeafListPage {
    pub fn encode(&self) -> Result<PageBuf, FormatError> {
        if self.records.is_empty() || self.records.len() > LEAF_RECORDS_PER_PAGE {
            return Err(FormatError::BadField {
                field: "leaf record count",
                value: self.records.len() as i64,
            });
        }
        let mut buf = [0xFF; PAGE_SIZE];
        buf[0] = LEAF_MAGIC;
        buf[COUNT_AT] = self.records.len() as u8;
        put_opt_addr(&mut buf, NEXT_AT, self.next);
        for (k, r) in self.records.iter().enumerate() {
            let at = RECORDS_AT + 4 * k;
            buf[at] = r.kind as u8;
            put_u24(&mut buf, at + 1, r.object.get());
        }
        seal(&mut buf, CRC_AT);
        Ok(buf)
    }

    pub fn decode(buf: &PageBuf) -> Result<Self, FormatError> {
        check_magic(buf[0], LEAF_MAGIC)?;
        check_seal(buf, CRC_AT)?;
        let count = buf[COUNT_AT] as usize;
        if count == 0 || count > LEAF_RECORDS_PER_PAGE {
            return Err(FormatError::BadField {
                field: "leaf record count",
                value: count as i64,
            });
        }
        let next = get_opt_addr(buf, NEXT_AT)?;
        let records = (0..count)
            .map(|k| {
                let at = RECORDS_AT + 4 * k;
                Ok(LeafRecord {
                    kind: RecordKind::from_byte(buf[at])?,
                    object: PageAddr::new(get_u24(buf, at + 1))?,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        Ok(Self { next, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capacity() {
        assert_eq!(LEAF_RECORDS_PER_PAGE, 62);
        assert!(RECORDS_AT + 4 * LEAF_RECORDS_PER_PAGE <= CRC_AT);
    }

    #[test]
    fn single_record_layout() {
        let page = LeafListPage {
            next: None,
            records: vec![LeafRecord::new(RecordKind::ZoneInside, PageAddr::new(7).unwrap())],
        };
        let buf = page.encode().unwrap();
        assert_eq!(buf[0], 0x4C);
        assert_eq!(buf[1], 1);
        assert_eq!(&buf[2..5], &[0xFF; 3]);
        assert_eq!(&buf[5..9], &[0x01, 0x00, 0x00, 0x07]);
        assert_eq!(LeafListPage::decode(&buf).unwrap(), page);
    }

    #[test]
    fn rejects_bad_pages() {
        let empty = LeafListPage {
            next: None,
            records: vec![],
        };
        assert!(empty.encode().is_err());
        let too_many = LeafListPage {
            next: None,
            records: vec![LeafRecord::new(RecordKind::Point, PageAddr::new(1).unwrap()); 63],
        };
        assert!(too_many.encode().is_err());

        let mut buf = LeafListPage {
            next: None,
            records: vec![LeafRecord::new(RecordKind::Point, PageAddr::new(1).unwrap())],
        }
        .encode()
        .unwrap();
        buf[5] = 3;
        super::seal(&mut buf, CRC_AT);
        assert!(matches!(
            LeafListPage::decode(&buf),
            Err(FormatError::BadField { field: "leaf record kind", .. })
        ));
    }

    fn record() -> impl Strategy<Value = LeafRecord> {
        (0u8..3, 0..=PageAddr::MAX).prop_map(|(k, a)| LeafRecord {
            kind: RecordKind::from_byte(k).unwrap(),
            object: PageAddr::new(a).unwrap(),
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(
            next in proptest::option::of(0..=PageAddr::MAX),
            records in proptest::collection::vec(record(), 1..=LEAF_RECORDS_PER_PAGE),
        ) {
            let page = LeafListPage { next: next.map(|a| PageAddr::new(a).unwrap()), records };
            let buf = page.encode().unwrap();
            prop_assert_eq!(LeafListPage::decode(&buf).unwrap(), page);
        }
    }
}
