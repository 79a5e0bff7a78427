use super::{check_seal, seal, FormatError};
use crate::flash::{PageBuf, PAGE_SIZE};

const MAGIC: [u8; 4] = *b"FQCF";
pub const FORMAT_VERSION: u8 = 1;
const CRC_AT: usize = PAGE_SIZE - 2;
const FLAG_DEDUP: u8 = 0x01;

/// Database-wide settings, written once at format time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigPage {
    pub origin_x: i64,
    pub origin_y: i64,
    pub split_threshold: u16,
    pub max_depth: u8,
    pub zone_max_depth: u8,
    pub max_versions: u8,
    pub dedup: bool,
}

impl ConfigPage {
    pub fn encode(&self) -> PageBuf {
        let mut b = [0xFF; PAGE_SIZE];
        b[0..4].copy_from_slice(&MAGIC);
        b[4] = FORMAT_VERSION;
        b[5..13].copy_from_slice(&self.origin_x.to_be_bytes());
        b[13..21].copy_from_slice(&self.origin_y.to_be_bytes());
        b[21..23].copy_from_slice(&self.split_threshold.to_be_bytes());
        b[23] = self.max_depth;
        b[24] = self.zone_max_depth;
        b[25] = self.max_versions;
        b[26] = if self.dedup { 0xFF } else { !FLAG_DEDUP };
        seal(&mut b, CRC_AT);
        b
    }

    pub fn decode(b: &PageBuf) -> Result<Self, FormatError> {
        if b[0..4] != MAGIC {
            return Err(FormatError::BadMagic {
                expected: MAGIC[0],
                found: b[0],
            });
        }
        check_seal(b, CRC_AT)?;
        if b[4] != FORMAT_VERSION {
            return Err(FormatError::BadField {
                field: "format version",
                value: b[4] as i64,
            });
        }
        Ok(Self {
            origin_x: i64::from_be_bytes(b[5..13].try_into().unwrap()),
            origin_y: i64::from_be_bytes(b[13..21].try_into().unwrap()),
            split_threshold: u16::from_be_bytes([b[21], b[22]]),
            max_depth: b[23],
            zone_max_depth: b[24],
            max_versions: b[25],
            dedup: b[26] & FLAG_DEDUP != 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(
            origin_x in any::<i64>(), origin_y in any::<i64>(), split_threshold in any::<u16>(),
            max_depth in 0u8..=5, zone_max_depth in 0u8..=5, max_versions in 1u8..=255, dedup in any::<bool>(),
        ) {
            let c = ConfigPage { origin_x, origin_y, split_threshold, max_depth, zone_max_depth, max_versions, dedup };
            prop_assert_eq!(ConfigPage::decode(&c.encode()).unwrap(), c);
        }
    }

    #[test]
    fn erased_page_is_not_a_config() {
        assert!(ConfigPage::decode(&[0xFF; PAGE_SIZE]).is_err());
    }
}
