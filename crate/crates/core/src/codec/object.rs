use super::{
    check_magic, check_seal, get_opt_addr, put_opt_addr, seal, FormatError, PageAddr,
    OBJECT_MAGIC, VERTEX_MAGIC,
};
use crate::flash::{PageBuf, PAGE_SIZE};

const CRC_AT: usize = PAGE_SIZE - 2;
const KIND_GANTRY: u8 = 0;
const KIND_ZONE: u8 = 1;
const HEAD_VERTICES_AT: usize = 11;
const TAIL_VERTICES_AT: usize = 5;
pub const HEAD_VERTEX_CAPACITY: usize = (CRC_AT - HEAD_VERTICES_AT) / 8;
pub const TAIL_VERTEX_CAPACITY: usize = (CRC_AT - TAIL_VERTICES_AT) / 8;

/// A single object page. Zones longer than one page continue in
/// [`ObjectPage::Vertices`] pages linked through `next`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectPage {
    Gantry {
        id: u32,
        x: i32,
        y: i32,
    },
    ZoneHead {
        id: u32,
        vertex_count: u16,
        next: Option<PageAddr>,
        vertices: Vec<(i32, i32)>,
    },
    Vertices {
        next: Option<PageAddr>,
        vertices: Vec<(i32, i32)>,
    },
}

fn put_vertices(buf: &mut PageBuf, at: usize, vs: &[(i32, i32)]) {
    for (k, &(x, y)) in vs.iter().enumerate() {
        let o = at + 8 * k;
        buf[o..o + 4].copy_from_slice(&x.to_be_bytes());
        buf[o + 4..o + 8].copy_from_slice(&y.to_be_bytes());
    }
}

fn get_vertices(buf: &PageBuf, at: usize, n: usize) -> Vec<(i32, i32)> {
    (0..n)
        .map(|k| {
            let o = at + 8 * k;
            (
                i32::from_be_bytes(buf[o..o + 4].try_into().unwrap()),
                i32::from_be_bytes(buf[o + 4..o + 8].try_into().unwrap()),
            )
        })
        .collect()
}

impl ObjectPage {
    pub fn next(&self) -> Option<PageAddr> {
        match self {
            ObjectPage::Gantry { .. } => None,
            ObjectPage::ZoneHead { next, .. } | ObjectPage::Vertices { next, .. } => *next,
        }
    }

    pub fn encode(&self) -> Result<PageBuf, FormatError> {
        let mut buf = [0xFF; PAGE_SIZE];
        match self {
            ObjectPage::Gantry { id, x, y } => {
                buf[0] = OBJECT_MAGIC;
                buf[1] = KIND_GANTRY;
                buf[2..6].copy_from_slice(&id.to_be_bytes());
                buf[6..10].copy_from_slice(&x.to_be_bytes());
                buf[10..14].copy_from_slice(&y.to_be_bytes());
            }
            ObjectPage::ZoneHead {
                id,
                vertex_count,
                next,
                vertices,
            } => {
                if vertices.len() > HEAD_VERTEX_CAPACITY || vertices.len() > *vertex_count as usize
                {
                    return Err(FormatError::Overflow("zone head vertices"));
                }
                buf[0] = OBJECT_MAGIC;
                buf[1] = KIND_ZONE;
                buf[2..6].copy_from_slice(&id.to_be_bytes());
                buf[6..8].copy_from_slice(&vertex_count.to_be_bytes());
                put_opt_addr(&mut buf, 8, *next);
                put_vertices(&mut buf, HEAD_VERTICES_AT, vertices);
            }
            ObjectPage::Vertices { next, vertices } => {
                if vertices.is_empty() || vertices.len() > TAIL_VERTEX_CAPACITY {
                    return Err(FormatError::Overflow("vertex continuation"));
                }
                buf[0] = VERTEX_MAGIC;
                buf[1] = vertices.len() as u8;
                put_opt_addr(&mut buf, 2, *next);
                put_vertices(&mut buf, TAIL_VERTICES_AT, vertices);
            }
        }
        seal(&mut buf, CRC_AT);
        Ok(buf)
    }

    pub fn decode(buf: &PageBuf) -> Result<Self, FormatError> {
        if buf[0] == VERTEX_MAGIC {
            check_seal(buf, CRC_AT)?;
            let n = buf[1] as usize;
            if n == 0 || n > TAIL_VERTEX_CAPACITY {
                return Err(FormatError::BadField {
                    field: "vertex page count",
                    value: n as i64,
                });
            }
            return Ok(ObjectPage::Vertices {
                next: get_opt_addr(buf, 2)?,
                vertices: get_vertices(buf, TAIL_VERTICES_AT, n),
            });
        }
        check_magic(buf[0], OBJECT_MAGIC)?;
        check_seal(buf, CRC_AT)?;
        let id = u32::from_be_bytes(buf[2..6].try_into().unwrap());
        match buf[1] {
            KIND_GANTRY => Ok(ObjectPage::Gantry {
                id,
                x: i32::from_be_bytes(buf[6..10].try_into().unwrap()),
                y: i32::from_be_bytes(buf[10..14].try_into().unwrap()),
            }),
            KIND_ZONE => {
                let vertex_count = u16::from_be_bytes([buf[6], buf[7]]);
                let next = get_opt_addr(buf, 8)?;
                let here = (vertex_count as usize).min(HEAD_VERTEX_CAPACITY);
                if (next.is_some()) != (vertex_count as usize > HEAD_VERTEX_CAPACITY) {
                    return Err(FormatError::BadField {
                        field: "zone continuation",
                        value: vertex_count as i64,
                    });
                }
                Ok(ObjectPage::ZoneHead {
                    id,
                    vertex_count,
                    next,
                    vertices: get_vertices(buf, HEAD_VERTICES_AT, here),
                })
            }
            k => Err(FormatError::BadField {
                field: "object kind",
                value: k as i64,
            }),
        }
    }
}

/// Number of pages a zone with `n` vertices occupies.
pub fn zone_page_count(n: usize) -> usize {
    if n <= HEAD_VERTEX_CAPACITY {
        1
    } else {
        1 + (n - HEAD_VERTEX_CAPACITY).div_ceil(TAIL_VERTEX_CAPACITY)
    }
}

/// Splits a zone into its page chain. `addrs[k]` is the address of page `k`
/// (head first); the returned pages link accordingly.
pub fn zone_pages(
    id: u32,
    vertices: &[(i32, i32)],
    addrs: &[PageAddr],
) -> Result<Vec<ObjectPage>, FormatError> {
    let count = u16::try_from(vertices.len()).map_err(|_| FormatError::Overflow("zone"))?;
    let n = zone_page_count(vertices.len());
    assert_eq!(addrs.len(), n, "one address per zone page");
    let head_n = vertices.len().min(HEAD_VERTEX_CAPACITY);
    let mut pages = vec![ObjectPage::ZoneHead {
        id,
        vertex_count: count,
        next: addrs.get(1).copied(),
        vertices: vertices[..head_n].to_vec(),
    }];
    for (k, chunk) in vertices[head_n..]
        .chunks(TAIL_VERTEX_CAPACITY)
        .enumerate()
    {
        pages.push(ObjectPage::Vertices {
            next: addrs.get(k + 2).copied(),
            vertices: chunk.to_vec(),
        });
    }
    Ok(pages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capacities() {
        assert_eq!(HEAD_VERTEX_CAPACITY, 30);
        assert_eq!(TAIL_VERTEX_CAPACITY, 31);
        assert_eq!(zone_page_count(3), 1);
        assert_eq!(zone_page_count(30), 1);
        assert_eq!(zone_page_count(31), 2);
        assert_eq!(zone_page_count(61), 2);
        assert_eq!(zone_page_count(62), 3);
    }

    #[test]
    fn zone_page_spans() {
        // Capacity oracle: (256 - 2 crc - 11 header) / 8 and (256 - 2 - 5) / 8.
        let head = (256 - 2 - 11) / 8;
        let tail = (256 - 2 - 5) / 8;
        let pages_for = |n: usize| if n <= head { 1 } else { 1 + (n - head + tail - 1) / tail };
        assert_eq!(pages_for(3), 1);
        assert!(pages_for(40) >= 2);
        for n in 3..2000 {
            assert_eq!(zone_page_count(n), pages_for(n));
        }

        let vs: Vec<_> = (0..40).map(|k| (k, 2 * k)).collect();
        let addrs = [PageAddr::new(10).unwrap(), PageAddr::new(11).unwrap()];
        let pages = zone_pages(9, &vs, &addrs).unwrap();
        assert_eq!(pages.len(), 2);
        assert_eq!(pages[0].next(), Some(addrs[1]));
        assert_eq!(pages[1].next(), None);
        for p in &pages {
            assert_eq!(&ObjectPage::decode(&p.encode().unwrap()).unwrap(), p);
        }
    }

    #[test]
    fn gantry_layout() {
        let buf = ObjectPage::Gantry {
            id: 0x01020304,
            x: 1_000_000,
            y: -1,
        }
        .encode()
        .unwrap();
        assert_eq!(&buf[..6], &[0x4F, 0, 1, 2, 3, 4]);
        assert_eq!(&buf[6..10], &1_000_000i32.to_be_bytes());
        assert_eq!(&buf[10..14], &[0xFF; 4]);
    }

    fn vertex() -> impl Strategy<Value = (i32, i32)> {
        (0..2_000_000i32, 0..2_000_000i32)
    }

    fn page() -> impl Strategy<Value = ObjectPage> {
        let addr = proptest::option::of((0..=PageAddr::MAX).prop_map(|a| PageAddr::new(a).unwrap()));
        prop_oneof![
            (any::<u32>(), any::<i32>(), any::<i32>()).prop_map(|(id, x, y)| ObjectPage::Gantry { id, x, y }),
            (any::<u32>(), proptest::collection::vec(vertex(), 3..=HEAD_VERTEX_CAPACITY))
                .prop_map(|(id, vertices)| ObjectPage::ZoneHead {
                    id,
                    vertex_count: vertices.len() as u16,
                    next: None,
                    vertices,
                }),
            (any::<u32>(), proptest::collection::vec(vertex(), HEAD_VERTEX_CAPACITY), 31u16..2000, (0..=PageAddr::MAX))
                .prop_map(|(id, vertices, vertex_count, n)| ObjectPage::ZoneHead {
                    id,
                    vertex_count,
                    next: Some(PageAddr::new(n).unwrap()),
                    vertices,
                }),
            (addr, proptest::collection::vec(vertex(), 1..=TAIL_VERTEX_CAPACITY))
                .prop_map(|(next, vertices)| ObjectPage::Vertices { next, vertices }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(p in page()) {
            let buf = p.encode().unwrap();
            prop_assert_eq!(ObjectPage::decode(&buf).unwrap(), p);
        }

        #[test]
        fn corrupted_byte_is_detected(p in page(), at in 0usize..PAGE_SIZE, flip in 1u8..=255) {
            let mut buf = p.encode().unwrap();
            buf[at] ^= flip;
            // CRC-16 catches every burst of up to 16 bits.
            prop_assert!(ObjectPage::decode(&buf).is_err());
        }
    }
}
