use std::collections::BTreeMap;

use super::draft::read_zone_with;
use super::ObjectKind;
use crate::cache::PageCache;
use crate::codec::{CellEntry, LeafListPage, LeafRecord, NodePage, ObjectPage, PageAddr, RecordKind};
use crate::error::{Error, Result};
use crate::flash::{FlashDevice, PageBuf};
use crate::geometry::{cell_intersects_disc, dist2, Cell, Point, CELLS_PER_NODE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HitBasis {
    InsideEntry,
    EdgeTest,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryHit {
    pub id: u32,
    pub kind: ObjectKind,
    pub basis: HitBasis,
    /// Head page of the object record.
    pub page: PageAddr,
    /// Gantry position; `None` for zones.
    pub at: Option<Point>,
}

/// Page requests made by one query. `index_pages` counts node and leaf-list
/// pages, `data_pages` object pages; every request is either a device read
/// or a cache hit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryCost {
    pub index_pages: u32,
    pub data_pages: u32,
    pub device_reads: u32,
    pub cache_hits: u32,
    pub polygon_tests: u32,
}

impl QueryCost {
    pub fn requests(&self) -> u32 {
        self.index_pages + self.data_pages
    }

    pub fn add(&mut self, o: &QueryCost) {
        self.index_pages += o.index_pages;
        self.data_pages += o.data_pages;
        self.device_reads += o.device_reads;
        self.cache_hits += o.cache_hits;
        self.polygon_tests += o.polygon_tests;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryResult {
    /// Sorted by id.
    pub hits: Vec<QueryHit>,
    pub cost: QueryCost,
}

impl QueryResult {
    pub fn ids(&self) -> Vec<u32> {
        self.hits.iter().map(|h| h.id).collect()
    }
}

struct Reader<'a> {
    dev: &'a FlashDevice,
    cache: &'a mut PageCache,
    cost: QueryCost,
}

impl Reader<'_> {
    fn fetch(&mut self, a: PageAddr, index: bool) -> Result<PageBuf> {
        let (buf, hit) = self.cache.get(self.dev, a)?;
        if index {
            self.cost.index_pages += 1;
        } else {
            self.cost.data_pages += 1;
        }
        if hit {
            self.cost.cache_hits += 1;
        } else {
            self.cost.device_reads += 1;
        }
        Ok(buf)
    }

    fn node(&mut self, a: PageAddr, level: u8) -> Result<NodePage> {
        let n = NodePage::decode(&self.fetch(a, true)?).map_err(Error::format(a.get()))?;
        if n.level != level {
            return Err(Error::Integrity(format!("node {a} has level {}, expected {level}", n.level)));
        }
        Ok(n)
    }

    fn list(&mut self, first: PageAddr, out: &mut Vec<LeafRecord>) -> Result<()> {
        let mut next = Some(first);
        let mut hops = 0;
        while let Some(a) = next {
            hops += 1;
            if hops > 1 << 22 {
                return Err(Error::Integrity(format!("list chain from {first} loops")));
            }
            let page = LeafListPage::decode(&self.fetch(a, true)?).map_err(Error::format(a.get()))?;
            out.extend(page.records);
            next = page.next;
        }
        Ok(())
    }
}

/// Zones containing `p`: the root cover list plus the single descent path.
/// Inside records answer without geometry; edge records are confirmed with a
/// point-in-polygon test.
pub fn query_zones_at(
    dev: &FlashDevice,
    cache: &mut PageCache,
    root: PageAddr,
    p: Point,
) -> Result<QueryResult> {
    p.check_in_world()?;
    let mut r = Reader {
        dev,
        cache,
        cost: QueryCost::default(),
    };
    let mut recs = Vec::new();
    let mut node = r.node(root, 0)?;
    if let CellEntry::LeafList(a) = node.cover {
        r.list(a, &mut recs)?;
    }
    let mut cell = Cell::world();
    loop {
        let s = cell.slot_of(p)?;
        match node.entries[s] {
            CellEntry::Empty => break,
            CellEntry::LeafList(a) => {
                r.list(a, &mut recs)?;
                break;
            }
            CellEntry::Child(a) => {
                cell = cell.subcell_at(s)?;
                node = r.node(a, cell.level())?;
            }
        }
    }
    recs.retain(|rec| rec.kind.is_zone());
    recs.sort_by_key(|rec| rec.kind);
    let mut hits: BTreeMap<u32, QueryHit> = BTreeMap::new();
    for rec in recs {
        let head = r.fetch(rec.object, false)?;
        let id = match ObjectPage::decode(&head).map_err(Error::format(rec.object.get()))? {
            ObjectPage::ZoneHead { id, .. } => id,
            _ => return Err(Error::Integrity(format!("zone record at {} is not a zone", rec.object))),
        };
        if hits.contains_key(&id) {
            continue;
        }
        let basis = if rec.kind == RecordKind::ZoneInside {
            HitBasis::InsideEntry
        } else {
            let (_, poly) = read_zone_with(rec.object, head, |a| r.fetch(a, false))?;
            r.cost.polygon_tests += 1;
            if !poly.contains(p) {
                continue;
            }
            HitBasis::EdgeTest
        };
        hits.insert(
            id,
            QueryHit {
                id,
                kind: ObjectKind::Zone,
                basis,
                page: rec.object,
                at: None,
            },
        );
    }
    Ok(QueryResult {
        hits: hits.into_values().collect(),
        cost: r.cost,
    })
}

/// Gantries within `radius` of `center` (inclusive), by depth-first descent
/// through the cells that meet the disc.
pub fn query_gantries_within(
    dev: &FlashDevice,
    cache: &mut PageCache,
    root: PageAddr,
    center: Point,
    radius: u32,
) -> Result<QueryResult> {
    let mut r = Reader {
        dev,
        cache,
        cost: QueryCost::default(),
    };
    let r2 = radius as u64 * radius as u64;
    let mut hits: BTreeMap<u32, QueryHit> = BTreeMap::new();
    let root_node = r.node(root, 0)?;
    let mut stack = vec![(root_node, Cell::world())];
    while let Some((node, cell)) = stack.pop() {
        for s in (0..CELLS_PER_NODE).rev() {
            let e = node.entries[s];
            if e.is_empty() {
                continue;
            }
            let sub = cell.subcell_at(s)?;
            if !cell_intersects_disc(&sub, center, radius) {
                continue;
            }
            match e {
                CellEntry::Empty => {}
                CellEntry::Child(a) => {
                    let child = r.node(a, sub.level())?;
                    stack.push((child, sub));
                }
                CellEntry::LeafList(a) => {
                    let mut recs = Vec::new();
                    r.list(a, &mut recs)?;
                    for rec in recs.into_iter().filter(|x| x.kind == RecordKind::Point) {
                        let buf = r.fetch(rec.object, false)?;
                        let ObjectPage::Gantry { id, x, y } =
                            ObjectPage::decode(&buf).map_err(Error::format(rec.object.get()))?
                        else {
                            return Err(Error::Integrity(format!(
                                "point record at {} is not a gantry",
                                rec.object
                            )));
                        };
                        let at = Point::new(x, y);
                        if dist2(at, center) <= r2 {
                            hits.insert(
                                id,
                                QueryHit {
                                    id,
                                    kind: ObjectKind::Gantry,
                                    basis: HitBasis::Distance,
                                    page: rec.object,
                                    at: Some(at),
                                },
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(QueryResult {
        hits: hits.into_values().collect(),
        cost: r.cost,
    })
}
