//! Copy-on-write editing. An operation loads the pages it touches into an
//! in-memory draft, edits it, and [`Ctx::flush`] writes every changed page
//! once, bottom-up. Unchanged subtrees keep their original addresses, so only
//! the touched paths are copied.

use std::collections::HashMap;

use super::catalog::{Catalog, CatalogEntry};
use super::{BuildParams, Object, ObjectKind, Op};
use crate::codec::{
    CellEntry, LeafListPage, LeafRecord, NodePage, ObjectPage, PageAddr, RecordKind,
    HEAD_VERTEX_CAPACITY, LEAF_RECORDS_PER_PAGE, TAIL_VERTEX_CAPACITY,
};
use crate::error::{Error, Result};
use crate::geometry::{classify_cell, Cell, CellClass, Point, Polygon, CELLS_PER_NODE};
use crate::store::Store;

pub(crate) struct ListDraft {
    recs: Vec<LeafRecord>,
    orig: Option<PageAddr>,
    orig_recs: Vec<LeafRecord>,
}

pub(crate) enum Slot {
    Stored(CellEntry),
    List(ListDraft),
    Node(Box<NodeDraft>),
}

pub(crate) struct NodeDraft {
    level: u8,
    cell: Cell,
    orig: Option<PageAddr>,
    orig_cover: CellEntry,
    orig_entries: [CellEntry; CELLS_PER_NODE],
    cover: Slot,
    entries: Vec<Slot>,
}

impl NodeDraft {
    fn fresh(level: u8, cell: Cell) -> Self {
        Self {
            level,
            cell,
            orig: None,
            orig_cover: CellEntry::Empty,
            orig_entries: [CellEntry::Empty; CELLS_PER_NODE],
            cover: Slot::Stored(CellEntry::Empty),
            entries: (0..CELLS_PER_NODE).map(|_| Slot::Stored(CellEntry::Empty)).collect(),
        }
    }
}

fn point_count(l: &ListDraft) -> usize {
    l.recs.iter().filter(|r| r.kind == RecordKind::Point).count()
}

pub(crate) struct Ctx<'a> {
    pub store: &'a mut Store,
    pub catalog: &'a mut Catalog,
    pub params: BuildParams,
    polygons: HashMap<PageAddr, Polygon>,
}

impl<'a> Ctx<'a> {
    pub fn new(store: &'a mut Store, catalog: &'a mut Catalog, params: BuildParams) -> Self {
        Self {
            store,
            catalog,
            params,
            polygons: HashMap::new(),
        }
    }

    pub fn load_node(&mut self, addr: PageAddr, cell: Cell) -> Result<NodeDraft> {
        let n = NodePage::decode(&self.store.read(addr)?).map_err(Error::format(addr.get()))?;
        if n.level != cell.level() {
            return Err(Error::Integrity(format!(
                "node page {addr} has level {}, expected {}",
                n.level,
                cell.level()
            )));
        }
        Ok(NodeDraft {
            level: n.level,
            cell,
            orig: Some(addr),
            orig_cover: n.cover,
            orig_entries: n.entries,
            cover: Slot::Stored(n.cover),
            entries: n.entries.iter().map(|&e| Slot::Stored(e)).collect(),
        })
    }

    fn load_list(&mut self, addr: PageAddr) -> Result<ListDraft> {
        let recs = read_list(self.store, addr)?;
        Ok(ListDraft {
            orig_recs: recs.clone(),
            recs,
            orig: Some(addr),
        })
    }

    fn list_mut<'s>(&mut self, slot: &'s mut Slot) -> Result<&'s mut ListDraft> {
        match slot {
            Slot::Stored(CellEntry::Empty) => {
                *slot = Slot::List(ListDraft {
                    recs: vec![],
                    orig: None,
                    orig_recs: vec![],
                })
            }
            Slot::Stored(CellEntry::LeafList(a)) => {
                let l = self.load_list(*a)?;
                *slot = Slot::List(l);
            }
            _ => {}
        }
        match slot {
            Slot::List(l) => Ok(l),
            _ => unreachable!("list_mut on a child entry"),
        }
    }

    /// Loads a stored child so the slot is either a list or a node draft.
    fn open_child(&mut self, node: &mut NodeDraft, s: usize) -> Result<()> {
        if let Slot::Stored(CellEntry::Child(a)) = node.entries[s] {
            let cell = node.cell.subcell_at(s)?;
            let child = self.load_node(a, cell)?;
            node.entries[s] = Slot::Node(Box::new(child));
        }
        Ok(())
    }

    /// Turns entry `s` into a child node, splitting any list it holds.
    fn ensure_node(&mut self, node: &mut NodeDraft, s: usize) -> Result<()> {
        self.open_child(node, s)?;
        match node.entries[s] {
            Slot::Node(_) => Ok(()),
            Slot::Stored(CellEntry::Empty) => {
                let cell = node.cell.subcell_at(s)?;
                node.entries[s] = Slot::Node(Box::new(NodeDraft::fresh(node.level + 1, cell)));
                Ok(())
            }
            _ => self.split(node, s),
        }
    }

    fn polygon(&mut self, page: PageAddr) -> Result<&Polygon> {
        if !self.polygons.contains_key(&page) {
            let (_, poly) = read_zone(self.store, page)?;
            self.polygons.insert(page, poly);
        }
        Ok(&self.polygons[&page])
    }

    fn point_of(&mut self, page: PageAddr) -> Result<Point> {
        if let Some(p) = self.catalog.point_of(page) {
            return Ok(p);
        }
        match ObjectPage::decode(&self.store.read(page)?).map_err(Error::format(page.get()))? {
            ObjectPage::Gantry { x, y, .. } => Ok(Point::new(x, y)),
            _ => Err(Error::Integrity(format!("point record at {page} is not a gantry"))),
        }
    }

    /// Replaces the list in entry `s` by a child node one level down and
    /// redistributes its records, splitting overfull children in turn.
    fn split(&mut self, node: &mut NodeDraft, s: usize) -> Result<()> {
        let list = match std::mem::replace(&mut node.entries[s], Slot::Stored(CellEntry::Empty)) {
            Slot::List(l) => l,
            Slot::Stored(CellEntry::LeafList(a)) => self.load_list(a)?,
            other => {
                node.entries[s] = other;
                unreachable!("split of a non-list entry");
            }
        };
        let cell = node.cell.subcell_at(s)?;
        let mut child = NodeDraft::fresh(node.level + 1, cell);
        for rec in list.recs {
            match rec.kind {
                RecordKind::Point => {
                    let p = self.point_of(rec.object)?;
                    let k = child.cell.slot_of(p)?;
                    self.list_mut(&mut child.entries[k])?.recs.push(rec);
                }
                _ => self.push_zone_into(&mut child, rec)?,
            }
        }
        if child.level < self.params.max_depth {
            for k in 0..CELLS_PER_NODE {
                let over = matches!(&child.entries[k], Slot::List(l)
                    if point_count(l) > self.params.leaf_split_threshold as usize);
                if over {
                    self.split(&mut child, k)?;
                }
            }
        }
        node.entries[s] = Slot::Node(Box::new(child));
        Ok(())
    }

    /// Adds a zone record of `node`'s parent cell to the entries of `node`.
    fn push_zone_into(&mut self, node: &mut NodeDraft, rec: LeafRecord) -> Result<()> {
        for k in 0..CELLS_PER_NODE {
            let kind = match rec.kind {
                RecordKind::ZoneInside => RecordKind::ZoneInside,
                _ => {
                    let c = node.cell.subcell_at(k)?;
                    match classify_cell(&c, self.polygon(rec.object)?) {
                        CellClass::Outside => continue,
                        CellClass::Inside => RecordKind::ZoneInside,
                        CellClass::Edge => RecordKind::ZoneEdge,
                    }
                }
            };
            self.add_zone_record(node, k, LeafRecord::new(kind, rec.object))?;
        }
        Ok(())
    }

    fn add_zone_record(&mut self, node: &mut NodeDraft, s: usize, rec: LeafRecord) -> Result<()> {
        self.open_child(node, s)?;
        if let Slot::Node(child) = &mut node.entries[s] {
            return self.push_zone_into(child, rec);
        }
        self.list_mut(&mut node.entries[s])?.recs.push(rec);
        Ok(())
    }

    fn insert_point(&mut self, node: &mut NodeDraft, p: Point, rec: LeafRecord) -> Result<()> {
        let s = node.cell.slot_of(p)?;
        self.open_child(node, s)?;
        if let Slot::Node(child) = &mut node.entries[s] {
            return self.insert_point(child, p, rec);
        }
        let list = self.list_mut(&mut node.entries[s])?;
        list.recs.push(rec);
        if node.level < self.params.max_depth
            && point_count(list) > self.params.leaf_split_threshold as usize
        {
            self.split(node, s)?;
        }
        Ok(())
    }

    fn insert_zone(&mut self, root: &mut NodeDraft, page: PageAddr) -> Result<()> {
        let whole = classify_cell(&root.cell, self.polygon(page)?);
        match whole {
            CellClass::Inside => {
                let rec = LeafRecord::new(RecordKind::ZoneInside, page);
                self.list_mut(&mut root.cover)?.recs.push(rec);
                Ok(())
            }
            CellClass::Outside => Ok(()),
            CellClass::Edge => self.zone_into(root, page),
        }
    }

    fn zone_into(&mut self, node: &mut NodeDraft, page: PageAddr) -> Result<()> {
        for s in 0..CELLS_PER_NODE {
            let c = node.cell.subcell_at(s)?;
            match classify_cell(&c, self.polygon(page)?) {
                CellClass::Outside => {}
                CellClass::Inside => {
                    self.add_zone_record(node, s, LeafRecord::new(RecordKind::ZoneInside, page))?
                }
                CellClass::Edge if node.level < self.params.zone_max_depth => {
                    self.ensure_node(node, s)?;
                    let Slot::Node(child) = &mut node.entries[s] else {
                        unreachable!()
                    };
                    self.zone_into(child, page)?;
                }
                CellClass::Edge => {
                    self.add_zone_record(node, s, LeafRecord::new(RecordKind::ZoneEdge, page))?
                }
            }
        }
        Ok(())
    }

    fn delete_point(&mut self, node: &mut NodeDraft, p: Point, page: PageAddr) -> Result<usize> {
        let s = node.cell.slot_of(p)?;
        self.open_child(node, s)?;
        match &mut node.entries[s] {
            Slot::Node(child) => self.delete_point(child, p, page),
            Slot::Stored(CellEntry::Empty) => Ok(0),
            slot => {
                let l = self.list_mut(slot)?;
                let before = l.recs.len();
                l.recs.retain(|r| r.object != page);
                Ok(before - l.recs.len())
            }
        }
    }

    fn delete_zone(&mut self, node: &mut NodeDraft, page: PageAddr) -> Result<usize> {
        let mut removed = 0;
        for s in 0..CELLS_PER_NODE {
            if matches!(node.entries[s], Slot::Stored(CellEntry::Empty)) {
                continue;
            }
            let c = node.cell.subcell_at(s)?;
            if classify_cell(&c, self.polygon(page)?) == CellClass::Outside {
                continue;
            }
            self.open_child(node, s)?;
            match &mut node.entries[s] {
                Slot::Node(child) => removed += self.delete_zone(child, page)?,
                slot => {
                    let l = self.list_mut(slot)?;
                    let before = l.recs.len();
                    l.recs.retain(|r| r.object != page);
                    removed += before - l.recs.len();
                }
            }
        }
        Ok(removed)
    }

    fn write_gantry(&mut self, id: u32, p: Point) -> Result<PageAddr> {
        let buf = ObjectPage::Gantry { id, x: p.x, y: p.y }
            .encode()
            .map_err(Error::format(0))?;
        self.store.program_new(&buf)
    }

    /// Writes vertex continuation pages tail first, then the head.
    fn write_zone(&mut self, id: u32, poly: &Polygon) -> Result<PageAddr> {
        let vs: Vec<(i32, i32)> = poly.vertices().iter().map(|p| (p.x, p.y)).collect();
        let vertex_count = u16::try_from(vs.len())
            .map_err(|_| Error::InvalidParams(format!("zone {id} has too many vertices")))?;
        let head_n = vs.len().min(HEAD_VERTEX_CAPACITY);
        let mut next = None;
        let tails: Vec<&[(i32, i32)]> = vs[head_n..].chunks(TAIL_VERTEX_CAPACITY).collect();
        for chunk in tails.into_iter().rev() {
            let buf = ObjectPage::Vertices {
                next,
                vertices: chunk.to_vec(),
            }
            .encode()
            .map_err(Error::format(0))?;
            next = Some(self.store.program_new(&buf)?);
        }
        let buf = ObjectPage::ZoneHead {
            id,
            vertex_count,
            next,
            vertices: vs[..head_n].to_vec(),
        }
        .encode()
        .map_err(Error::format(0))?;
        self.store.program_new(&buf)
    }

    pub fn apply(&mut self, root: &mut NodeDraft, op: &Op) -> Result<()> {
        match op {
            Op::Insert(obj) => {
                let id = obj.id();
                if self.catalog.get(id).is_some() {
                    return Err(Error::DuplicateId(id));
                }
                match obj {
                    Object::Gantry { at, .. } => {
                        at.check_in_world()?;
                        let page = self.write_gantry(id, *at)?;
                        self.insert_point(root, *at, LeafRecord::new(RecordKind::Point, page))?;
                        self.catalog.insert(
                            id,
                            CatalogEntry {
                                kind: ObjectKind::Gantry,
                                page,
                                at: Some(*at),
                            },
                        );
                    }
                    Object::Zone { polygon, .. } => {
                        if let Some(p) = polygon.vertices().iter().find(|p| !p.in_world()) {
                            p.check_in_world()?;
                        }
                        let page = self.write_zone(id, polygon)?;
                        self.polygons.insert(page, polygon.clone());
                        self.insert_zone(root, page)?;
                        self.catalog.insert(
                            id,
                            CatalogEntry {
                                kind: ObjectKind::Zone,
                                page,
                                at: None,
                            },
                        );
                    }
                }
            }
            Op::Delete(id) => {
                let e = *self.catalog.get(*id).ok_or(Error::NotFound(*id))?;
                let removed = match e.kind {
                    ObjectKind::Gantry => {
                        let at = e.at.expect("gantry entries carry a position");
                        self.delete_point(root, at, e.page)?
                    }
                    ObjectKind::Zone => {
                        let mut n = 0;
                        if !matches!(root.cover, Slot::Stored(CellEntry::Empty)) {
                            let l = self.list_mut(&mut root.cover)?;
                            let before = l.recs.len();
                            l.recs.retain(|r| r.object != e.page);
                            n += before - l.recs.len();
                        }
                        n + self.delete_zone(root, e.page)?
                    }
                };
                if removed == 0 {
                    return Err(Error::Integrity(format!(
                        "object {id} is catalogued but no leaf references it"
                    )));
                }
                self.catalog.remove(*id);
            }
        }
        Ok(())
    }

    fn flush_slot(&mut self, slot: Slot) -> Result<CellEntry> {
        match slot {
            Slot::Stored(e) => Ok(e),
            Slot::List(l) => self.flush_list(l),
            Slot::Node(n) => self.flush_node(*n, false),
        }
    }

    fn flush_list(&mut self, l: ListDraft) -> Result<CellEntry> {
        if l.recs.is_empty() {
            return Ok(CellEntry::Empty);
        }
        if let Some(a) = l.orig {
            if l.recs == l.orig_recs {
                return Ok(CellEntry::LeafList(a));
            }
        }
        let mut next = None;
        let chunks: Vec<&[LeafRecord]> = l.recs.chunks(LEAF_RECORDS_PER_PAGE).collect();
        for chunk in chunks.into_iter().rev() {
            let buf = LeafListPage {
                next,
                records: chunk.to_vec(),
            }
            .encode()
            .map_err(Error::format(0))?;
            next = Some(self.store.write_list_page(&buf)?);
        }
        Ok(CellEntry::LeafList(next.expect("non-empty list")))
    }

    /// Writes the node if anything below it changed. Non-root nodes left with
    /// nothing but empty entries collapse to `Empty`.
    pub fn flush_node(&mut self, node: NodeDraft, is_root: bool) -> Result<CellEntry> {
        let mut entries = [CellEntry::Empty; CELLS_PER_NODE];
        for (k, slot) in node.entries.into_iter().enumerate() {
            entries[k] = self.flush_slot(slot)?;
        }
        let cover = self.flush_slot(node.cover)?;
        if !is_root && cover.is_empty() && entries.iter().all(|e| e.is_empty()) {
            return Ok(CellEntry::Empty);
        }
        if let Some(a) = node.orig {
            if entries == node.orig_entries && cover == node.orig_cover {
                return Ok(CellEntry::Child(a));
            }
        }
        let page = NodePage {
            level: node.level,
            cover,
            entries,
        };
        let buf = page.encode().map_err(Error::format(0))?;
        Ok(CellEntry::Child(self.store.program_new(&buf)?))
    }
}

pub(crate) fn read_list(store: &Store, first: PageAddr) -> Result<Vec<LeafRecord>> {
    let mut recs = Vec::new();
    let mut next = Some(first);
    let mut hops = 0usize;
    while let Some(a) = next {
        hops += 1;
        if hops > store.total_pages() as usize {
            return Err(Error::Integrity(format!("list chain from {first} loops")));
        }
        let page = LeafListPage::decode(&store.read(a)?).map_err(Error::format(a.get()))?;
        recs.extend(page.records);
        next = page.next;
    }
    Ok(recs)
}

/// Reads a zone head and its vertex chain.
pub(crate) fn read_zone(store: &Store, head: PageAddr) -> Result<(u32, Polygon)> {
    let buf = store.read(head)?;
    read_zone_with(head, buf, |a| store.read(a))
}

pub(crate) fn read_zone_with(
    head: PageAddr,
    buf: crate::flash::PageBuf,
    mut fetch: impl FnMut(PageAddr) -> Result<crate::flash::PageBuf>,
) -> Result<(u32, Polygon)> {
    let ObjectPage::ZoneHead {
        id,
        vertex_count,
        mut next,
        mut vertices,
    } = ObjectPage::decode(&buf).map_err(Error::format(head.get()))?
    else {
        return Err(Error::Integrity(format!("zone record at {head} is not a zone head")));
    };
    while let Some(a) = next {
        if vertices.len() >= vertex_count as usize {
            return Err(Error::Integrity(format!("zone {id} vertex chain is too long")));
        }
        match ObjectPage::decode(&fetch(a)?).map_err(Error::format(a.get()))? {
            ObjectPage::Vertices { next: n, vertices: v } => {
                vertices.extend(v);
                next = n;
            }
            _ => return Err(Error::Integrity(format!("page {a} is not a vertex page"))),
        }
    }
    if vertices.len() != vertex_count as usize {
        return Err(Error::Integrity(format!(
            "zone {id} declares {vertex_count} vertices, chain holds {}",
            vertices.len()
        )));
    }
    let poly = Polygon::new(vertices.into_iter().map(|(x, y)| Point::new(x, y)).collect())
        .map_err(|e| Error::Integrity(format!("zone {id}: {e}")))?;
    Ok((id, poly))
}
