//! In-memory id index of the writer head, rebuilt by a full walk whenever the
//! head changes underneath it.

use std::collections::HashMap;

use super::ObjectKind;
use crate::codec::{AnyPage, CellEntry, LeafListPage, NodePage, ObjectPage, PageAddr};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CatalogEntry {
    pub kind: ObjectKind,
    pub page: PageAddr,
    pub at: Option<Point>,
}

#[derive(Debug, Default)]
pub(crate) struct Catalog {
    root: Option<PageAddr>,
    by_id: HashMap<u32, CatalogEntry>,
    by_page: HashMap<PageAddr, u32>,
}

impl Catalog {
    pub fn invalidate(&mut self) {
        self.root = None;
        self.by_id.clear();
        self.by_page.clear();
    }

    pub fn set_root(&mut self, root: PageAddr) {
        self.root = Some(root);
    }

    pub fn get(&self, id: u32) -> Option<&CatalogEntry> {
        self.by_id.get(&id)
    }

    pub fn point_of(&self, page: PageAddr) -> Option<Point> {
        self.by_page.get(&page).and_then(|id| self.by_id[id].at)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, CatalogEntry)> + '_ {
        self.by_id.iter().map(|(&id, &e)| (id, e))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn insert(&mut self, id: u32, e: CatalogEntry) {
        self.by_page.insert(e.page, id);
        self.by_id.insert(id, e);
    }

    pub fn remove(&mut self, id: u32) -> Option<CatalogEntry> {
        let e = self.by_id.remove(&id)?;
        self.by_page.remove(&e.page);
        Some(e)
    }

    /// Makes the catalog describe the tree rooted at `root`.
    pub fn ensure(&mut self, store: &Store, root: PageAddr) -> Result<()> {
        if self.root == Some(root) {
            return Ok(());
        }
        self.invalidate();
        let mut stack = vec![root];
        let mut lists = Vec::new();
        while let Some(a) = stack.pop() {
            let node = NodePage::decode(&store.read(a)?).map_err(Error::format(a.get()))?;
            for e in std::iter::once(node.cover).chain(node.entries) {
                match e {
                    CellEntry::Empty => {}
                    CellEntry::Child(c) => stack.push(c),
                    CellEntry::LeafList(l) => lists.push(l),
                }
            }
        }
        let mut seen_lists = std::collections::HashSet::new();
        for mut next in lists.into_iter().map(Some) {
            while let Some(l) = next {
                if !seen_lists.insert(l) {
                    break;
                }
                let page = LeafListPage::decode(&store.read(l)?).map_err(Error::format(l.get()))?;
                for r in &page.records {
                    if self.by_page.contains_key(&r.object) {
                        continue;
                    }
                    let entry = match AnyPage::decode(&store.read(r.object)?)
                        .map_err(Error::format(r.object.get()))?
                    {
                        AnyPage::Object(ObjectPage::Gantry { id, x, y }) => (
                            id,
                            CatalogEntry {
                                kind: ObjectKind::Gantry,
                                page: r.object,
                                at: Some(Point::new(x, y)),
                            },
                        ),
                        AnyPage::Object(ObjectPage::ZoneHead { id, .. }) => (
                            id,
                            CatalogEntry {
                                kind: ObjectKind::Zone,
                                page: r.object,
                                at: None,
                            },
                        ),
                        _ => {
                            return Err(Error::Integrity(format!(
                                "leaf record points at page {} which is not an object head",
                                r.object
                            )))
                        }
                    };
                    if let Some(old) = self.by_id.get(&entry.0) {
                        return Err(Error::Integrity(format!(
                            "object id {} stored at pages {} and {}",
                            entry.0, old.page, r.object
                        )));
                    }
                    self.insert(entry.0, entry.1);
                }
                next = page.next;
            }
        }
        self.root = Some(root);
        Ok(())
    }
}
