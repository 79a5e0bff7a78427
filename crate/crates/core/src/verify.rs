//! Full structural check of every live version (and the uncommitted head).

use std::collections::{HashMap, HashSet};

use crate::codec::{CellEntry, LeafListPage, NodePage, ObjectPage, PageAddr, RecordKind};
use crate::error::Result;
use crate::geometry::{classify_cell, Cell, CellClass, Point, Polygon};
use crate::store::{PageState, Store, DATA_START};
use crate::tree::{collect_stats, read_zone};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub versions_checked: u32,
    pub pages_checked: u32,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

struct Checker<'a> {
    store: &'a Store,
    version: u32,
    problems: Vec<String>,
    pages: HashSet<u32>,
    objects: HashMap<PageAddr, Object>,
    ids: HashMap<u32, PageAddr>,
}

enum Object {
    Gantry(Point),
    Zone(Polygon),
    Broken,
}

impl Checker<'_> {
    fn problem(&mut self, msg: String) {
        self.problems.push(format!("version {}: {msg}", self.version));
    }

    /// Registers a page visit; false if the page is outside the data region
    /// or not in a state a reachable page may have.
    fn visit(&mut self, a: PageAddr, expect: &[PageState]) -> bool {
        let n = a.get();
        if n < DATA_START || n >= self.store.total_pages() {
            self.problem(format!("page {a} is outside the data region"));
            return false;
        }
        let st = self.store.page_state(n);
        if !expect.contains(&st) {
            self.problem(format!("reachable page {a} is {st:?}"));
        }
        self.pages.insert(n);
        true
    }

    fn node(&mut self, a: PageAddr, cell: Cell, expect: &[PageState]) {
        if !self.visit(a, expect) {
            return;
        }
        let n = match self.store.read(a).map(|b| NodePage::decode(&b)) {
            Ok(Ok(n)) => n,
            Ok(Err(e)) => return self.problem(format!("node {a}: {e}")),
            Err(e) => return self.problem(format!("node {a}: {e}")),
        };
        if n.level != cell.level() {
            self.problem(format!("node {a} has level {}, expected {}", n.level, cell.level()));
        }
        if let CellEntry::LeafList(l) = n.cover {
            if cell.level() != 0 {
                self.problem(format!("node {a} below the root has a cover list"));
            }
            self.list(l, cell, true, expect);
        }
        for (s, e) in n.entries.iter().enumerate() {
            let Ok(sub) = cell.subcell_at(s) else {
                self.problem(format!("node {a} is deeper than the cell grid"));
                return;
            };
            match *e {
                CellEntry::Empty => {}
                CellEntry::Child(c) => self.node(c, sub, expect),
                CellEntry::LeafList(l) => self.list(l, sub, false, expect),
            }
        }
    }

    fn list(&mut self, first: PageAddr, cell: Cell, cover: bool, expect: &[PageState]) {
        let mut next = Some(first);
        let mut chain = HashSet::new();
        let mut total = 0;
        while let Some(a) = next {
            if !chain.insert(a) {
                return self.problem(format!("list chain from {first} loops"));
            }
            if !self.visit(a, expect) {
                return;
            }
            let page = match self.store.read(a).map(|b| LeafListPage::decode(&b)) {
                Ok(Ok(p)) => p,
                Ok(Err(e)) => return self.problem(format!("list page {a}: {e}")),
                Err(e) => return self.problem(format!("list page {a}: {e}")),
            };
            total += page.records.len();
            for r in &page.records {
                self.record(r.kind, r.object, cell, cover, expect);
            }
            next = page.next;
        }
        if total == 0 {
            self.problem(format!("list {first} is empty"));
        }
    }

    fn record(&mut self, kind: RecordKind, obj: PageAddr, cell: Cell, cover: bool, expect: &[PageState]) {
        if !self.objects.contains_key(&obj) {
            let o = self.load_object(obj, expect);
            self.objects.insert(obj, o);
        }
        match (&self.objects[&obj], kind) {
            (Object::Broken, _) => {}
            (Object::Gantry(p), RecordKind::Point) => {
                if cover || !cell.contains(*p) {
                    let p = *p;
                    self.problem(format!("gantry at {obj} ({}, {}) listed outside its cell", p.x, p.y));
                }
            }
            (Object::Zone(poly), RecordKind::ZoneInside | RecordKind::ZoneEdge) => {
                let class = classify_cell(&cell, poly);
                let ok = match kind {
                    RecordKind::ZoneInside => class == CellClass::Inside,
                    _ => class == CellClass::Edge && !cover,
                };
                if !ok {
                    self.problem(format!(
                        "zone at {obj} recorded as {kind:?} in a cell classified {class:?}"
                    ));
                }
            }
            (_, k) => self.problem(format!("record kind {k:?} points at the wrong object kind ({obj})")),
        }
    }

    fn load_object(&mut self, obj: PageAddr, expect: &[PageState]) -> Object {
        if !self.visit(obj, expect) {
            return Object::Broken;
        }
        let head = match self.store.read(obj).map(|b| ObjectPage::decode(&b)) {
            Ok(Ok(p)) => p,
            Ok(Err(e)) => {
                self.problem(format!("object page {obj}: {e}"));
                return Object::Broken;
            }
            Err(e) => {
                self.problem(format!("object page {obj}: {e}"));
                return Object::Broken;
            }
        };
        let (id, o) = match head {
            ObjectPage::Gantry { id, x, y } => {
                let p = Point::new(x, y);
                if !p.in_world() {
                    self.problem(format!("gantry {id} lies outside the world"));
                }
                (id, Object::Gantry(p))
            }
            ObjectPage::ZoneHead { id, .. } => {
                let mut next = head.next();
                while let Some(a) = next {
                    if !self.visit(a, expect) {
                        break;
                    }
                    next = match self.store.read(a).map(|b| ObjectPage::decode(&b)) {
                        Ok(Ok(p)) => p.next(),
                        _ => None,
                    };
                }
                match read_zone(self.store, obj) {
                    Ok((_, poly)) => {
                        if !poly.in_world() {
                            self.problem(format!("zone {id} lies outside the world"));
                        }
                        (id, Object::Zone(poly))
                    }
                    Err(e) => {
                        self.problem(format!("zone {id} at {obj}: {e}"));
                        (id, Object::Broken)
                    }
                }
            }
            ObjectPage::Vertices { .. } => {
                self.problem(format!("leaf record points at vertex page {obj}"));
                return Object::Broken;
            }
        };
        if let Some(other) = self.ids.insert(id, obj) {
            self.problem(format!("object id {id} stored at pages {other} and {obj}"));
        }
        o
    }
}

/// Walks every live version and the uncommitted head. Checks page magics and
/// CRCs, entry tags, node levels, that every reachable page is in the data
/// region and marked in use, that every leaf record agrees with its cell,
/// id uniqueness, and the stats relations.
pub fn verify(store: &mut Store) -> Result<VerifyReport> {
    store.mark()?;
    let mut report = VerifyReport::default();
    let mut all_pages = HashSet::new();
    let mut roots: Vec<(u32, PageAddr, &[PageState])> = store
        .versions()
        .iter()
        .map(|r| (r.version, r.root, &[PageState::Live][..]))
        .collect();
    if let Some(p) = store.pending() {
        roots.push((p.version, p.root, &[PageState::Live, PageState::Pending][..]));
    }
    let store: &Store = store;
    for (version, root, expect) in roots {
        let mut c = Checker {
            store,
            version,
            problems: Vec::new(),
            pages: HashSet::new(),
            objects: HashMap::new(),
            ids: HashMap::new(),
        };
        c.node(root, Cell::world(), expect);
        if c.problems.is_empty() {
            match collect_stats(store, root) {
                Ok(s) => {
                    for p in s.consistency_problems() {
                        c.problem(format!("stats: {p}"));
                    }
                    if s.objects != c.ids.len() as u64 {
                        c.problem(format!("stats count {} objects, walk found {}", s.objects, c.ids.len()));
                    }
                }
                Err(e) => c.problem(format!("stats: {e}")),
            }
        }
        report.versions_checked += 1;
        all_pages.extend(c.pages);
        report.problems.extend(c.problems);
    }
    report.pages_checked = all_pages.len() as u32;
    Ok(report)
}
