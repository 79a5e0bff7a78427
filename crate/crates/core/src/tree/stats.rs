use std::collections::{HashMap, HashSet};

use crate::codec::{CellEntry, LeafListPage, NodePage, ObjectPage, PageAddr, RecordKind};
use crate::error::{Error, Result};
use crate::flash::{PageBuf, PAGE_SIZE};
use crate::geometry::CELLS_PER_NODE;
use crate::store::Store;

/// Tree size and shape figures, one field per report row `a` to `r`.
///
/// Page counts are per distinct address; record counts are per cell
/// reference, so a list page shared by several cells counts its records once
/// for each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsReport {
    /// a
    pub objects: u64,
    /// b: node, leaf-list and object pages.
    pub total_pages: u64,
    /// c
    pub total_mib: f64,
    /// d: node plus leaf-list pages.
    pub index_pages: u64,
    pub node_pages: u64,
    /// e
    pub leaf_references: u64,
    /// f = e / a
    pub references_per_object: f64,
    /// g
    pub empty_entries: u64,
    /// h
    pub list_entries: u64,
    pub child_entries: u64,
    /// i: level of the deepest node holding a non-empty list.
    pub max_depth: u8,
    /// j
    pub zone_inside_entries: u64,
    /// k
    pub zone_edge_entries: u64,
    pub point_entries: u64,
    /// l
    pub distinct_list_pages: u64,
    /// m
    pub list_pages: u64,
    /// n = m - l
    pub duplicate_list_pages: u64,
    /// o = b - n
    pub pages_deduped: u64,
    /// p
    pub mib_deduped: f64,
    /// q = d - n
    pub index_pages_deduped: u64,
    /// r
    pub index_mib_deduped: f64,
}

fn mib(pages: u64) -> f64 {
    (pages * PAGE_SIZE as u64) as f64 / (1u64 << 20) as f64
}

impl StatsReport {
    /// `(row, label, value)` in report order.
    pub fn rows(&self) -> Vec<(char, &'static str, String)> {
        vec![
            ('a', "Objects", self.objects.to_string()),
            ('b', "Total pages", self.total_pages.to_string()),
            ('c', "Total size (MiB)", format!("{:.3}", self.total_mib)),
            ('d', "Index pages", self.index_pages.to_string()),
            ('e', "Leaf references", self.leaf_references.to_string()),
            ('f', "References per object", format!("{:.3}", self.references_per_object)),
            ('g', "Empty leaf entries", self.empty_entries.to_string()),
            ('h', "Set leaf entries", self.list_entries.to_string()),
            ('i', "Max depth", self.max_depth.to_string()),
            ('j', "Zone inside entries", self.zone_inside_entries.to_string()),
            ('k', "Zone edge entries", self.zone_edge_entries.to_string()),
            ('l', "Distinct leaf pages", self.distinct_list_pages.to_string()),
            ('m', "Leaf pages", self.list_pages.to_string()),
            ('n', "Duplicate leaf pages", self.duplicate_list_pages.to_string()),
            ('o', "Pages, dups removed", self.pages_deduped.to_string()),
            ('p', "Size, dups removed (MiB)", format!("{:.3}", self.mib_deduped)),
            ('q', "Index pages, dups removed", self.index_pages_deduped.to_string()),
            ('r', "Index size, dups removed (MiB)", format!("{:.3}", self.index_mib_deduped)),
        ]
    }

    /// Relations that must hold between rows; returns the violated ones.
    pub fn consistency_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.empty_entries + self.list_entries + self.child_entries
            != CELLS_PER_NODE as u64 * self.node_pages
        {
            out.push("g + h + child entries != 81 x nodes".into());
        }
        if self.duplicate_list_pages != self.list_pages - self.distinct_list_pages {
            out.push("n != m - l".into());
        }
        if self.index_pages != self.node_pages + self.list_pages {
            out.push("d != nodes + m".into());
        }
        if self.pages_deduped != self.total_pages - self.duplicate_list_pages {
            out.push("o != b - n".into());
        }
        if self.index_pages_deduped != self.index_pages - self.duplicate_list_pages {
            out.push("q != d - n".into());
        }
        if self.leaf_references
            != self.point_entries + self.zone_inside_entries + self.zone_edge_entries
        {
            out.push("e != points + j + k".into());
        }
        out
    }
}

/// Full reachability walk of the tree at `root`.
pub fn collect_stats(store: &Store, root: PageAddr) -> Result<StatsReport> {
    let mut s = StatsReport::default();
    let mut list_addrs: HashSet<PageAddr> = HashSet::new();
    let mut list_contents: HashSet<PageBuf> = HashSet::new();
    let mut list_cache: HashMap<PageAddr, (Vec<RecordKind>, Vec<PageAddr>)> = HashMap::new();
    let mut objects: HashSet<PageAddr> = HashSet::new();
    let mut object_pages = 0u64;

    let mut visit_list = |first: PageAddr, s: &mut StatsReport| -> Result<Vec<PageAddr>> {
        if let Some((kinds, objs)) = list_cache.get(&first) {
            for k in kinds {
                count_kind(s, *k);
            }
            return Ok(objs.clone());
        }
        let mut kinds = Vec::new();
        let mut objs = Vec::new();
        let mut next = Some(first);
        while let Some(a) = next {
            let buf = store.read(a)?;
            let page = LeafListPage::decode(&buf).map_err(Error::format(a.get()))?;
            if list_addrs.insert(a) {
                list_contents.insert(buf);
            }
            for r in &page.records {
                kinds.push(r.kind);
                objs.push(r.object);
            }
            next = page.next;
        }
        for k in &kinds {
            count_kind(s, *k);
        }
        list_cache.insert(first, (kinds, objs.clone()));
        Ok(objs)
    };

    let mut referenced = Vec::new();
    let mut stack = vec![(root, 0u8)];
    let mut nodes_seen = HashSet::new();
    while let Some((a, level)) = stack.pop() {
        if !nodes_seen.insert(a) {
            return Err(Error::Integrity(format!("node {a} is reachable twice")));
        }
        let n = NodePage::decode(&store.read(a)?).map_err(Error::format(a.get()))?;
        s.node_pages += 1;
        if let CellEntry::LeafList(l) = n.cover {
            referenced.extend(visit_list(l, &mut s)?);
        }
        for e in n.entries {
            match e {
                CellEntry::Empty => s.empty_entries += 1,
                CellEntry::Child(c) => {
                    s.child_entries += 1;
                    stack.push((c, level + 1));
                }
                CellEntry::LeafList(l) => {
                    s.list_entries += 1;
                    s.max_depth = s.max_depth.max(level);
                    referenced.extend(visit_list(l, &mut s)?);
                }
            }
        }
    }
    for obj in referenced {
        if !objects.insert(obj) {
            continue;
        }
        let mut next = Some(obj);
        while let Some(a) = next {
            let page = ObjectPage::decode(&store.read(a)?).map_err(Error::format(a.get()))?;
            object_pages += 1;
            next = page.next();
        }
    }

    s.objects = objects.len() as u64;
    s.list_pages = list_addrs.len() as u64;
    s.distinct_list_pages = list_contents.len() as u64;
    s.duplicate_list_pages = s.list_pages - s.distinct_list_pages;
    s.index_pages = s.node_pages + s.list_pages;
    s.total_pages = s.index_pages + object_pages;
    s.total_mib = mib(s.total_pages);
    s.references_per_object = if s.objects == 0 {
        0.0
    } else {
        s.leaf_references as f64 / s.objects as f64
    };
    s.pages_deduped = s.total_pages - s.duplicate_list_pages;
    s.mib_deduped = mib(s.pages_deduped);
    s.index_pages_deduped = s.index_pages - s.duplicate_list_pages;
    s.index_mib_deduped = mib(s.index_pages_deduped);
    Ok(s)
}

fn count_kind(s: &mut StatsReport, k: RecordKind) {
    s.leaf_references += 1;
    match k {
        RecordKind::Point => s.point_entries += 1,
        RecordKind::ZoneInside => s.zone_inside_entries += 1,
        RecordKind::ZoneEdge => s.zone_edge_entries += 1,
    }
}
