//! The versioned 9x9 quadtree on top of [`Store`].
//!
//! Depth convention: the depth of a leaf entry is the level of the node page
//! holding it (root = 0). Node pages exist at levels `0..=max_depth`; the
//! entries of a level-`L` node describe level-`L+1` cells.
//!
//! Writer rule: there is at most one uncommitted version. Mutations take
//! either the uncommitted head or, when nothing is pending, a live committed
//! version; anything else fails with [`Error::WriterBusy`]. Readers use
//! committed handles and never observe writer activity, since no page
//! reachable from a live version is ever rewritten.

mod catalog;
mod draft;
mod query;
mod stats;

use sha2::{Digest, Sha256};

pub use query::{query_gantries_within, query_zones_at, HitBasis, QueryCost, QueryHit, QueryResult};
pub use stats::{collect_stats, StatsReport};

use crate::cache::PageCache;
use crate::codec::{ConfigPage, NodePage, PageAddr, VersionRecord};
use crate::error::{Error, Result};
use crate::flash::FlashDevice;
use crate::geometry::{Cell, Point, Polygon};
use crate::store::{GcReport, Pending, Store, UpdatePackage};
use catalog::Catalog;
pub(crate) use draft::read_zone;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildParams {
    pub leaf_split_threshold: u16,
    pub max_depth: u8,
    pub zone_max_depth: u8,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            leaf_split_threshold: 8,
            max_depth: 5,
            zone_max_depth: 3,
        }
    }
}

/// Everything fixed at format time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DbOptions {
    pub params: BuildParams,
    pub max_versions: u8,
    pub dedup: bool,
    /// Real-world coordinates of the world origin; stored for ingest tools.
    pub origin: (i64, i64),
}

impl Default for DbOptions {
    fn default() -> Self {
        Self {
            params: BuildParams::default(),
            max_versions: 4,
            dedup: true,
            origin: (0, 0),
        }
    }
}

impl DbOptions {
    fn config(&self) -> ConfigPage {
        ConfigPage {
            origin_x: self.origin.0,
            origin_y: self.origin.1,
            split_threshold: self.params.leaf_split_threshold,
            max_depth: self.params.max_depth,
            zone_max_depth: self.params.zone_max_depth,
            max_versions: self.max_versions,
            dedup: self.dedup,
        }
    }

    fn from_config(c: &ConfigPage) -> Self {
        Self {
            params: BuildParams {
                leaf_split_threshold: c.split_threshold,
                max_depth: c.max_depth,
                zone_max_depth: c.zone_max_depth,
            },
            max_versions: c.max_versions,
            dedup: c.dedup,
            origin: (c.origin_x, c.origin_y),
        }
    }
}

/// A view of one version. Committed handles are read-only snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TreeHandle {
    pub root: PageAddr,
    pub version: u32,
    pub committed: bool,
}

impl TreeHandle {
    fn from_record(r: &VersionRecord) -> Self {
        Self {
            root: r.root,
            version: r.version,
            committed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectKind {
    Gantry,
    Zone,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Object {
    Gantry { id: u32, at: Point },
    Zone { id: u32, polygon: Polygon },
}

impl Object {
    pub fn id(&self) -> u32 {
        match self {
            Object::Gantry { id, .. } | Object::Zone { id, .. } => *id,
        }
    }

    pub fn kind(&self) -> ObjectKind {
        match self {
            Object::Gantry { .. } => ObjectKind::Gantry,
            Object::Zone { .. } => ObjectKind::Zone,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Insert(Object),
    Delete(u32),
}

pub struct Database {
    store: Store,
    catalog: Catalog,
    options: DbOptions,
}

impl Database {
    pub fn format(dev: FlashDevice, options: DbOptions) -> Result<Self> {
        let store = Store::format(dev, options.config())?;
        Ok(Self::wrap(store))
    }

    pub fn mount(dev: FlashDevice) -> Result<Self> {
        Ok(Self::wrap(Store::mount(dev)?))
    }

    pub fn mount_with_pending(dev: FlashDevice, pending: Option<Pending>) -> Result<Self> {
        Ok(Self::wrap(Store::mount_with_pending(dev, pending)?))
    }

    fn wrap(store: Store) -> Self {
        let options = DbOptions::from_config(store.config());
        Self {
            store,
            catalog: Catalog::default(),
            options,
        }
    }

    pub fn options(&self) -> &DbOptions {
        &self.options
    }

    pub fn params(&self) -> BuildParams {
        self.options.params
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub fn device(&self) -> &FlashDevice {
        self.store.device()
    }

    pub fn device_mut(&mut self) -> &mut FlashDevice {
        self.store.device_mut()
    }

    pub fn into_device(self) -> FlashDevice {
        self.store.into_device()
    }

    /// Programs one empty root node and commits it as the next version.
    pub fn create_empty(&mut self) -> Result<TreeHandle> {
        if let Some(p) = self.store.pending() {
            return Err(Error::WriterBusy(format!("version {} is uncommitted", p.version)));
        }
        let version = self.store.max_version() + 1;
        let buf = NodePage::empty(0).encode().map_err(Error::format(0))?;
        let result = self
            .store
            .program_new(&buf)
            .and_then(|root| self.store.append_version(version, root));
        match result {
            Ok(rec) => Ok(TreeHandle::from_record(&rec)),
            Err(e) => {
                self.store.abort_op();
                Err(e)
            }
        }
    }

    /// Newest committed version.
    pub fn current(&self) -> Option<TreeHandle> {
        self.store.current().map(|r| TreeHandle::from_record(&r))
    }

    /// The uncommitted head if there is one, else the newest committed version.
    pub fn head(&self) -> Option<TreeHandle> {
        match self.store.pending() {
            Some(p) => Some(TreeHandle {
                root: p.root,
                version: p.version,
                committed: false,
            }),
            None => self.current(),
        }
    }

    pub fn pending(&self) -> Option<TreeHandle> {
        self.store.pending().map(|p| TreeHandle {
            root: p.root,
            version: p.version,
            committed: false,
        })
    }

    /// Live committed versions, oldest first.
    pub fn versions(&self) -> Vec<TreeHandle> {
        self.store.versions().iter().map(TreeHandle::from_record).collect()
    }

    pub fn version(&self, version: u32) -> Result<TreeHandle> {
        self.store
            .live_version(version)
            .map(|r| TreeHandle::from_record(&r))
            .ok_or(Error::VersionNotLive(version))
    }

    /// Version number the next mutation on `h` will produce.
    fn begin(&self, h: &TreeHandle) -> Result<u32> {
        match (h.committed, self.store.pending()) {
            (false, Some(p)) if p.root == h.root && p.version == h.version => Ok(p.version),
            (false, _) => Err(Error::WriterBusy(format!(
                "handle for version {} is not the uncommitted head",
                h.version
            ))),
            (true, Some(p)) => Err(Error::WriterBusy(format!("version {} is uncommitted", p.version))),
            (true, None) => match self.store.live_version(h.version) {
                Some(r) if r.root == h.root => Ok(self.store.max_version() + 1),
                _ => Err(Error::VersionNotLive(h.version)),
            },
        }
    }

    /// Applies `ops` in order as one copy-on-write update; each changed page
    /// is written once. Returns the new uncommitted head.
    pub fn apply_ops(&mut self, h: &TreeHandle, ops: &[Op]) -> Result<TreeHandle> {
        let version = self.begin(h)?;
        match self.apply_ops_inner(h.root, ops) {
            Ok(root) => {
                self.store.set_pending(Some(Pending { version, root }));
                self.catalog.set_root(root);
                Ok(TreeHandle {
                    root,
                    version,
                    committed: false,
                })
            }
            Err(e) => {
                self.store.abort_op();
                self.catalog.invalidate();
                Err(e)
            }
        }
    }

    fn apply_ops_inner(&mut self, root: PageAddr, ops: &[Op]) -> Result<PageAddr> {
        self.catalog.ensure(&self.store, root)?;
        let mut ctx = draft::Ctx::new(&mut self.store, &mut self.catalog, self.options.params);
        let mut draft = ctx.load_node(root, Cell::world())?;
        for op in ops {
            ctx.apply(&mut draft, op)?;
        }
        match ctx.flush_node(draft, true)? {
            crate::codec::CellEntry::Child(a) => Ok(a),
            other => Err(Error::Integrity(format!("root flushed to {other:?}"))),
        }
    }

    pub fn insert_gantry(&mut self, h: &TreeHandle, id: u32, at: Point) -> Result<TreeHandle> {
        self.apply_ops(h, &[Op::Insert(Object::Gantry { id, at })])
    }

    pub fn insert_zone(&mut self, h: &TreeHandle, id: u32, polygon: Polygon) -> Result<TreeHandle> {
        self.apply_ops(h, &[Op::Insert(Object::Zone { id, polygon })])
    }

    pub fn delete_object(&mut self, h: &TreeHandle, id: u32) -> Result<TreeHandle> {
        self.apply_ops(h, &[Op::Delete(id)])
    }

    /// Inserts all objects into one new version on top of the head and
    /// commits it.
    pub fn build(&mut self, objects: Vec<Object>) -> Result<TreeHandle> {
        let head = match self.head() {
            Some(h) => h,
            None => self.create_empty()?,
        };
        let ops: Vec<Op> = objects.into_iter().map(Op::Insert).collect();
        let h = self.apply_ops(&head, &ops)?;
        self.commit(&h)
    }

    pub fn commit(&mut self, h: &TreeHandle) -> Result<TreeHandle> {
        match self.store.pending() {
            Some(p) if !h.committed && p.root == h.root && p.version == h.version => {}
            _ => return Err(Error::NotPending("commit")),
        }
        match self.store.append_version(h.version, h.root) {
            Ok(rec) => Ok(TreeHandle::from_record(&rec)),
            Err(e) => {
                self.catalog.invalidate();
                Err(e)
            }
        }
    }

    /// Drops the uncommitted lineage `h` belongs to.
    pub fn rollback(&mut self, h: &TreeHandle) -> Result<()> {
        match self.store.pending() {
            Some(p) if !h.committed && p.version == h.version => {}
            _ => return Err(Error::NotPending("roll back")),
        }
        self.catalog.invalidate();
        self.store.rollback()
    }

    pub fn gc(&mut self) -> Result<GcReport> {
        self.store.gc()
    }

    pub fn diff(&mut self, base: &TreeHandle, next: &TreeHandle) -> Result<UpdatePackage> {
        let b = self.store.live_version(base.version).ok_or(Error::VersionNotLive(base.version))?;
        let n = self.store.live_version(next.version).ok_or(Error::VersionNotLive(next.version))?;
        self.store.diff(&b, &n)
    }

    pub fn apply_package(&mut self, pkg: &UpdatePackage) -> Result<TreeHandle> {
        let rec = self.store.apply(pkg)?;
        Ok(TreeHandle::from_record(&rec))
    }

    pub fn query_zones_at(&self, h: &TreeHandle, p: Point, cache: &mut PageCache) -> Result<QueryResult> {
        query_zones_at(self.store.device(), cache, h.root, p)
    }

    pub fn query_gantries_within(
        &self,
        h: &TreeHandle,
        center: Point,
        radius: u32,
        cache: &mut PageCache,
    ) -> Result<QueryResult> {
        query_gantries_within(self.store.device(), cache, h.root, center, radius)
    }

    pub fn verify(&mut self) -> Result<crate::verify::VerifyReport> {
        crate::verify::verify(&mut self.store)
    }

    pub fn stats(&self, h: &TreeHandle) -> Result<StatsReport> {
        collect_stats(&self.store, h.root)
    }

    /// SHA-256 over `(address, content)` of every page reachable from `h`,
    /// in address order.
    pub fn reachable_digest(&mut self, h: &TreeHandle) -> Result<[u8; 32]> {
        let pages = self.store.reachable(h.root)?;
        let mut hasher = Sha256::new();
        for a in pages {
            hasher.update(a.to_be_bytes());
            hasher.update(self.store.device().peek_page(a)?);
        }
        Ok(hasher.finalize().into())
    }

    /// Every object of version `h`, sorted by id.
    pub fn objects(&mut self, h: &TreeHandle) -> Result<Vec<Object>> {
        let mut scratch = Catalog::default();
        scratch.ensure(&self.store, h.root)?;
        let mut out = Vec::with_capacity(scratch.len());
        for (id, e) in scratch.entries() {
            out.push(match e.kind {
                ObjectKind::Gantry => Object::Gantry {
                    id,
                    at: e.at.expect("gantry entries carry a position"),
                },
                ObjectKind::Zone => Object::Zone {
                    id,
                    polygon: read_zone(&self.store, e.page)?.1,
                },
            });
        }
        out.sort_by_key(Object::id);
        Ok(out)
    }
}
