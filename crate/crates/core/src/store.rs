//! Page allocation, the version directory, reachability GC and update
//! packages.
//!
//! Device layout: subsectors 0 and 1 hold the version directory (an
//! append-only log of [`VersionRecord`]s, compacted by alternating between
//! the two), page 32 holds the [`ConfigPage`], and everything from page 48 on
//! is the data region managed by the cyclic allocator.
//!
//! Page states are derived by marking: pages reachable from a live version
//! are `Live`, pages reachable only from the uncommitted head (or written by
//! the operation in progress) are `Pending`, other programmed pages are
//! `Dead`. Only `Free` and `Dead` pages are ever reused, so nothing reachable
//! from a live version is programmed or erased.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crc::{Crc, CRC_32_ISO_HDLC};

use crate::codec::{
    get_u24, put_u24, AnyPage, ConfigPage, NodePage, PageAddr, VersionRecord, LEAF_MAGIC,
    MAX_NODE_LEVEL, VERSION_RECORD_SIZE,
};
use crate::error::{Error, Result};
use crate::flash::{
    EraseScope, FlashDevice, PageBuf, ERASED_PAGE, PAGES_PER_SUBSECTOR, PAGE_SIZE,
};

pub const DIRECTORY_SUBSECTORS: u32 = 2;
pub const CONFIG_PAGE: u32 = DIRECTORY_SUBSECTORS * PAGES_PER_SUBSECTOR;
pub const DATA_START: u32 = CONFIG_PAGE + PAGES_PER_SUBSECTOR;
const SLOTS_PER_PAGE: usize = PAGE_SIZE / VERSION_RECORD_SIZE;
pub const SLOTS_PER_SUBSECTOR: usize = SLOTS_PER_PAGE * PAGES_PER_SUBSECTOR as usize;

const CRC32: Crc<u32> = Crc::<u32>::new(&CRC_32_ISO_HDLC);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageState {
    Free,
    Live,
    Pending,
    Dead,
    Reserved,
}

/// The uncommitted head of the single writer lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pending {
    pub version: u32,
    pub root: PageAddr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GcReport {
    pub pages_reclaimed: u32,
    pub subsectors_erased: u32,
}

#[derive(Debug, Clone)]
struct Directory {
    active: u32,
    next_slot: usize,
    records: Vec<(usize, VersionRecord)>,
}

pub struct Store {
    dev: FlashDevice,
    config: ConfigPage,
    dir: Directory,
    state: Vec<PageState>,
    cursor: u32,
    links: HashMap<u32, Vec<u32>>,
    pending: Option<Pending>,
    inflight: HashSet<u32>,
    dedup: HashMap<PageBuf, u32>,
}

fn subsector_first(page: u32) -> u32 {
    page - page % PAGES_PER_SUBSECTOR
}

impl Store {
    /// Erases whatever is on the device and writes a fresh config page and
    /// an empty directory.
    pub fn format(mut dev: FlashDevice, config: ConfigPage) -> Result<Self> {
        validate_config(&config)?;
        let total = dev.geometry().total_pages();
        if total > PageAddr::MAX + 1 {
            return Err(Error::InvalidParams(format!(
                "{total} pages exceed the 22-bit page address space"
            )));
        }
        if total < DATA_START + PAGES_PER_SUBSECTOR {
            return Err(Error::InvalidParams("device too small".into()));
        }
        for first in (0..total).step_by(PAGES_PER_SUBSECTOR as usize) {
            let dirty = (first..first + PAGES_PER_SUBSECTOR)
                .any(|p| dev.peek_page(p).map(|b| b != ERASED_PAGE.as_slice()).unwrap_or(true));
            if dirty {
                dev.erase(EraseScope::Subsector, first)?;
            }
        }
        dev.program_page(CONFIG_PAGE, &config.encode())?;
        Self::mount(dev)
    }

    pub fn mount(dev: FlashDevice) -> Result<Self> {
        Self::mount_with_pending(dev, None)
    }

    /// Mounts and re-attaches an uncommitted head that was persisted outside
    /// the device (its pages are on flash but not in the directory).
    pub fn mount_with_pending(mut dev: FlashDevice, pending: Option<Pending>) -> Result<Self> {
        let total = dev.geometry().total_pages();
        if total < DATA_START + PAGES_PER_SUBSECTOR || total > PageAddr::MAX + 1 {
            return Err(Error::NotFormatted("unsupported device size".into()));
        }
        let config = ConfigPage::decode(&dev.read_page(CONFIG_PAGE)?)
            .map_err(|e| Error::NotFormatted(format!("config page: {e}")))?;
        validate_config(&config)?;

        let a = read_directory(&dev, 0)?;
        let b = read_directory(&dev, 1)?;
        let max = config.max_versions as usize;
        let keep_a = match (a.1, b.1) {
            (_, 0) => true,
            (0, _) => false,
            (used_a, used_b) => {
                let la = live_set(&a.0, max);
                let lb = live_set(&b.0, max);
                if la == lb {
                    used_a >= used_b
                } else if la.is_superset(&lb) {
                    true
                } else if lb.is_superset(&la) {
                    false
                } else {
                    la.iter().max() >= lb.iter().max()
                }
            }
        };
        let (active, (records, used)) = if keep_a { (0, a) } else { (1, b) };
        let other = 1 - active;
        if read_directory(&dev, other)?.1 > 0 {
            log::info!("erasing stale directory subsector {other}");
            dev.erase(EraseScope::Subsector, other * PAGES_PER_SUBSECTOR)?;
        }

        let mut state = vec![PageState::Reserved; total as usize];
        for p in DATA_START..total {
            state[p as usize] = if dev.read_page(p)? == ERASED_PAGE {
                PageState::Free
            } else {
                PageState::Dead
            };
        }
        let mut store = Self {
            dev,
            config,
            dir: Directory {
                active,
                next_slot: used,
                records,
            },
            state,
            cursor: DATA_START,
            links: HashMap::new(),
            pending,
            inflight: HashSet::new(),
            dedup: HashMap::new(),
        };
        if let Some(latest) = store.dir.records.iter().map(|r| r.1).max_by_key(|r| r.version) {
            store.cursor = latest.cursor.get().clamp(DATA_START, total - 1);
        }
        if let Some(p) = pending {
            if p.version <= store.max_version() {
                return Err(Error::WriterBusy(format!(
                    "pending version {} is not newer than the directory",
                    p.version
                )));
            }
        }
        store.mark()?;
        Ok(store)
    }

    pub fn device(&self) -> &FlashDevice {
        &self.dev
    }

    /// Direct device access for fault injection and instrumentation.
    pub fn device_mut(&mut self) -> &mut FlashDevice {
        &mut self.dev
    }

    pub fn into_device(self) -> FlashDevice {
        self.dev
    }

    pub fn config(&self) -> &ConfigPage {
        &self.config
    }

    pub fn total_pages(&self) -> u32 {
        self.state.len() as u32
    }

    pub fn cursor(&self) -> u32 {
        self.cursor
    }

    pub fn page_state(&self, addr: u32) -> PageState {
        self.state[addr as usize]
    }

    pub fn pending(&self) -> Option<Pending> {
        self.pending
    }

    /// Live versions, oldest first.
    pub fn versions(&self) -> Vec<VersionRecord> {
        let mut v: Vec<_> = self.dir.records.iter().map(|r| r.1).filter(|r| r.is_valid()).collect();
        v.sort_by_key(|r| std::cmp::Reverse(r.version));
        v.truncate(self.config.max_versions as usize);
        v.reverse();
        v
    }

    /// Every decodable record in the active directory subsector, slot order.
    pub fn directory(&self) -> Vec<VersionRecord> {
        self.dir.records.iter().map(|r| r.1).collect()
    }

    pub fn current(&self) -> Option<VersionRecord> {
        self.versions().last().copied()
    }

    pub fn live_version(&self, version: u32) -> Option<VersionRecord> {
        self.versions().into_iter().find(|r| r.version == version)
    }

    /// Highest version number ever recorded in the directory.
    pub fn max_version(&self) -> u32 {
        self.dir.records.iter().map(|r| r.1.version).max().unwrap_or(0)
    }

    pub fn read(&self, addr: PageAddr) -> Result<PageBuf> {
        Ok(self.dev.read_page(addr.get())?)
    }

    pub(crate) fn set_pending(&mut self, pending: Option<Pending>) {
        self.pending = pending;
        self.inflight.clear();
    }

    /// Forgets the in-flight set of a failed operation; its pages turn dead
    /// at the next mark.
    pub(crate) fn abort_op(&mut self) {
        self.inflight.clear();
    }

    pub fn alloc_page(&mut self) -> Result<PageAddr> {
        if let Some(a) = self.scan_free()? {
            return Ok(a);
        }
        self.mark()?;
        match self.scan_free()? {
            Some(a) => Ok(a),
            None => Err(Error::FlashFull),
        }
    }

    fn scan_free(&mut self) -> Result<Option<PageAddr>> {
        let total = self.total_pages();
        for _ in DATA_START..total {
            let a = self.cursor;
            self.cursor = if a + 1 >= total { DATA_START } else { a + 1 };
            match self.state[a as usize] {
                PageState::Free => return Ok(Some(PageAddr::new(a).expect("checked at mount"))),
                PageState::Dead if self.reclaimable(a) => {
                    self.erase_subsector(a)?;
                    return Ok(Some(PageAddr::new(a).expect("checked at mount")));
                }
                _ => {}
            }
        }
        Ok(None)
    }

    fn reclaimable(&self, page: u32) -> bool {
        let first = subsector_first(page);
        first >= DATA_START
            && (first..first + PAGES_PER_SUBSECTOR).all(|p| {
                matches!(self.state[p as usize], PageState::Free | PageState::Dead)
            })
    }

    fn erase_subsector(&mut self, page: u32) -> Result<()> {
        let first = subsector_first(page);
        for p in first..first + PAGES_PER_SUBSECTOR {
            debug_assert!(matches!(
                self.state[p as usize],
                PageState::Free | PageState::Dead
            ));
            self.links.remove(&p);
            if self.config.dedup {
                let buf: PageBuf = self.dev.peek_page(p)?.try_into().expect("page size");
                if self.dedup.get(&buf) == Some(&p) {
                    self.dedup.remove(&buf);
                }
            }
        }
        self.dev.erase(EraseScope::Subsector, first)?;
        for p in first..first + PAGES_PER_SUBSECTOR {
            self.state[p as usize] = PageState::Free;
        }
        Ok(())
    }

    /// Allocates and programs one page for the operation in progress.
    pub fn program_new(&mut self, buf: &PageBuf) -> Result<PageAddr> {
        let a = self.alloc_page()?;
        self.program_at(a.get(), buf)?;
        Ok(a)
    }

    fn program_at(&mut self, a: u32, buf: &PageBuf) -> Result<()> {
        self.dev.program_page(a, buf)?;
        self.state[a as usize] = PageState::Pending;
        self.inflight.insert(a);
        let links = AnyPage::decode(buf)
            .map(|p| p.links().into_iter().map(PageAddr::get).collect())
            .unwrap_or_default();
        self.links.insert(a, links);
        if self.config.dedup && buf[0] == LEAF_MAGIC {
            self.dedup.insert(*buf, a);
        }
        Ok(())
    }

    /// Writes a leaf-list page, reusing an identical page that is still in
    /// use when write-time dedup is enabled.
    pub fn write_list_page(&mut self, buf: &PageBuf) -> Result<PageAddr> {
        if self.config.dedup {
            if let Some(&a) = self.dedup.get(buf) {
                if matches!(self.state[a as usize], PageState::Live | PageState::Pending) {
                    self.inflight.insert(a);
                    return Ok(PageAddr::new(a).expect("checked at mount"));
                }
            }
        }
        self.program_new(buf)
    }

    fn walk(&mut self, roots: Vec<u32>, seen: &mut [bool]) -> Result<()> {
        let mut stack = roots;
        while let Some(a) = stack.pop() {
            if a as usize >= seen.len() || a < DATA_START {
                return Err(Error::Integrity(format!("link to page {a} outside the data region")));
            }
            if seen[a as usize] {
                continue;
            }
            seen[a as usize] = true;
            if let Some(l) = self.links.get(&a) {
                stack.extend_from_slice(l);
                continue;
            }
            let buf = self.dev.read_page(a)?;
            let page = AnyPage::decode(&buf).map_err(Error::format(a))?;
            if self.config.dedup && matches!(page, AnyPage::Leaf(_)) {
                self.dedup.entry(buf).or_insert(a);
            }
            let l: Vec<u32> = page.links().into_iter().map(PageAddr::get).collect();
            stack.extend_from_slice(&l);
            self.links.insert(a, l);
        }
        Ok(())
    }

    /// Sorted addresses of every page reachable from `root`.
    pub fn reachable(&mut self, root: PageAddr) -> Result<BTreeSet<u32>> {
        let mut seen = vec![false; self.state.len()];
        self.walk(vec![root.get()], &mut seen)?;
        Ok(seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(a, _)| a as u32)
            .collect())
    }

    /// Recomputes page states from the live roots, the pending head and the
    /// in-flight set.
    pub fn mark(&mut self) -> Result<()> {
        let n = self.state.len();
        let mut live = vec![false; n];
        let roots = self.versions().iter().map(|r| r.root.get()).collect();
        self.walk(roots, &mut live)?;
        let mut reach = live.clone();
        let mut roots: Vec<u32> = self.inflight.iter().copied().collect();
        roots.extend(self.pending.map(|p| p.root.get()));
        self.walk(roots, &mut reach)?;
        for a in DATA_START as usize..n {
            let s = &mut self.state[a];
            if *s == PageState::Free {
                if reach[a] {
                    return Err(Error::Integrity(format!("reachable page {a} is erased")));
                }
                continue;
            }
            *s = if live[a] {
                PageState::Live
            } else if reach[a] {
                PageState::Pending
            } else {
                PageState::Dead
            };
        }
        Ok(())
    }

    /// Erases every data subsector that holds dead pages and nothing in use.
    pub fn gc(&mut self) -> Result<GcReport> {
        self.mark()?;
        let mut report = GcReport::default();
        for first in (DATA_START..self.total_pages()).step_by(PAGES_PER_SUBSECTOR as usize) {
            let pages = first..first + PAGES_PER_SUBSECTOR;
            let dead = pages
                .clone()
                .filter(|&p| self.state[p as usize] == PageState::Dead)
                .count() as u32;
            if dead > 0 && self.reclaimable(first) {
                self.erase_subsector(first)?;
                report.pages_reclaimed += dead;
                report.subsectors_erased += 1;
            }
        }
        log::debug!("gc: {report:?}");
        Ok(report)
    }

    /// Appends a version record (the commit point), then revokes versions
    /// beyond `max_versions` and re-marks.
    pub(crate) fn append_version(&mut self, version: u32, root: PageAddr) -> Result<VersionRecord> {
        if version <= self.max_version() {
            return Err(Error::InvalidParams(format!(
                "version {version} is not newer than {}",
                self.max_version()
            )));
        }
        if self.dir.next_slot >= SLOTS_PER_SUBSECTOR {
            self.compact_directory()?;
        }
        let cursor = PageAddr::new(self.cursor).expect("checked at mount");
        let rec = VersionRecord::new(version, root, cursor);
        let slot = self.dir.next_slot;
        self.program_record(self.dir.active, slot, &rec.encode())?;
        self.dir.next_slot += 1;
        self.dir.records.push((slot, rec));
        self.pending = None;
        self.inflight.clear();

        let live: HashSet<u32> = self.versions().iter().map(|r| r.version).collect();
        let stale: Vec<(usize, VersionRecord)> = self
            .dir
            .records
            .iter()
            .filter(|(_, r)| r.is_valid() && !live.contains(&r.version))
            .copied()
            .collect();
        for (slot, r) in stale {
            self.revoke_slot(slot, r)?;
        }
        self.mark()?;
        Ok(rec)
    }

    fn program_record(&mut self, sub: u32, slot: usize, bytes: &[u8; VERSION_RECORD_SIZE]) -> Result<()> {
        let page = sub * PAGES_PER_SUBSECTOR + (slot / SLOTS_PER_PAGE) as u32;
        let off = (slot % SLOTS_PER_PAGE) * VERSION_RECORD_SIZE;
        // The device rejects 1-bits over cleared bits, so restate the rest of
        // the page as it stands.
        let mut buf = self.dev.read_page(page)?;
        for (b, new) in buf[off..off + VERSION_RECORD_SIZE].iter_mut().zip(bytes) {
            *b &= new;
        }
        self.dev.program_page(page, &buf)?;
        Ok(())
    }

    fn revoke_slot(&mut self, slot: usize, rec: VersionRecord) -> Result<()> {
        let revoked = rec.revoked();
        let mut bytes = [0xFF; VERSION_RECORD_SIZE];
        bytes[VersionRecord::flags_offset()] = revoked.flags;
        self.program_record(self.dir.active, slot, &bytes)?;
        if let Some(r) = self.dir.records.iter_mut().find(|r| r.0 == slot) {
            r.1 = revoked;
        }
        log::debug!("revoked version {}", rec.version);
        Ok(())
    }

    fn compact_directory(&mut self) -> Result<()> {
        let from = self.dir.active;
        let to = 1 - from;
        let first = to * PAGES_PER_SUBSECTOR;
        let dirty = (first..first + PAGES_PER_SUBSECTOR)
            .any(|p| self.dev.peek_page(p).map(|b| b != ERASED_PAGE.as_slice()).unwrap_or(true));
        if dirty {
            self.dev.erase(EraseScope::Subsector, first)?;
        }
        let live = self.versions();
        for (k, r) in live.iter().enumerate() {
            self.program_record(to, k, &r.encode())?;
        }
        self.dev.erase(EraseScope::Subsector, from * PAGES_PER_SUBSECTOR)?;
        self.dir = Directory {
            active: to,
            next_slot: live.len(),
            records: live.into_iter().enumerate().collect(),
        };
        log::debug!("directory compacted into subsector {to}");
        Ok(())
    }

    /// Marks everything written for the pending lineage as garbage.
    pub(crate) fn rollback(&mut self) -> Result<()> {
        self.pending = None;
        self.inflight.clear();
        self.mark()
    }

    pub fn diff(&mut self, base: &VersionRecord, next: &VersionRecord) -> Result<UpdatePackage> {
        let old = self.reachable(base.root)?;
        let new = self.reachable(next.root)?;
        let pages = new
            .difference(&old)
            .map(|&a| {
                let addr = PageAddr::new(a).expect("checked at mount");
                Ok((addr, self.read(addr)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UpdatePackage {
            base_version: base.version,
            new_version: next.version,
            pages,
            new_root: next.root,
        })
    }

    pub fn apply(&mut self, pkg: &UpdatePackage) -> Result<VersionRecord> {
        if let Some(p) = self.pending {
            return Err(Error::WriterBusy(format!("version {} is uncommitted", p.version)));
        }
        let found = self.current().map_or(0, |r| r.version);
        if found != pkg.base_version {
            return Err(Error::VersionConflict {
                expected: pkg.base_version,
                found,
            });
        }
        let total = self.total_pages();
        // Pages already holding the packaged bytes (shared with an older
        // version through dedup, say) need no program unless erased below.
        let mut differs = Vec::new();
        for (a, buf) in &pkg.pages {
            let n = a.get();
            if !(DATA_START..total).contains(&n) {
                return Err(Error::Relocation { page: n });
            }
            if self.dev.read_page(n)?[..] != buf[..] {
                differs.push(n);
            }
        }
        let mut to_erase = BTreeSet::new();
        for &a in &differs {
            match self.state[a as usize] {
                PageState::Free => {}
                PageState::Dead if self.reclaimable(a) => {
                    to_erase.insert(subsector_first(a));
                }
                _ => return Err(Error::Relocation { page: a }),
            }
        }
        for &first in &to_erase {
            self.erase_subsector(first)?;
        }
        let program: Vec<usize> = (0..pkg.pages.len())
            .filter(|&i| {
                let a = pkg.pages[i].0.get();
                differs.contains(&a) || to_erase.contains(&subsector_first(a))
            })
            .collect();
        let result = (|| {
            for &i in &program {
                let (a, buf) = &pkg.pages[i];
                self.program_at(a.get(), buf)?;
            }
            let mut seen = vec![false; self.state.len()];
            self.walk(vec![pkg.new_root.get()], &mut seen)?;
            let root = NodePage::decode(&self.read(pkg.new_root)?).map_err(Error::format(pkg.new_root.get()))?;
            if root.level != 0 {
                return Err(Error::Integrity("package root is not a level-0 node".into()));
            }
            self.append_version(pkg.new_version, pkg.new_root)
        })();
        if result.is_err() {
            self.inflight.clear();
        }
        result
    }
}

fn validate_config(c: &ConfigPage) -> Result<()> {
    if c.max_versions == 0 {
        return Err(Error::InvalidParams("max_versions must be at least 1".into()));
    }
    if c.max_depth > MAX_NODE_LEVEL {
        return Err(Error::InvalidParams(format!("max_depth {} exceeds 5", c.max_depth)));
    }
    if c.zone_max_depth > c.max_depth {
        return Err(Error::InvalidParams("zone_max_depth exceeds max_depth".into()));
    }
    if c.split_threshold == 0 {
        return Err(Error::InvalidParams("split threshold must be positive".into()));
    }
    Ok(())
}

type DirectoryScan = (Vec<(usize, VersionRecord)>, usize);

fn read_directory(dev: &FlashDevice, sub: u32) -> Result<DirectoryScan> {
    let mut records = Vec::new();
    let mut used = 0;
    for p in 0..PAGES_PER_SUBSECTOR {
        let buf = dev.read_page(sub * PAGES_PER_SUBSECTOR + p)?;
        for k in 0..SLOTS_PER_PAGE {
            let slot = p as usize * SLOTS_PER_PAGE + k;
            match VersionRecord::decode(&buf[k * VERSION_RECORD_SIZE..]) {
                Ok(None) => {}
                Ok(Some(r)) => {
                    records.push((slot, r));
                    used = slot + 1;
                }
                Err(_) => used = slot + 1,
            }
        }
    }
    Ok((records, used))
}

fn live_set(records: &[(usize, VersionRecord)], max: usize) -> BTreeSet<(u32, u32)> {
    let mut v: Vec<_> = records
        .iter()
        .filter(|r| r.1.is_valid())
        .map(|r| (r.1.version, r.1.root.get()))
        .collect();
    v.sort_by(|a, b| b.cmp(a));
    v.truncate(max);
    v.into_iter().collect()
}

/// The pages unique to a new version plus its root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdatePackage {
    pub base_version: u32,
    pub new_version: u32,
    pub pages: Vec<(PageAddr, PageBuf)>,
    pub new_root: PageAddr,
}

const PACKAGE_MAGIC: &[u8; 4] = b"FQUP";

impl UpdatePackage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pages.len() * (3 + PAGE_SIZE) + 7);
        out.extend_from_slice(PACKAGE_MAGIC);
        out.extend_from_slice(&self.base_version.to_le_bytes());
        out.extend_from_slice(&self.new_version.to_le_bytes());
        out.extend_from_slice(&(self.pages.len() as u32).to_le_bytes());
        let mut u24 = [0u8; 3];
        for (a, buf) in &self.pages {
            put_u24(&mut u24, 0, a.get());
            out.extend_from_slice(&u24);
            out.extend_from_slice(buf);
        }
        put_u24(&mut u24, 0, self.new_root.get());
        out.extend_from_slice(&u24);
        let crc = CRC32.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Integrity(format!("update package: {m}"));
        if bytes.len() < 23 || &bytes[..4] != PACKAGE_MAGIC {
            return Err(bad("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if CRC32.checksum(body) != stored {
            return Err(bad("checksum mismatch"));
        }
        let le = |at: usize| u32::from_le_bytes(body[at..at + 4].try_into().unwrap());
        let count = le(12) as usize;
        let expect = 16 + count * (3 + PAGE_SIZE) + 3;
        if body.len() != expect {
            return Err(bad("length does not match page count"));
        }
        let addr = |at: usize| PageAddr::new(get_u24(body, at)).map_err(|e| bad(&e.to_string()));
        let mut pages = Vec::with_capacity(count);
        for k in 0..count {
            let at = 16 + k * (3 + PAGE_SIZE);
            let buf: PageBuf = body[at + 3..at + 3 + PAGE_SIZE].try_into().unwrap();
            pages.push((addr(at)?, buf));
        }
        Ok(Self {
            base_version: le(4),
            new_version: le(8),
            pages,
            new_root: addr(expect - 3)?,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
