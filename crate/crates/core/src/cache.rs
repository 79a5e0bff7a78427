//! LRU page cache sitting between queries and the flash device.

use std::num::NonZeroUsize;

use lru::LruCache;

use crate::codec::PageAddr;
use crate::flash::{FlashDevice, FlashError, PageBuf};

pub const DEFAULT_CACHE_PAGES: usize = 15;

/// Capacity 0 disables caching: every request is a device read.
///
/// Any program or erase on the device since the last request drops every
/// cached page, so a hit never returns stale content.
pub struct PageCache {
    lru: Option<LruCache<u32, PageBuf>>,
    hits: u64,
    misses: u64,
    seen_mutations: Option<u64>,
}

impl PageCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            lru: NonZeroUsize::new(capacity).map(LruCache::new),
            hits: 0,
            misses: 0,
            seen_mutations: None,
        }
    }

    pub fn disabled() -> Self {
        Self::new(0)
    }

    pub fn capacity(&self) -> usize {
        self.lru.as_ref().map_or(0, |l| l.cap().get())
    }

    pub fn len(&self) -> usize {
        self.lru.as_ref().map_or(0, |l| l.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn invalidate(&mut self) {
        if let Some(l) = &mut self.lru {
            l.clear();
        }
    }

    pub fn reset_counters(&mut self) {
        self.hits = 0;
        self.misses = 0;
    }

    /// Returns the page and whether it was served from the cache.
    pub fn get(&mut self, dev: &FlashDevice, addr: PageAddr) -> Result<(PageBuf, bool), FlashError> {
        let m = dev.mutations();
        if self.seen_mutations != Some(m) {
            self.invalidate();
            self.seen_mutations = Some(m);
        }
        if let Some(l) = &mut self.lru {
            if let Some(buf) = l.get(&addr.get()) {
                self.hits += 1;
                return Ok((*buf, true));
            }
        }
        let buf = dev.read_page(addr.get())?;
        self.misses += 1;
        if let Some(l) = &mut self.lru {
            l.put(addr.get(), buf);
        }
        Ok((buf, false))
    }
}

impl Default for PageCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_PAGES)
    }
}
