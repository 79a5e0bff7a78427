//! Simulated serial NOR flash.
//!
//! The model works at page granularity: a program ANDs new data into a page
//! (bits may only go from 1 to 0), an erase fills a page, subsector or sector
//! with ones. Every operation advances a simulated clock and the device keeps
//! per-subsector erase counters so wear can be inspected.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub const PAGE_SIZE: usize = 256;
pub const PAGES_PER_SUBSECTOR: u32 = 16;
pub const SUBSECTORS_PER_SECTOR: u32 = 16;
pub const PAGES_PER_SECTOR: u32 = PAGES_PER_SUBSECTOR * SUBSECTORS_PER_SECTOR;
pub const SUBSECTOR_SIZE: usize = PAGE_SIZE * PAGES_PER_SUBSECTOR as usize;
pub const SECTOR_SIZE: usize = SUBSECTOR_SIZE * SUBSECTORS_PER_SECTOR as usize;

pub const DEFAULT_SECTOR_COUNT: u32 = 256;
pub const DEFAULT_ERASE_LIMIT: u32 = 100_000;

const IMAGE_MAGIC: &[u8; 4] = b"FQFD";

pub type PageBuf = [u8; PAGE_SIZE];

pub const ERASED_PAGE: PageBuf = [0xFF; PAGE_SIZE];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlashError {
    #[error("page address {addr} out of range (device has {total} pages)")]
    OutOfRange { addr: u32, total: u32 },
    #[error("program of page {page} would set cleared bits at byte offset {offset}")]
    BitViolation { page: u32, offset: usize },
    #[error("subsector {subsector} reached its erase limit of {limit}")]
    WearOut { subsector: u32, limit: u32 },
    #[error("device lost power")]
    PowerLoss,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("device image I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a device image (bad magic)")]
    BadMagic,
    #[error("device image has invalid sector count {0}")]
    BadGeometry(u32),
}

/// Fixed 256 B / 4 KiB / 64 KiB hierarchy; only the sector count varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlashGeometry {
    sector_count: u32,
}

impl FlashGeometry {
    pub fn new(sector_count: u32) -> Self {
        assert!(sector_count > 0, "flash needs at least one sector");
        Self { sector_count }
    }

    pub fn sector_count(&self) -> u32 {
        self.sector_count
    }

    pub fn page_size(&self) -> usize {
        PAGE_SIZE
    }

    pub fn total_bytes(&self) -> usize {
        self.sector_count as usize * SECTOR_SIZE
    }

    pub fn total_pages(&self) -> u32 {
        self.sector_count * PAGES_PER_SECTOR
    }

    pub fn total_subsectors(&self) -> u32 {
        self.sector_count * SUBSECTORS_PER_SECTOR
    }

    pub fn subsector_of(&self, page: u32) -> u32 {
        page / PAGES_PER_SUBSECTOR
    }
}

impl Default for FlashGeometry {
    fn default() -> Self {
        Self::new(DEFAULT_SECTOR_COUNT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlashTimings {
    pub read_us: u64,
    pub program_us: u64,
    pub erase_us: u64,
}

impl Default for FlashTimings {
    fn default() -> Self {
        Self {
            read_us: 50,
            program_us: 1_000,
            erase_us: 500_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EraseScope {
    Page,
    Subsector,
    Sector,
}

/// Snapshot returned by [`FlashDevice::stats`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceStats {
    pub reads: u64,
    pub programs: u64,
    pub erases: u64,
    pub sim_clock_us: u64,
    pub erase_counts: Vec<u32>,
}

/// A mutating operation as seen by the op log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceOp {
    Program { page: u32 },
    Erase { first_page: u32, pages: u32 },
}

/// Power-cut injection: the `after_ops`-th mutating operation from arming
/// (0 = the very next one) is torn at `byte_offset`, then the device is dead
/// until [`FlashDevice::power_cycle`].
///
/// A torn program writes only the first `byte_offset` bytes; a torn erase
/// erases only the first `byte_offset / 256` pages of its scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerCut {
    pub after_ops: u64,
    pub byte_offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Power {
    On,
    Armed(PowerCut),
    Off,
}

pub struct FlashDevice {
    geometry: FlashGeometry,
    timings: FlashTimings,
    erase_limit: u32,
    data: Vec<u8>,
    erase_counts: Vec<u32>,
    reads: AtomicU64,
    programs: u64,
    erases: u64,
    clock_us: AtomicU64,
    power: Power,
    op_log: Option<Vec<DeviceOp>>,
}

impl FlashDevice {
    pub fn new(geometry: FlashGeometry) -> Self {
        Self::with_timings(geometry, FlashTimings::default())
    }

    pub fn with_timings(geometry: FlashGeometry, timings: FlashTimings) -> Self {
        assert!(
            timings.read_us > 0 && timings.program_us > 0 && timings.erase_us > 0,
            "flash timings must be strictly positive"
        );
        Self {
            geometry,
            timings,
            erase_limit: DEFAULT_ERASE_LIMIT,
            data: vec![0xFF; geometry.total_bytes()],
            erase_counts: vec![0; geometry.total_subsectors() as usize],
            reads: AtomicU64::new(0),
            programs: 0,
            erases: 0,
            clock_us: AtomicU64::new(0),
            power: Power::On,
            op_log: None,
        }
    }

    pub fn geometry(&self) -> FlashGeometry {
        self.geometry
    }

    pub fn timings(&self) -> FlashTimings {
        self.timings
    }

    pub fn erase_limit(&self) -> u32 {
        self.erase_limit
    }

    pub fn set_erase_limit(&mut self, limit: u32) {
        self.erase_limit = limit;
    }

    fn check_addr(&self, addr: u32) -> Result<(), FlashError> {
        let total = self.geometry.total_pages();
        if addr >= total {
            return Err(FlashError::OutOfRange { addr, total });
        }
        Ok(())
    }

    fn page_range(addr: u32) -> std::ops::Range<usize> {
        let start = addr as usize * PAGE_SIZE;
        start..start + PAGE_SIZE
    }

    fn check_power(&self) -> Result<(), FlashError> {
        match self.power {
            Power::Off => Err(FlashError::PowerLoss),
            _ => Ok(()),
        }
    }

    /// Returns the byte offset to tear the current mutating op at, if the
    /// armed cut fires on it.
    fn take_power_cut(&mut self) -> Option<usize> {
        match &mut self.power {
            Power::Armed(cut) if cut.after_ops == 0 => {
                let offset = cut.byte_offset;
                self.power = Power::Off;
                Some(offset)
            }
            Power::Armed(cut) => {
                cut.after_ops -= 1;
                None
            }
            _ => None,
        }
    }

    pub fn read_page(&self, addr: u32) -> Result<PageBuf, FlashError> {
        self.check_power()?;
        self.check_addr(addr)?;
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.clock_us
            .fetch_add(self.timings.read_us, Ordering::Relaxed);
        let mut out = [0u8; PAGE_SIZE];
        out.copy_from_slice(&self.data[Self::page_range(addr)]);
        Ok(out)
    }

    /// Host-side inspection without touching counters or the clock.
    pub fn peek_page(&self, addr: u32) -> Result<&[u8], FlashError> {
        self.check_addr(addr)?;
        Ok(&self.data[Self::page_range(addr)])
    }

    pub fn program_page(&mut self, addr: u32, data: &PageBuf) -> Result<(), FlashError> {
        self.check_power()?;
        self.check_addr(addr)?;
        let range = Self::page_range(addr);
        let current = &self.data[range.clone()];
        if let Some(offset) = current
            .iter()
            .zip(data.iter())
            .position(|(old, new)| new & !old != 0)
        {
            return Err(FlashError::BitViolation { page: addr, offset });
        }
        let cut = self.take_power_cut();
        let len = cut.map_or(PAGE_SIZE, |offset| offset.min(PAGE_SIZE));
        for (old, new) in self.data[range].iter_mut().zip(data.iter()).take(len) {
            *old &= new;
        }
        self.programs += 1;
        self.clock_us
            .fetch_add(self.timings.program_us, Ordering::Relaxed);
        if let Some(log) = &mut self.op_log {
            log.push(DeviceOp::Program { page: addr });
        }
        match cut {
            Some(_) => Err(FlashError::PowerLoss),
            None => Ok(()),
        }
    }

    pub fn erase(&mut self, scope: EraseScope, addr: u32) -> Result<(), FlashError> {
        self.check_power()?;
        self.check_addr(addr)?;
        let (first, count) = match scope {
            EraseScope::Page => (addr, 1),
            EraseScope::Subsector => {
                let first = addr - addr % PAGES_PER_SUBSECTOR;
                (first, PAGES_PER_SUBSECTOR)
            }
            EraseScope::Sector => {
                let first = addr - addr % PAGES_PER_SECTOR;
                (first, PAGES_PER_SECTOR)
            }
        };
        let first_sub = first / PAGES_PER_SUBSECTOR;
        let last_sub = (first + count - 1) / PAGES_PER_SUBSECTOR;
        for sub in first_sub..=last_sub {
            if self.erase_counts[sub as usize] >= self.erase_limit {
                return Err(FlashError::WearOut {
                    subsector: sub,
                    limit: self.erase_limit,
                });
            }
        }
        let cut = self.take_power_cut();
        let pages = cut.map_or(count, |offset| ((offset / PAGE_SIZE) as u32).min(count));
        let start = first as usize * PAGE_SIZE;
        self.data[start..start + pages as usize * PAGE_SIZE].fill(0xFF);
        for sub in first_sub..=last_sub {
            self.erase_counts[sub as usize] += 1;
        }
        self.erases += 1;
        self.clock_us
            .fetch_add(self.timings.erase_us, Ordering::Relaxed);
        if let Some(log) = &mut self.op_log {
            log.push(DeviceOp::Erase {
                first_page: first,
                pages: count,
            });
        }
        match cut {
            Some(_) => Err(FlashError::PowerLoss),
            None => Ok(()),
        }
    }

    pub fn stats(&self) -> DeviceStats {
        DeviceStats {
            reads: self.reads.load(Ordering::Relaxed),
            programs: self.programs,
            erases: self.erases,
            sim_clock_us: self.clock_us.load(Ordering::Relaxed),
            erase_counts: self.erase_counts.clone(),
        }
    }

    pub fn sim_clock_us(&self) -> u64 {
        self.clock_us.load(Ordering::Relaxed)
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn programs(&self) -> u64 {
        self.programs
    }

    /// Programs plus erases since creation; changes whenever content may have.
    pub fn mutations(&self) -> u64 {
        self.programs + self.erases
    }

    pub fn erase_count(&self, subsector: u32) -> u32 {
        self.erase_counts[subsector as usize]
    }

    pub fn arm_power_cut(&mut self, cut: PowerCut) {
        self.power = Power::Armed(cut);
    }

    pub fn disarm_power_cut(&mut self) {
        if let Power::Armed(_) = self.power {
            self.power = Power::On;
        }
    }

    pub fn is_powered(&self) -> bool {
        self.power != Power::Off
    }

    /// Restores power after a cut. Page contents stay exactly as the cut left them.
    pub fn power_cycle(&mut self) {
        self.power = Power::On;
    }

    pub fn enable_op_log(&mut self) {
        self.op_log = Some(Vec::new());
    }

    pub fn take_op_log(&mut self) -> Vec<DeviceOp> {
        self.op_log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Writes the image: `FQFD`, u32 sector count, raw pages, u32 erase
    /// counter per subsector (all little-endian).
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), ImageError> {
        w.write_all(IMAGE_MAGIC)?;
        w.write_all(&self.geometry.sector_count.to_le_bytes())?;
        w.write_all(&self.data)?;
        for count in &self.erase_counts {
            w.write_all(&count.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, ImageError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != IMAGE_MAGIC {
            return Err(ImageError::BadMagic);
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let sectors = u32::from_le_bytes(word);
        // 22-bit page addresses cap the device at 1 GiB.
        if sectors == 0 || sectors > (1 << 22) / PAGES_PER_SECTOR {
            return Err(ImageError::BadGeometry(sectors));
        }
        let mut device = Self::new(FlashGeometry::new(sectors));
        r.read_exact(&mut device.data)?;
        for count in device.erase_counts.iter_mut() {
            r.read_exact(&mut word)?;
            *count = u32::from_le_bytes(word);
        }
        Ok(device)
    }
}

impl Clone for FlashDevice {
    fn clone(&self) -> Self {
        Self {
            geometry: self.geometry,
            timings: self.timings,
            erase_limit: self.erase_limit,
            data: self.data.clone(),
            erase_counts: self.erase_counts.clone(),
            reads: AtomicU64::new(self.reads()),
            programs: self.programs,
            erases: self.erases,
            clock_us: AtomicU64::new(self.sim_clock_us()),
            power: self.power,
            op_log: self.op_log.clone(),
        }
    }
}

impl std::fmt::Debug for FlashDevice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlashDevice")
            .field("geometry", &self.geometry)
            .field("timings", &self.timings)
            .field("power", &self.power)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> FlashDevice {
        FlashDevice::new(FlashGeometry::new(1))
    }

    #[test]
    fn geometry_constants() {
        let g = FlashGeometry::default();
        assert_eq!(g.page_size(), 256);
        assert_eq!(SUBSECTOR_SIZE, 4096);
        assert_eq!(SECTOR_SIZE, 65536);
        assert_eq!(g.total_bytes(), 16 * 1024 * 1024);
        assert_eq!(g.total_pages() as usize, g.total_bytes() / 256);
    }

    #[test]
    fn fresh_page_reads_erased() {
        let dev = small();
        assert_eq!(dev.read_page(3).unwrap(), ERASED_PAGE);
    }

    #[test]
    fn program_zero_then_read() {
        let mut dev = small();
        dev.program_page(3, &[0u8; PAGE_SIZE]).unwrap();
        assert_eq!(dev.read_page(3).unwrap(), [0u8; PAGE_SIZE]);
    }

    #[test]
    fn two_reads_cost_100us() {
        let dev = small();
        dev.read_page(0).unwrap();
        dev.read_page(1).unwrap();
        assert_eq!(dev.sim_clock_us(), 100);
    }

    #[test]
    fn program_is_bitwise_and() {
        let mut dev = small();
        dev.program_page(0, &[0x0F; PAGE_SIZE]).unwrap();
        assert_eq!(dev.read_page(0).unwrap(), [0x0F; PAGE_SIZE]);

        let err = dev.program_page(0, &[0xFF; PAGE_SIZE]).unwrap_err();
        assert_eq!(err, FlashError::BitViolation { page: 0, offset: 0 });

        let mut a = ERASED_PAGE;
        a[10] = 0xF0;
        dev.program_page(1, &a).unwrap();
        let mut b = a;
        b[10] = 0xF0 & 0x0F;
        // Only the byte at offset 10 changes; the rest stays as programmed.
        dev.program_page(1, &b).unwrap();
        let page = dev.read_page(1).unwrap();
        assert_eq!(page[10], 0x00);
        assert_eq!(page[11], 0xFF);
    }

    #[test]
    fn and_with_overlapping_nibbles() {
        // 0xF0 then 0x0F at the same offset is a 0->1 attempt on the low nibble.
        let mut dev = small();
        let mut a = ERASED_PAGE;
        a[7] = 0xF0;
        dev.program_page(2, &a).unwrap();
        let mut b = ERASED_PAGE;
        b[7] = 0x0F;
        assert_eq!(
            dev.program_page(2, &b),
            Err(FlashError::BitViolation { page: 2, offset: 7 })
        );
        let mut c = ERASED_PAGE;
        c[7] = 0xF0 & 0x0F;
        dev.program_page(2, &c).unwrap();
        assert_eq!(dev.read_page(2).unwrap()[7], 0x00);
    }

    #[test]
    fn erase_subsector_restores_all_pages() {
        let mut dev = small();
        for p in 16..32 {
            dev.program_page(p, &[0x55; PAGE_SIZE]).unwrap();
        }
        dev.erase(EraseScope::Subsector, 20).unwrap();
        for p in 16..32 {
            assert_eq!(dev.read_page(p).unwrap(), ERASED_PAGE);
        }
        assert_eq!(dev.erase_count(1), 1);
        assert_eq!(dev.erase_count(0), 0);
    }

    #[test]
    fn erase_page_counts_against_subsector() {
        let mut dev = small();
        dev.program_page(5, &[0; PAGE_SIZE]).unwrap();
        dev.program_page(6, &[0; PAGE_SIZE]).unwrap();
        dev.erase(EraseScope::Page, 5).unwrap();
        assert_eq!(dev.read_page(5).unwrap(), ERASED_PAGE);
        assert_eq!(dev.read_page(6).unwrap(), [0; PAGE_SIZE]);
        assert_eq!(dev.erase_count(0), 1);
    }

    #[test]
    fn erase_sector_touches_sixteen_subsectors() {
        let mut dev = FlashDevice::new(FlashGeometry::new(2));
        dev.erase(EraseScope::Sector, 300).unwrap();
        let stats = dev.stats();
        assert_eq!(stats.erases, 1);
        assert!(stats.erase_counts[..16].iter().all(|&c| c == 0));
        assert!(stats.erase_counts[16..].iter().all(|&c| c == 1));
    }

    #[test]
    fn erase_costs_500ms() {
        let mut dev = small();
        dev.erase(EraseScope::Subsector, 0).unwrap();
        assert_eq!(dev.sim_clock_us(), 500_000);
    }

    #[test]
    fn out_of_range() {
        let mut dev = small();
        let total = dev.geometry().total_pages();
        assert!(matches!(
            dev.read_page(total),
            Err(FlashError::OutOfRange { .. })
        ));
        assert!(matches!(
            dev.program_page(total, &ERASED_PAGE),
            Err(FlashError::OutOfRange { .. })
        ));
        assert!(matches!(
            dev.erase(EraseScope::Page, total + 7),
            Err(FlashError::OutOfRange { .. })
        ));
    }

    #[test]
    fn wear_out_after_limit() {
        let mut dev = small();
        for _ in 0..100_000 {
            dev.erase(EraseScope::Subsector, 0).unwrap();
        }
        assert_eq!(
            dev.erase(EraseScope::Subsector, 0),
            Err(FlashError::WearOut {
                subsector: 0,
                limit: 100_000
            })
        );
        assert_eq!(dev.erase_count(0), 100_000);
    }

    #[test]
    fn stats_snapshot() {
        let dev = small();
        let s = dev.stats();
        assert_eq!((s.reads, s.programs, s.erases, s.sim_clock_us), (0, 0, 0, 0));
        assert!(s.erase_counts.iter().all(|&c| c == 0));
        for p in 0..3 {
            dev.read_page(p).unwrap();
        }
        let s = dev.stats();
        assert_eq!((s.reads, s.sim_clock_us), (3, 150));
        let mut dev = small();
        dev.program_page(0, &[0; PAGE_SIZE]).unwrap();
        dev.erase(EraseScope::Page, 0).unwrap();
        assert_eq!(dev.stats().sim_clock_us, 501_000);
    }

    #[test]
    fn power_cut_tears_program() {
        let mut dev = small();
        dev.arm_power_cut(PowerCut {
            after_ops: 1,
            byte_offset: 10,
        });
        dev.program_page(0, &[0; PAGE_SIZE]).unwrap();
        assert_eq!(
            dev.program_page(1, &[0; PAGE_SIZE]),
            Err(FlashError::PowerLoss)
        );
        assert_eq!(dev.read_page(1), Err(FlashError::PowerLoss));
        dev.power_cycle();
        let page = dev.read_page(1).unwrap();
        assert!(page[..10].iter().all(|&b| b == 0));
        assert!(page[10..].iter().all(|&b| b == 0xFF));
    }

    #[test]
    fn power_cut_tears_erase() {
        let mut dev = small();
        for p in 0..16 {
            dev.program_page(p, &[0; PAGE_SIZE]).unwrap();
        }
        dev.arm_power_cut(PowerCut {
            after_ops: 0,
            byte_offset: 3 * PAGE_SIZE + 17,
        });
        assert_eq!(
            dev.erase(EraseScope::Subsector, 0),
            Err(FlashError::PowerLoss)
        );
        dev.power_cycle();
        for p in 0..16 {
            let erased = dev.read_page(p).unwrap() == ERASED_PAGE;
            assert_eq!(erased, p < 3, "page {p}");
        }
    }

    #[test]
    fn image_round_trip() {
        let mut dev = FlashDevice::new(FlashGeometry::new(2));
        dev.program_page(17, &[0xA5; PAGE_SIZE]).unwrap();
        dev.erase(EraseScope::Subsector, 40).unwrap();
        let mut bytes = Vec::new();
        dev.save(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"FQFD");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 8 + 2 * SECTOR_SIZE + 32 * 4);
        let back = FlashDevice::load(&bytes[..]).unwrap();
        assert_eq!(back.peek_page(17).unwrap(), &[0xA5; PAGE_SIZE][..]);
        assert_eq!(back.erase_count(2), 1);
        assert!(matches!(
            FlashDevice::load(&b"NOPE\0\0\0\0"[..]),
            Err(ImageError::BadMagic)
        ));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Read(u32),
        Program(u32, u8, u8),
        Erase(u8, u32),
    }

    fn op() -> impl Strategy<Value = Op> {
        let pages = 16 * 16u32;
        prop_oneof![
            (0..pages).prop_map(Op::Read),
            (0..pages, any::<u8>(), any::<u8>()).prop_map(|(p, a, b)| Op::Program(p, a, b)),
            (0u8..3, 0..pages).prop_map(|(s, p)| Op::Erase(s, p)),
        ]
    }

    fn run(ops: &[Op]) -> FlashDevice {
        let mut dev = small();
        for op in ops {
            match *op {
                Op::Read(p) => {
                    dev.read_page(p).unwrap();
                }
                Op::Program(p, pattern, mask) => {
                    let current = dev.peek_page(p).unwrap().to_vec();
                    let mut data = [0u8; PAGE_SIZE];
                    for (i, d) in data.iter_mut().enumerate() {
                        *d = pattern.rotate_left(i as u32 % 8) | mask;
                    }
                    let legal = current.iter().zip(&data).all(|(o, n)| n & !o == 0);
                    let res = dev.program_page(p, &data);
                    assert_eq!(res.is_ok(), legal);
                }
                Op::Erase(scope, p) => {
                    let scope = [EraseScope::Page, EraseScope::Subsector, EraseScope::Sector]
                        [scope as usize];
                    dev.erase(scope, p).unwrap();
                }
            }
        }
        dev
    }

    proptest! {
        #[test]
        fn bits_only_fall_between_erases(ops in proptest::collection::vec(op(), 1..200)) {
            let mut dev = small();
            let mut shadow = vec![0xFFu8; dev.geometry().total_bytes()];
            for op in &ops {
                match *op {
                    Op::Erase(scope, p) => {
                        let scope = [EraseScope::Page, EraseScope::Subsector, EraseScope::Sector][scope as usize];
                        dev.erase(scope, p).unwrap();
                        let (first, n) = match scope {
                            EraseScope::Page => (p, 1),
                            EraseScope::Subsector => (p - p % 16, 16),
                            EraseScope::Sector => (p - p % 256, 256),
                        };
                        shadow[first as usize * PAGE_SIZE..(first + n) as usize * PAGE_SIZE].fill(0xFF);
                    }
                    Op::Program(p, pattern, mask) => {
                        let mut data = [0u8; PAGE_SIZE];
                        for (i, d) in data.iter_mut().enumerate() {
                            *d = pattern.rotate_left(i as u32 % 8) | mask;
                        }
                        let _ = dev.program_page(p, &data);
                        for a in 0..dev.geometry().total_pages() {
                            let now = dev.peek_page(a).unwrap();
                            let old = &shadow[a as usize * PAGE_SIZE..(a as usize + 1) * PAGE_SIZE];
                            prop_assert!(now.iter().zip(old).all(|(n, o)| n & !o == 0));
                        }
                        shadow.copy_from_slice(&dev.data);
                    }
                    Op::Read(p) => { dev.read_page(p).unwrap(); }
                }
            }
            let s = dev.stats();
            prop_assert_eq!(s.sim_clock_us, s.reads * 50 + s.programs * 1000 + s.erases * 500_000);
        }

        #[test]
        fn deterministic(ops in proptest::collection::vec(op(), 1..100)) {
            let a = run(&ops);
            let b = run(&ops);
            prop_assert_eq!(&a.data, &b.data);
            prop_assert_eq!(a.stats(), b.stats());
        }
    }
}
