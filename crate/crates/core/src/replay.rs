//! Building a database from a dataset and replaying drive traces through
//! the page cache.

use std::io::Write;
use std::path::Path;

use crate::cache::PageCache;
use crate::error::Result;
use crate::flash::FlashDevice;
use crate::tree::{Database, DbOptions, Object, StatsReport, TreeHandle};
use crate::dataset::TracePoint;

pub const DEFAULT_RADIUS: u32 = 500;

/// Formats `dev`, inserts `objects` in order into one version and commits it.
pub fn build_database(
    dev: FlashDevice,
    options: DbOptions,
    objects: Vec<Object>,
) -> Result<(Database, TreeHandle, StatsReport)> {
    let mut db = Database::format(dev, options)?;
    db.create_empty()?;
    let h = db.build(objects)?;
    let stats = db.stats(&h)?;
    Ok((db, h, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStep {
    pub t: f64,
    /// Device reads; cache hits are not included.
    pub pages_read: u32,
    pub cache_hits: u32,
    pub gantry_ids: Vec<u32>,
    pub zone_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub steps: Vec<ReplayStep>,
    pub total_pages_read: u64,
    pub total_cache_hits: u64,
    pub sim_clock_us: u64,
}

/// Queries gantries within `radius` and zones at each trace point, in that
/// order, through an LRU cache of `cache_pages` that starts empty.
/// Trace points outside the world report no zones.
pub fn replay(
    db: &Database,
    h: &TreeHandle,
    trace: &[TracePoint],
    radius: u32,
    cache_pages: usize,
) -> Result<ReplayReport> {
    let mut cache = PageCache::new(cache_pages);
    cache.invalidate();
    let clock0 = db.device().sim_clock_us();
    let mut report = ReplayReport::default();
    for tp in trace {
        let g = db.query_gantries_within(h, tp.at, radius, &mut cache)?;
        let mut cost = g.cost;
        let zone_ids = if tp.at.in_world() {
            let z = db.query_zones_at(h, tp.at, &mut cache)?;
            cost.add(&z.cost);
            z.ids()
        } else {
            Vec::new()
        };
        report.total_pages_read += cost.device_reads as u64;
        report.total_cache_hits += cost.cache_hits as u64;
        report.steps.push(ReplayStep {
            t: tp.t,
            pages_read: cost.device_reads,
            cache_hits: cost.cache_hits,
            gantry_ids: g.ids(),
            zone_ids,
        });
    }
    report.sim_clock_us = db.device().sim_clock_us() - clock0;
    Ok(report)
}

fn join(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

/// CSV with header `t,pages_read,cache_hits,n_gantries,gantry_ids,zone_ids`;
/// id lists are ascending and `;`-separated.
pub fn write_report<W: Write>(report: &ReplayReport, mut w: W) -> Result<()> {
    writeln!(w, "t,pages_read,cache_hits,n_gantries,gantry_ids,zone_ids")?;
    for s in &report.steps {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.t,
            s.pages_read,
            s.cache_hits,
            s.gantry_ids.len(),
            join(&s.gantry_ids),
            join(&s.zone_ids)
        )?;
    }
    Ok(())
}

pub fn emit_report(report: &ReplayReport, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_report(report, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flash::FlashGeometry;
    use crate::geometry::Point;

    fn small() -> (Database, TreeHandle) {
        let objs = vec![
            Object::Gantry { id: 2, at: Point::new(1000, 1000) },
            Object::Gantry { id: 1, at: Point::new(1100, 1000) },
        ];
        let (db, h, stats) =
            build_database(FlashDevice::new(FlashGeometry::new(16)), DbOptions::default(), objs).unwrap();
        assert_eq!(stats.objects, 2);
        (db, h)
    }

    fn csv(r: &ReplayReport) -> String {
        let mut v = Vec::new();
        write_report(r, &mut v).unwrap();
        String::from_utf8(v).unwrap()
    }

    #[test]
    fn empty_and_single_step_reports() {
        let (db, h) = small();
        let r = replay(&db, &h, &[], 500, 15).unwrap();
        assert_eq!(csv(&r), "t,pages_read,cache_hits,n_gantries,gantry_ids,zone_ids\n");
        let tp = [TracePoint { t: 0.5, at: Point::new(1050, 1000) }];
        let r = replay(&db, &h, &tp, 500, 15).unwrap();
        let text = csv(&r);
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with(",2,1;2,\n"), "{text}");
        assert_eq!(csv(&replay(&db, &h, &tp, 500, 15).unwrap()), text);
    }

    #[test]
    fn repeated_position_hits_the_cache() {
        let (db, h) = small();
        let p = TracePoint { t: 0.0, at: Point::new(1000, 1000) };
        let q = TracePoint { t: 1.0, ..p };
        let r = replay(&db, &h, &[p, q], 500, 15).unwrap();
        assert!(r.steps[0].pages_read > 0);
        assert_eq!(r.steps[1].pages_read, 0);
        assert_eq!(r.total_pages_read, r.steps.iter().map(|s| s.pages_read as u64).sum::<u64>());
        assert_eq!(r.sim_clock_us, r.total_pages_read * 50);
    }

    #[test]
    fn outside_points_report_no_zones() {
        let (db, h) = small();
        let tp = [TracePoint { t: 0.0, at: Point::new(-50, 1000) }];
        let r = replay(&db, &h, &tp, 500, 15).unwrap();
        assert!(r.steps[0].zone_ids.is_empty());
    }
}
