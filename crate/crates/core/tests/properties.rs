//! Randomised whole-database properties.

mod common;

use std::collections::{BTreeSet, HashMap};

use common::*;
use flashquad::flash::{DeviceOp, PAGES_PER_SUBSECTOR};
use flashquad::geometry::point_in_polygon;
use flashquad::tree::HitBasis;
use flashquad::{BuildParams, Database, Object, Op, PageCache, TreeHandle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_ops(rng: &mut ChaCha8Rng, live: &mut Vec<Object>, next_id: &mut u32, n: usize) -> Vec<Op> {
    let mut ops = Vec::new();
    for _ in 0..n {
        if !live.is_empty() && rng.gen_bool(0.3) {
            let o = live.swap_remove(rng.gen_range(0..live.len()));
            ops.push(Op::Delete(o.id()));
            continue;
        }
        *next_id += 1;
        let o = if rng.gen_bool(0.15) {
            Object::Zone { id: *next_id, polygon: random_polygon(rng, 10, 40_000) }
        } else if !live.is_empty() && rng.gen_bool(0.5) {
            // Cluster near an existing object to force splits.
            let anchor = match &live[rng.gen_range(0..live.len())] {
                Object::Gantry { at, .. } => *at,
                Object::Zone { polygon, .. } => polygon.vertices()[0],
            };
            Object::Gantry { id: *next_id, at: near(rng, anchor, 2_000) }
        } else {
            Object::Gantry { id: *next_id, at: random_point(rng) }
        };
        live.push(o.clone());
        ops.push(Op::Insert(o));
    }
    ops
}

/// Pages reachable from any live version or the uncommitted head.
fn protected(db: &mut Database) -> BTreeSet<u32> {
    let mut roots: Vec<TreeHandle> = db.versions();
    roots.extend(db.pending());
    let mut out = BTreeSet::new();
    for h in roots {
        out.extend(db.store_mut().reachable(h.root).unwrap());
    }
    out
}

fn touched(log: &[DeviceOp]) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for op in log {
        match *op {
            DeviceOp::Program { page } => {
                out.insert(page);
            }
            DeviceOp::Erase { first_page, pages } => out.extend(first_page..first_page + pages),
        }
    }
    out
}

/// Runs `f` with the op log on and checks that no protected page was
/// programmed or erased.
fn guarded<T>(db: &mut Database, f: impl FnOnce(&mut Database) -> T) -> T {
    let before = protected(db);
    db.device_mut().enable_op_log();
    let r = f(db);
    let log = db.device_mut().take_op_log();
    let hit: Vec<u32> = touched(&log).intersection(&before).copied().collect();
    assert!(hit.is_empty(), "live pages written: {hit:?}");
    r
}

fn probe(rng: &mut ChaCha8Rng, live: &[Object]) -> flashquad::Point {
    if live.is_empty() || rng.gen_bool(0.3) {
        return random_point(rng);
    }
    match &live[rng.gen_range(0..live.len())] {
        Object::Gantry { at, .. } => near(rng, *at, 500),
        Object::Zone { polygon, .. } => {
            let v = polygon.vertices()[rng.gen_range(0..polygon.vertices().len())];
            near(rng, v, 3_000)
        }
    }
}

fn check_queries(db: &Database, h: &TreeHandle, rng: &mut ChaCha8Rng, live: &[Object]) {
    let mut caches = [PageCache::disabled(), PageCache::new(3), PageCache::new(15)];
    for _ in 0..40 {
        let p = probe(rng, live);
        let r = rng.gen_range(0..5_000);
        let want_z = zones_oracle(live, p);
        let want_g = gantries_oracle(live, p, r);
        for c in caches.iter_mut() {
            let z = db.query_zones_at(h, p, c).unwrap();
            assert_eq!(z.cost.requests(), z.cost.device_reads + z.cost.cache_hits);
            assert_eq!(z.ids().into_iter().collect::<BTreeSet<_>>(), want_z, "zones at {p:?}");
            for hit in z.hits.iter().filter(|h| h.basis == HitBasis::InsideEntry) {
                let poly = live
                    .iter()
                    .find_map(|o| match o {
                        Object::Zone { id, polygon } if *id == hit.id => Some(polygon),
                        _ => None,
                    })
                    .unwrap();
                assert!(point_in_polygon(p, poly));
            }
            let g = db.query_gantries_within(h, p, r, c).unwrap();
            assert_eq!(g.cost.requests(), g.cost.device_reads + g.cost.cache_hits);
            assert_eq!(g.ids().into_iter().collect::<BTreeSet<_>>(), want_g, "gantries within {r} of {p:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn history_is_immutable_and_queries_match(seed in any::<u64>(), threshold in 1u16..10, rounds in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = BuildParams { leaf_split_threshold: threshold, ..BuildParams::default() };
        let mut db = db_with(32, params);
        let mut live = Vec::new();
        let mut next_id = 0;
        let mut snapshots: HashMap<u32, ([u8; 32], Vec<Object>)> = HashMap::new();
        for _ in 0..rounds {
            let head = db.current().unwrap();
            let n = rng.gen_range(1..40);
            let ops = random_ops(&mut rng, &mut live, &mut next_id, n);
            let u = guarded(&mut db, |db| db.apply_ops(&head, &ops).unwrap());
            let h = guarded(&mut db, |db| db.commit(&u).unwrap());
            snapshots.insert(h.version, (db.reachable_digest(&h).unwrap(), live.clone()));
            guarded(&mut db, |db| db.gc().unwrap());
            for v in db.versions() {
                if let Some((digest, objs)) = snapshots.get(&v.version) {
                    prop_assert_eq!(&db.reachable_digest(&v).unwrap(), digest);
                    check_queries(&db, &v, &mut rng, objs);
                }
            }
        }
        // An abandoned update leaves everything as it was.
        let head = db.current().unwrap();
        let before = db.reachable_digest(&head).unwrap();
        let ops = random_ops(&mut rng, &mut live.clone(), &mut next_id, 10);
        let u = guarded(&mut db, |db| db.apply_ops(&head, &ops).unwrap());
        guarded(&mut db, |db| db.rollback(&u).unwrap());
        guarded(&mut db, |db| db.gc().unwrap());
        prop_assert_eq!(db.current(), Some(head));
        prop_assert_eq!(db.reachable_digest(&head).unwrap(), before);
        prop_assert!(db.verify().unwrap().ok());
    }

    #[test]
    fn applied_packages_match_the_builder(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut builder = db(32);
        let mut live = Vec::new();
        let mut next_id = 0;
        let ops = random_ops(&mut rng, &mut live, &mut next_id, 80);
        let h = builder.current().unwrap();
        let u = builder.apply_ops(&h, &ops).unwrap();
        let v1 = builder.commit(&u).unwrap();
        let mut target = Database::mount(builder.device().clone()).unwrap();
        let ops = random_ops(&mut rng, &mut live, &mut next_id, n);
        let u = builder.apply_ops(&v1, &ops).unwrap();
        let v2 = builder.commit(&u).unwrap();
        let pkg = builder.diff(&v1, &v2).unwrap();
        let t2 = guarded(&mut target, |db| db.apply_package(&pkg).unwrap());
        prop_assert_eq!(t2, v2);
        check_queries(&target, &t2, &mut rng, &live);
        prop_assert!(target.verify().unwrap().ok());
    }

    #[test]
    fn gc_erases_whole_subsectors_and_programs_nothing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut db = db(16);
        let mut live = Vec::new();
        let mut next_id = 0;
        for _ in 0..6 {
            let head = db.current().unwrap();
            let ops = random_ops(&mut rng, &mut live, &mut next_id, 30);
            let u = db.apply_ops(&head, &ops).unwrap();
            db.commit(&u).unwrap();
        }
        db.device_mut().enable_op_log();
        db.gc().unwrap();
        for op in db.device_mut().take_op_log() {
            match op {
                DeviceOp::Erase { first_page, pages } => {
                    prop_assert_eq!(first_page % PAGES_PER_SUBSECTOR, 0);
                    prop_assert_eq!(pages, PAGES_PER_SUBSECTOR);
                }
                DeviceOp::Program { .. } => prop_assert!(false, "gc programmed a page"),
            }
        }
    }
}
