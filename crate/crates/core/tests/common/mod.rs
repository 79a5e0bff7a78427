#![allow(dead_code)]

use std::collections::BTreeSet;

use flashquad::flash::{FlashDevice, FlashGeometry};
use flashquad::geometry::{dist2, Point, Polygon};
use flashquad::{BuildParams, Database, DbOptions, Object};
use rand::Rng;

pub const WORLD: i32 = 2_000_000;

pub fn device(sectors: u32) -> FlashDevice {
    FlashDevice::new(FlashGeometry::new(sectors))
}

pub fn db_with(sectors: u32, params: BuildParams) -> Database {
    let opts = DbOptions {
        params,
        ..DbOptions::default()
    };
    let mut db = Database::format(device(sectors), opts).unwrap();
    db.create_empty().unwrap();
    db
}

pub fn db(sectors: u32) -> Database {
    db_with(sectors, BuildParams::default())
}

pub fn random_point(rng: &mut impl Rng) -> Point {
    Point::new(rng.gen_range(0..WORLD), rng.gen_range(0..WORLD))
}

/// Point near `c` clamped into the world.
pub fn near(rng: &mut impl Rng, c: Point, spread: i32) -> Point {
    let x = (c.x + rng.gen_range(-spread..=spread)).clamp(0, WORLD - 1);
    let y = (c.y + rng.gen_range(-spread..=spread)).clamp(0, WORLD - 1);
    Point::new(x, y)
}

/// Star-shaped polygon around a random centre; strictly increasing angles
/// keep it simple.
pub fn random_polygon(rng: &mut impl Rng, max_vertices: usize, max_radius: i32) -> Polygon {
    loop {
        let n = rng.gen_range(3..=max_vertices);
        let c = random_point(rng);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let vs: Vec<Point> = angles
            .iter()
            .map(|a| {
                let r = rng.gen_range(max_radius / 10..=max_radius) as f64;
                let x = (c.x as f64 + r * a.cos()).round().clamp(0.0, (WORLD - 1) as f64);
                let y = (c.y as f64 + r * a.sin()).round().clamp(0.0, (WORLD - 1) as f64);
                Point::new(x as i32, y as i32)
            })
            .collect();
        if let Ok(p) = Polygon::new(vs) {
            return p;
        }
    }
}

pub fn zones_oracle(objects: &[Object], p: Point) -> BTreeSet<u32> {
    objects
        .iter()
        .filter_map(|o| match o {
            Object::Zone { id, polygon } if polygon.contains(p) => Some(*id),
            _ => None,
        })
        .collect()
}

pub fn gantries_oracle(objects: &[Object], c: Point, r: u32) -> BTreeSet<u32> {
    let r2 = r as u64 * r as u64;
    objects
        .iter()
        .filter_map(|o| match o {
            Object::Gantry { id, at } if dist2(*at, c) <= r2 => Some(*id),
            _ => None,
        })
        .collect()
}

/// List pages read along the descent path of `p`, cover list included.
pub fn chain_len_at(dev: &FlashDevice, root: flashquad::codec::PageAddr, p: Point) -> usize {
    use flashquad::codec::{CellEntry, LeafListPage, NodePage};
    use flashquad::geometry::Cell;
    let page = |a: u32| -> [u8; 256] { dev.peek_page(a).unwrap().try_into().unwrap() };
    let count = |l: flashquad::codec::PageAddr| {
        let mut n = 0;
        let mut next = Some(l);
        while let Some(x) = next {
            n += 1;
            next = LeafListPage::decode(&page(x.get())).unwrap().next;
        }
        n
    };
    let mut total = 0;
    let mut node = NodePage::decode(&page(root.get())).unwrap();
    if let CellEntry::LeafList(l) = node.cover {
        total += count(l);
    }
    let mut cell = Cell::world();
    loop {
        let s = cell.slot_of(p).unwrap();
        match node.entries[s] {
            CellEntry::Empty => return total,
            CellEntry::LeafList(l) => return total + count(l),
            CellEntry::Child(c) => {
                cell = cell.subcell_at(s).unwrap();
                node = NodePage::decode(&page(c.get())).unwrap();
            }
        }
    }
}
