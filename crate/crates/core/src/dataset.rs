//! Text dataset and drive-trace formats, plus a seeded synthetic generator
//! standing in for real map data.
//!
//! Dataset lines: `G <id> <x> <y>` or `Z <id> <x1> <y1> ... <xn> <yn>`;
//! `#` starts a comment. Trace lines: `<t_seconds> <x> <y>` with strictly
//! increasing `t`. Coordinates are integer metres.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{GeometryError, Point, Polygon, WORLD_SIZE};
use crate::tree::Object;

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what}: cannot parse {tok:?}"),
    })
}

pub fn parse_dataset(text: &str) -> Result<Vec<Object>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        let Some((&tag, rest)) = toks.split_first() else {
            continue;
        };
        let kind = match tag {
            "G" | "g" => 'G',
            "Z" | "z" => 'Z',
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown record type {other:?}"),
                })
            }
        };
        let Some((id_tok, coords)) = rest.split_first() else {
            return Err(Error::Parse {
                line,
                message: "missing id".into(),
            });
        };
        let id: u32 = parse_num(id_tok, line, "id")?;
        let nums = coords
            .iter()
            .map(|t| parse_num::<i32>(t, line, "coordinate"))
            .collect::<Result<Vec<_>>>()?;
        let record_err = |reason: GeometryError| Error::Record { line, kind, id, reason };
        let obj = if kind == 'G' {
            if nums.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("gantry needs 2 coordinates, got {}", nums.len()),
                });
            }
            let at = Point::new(nums[0], nums[1]);
            at.check_in_world().map_err(record_err)?;
            Object::Gantry { id, at }
        } else {
            if nums.len() % 2 != 0 || nums.len() < 6 {
                return Err(Error::Parse {
                    line,
                    message: format!("zone needs at least 3 coordinate pairs, got {} numbers", nums.len()),
                });
            }
            let vs: Vec<Point> = nums.chunks(2).map(|c| Point::new(c[0], c[1])).collect();
            for v in &vs {
                v.check_in_world().map_err(record_err)?;
            }
            Object::Zone {
                id,
                polygon: Polygon::new(vs).map_err(record_err)?,
            }
        };
        if !ids.insert(id) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate object id {id}"),
            });
        }
        out.push(obj);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Object>> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn format_dataset(objects: &[Object]) -> String {
    let mut s = String::new();
    for o in objects {
        match o {
            Object::Gantry { id, at } => {
                let _ = writeln!(s, "G {id} {} {}", at.x, at.y);
            }
            Object::Zone { id, polygon } => {
                let _ = write!(s, "Z {id}");
                for v in polygon.vertices() {
                    let _ = write!(s, " {} {}", v.x, v.y);
                }
                s.push('\n');
            }
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub at: Point,
}

pub fn parse_trace(text: &str) -> Result<Vec<TracePoint>> {
    let mut out: Vec<TracePoint> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected `<t> <x> <y>`, got {} fields", toks.len()),
            });
        }
        let t: f64 = parse_num(toks[0], line, "time")?;
        if !t.is_finite() {
            return Err(Error::Parse {
                line,
                message: "time is not finite".into(),
            });
        }
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(Error::Parse {
                    line,
                    message: format!("time {t} does not increase (previous {})", prev.t),
                });
            }
        }
        let at = Point::new(parse_num(toks[1], line, "x")?, parse_num(toks[2], line, "y")?);
        out.push(TracePoint { t, at });
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<Vec<TracePoint>> {
    parse_trace(&std::fs::read_to_string(path)?)
}

pub fn format_trace(trace: &[TracePoint]) -> String {
    let mut s = String::new();
    for p in trace {
        let _ = writeln!(s, "{} {} {}", p.t, p.at.x, p.at.y);
    }
    s
}

/// Generator knobs. Defaults give a country-scale set: gantries strung
/// along road polylines around a handful of towns, large regional zones and
/// small overlapping town zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticParams {
    pub seed: u64,
    pub gantries: u32,
    pub zones: u32,
    pub towns: u32,
    pub roads: u32,
    /// Share of zones, in percent, that are regional (tens of km across).
    pub regional_percent: u32,
    pub max_zone_vertices: u32,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 1,
            gantries: 30_000,
            zones: 450,
            towns: 12,
            roads: 600,
            regional_percent: 10,
            max_zone_vertices: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    /// Gantries first (ids from 1), then zones.
    pub objects: Vec<Object>,
    pub towns: Vec<Point>,
    pub roads: Vec<Vec<Point>>,
}

const MARGIN: i64 = 100_000;

fn clamp_world(x: f64) -> i32 {
    x.round().clamp(0.0, (WORLD_SIZE - 1) as f64) as i32
}

fn unit(rng: &mut ChaCha8Rng) -> (f64, f64) {
    loop {
        let dx: i32 = rng.gen_range(-1000..=1000);
        let dy: i32 = rng.gen_range(-1000..=1000);
        let l2 = dx * dx + dy * dy;
        if l2 > 0 && l2 <= 1_000_000 {
            let l = (l2 as f64).sqrt();
            return (dx as f64 / l, dy as f64 / l);
        }
    }
}

fn near(rng: &mut ChaCha8Rng, c: Point, radius: i32) -> Point {
    let (ux, uy) = unit(rng);
    let r = rng.gen_range(0..=radius) as f64;
    Point::new(clamp_world(c.x as f64 + ux * r), clamp_world(c.y as f64 + uy * r))
}

/// Star-shaped polygon: directions are random integer vectors sorted by
/// exact angle, so the vertex order never depends on floating point.
pub fn star_polygon(rng: &mut ChaCha8Rng, centre: Point, radius: i32, max_vertices: u32) -> Polygon {
    loop {
        let n = rng.gen_range(3..=max_vertices.max(3)) as usize;
        let mut dirs: Vec<(i64, i64)> = Vec::with_capacity(n);
        while dirs.len() < n {
            let d = (rng.gen_range(-1000..=1000i64), rng.gen_range(-1000..=1000i64));
            if d != (0, 0) && !dirs.iter().any(|e| e.0 * d.1 == e.1 * d.0 && e.0 * d.0 + e.1 * d.1 > 0) {
                dirs.push(d);
            }
        }
        let half = |d: &(i64, i64)| if d.1 > 0 || (d.1 == 0 && d.0 > 0) { 0 } else { 1 };
        dirs.sort_by(|a, b| half(a).cmp(&half(b)).then_with(|| 0.cmp(&(a.0 * b.1 - a.1 * b.0))));
        let vs: Vec<Point> = dirs
            .iter()
            .map(|&(dx, dy)| {
                let l = ((dx * dx + dy * dy) as f64).sqrt();
                let r = rng.gen_range(radius / 3..=radius) as f64;
                Point::new(
                    clamp_world(centre.x as f64 + dx as f64 / l * r),
                    clamp_world(centre.y as f64 + dy as f64 / l * r),
                )
            })
            .collect();
        if let Ok(p) = Polygon::new(vs) {
            return p;
        }
    }
}

pub fn generate(params: &SyntheticParams) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let towns: Vec<Point> = (0..params.towns.max(1))
        .map(|_| {
            Point::new(
                rng.gen_range(MARGIN..WORLD_SIZE - MARGIN) as i32,
                rng.gen_range(MARGIN..WORLD_SIZE - MARGIN) as i32,
            )
        })
        .collect();

    let mut roads = Vec::new();
    for _ in 0..params.roads.max(1) {
        let town = towns[rng.gen_range(0..towns.len())];
        let mut p = near(&mut rng, town, 15_000);
        let (mut hx, mut hy) = unit(&mut rng);
        let mut road = vec![p];
        for _ in 0..rng.gen_range(4..20) {
            let (jx, jy) = unit(&mut rng);
            hx = 0.8 * hx + 0.2 * jx;
            hy = 0.8 * hy + 0.2 * jy;
            let l = (hx * hx + hy * hy).sqrt().max(1e-9);
            hx /= l;
            hy /= l;
            let step = rng.gen_range(200..2_000) as f64;
            p = Point::new(clamp_world(p.x as f64 + hx * step), clamp_world(p.y as f64 + hy * step));
            road.push(p);
        }
        roads.push(road);
    }

    let mut objects = Vec::with_capacity((params.gantries + params.zones) as usize);
    for k in 0..params.gantries {
        let road = &roads[k as usize % roads.len()];
        let seg = rng.gen_range(0..road.len() - 1);
        let (a, b) = (road[seg], road[seg + 1]);
        let f: f64 = rng.gen_range(0.0..1.0);
        let x = a.x as f64 + (b.x - a.x) as f64 * f + rng.gen_range(-20.0..20.0);
        let y = a.y as f64 + (b.y - a.y) as f64 * f + rng.gen_range(-20.0..20.0);
        objects.push(Object::Gantry {
            id: k + 1,
            at: Point::new(clamp_world(x), clamp_world(y)),
        });
    }
    for k in 0..params.zones {
        let regional = rng.gen_range(0..100) < params.regional_percent;
        let town = towns[rng.gen_range(0..towns.len())];
        let (centre, radius) = if regional {
            (near(&mut rng, town, 60_000), rng.gen_range(15_000..60_000))
        } else {
            (near(&mut rng, town, 20_000), rng.gen_range(500..5_000))
        };
        objects.push(Object::Zone {
            id: params.gantries + 1 + k,
            polygon: star_polygon(&mut rng, centre, radius, params.max_zone_vertices),
        });
    }
    Synthetic { objects, towns, roads }
}

/// A drive along `road` at `speed` m/s sampled every `interval` seconds,
/// stopping after `length` metres or at the end of the road.
pub fn drive_along(road: &[Point], speed: f64, interval: f64, length: f64) -> Vec<TracePoint> {
    let mut out = Vec::new();
    if road.is_empty() || speed <= 0.0 || interval <= 0.0 {
        return out;
    }
    let step = speed * interval;
    let mut travelled = 0.0;
    let mut seg = 0;
    let mut along = 0.0;
    let mut t = 0.0;
    loop {
        let (a, b) = if seg + 1 < road.len() {
            (road[seg], road[seg + 1])
        } else {
            (road[seg], road[seg])
        };
        let (dx, dy) = ((b.x - a.x) as f64, (b.y - a.y) as f64);
        let len = (dx * dx + dy * dy).sqrt();
        let f = if len > 0.0 { along / len } else { 0.0 };
        out.push(TracePoint {
            t,
            at: Point::new(clamp_world(a.x as f64 + dx * f), clamp_world(a.y as f64 + dy * f)),
        });
        travelled += step;
        along += step;
        t += interval;
        if travelled > length {
            break;
        }
        while seg + 1 < road.len() {
            let (a, b) = (road[seg], road[seg + 1]);
            let len = (((b.x - a.x) as f64).powi(2) + ((b.y - a.y) as f64).powi(2)).sqrt();
            if along <= len {
                break;
            }
            along -= len;
            seg += 1;
        }
        if seg + 1 >= road.len() {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_and_comments() {
        let text = "# header\nG 1 10 20\n\nZ 2 0 0 100 0 100 100 # tri\n";
        let objs = parse_dataset(text).unwrap();
        assert_eq!(objs.len(), 2);
        assert_eq!(objs[0], Object::Gantry { id: 1, at: Point::new(10, 20) });
        assert_eq!(parse_dataset(&format_dataset(&objs)).unwrap(), objs);
    }

    #[test]
    fn errors_cite_the_line() {
        let mut text = String::new();
        for i in 0..6 {
            text.push_str(&format!("G {i} 5 5\n"));
        }
        text.push_str("G 7 five 5\n");
        match parse_dataset(&text) {
            Err(Error::Parse { line: 7, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_dataset("G 1 0 0\nZ 2 0 0 10 0\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_dataset("\nG 3 2000000 1\n") {
            Err(Error::Record { line: 2, kind: 'G', id: 3, reason: GeometryError::OutOfWorld { .. } }) => {}
            other => panic!("{other:?}"),
        }
        match parse_dataset("G 1 0 0\nG 1 3 3\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_must_increase() {
        assert_eq!(parse_trace("0 1 2\n1.5 3 4\n").unwrap().len(), 2);
        assert!(matches!(parse_trace("1 0 0\n1 0 0\n"), Err(Error::Parse { line: 2, .. })));
        let tr = parse_trace("0 1 2\n0.5 3 4\n").unwrap();
        assert_eq!(parse_trace(&format_trace(&tr)).unwrap(), tr);
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let p = SyntheticParams {
            gantries: 500,
            zones: 30,
            roads: 20,
            ..SyntheticParams::default()
        };
        let a = generate(&p);
        let b = generate(&p);
        assert_eq!(a.objects, b.objects);
        assert_eq!(a.objects.len(), 530);
        let text = format_dataset(&a.objects);
        assert_eq!(parse_dataset(&text).unwrap(), a.objects);
        let c = generate(&SyntheticParams { seed: 2, ..p });
        assert_ne!(a.objects, c.objects);
    }

    #[test]
    fn drive_follows_road() {
        let road = vec![Point::new(0, 0), Point::new(1000, 0), Point::new(1000, 1000)];
        let tr = drive_along(&road, 10.0, 1.0, 1500.0);
        assert_eq!(tr[0].at, Point::new(0, 0));
        assert_eq!(tr[100].at, Point::new(1000, 0));
        assert_eq!(tr[150].at, Point::new(1000, 500));
        assert_eq!(tr.len(), 151);
        assert!(tr.windows(2).all(|w| w[1].t > w[0].t));
    }
}
