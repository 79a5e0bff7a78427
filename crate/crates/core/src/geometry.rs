//! Planar geometry kernel.
//!
//! All predicates are exact: coordinates are integer metres, cell edges are
//! rationals with denominator `9^level`, and every comparison is done by
//! integer cross-multiplication.

use num_rational::Ratio;
use thiserror::Error;

/// Side length of the top cell, in metres.
pub const WORLD_SIZE: i64 = 2_000_000;
/// Cells per side of a node grid.
pub const GRID: u32 = 9;
pub const CELLS_PER_NODE: usize = (GRID * GRID) as usize;
/// Node pages exist for levels 0..=5; entry cells of a level-5 node are level 6.
pub const MAX_CELL_LEVEL: u8 = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("point ({x}, {y}) is outside cell level {level} ({col}, {row})")]
    PointOutsideCell {
        x: i32,
        y: i32,
        level: u8,
        col: u32,
        row: u32,
    },
    #[error("cannot subdivide below level {0}")]
    DepthOverflow(u8),
    #[error("sub-cell index ({0}, {1}) out of the 9x9 grid")]
    BadIndex(u8, u8),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(&'static str),
    #[error("point ({x}, {y}) is outside the world [0, 2000000)")]
    OutOfWorld { x: i32, y: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn in_world(&self) -> bool {
        (0..WORLD_SIZE).contains(&(self.x as i64)) && (0..WORLD_SIZE).contains(&(self.y as i64))
    }

    pub fn check_in_world(&self) -> Result<(), GeometryError> {
        if self.in_world() {
            Ok(())
        } else {
            Err(GeometryError::OutOfWorld {
                x: self.x,
                y: self.y,
            })
        }
    }
}

/// Closed rectangle of integer points `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Rect {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, p: Point) -> bool {
        let (x, y) = (p.x as i64, p.y as i64);
        self.x0 <= x && x <= self.x1 && self.y0 <= y && y <= self.y1
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }

    /// Closest-point test: clamp the centre into the rectangle.
    pub fn intersects_disc(&self, center: Point, radius: u32) -> bool {
        let cx = center.x as i64;
        let cy = center.y as i64;
        let dx = (cx.clamp(self.x0, self.x1) - cx).unsigned_abs() as u128;
        let dy = (cy.clamp(self.y0, self.y1) - cy).unsigned_abs() as u128;
        dx * dx + dy * dy <= (radius as u128) * (radius as u128)
    }
}

fn pow9(exp: u8) -> i64 {
    9i64.pow(exp as u32)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    debug_assert!(a >= 0 && b > 0);
    (a + b - 1) / b
}

/// A square of the fixed 9-ary subdivision of `[0, 2 000 000)^2`.
///
/// At `level` the side is exactly `2 000 000 / 9^level`; `col`/`row` index
/// the cell along x/y within that level's `9^level x 9^level` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    level: u8,
    col: u32,
    row: u32,
}

impl Cell {
    pub fn world() -> Self {
        Self {
            level: 0,
            col: 0,
            row: 0,
        }
    }

    pub fn new(level: u8, col: u32, row: u32) -> Result<Self, GeometryError> {
        if level > MAX_CELL_LEVEL {
            return Err(GeometryError::DepthOverflow(level));
        }
        let n = pow9(level) as u32;
        assert!(col < n && row < n, "cell index out of range for level {level}");
        Ok(Self { level, col, row })
    }

    /// The level-`level` cell that contains `p`.
    pub fn containing(p: Point, level: u8) -> Result<Self, GeometryError> {
        p.check_in_world()?;
        if level > MAX_CELL_LEVEL {
            return Err(GeometryError::DepthOverflow(level));
        }
        let scale = pow9(level);
        Ok(Self {
            level,
            col: (p.x as i64 * scale / WORLD_SIZE) as u32,
            row: (p.y as i64 * scale / WORLD_SIZE) as u32,
        })
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn col(&self) -> u32 {
        self.col
    }

    pub fn row(&self) -> u32 {
        self.row
    }

    pub fn size(&self) -> Ratio<i64> {
        Ratio::new(WORLD_SIZE, pow9(self.level))
    }

    /// Inclusive lower corner `(x, y)`.
    pub fn origin(&self) -> (Ratio<i64>, Ratio<i64>) {
        let den = pow9(self.level);
        (
            Ratio::new(self.col as i64 * WORLD_SIZE, den),
            Ratio::new(self.row as i64 * WORLD_SIZE, den),
        )
    }

    /// The integer points of the half-open cell, as a closed rectangle.
    pub fn bounds(&self) -> Rect {
        let den = pow9(self.level);
        let lo = |i: u32| ceil_div(i as i64 * WORLD_SIZE, den);
        Rect::new(
            lo(self.col),
            lo(self.row),
            lo(self.col + 1) - 1,
            lo(self.row + 1) - 1,
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bounds().contains(p)
    }

    /// Row (from y) and column (from x) of the sub-cell containing `p`.
    pub fn index_of(&self, p: Point) -> Result<(u8, u8), GeometryError> {
        if !p.in_world() || !self.contains(p) {
            return Err(GeometryError::PointOutsideCell {
                x: p.x,
                y: p.y,
                level: self.level,
                col: self.col,
                row: self.row,
            });
        }
        let scale = pow9(self.level + 1);
        let gx = p.x as i64 * scale / WORLD_SIZE;
        let gy = p.y as i64 * scale / WORLD_SIZE;
        let i = gy - GRID as i64 * self.row as i64;
        let j = gx - GRID as i64 * self.col as i64;
        debug_assert!((0..9).contains(&i) && (0..9).contains(&j));
        Ok((i as u8, j as u8))
    }

    /// Entry slot `9 * row + col` of the sub-cell containing `p`.
    pub fn slot_of(&self, p: Point) -> Result<usize, GeometryError> {
        let (i, j) = self.index_of(p)?;
        Ok(i as usize * GRID as usize + j as usize)
    }

    pub fn subcell(&self, i: u8, j: u8) -> Result<Cell, GeometryError> {
        if i as u32 >= GRID || j as u32 >= GRID {
            return Err(GeometryError::BadIndex(i, j));
        }
        if self.level >= MAX_CELL_LEVEL {
            return Err(GeometryError::DepthOverflow(self.level));
        }
        Ok(Cell {
            level: self.level + 1,
            col: self.col * GRID + j as u32,
            row: self.row * GRID + i as u32,
        })
    }

    pub fn subcell_at(&self, slot: usize) -> Result<Cell, GeometryError> {
        self.subcell((slot / GRID as usize) as u8, (slot % GRID as usize) as u8)
    }
}

pub fn cell_index(p: Point, c: &Cell) -> Result<(u8, u8), GeometryError> {
    c.index_of(p)
}

pub fn subcell(c: &Cell, i: u8, j: u8) -> Result<Cell, GeometryError> {
    c.subcell(i, j)
}

/// Where a query point sits relative to a polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

/// A simple polygon with integer vertices, implicitly closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polygon {
    vertices: Vec<Point>,
    bbox: Rect,
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i128 {
    (a.0 - o.0) as i128 * (b.1 - o.1) as i128 - (a.1 - o.1) as i128 * (b.0 - o.0) as i128
}

fn xy(p: Point) -> (i64, i64) {
    (p.x as i64, p.y as i64)
}

fn on_segment(a: (i64, i64), b: (i64, i64), q: (i64, i64)) -> bool {
    cross(a, b, q) == 0
        && a.0.min(b.0) <= q.0
        && q.0 <= a.0.max(b.0)
        && a.1.min(b.1) <= q.1
        && q.1 <= a.1.max(b.1)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (a, b, c, d) = (xy(a), xy(b), xy(c), xy(d));
    let d1 = cross(c, d, a).signum();
    let d2 = cross(c, d, b).signum();
    let d3 = cross(a, b, c).signum();
    let d4 = cross(a, b, d).signum();
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(c, d, a))
        || (d2 == 0 && on_segment(c, d, b))
        || (d3 == 0 && on_segment(a, b, c))
        || (d4 == 0 && on_segment(a, b, d))
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::DegeneratePolygon("fewer than 3 vertices"));
        }
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(GeometryError::DegeneratePolygon("repeated consecutive vertex"));
            }
        }
        let twice_area: i128 = (0..n)
            .map(|i| {
                let (a, b) = (xy(vertices[i]), xy(vertices[(i + 1) % n]));
                a.0 as i128 * b.1 as i128 - b.0 as i128 * a.1 as i128
            })
            .sum();
        if twice_area == 0 {
            return Err(GeometryError::DegeneratePolygon("zero area"));
        }
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            // Adjacent edge: must not fold back over this one.
            let c = vertices[(i + 2) % n];
            let (pa, pb, pc) = (xy(a), xy(b), xy(c));
            let dot = (pb.0 - pa.0) as i128 * (pc.0 - pb.0) as i128
                + (pb.1 - pa.1) as i128 * (pc.1 - pb.1) as i128;
            if cross(pa, pb, pc) == 0 && dot < 0 {
                return Err(GeometryError::DegeneratePolygon("edges fold back"));
            }
            for k in (i + 2)..n {
                if i == 0 && k == n - 1 {
                    continue;
                }
                let (c, d) = (vertices[k], vertices[(k + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(GeometryError::DegeneratePolygon("self-intersecting"));
                }
            }
        }
        let bbox = Rect::new(
            vertices.iter().map(|p| p.x as i64).min().unwrap(),
            vertices.iter().map(|p| p.y as i64).min().unwrap(),
            vertices.iter().map(|p| p.x as i64).max().unwrap(),
            vertices.iter().map(|p| p.y as i64).max().unwrap(),
        );
        Ok(Self { vertices, bbox })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd location of `(qx, qy) / scale` against the polygon.
    fn locate_scaled(&self, qx: i64, qy: i64, scale: i64) -> Location {
        let q = (qx, qy);
        let mut inside = false;
        for (a, b) in self.edges() {
            let a = (a.x as i64 * scale, a.y as i64 * scale);
            let b = (b.x as i64 * scale, b.y as i64 * scale);
            if on_segment(a, b, q) {
                return Location::Boundary;
            }
            if (a.1 > q.1) != (b.1 > q.1) {
                // x of the edge at height q.1 compared against q.0, exactly.
                let num = (q.1 - a.1) as i128 * (b.0 - a.0) as i128;
                let den = (b.1 - a.1) as i128;
                let lhs = (q.0 - a.0) as i128 * den;
                let left_of_edge = if den > 0 { lhs < num } else { lhs > num };
                if left_of_edge {
                    inside = !inside;
                }
            }
        }
        if inside {
            Location::Inside
        } else {
            Location::Outside
        }
    }

    pub fn locate(&self, p: Point) -> Location {
        if !self.bbox.contains(p) {
            return Location::Outside;
        }
        self.locate_scaled(p.x as i64, p.y as i64, 1)
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: Point) -> bool {
        self.locate(p) != Location::Outside
    }

    pub fn in_world(&self) -> bool {
        self.vertices.iter().all(Point::in_world)
    }
}

pub fn point_in_polygon(p: Point, poly: &Polygon) -> bool {
    poly.contains(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellClass {
    Outside,
    Inside,
    Edge,
}

#[derive(Clone, Copy)]
struct Bound {
    num: i128,
    den: i128,
    strict: bool,
}

impl Bound {
    fn new(num: i128, den: i128, strict: bool) -> Self {
        if den < 0 {
            Self {
                num: -num,
                den: -den,
                strict,
            }
        } else {
            Self { num, den, strict }
        }
    }

    fn cmp_value(&self, other: &Bound) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Liang-Barsky clip of segment `ab` against `r` (closed) or its interior (open).
fn segment_meets_rect(a: Point, b: Point, r: &Rect, open: bool) -> bool {
    use std::cmp::Ordering::*;
    let mut lower = Bound::new(0, 1, false);
    let mut upper = Bound::new(1, 1, false);
    let axes = [
        (a.x as i64, b.x as i64 - a.x as i64, r.x0, r.x1),
        (a.y as i64, b.y as i64 - a.y as i64, r.y0, r.y1),
    ];
    for (p0, d, lo, hi) in axes {
        if d == 0 {
            let ok = if open {
                lo < p0 && p0 < hi
            } else {
                lo <= p0 && p0 <= hi
            };
            if !ok {
                return false;
            }
            continue;
        }
        let t_lo = Bound::new((lo - p0) as i128, d as i128, open);
        let t_hi = Bound::new((hi - p0) as i128, d as i128, open);
        let (enter, exit) = if d > 0 { (t_lo, t_hi) } else { (t_hi, t_lo) };
        match enter.cmp_value(&lower) {
            Greater => lower = enter,
            Equal => lower.strict |= enter.strict,
            Less => {}
        }
        match exit.cmp_value(&upper) {
            Less => upper = exit,
            Equal => upper.strict |= exit.strict,
            Greater => {}
        }
    }
    match lower.cmp_value(&upper) {
        Less => true,
        Equal => !lower.strict && !upper.strict,
        Greater => false,
    }
}

/// Classifies the integer points of `r` against `poly`.
///
/// Inside: no edge meets the open interior and the centre is inside, so the
/// closed rectangle lies in the closed polygon. Outside: no edge meets the
/// closed rectangle and the centre is outside. Anything else is Edge.
pub fn classify_rect(r: &Rect, poly: &Polygon) -> CellClass {
    if !r.intersects(&poly.bbox) {
        return CellClass::Outside;
    }
    let mut touches = false;
    let mut crosses_interior = false;
    for (a, b) in poly.edges() {
        if segment_meets_rect(a, b, r, false) {
            touches = true;
            if segment_meets_rect(a, b, r, true) {
                crosses_interior = true;
                break;
            }
        }
    }
    if crosses_interior {
        return CellClass::Edge;
    }
    let degenerate = r.x0 == r.x1 || r.y0 == r.y1;
    if degenerate && touches {
        return CellClass::Edge;
    }
    let centre = poly.locate_scaled(r.x0 + r.x1, r.y0 + r.y1, 2);
    match (touches, centre) {
        (_, Location::Boundary) => CellClass::Edge,
        (_, Location::Inside) => CellClass::Inside,
        (false, Location::Outside) => CellClass::Outside,
        (true, Location::Outside) => CellClass::Edge,
    }
}

pub fn classify_cell(c: &Cell, poly: &Polygon) -> CellClass {
    classify_rect(&c.bounds(), poly)
}

pub fn dist2(p: Point, q: Point) -> u64 {
    let dx = (p.x as i64 - q.x as i64).unsigned_abs();
    let dy = (p.y as i64 - q.y as i64).unsigned_abs();
    dx * dx + dy * dy
}

pub fn cell_intersects_disc(c: &Cell, center: Point, radius: u32) -> bool {
    c.bounds().intersects_disc(center, radius)
}
