//! Height functions on faces: full, a-height, loop height and corridor height.
//!
//! Crossing from a face `f` to `f + d` (`d` diagonal) crosses the edge with
//! endpoints `f + (dx, 0)` and `f + (0, dy)`. With the arrow pointing from
//! white to black, the height changes by `+3` (covered) or `-1` (uncovered)
//! when the arrow points to the left of `d`, and by `-3` or `+1` when it
//! points to the right.

use crate::error::{Error, Result};
use crate::lattice::{add, color_of, is_a_face, Color, Covering, DiamondGraph, Graph, Pt, F};
use crate::squish::{Loop, Path, SquishedConfig};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Dense storage over a rectangle of lattice points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    x0: i32,
    y0: i32,
    w: i32,
    h: i32,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    /// Grid over `(xmin, ymin, xmax, ymax)` filled with `fill`.
    pub fn new(bounds: (i32, i32, i32, i32), fill: T) -> Grid<T> {
        let (x0, y0, x1, y1) = bounds;
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        Grid { x0, y0, w, h, data: vec![fill; (w * h) as usize] }
    }
}

impl<T> Grid<T> {
    pub fn bounds(&self) -> (i32, i32, i32, i32) {
        (self.x0, self.y0, self.x0 + self.w - 1, self.y0 + self.h - 1)
    }

    #[inline]
    fn slot(&self, p: Pt) -> Option<usize> {
        let (x, y) = (p.0 - self.x0, p.1 - self.y0);
        (x >= 0 && y >= 0 && x < self.w && y < self.h).then(|| (y * self.w + x) as usize)
    }

    #[inline]
    pub fn get(&self, p: Pt) -> Option<&T> {
        self.slot(p).map(|i| &self.data[i])
    }

    #[inline]
    pub fn get_mut(&mut self, p: Pt) -> Option<&mut T> {
        self.slot(p).map(|i| &mut self.data[i])
    }

    #[inline]
    pub fn set(&mut self, p: Pt, v: T) {
        if let Some(i) = self.slot(p) {
            self.data[i] = v;
        }
    }

    /// All points, row by row from the bottom.
    pub fn points(&self) -> impl Iterator<Item = Pt> + '_ {
        let (x0, y0, w) = (self.x0, self.y0, self.w);
        (0..self.data.len() as i32).map(move |i| (x0 + i % w, y0 + i / w))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Full,
    AHeight,
    Loop,
    Corridor,
}

const ABSENT: i32 = i32::MIN;

/// Integer heights on a set of faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub flavor: Flavor,
    grid: Grid<i32>,
}

impl HeightField {
    pub fn empty(flavor: Flavor, bounds: (i32, i32, i32, i32)) -> HeightField {
        HeightField { flavor, grid: Grid::new(bounds, ABSENT) }
    }

    #[inline]
    pub fn get(&self, f: Pt) -> Option<i32> {
        self.grid.get(f).copied().filter(|&v| v != ABSENT)
    }

    #[inline]
    pub fn set(&mut self, f: Pt, v: i32) {
        self.grid.set(f, v)
    }

    pub fn bounds(&self) -> (i32, i32, i32, i32) {
        self.grid.bounds()
    }

    /// Faces with a value, in raster order.
    pub fn iter(&self) -> impl Iterator<Item = (Pt, i32)> + '_ {
        self.grid.points().filter_map(|p| self.get(p).map(|v| (p, v)))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `cx,cy,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cx,cy,value\n");
        for ((x, y), v) in self.iter() {
            s.push_str(&format!("{x},{y},{v}\n"));
        }
        s
    }
}

/// Height change for crossing from `f` to `f + d`, or `None` if no edge separates them.
fn step(g: &Graph, w2b: &[u32], f: Pt, d: Pt) -> Option<i32> {
    let p = add(f, (d.0, 0));
    let q = add(f, (0, d.1));
    let (w, b) = match color_of(p)? {
        Color::White => (p, q),
        Color::Black => (q, p),
    };
    let wi = g.region.white_index(w)?;
    let bi = g.region.black_index(b)?;
    let covered = w2b[wi] == bi as u32;
    let arrow = (b.0 - w.0, b.1 - w.1);
    let left = d.0 * arrow.1 - d.1 * arrow.0 > 0;
    Some(match (covered, left) {
        (true, true) => 3,
        (true, false) => -3,
        (false, true) => -1,
        (false, false) => 1,
    })
}

/// Height function of `cov` anchored at `anchor`, over every face reachable from it.
pub fn height_function_on(g: &Graph, cov: &Covering, anchor: Pt, value: i32) -> Result<HeightField> {
    let w2b = cov.white_to_black();
    let mut hf = HeightField::empty(Flavor::Full, g.region.bounds());
    hf.set(anchor, value);
    let mut queue = VecDeque::from([anchor]);
    while let Some(f) = queue.pop_front() {
        let hv = hf.get(f).unwrap();
        for &d in &F {
            let Some(dh) = step(g, &w2b, f, d) else { continue };
            let t = add(f, d);
            match hf.get(t) {
                None => {
                    if hf.grid.get(t).is_none() {
                        continue;
                    }
                    hf.set(t, hv + dh);
                    queue.push_back(t);
                }
                Some(old) if old != hv + dh => return Err(Error::PathDependent(t.0, t.1)),
                Some(_) => {}
            }
        }
    }
    Ok(hf)
}

/// Height function of a diamond covering with `h(0, 0) = 1`.
pub fn height_function(g: &DiamondGraph, cov: &Covering) -> Result<HeightField> {
    height_function_on(&g.graph, cov, (0, 0), 1)
}

/// Restriction to the a-faces.
pub fn a_height(h: &HeightField) -> HeightField {
    let mut out = HeightField::empty(Flavor::AHeight, h.bounds());
    for (f, v) in h.iter() {
        if is_a_face(f) {
            out.set(f, v);
        }
    }
    out
}

/// The a-faces edge-adjacent to `c` after squishing: `c + 2d`.
pub fn a_neighbours(c: Pt) -> [Pt; 4] {
    F.map(|d| (c.0 + 2 * d.0, c.1 + 2 * d.1))
}

/// a-height of a diamond recomputed from its squished configuration alone.
///
/// The corner a-face `(1, 1)` is reached from `(0, 0)` across its own
/// south-west a-edge, which fixes the additive constant.
pub fn a_height_from_squished(sq: &SquishedConfig, n: usize) -> HeightField {
    let n2 = 2 * n as i32;
    let corner_edge = sq.dimers.iter().any(|d| d.white == (1, 0) && d.black == (0, 1));
    let mut out = HeightField::empty(Flavor::AHeight, sq.incidence.bounds());
    let start = (1, 1);
    out.set(start, if corner_edge { 4 } else { 0 });
    let mut queue = VecDeque::from([start]);
    let inside = |p: Pt| p.0 >= 1 && p.1 >= 1 && p.0 < n2 && p.1 < n2;
    while let Some(c) = queue.pop_front() {
        let v = out.get(c).unwrap();
        for &d in &F {
            let t = (c.0 + 2 * d.0, c.1 + 2 * d.1);
            if inside(t) && out.get(t).is_none() {
                out.set(t, v + sq.a_jump(c, d));
                queue.push_back(t);
            }
        }
    }
    out
}

/// Loop height on the a-faces of `template`: `4 x` (clockwise minus
/// counterclockwise loops surrounding the face).
///
/// Winding numbers come from a horizontal ray just above each a-face row;
/// each loop edge contributes to one row, and a suffix sum over the row
/// gives every face's winding.
pub fn loop_height(template: &HeightField, loops: &[Loop]) -> Result<HeightField> {
    let (x0, y0, x1, y1) = template.bounds();
    let w = (x1 - x0 + 1) as usize;
    let mut rows = vec![0i32; w * (y1 - y0 + 1) as usize];
    for l in loops {
        let k = l.bfaces.len();
        for i in 0..k {
            let (p, q) = (l.bfaces[i], l.bfaces[(i + 1) % k]);
            if (q.0 - p.0).abs() != 2 || (q.1 - p.1).abs() != 2 {
                return Err(Error::Decomposition(format!("loop step {p:?} -> {q:?} is not a squished edge")));
            }
            let (lo, hi) = if p.1 < q.1 { (p, q) } else { (q, p) };
            let s = if q.1 > p.1 { 1 } else { -1 };
            // the edge crosses y = lo.y + 1/2 at x = lo.x +- 1/2; faces at or left of
            // the last odd column before the crossing see it
            let last = if hi.0 > lo.0 { lo.0 } else { lo.0 - 2 };
            if lo.1 < y0 || lo.1 > y1 || last < x0 {
                continue;
            }
            let lastc = last.min(x1);
            rows[(lo.1 - y0) as usize * w + (lastc - x0) as usize] += s;
        }
    }
    let mut out = HeightField::empty(Flavor::Loop, template.bounds());
    for y in y0..=y1 {
        let row = &rows[(y - y0) as usize * w..(y - y0 + 1) as usize * w];
        let mut acc = 0;
        for x in (x0..=x1).rev() {
            acc += row[(x - x0) as usize];
            if template.get((x, y)).is_some() {
                out.set((x, y), -4 * acc);
            }
        }
    }
    Ok(out)
}

/// `h^a - h^a_l`, required to be a multiple of 4 everywhere.
pub fn corridor_height(ha: &HeightField, hl: &HeightField) -> Result<HeightField> {
    let mut out = HeightField::empty(Flavor::Corridor, ha.bounds());
    for (f, v) in ha.iter() {
        let l = hl.get(f).ok_or_else(|| Error::Decomposition(format!("no loop height at {f:?}")))?;
        let c = v - l;
        if c.rem_euclid(4) != 0 {
            return Err(Error::Decomposition(format!("corridor height {c} at {f:?} is not a multiple of 4")));
        }
        out.set(f, c);
    }
    Ok(out)
}

/// Corridor labels by flood fill between traced paths.
///
/// Path edges are walls. Components touching the rim of the a-face lattice
/// take the a-height found there; the remaining components are reached by
/// crossing a path edge, which changes the label by `±4` according to the
/// path's orientation.
pub fn corridor_flood_fill(ha: &HeightField, sq: &SquishedConfig, paths: &[Path]) -> Result<HeightField> {
    use std::collections::HashMap;
    let mut wall: HashMap<Pt, Pt> = HashMap::new();
    for p in paths {
        for &id in &p.dimers {
            let d = &sq.dimers[id as usize];
            let e = wall.entry(d.mixed).or_insert((0, 0));
            *e = add(*e, d.arrow());
        }
    }
    let faces: Vec<Pt> = ha.iter().map(|(f, _)| f).collect();
    let mut comp = Grid::new(ha.bounds(), usize::MAX);
    let mut members: Vec<Vec<Pt>> = Vec::new();
    for &f in &faces {
        if *comp.get(f).unwrap() != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut list = vec![f];
        comp.set(f, id);
        let mut i = 0;
        while i < list.len() {
            let c = list[i];
            i += 1;
            for &d in &F {
                let t = (c.0 + 2 * d.0, c.1 + 2 * d.1);
                if ha.get(t).is_none() || wall.contains_key(&add(c, d)) || *comp.get(t).unwrap() != usize::MAX {
                    continue;
                }
                comp.set(t, id);
                list.push(t);
            }
        }
        members.push(list);
    }
    let mut label: Vec<Option<i32>> = vec![None; members.len()];
    for (id, list) in members.iter().enumerate() {
        for &c in list {
            let rim = a_neighbours(c).iter().any(|&t| ha.get(t).is_none());
            if rim {
                let v = ha.get(c).unwrap();
                match label[id] {
                    None => label[id] = Some(v),
                    Some(old) if old != v => {
                        return Err(Error::Decomposition(format!("corridor at {c:?} meets the rim at heights {old} and {v}")))
                    }
                    _ => {}
                }
            }
        }
    }
    let mut queue: VecDeque<usize> = (0..members.len()).filter(|&i| label[i].is_some()).collect();
    while let Some(id) = queue.pop_front() {
        let v = label[id].unwrap();
        for &c in &members[id] {
            for &d in &F {
                let t = (c.0 + 2 * d.0, c.1 + 2 * d.1);
                let Some(t_arrow) = wall.get(&add(c, d)) else { continue };
                if ha.get(t).is_none() {
                    continue;
                }
                let jump = 4 * (d.0 * t_arrow.1 - d.1 * t_arrow.0).signum();
                let other = *comp.get(t).unwrap();
                match label[other] {
                    None => {
                        label[other] = Some(v + jump);
                        queue.push_back(other);
                    }
                    Some(o) if o != v + jump => {
                        return Err(Error::Decomposition(format!("inconsistent corridor labels across {:?}", add(c, d))))
                    }
                    _ => {}
                }
            }
        }
    }
    let mut out = HeightField::empty(Flavor::Corridor, ha.bounds());
    for (id, list) in members.iter().enumerate() {
        let v = label[id].ok_or_else(|| Error::Decomposition("unreachable corridor component".into()))?;
        for &c in list {
            out.set(c, v);
        }
    }
    Ok(out)
}

/// Sum of full-height increments around every vertex of the graph is zero.
pub fn divergence_free(g: &Graph, cov: &Covering) -> bool {
    let w2b = cov.white_to_black();
    let verts = g.region.whites.iter().chain(g.region.blacks.iter());
    for &v in verts {
        // faces around v: v + (±1, 0), v + (0, ±1), visited counterclockwise
        let ring = [add(v, (1, 0)), add(v, (0, 1)), add(v, (-1, 0)), add(v, (0, -1))];
        let mut total = 0;
        for k in 0..4 {
            let (f, t) = (ring[k], ring[(k + 1) % 4]);
            match step(g, &w2b, f, (t.0 - f.0, t.1 - f.1)) {
                Some(dh) => total += dh,
                None => {
                    total = 0;
                    break;
                }
            }
        }
        if total != 0 {
            return false;
        }
    }
    true
}
