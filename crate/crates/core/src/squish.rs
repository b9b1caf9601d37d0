//! Squishing: contract every b-face to a point and keep the a-dimers.
//!
//! The squished graph has the b-faces as vertices and the (even, even)
//! mixed faces as edges: the mixed face `B + d` joins the b-faces `B` and
//! `B + 2d`, and separates the a-faces on either side. An a-dimer on the
//! cell `c` in direction `d` lies on the mixed face `c + d` and is oriented
//! from the b-face of its white vertex to the b-face of its black vertex.
//!
//! Decomposition follows each non-double a-dimer through the b-face at its
//! black end to the next one leaving that b-face. At b-faces with four
//! incident a-dimers a mirror through the two lowest a-faces fixes the
//! pairing. B-faces not surrounded by graph vertices are boundary faces,
//! where paths start and end.

use crate::error::{Error, Result};
use crate::heights::{Grid, HeightField};
use crate::lattice::{self, add, edge_cell, edge_mixed_face, is_a_face, Covering, Graph, Pt, F};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ADimer {
    pub white: Pt,
    pub black: Pt,
    /// The a-face owning the edge.
    pub cell: Pt,
    /// The squished edge (mixed face) carrying the dimer.
    pub mixed: Pt,
    /// b-face of the white end.
    pub from: Pt,
    /// b-face of the black end.
    pub to: Pt,
}

impl ADimer {
    /// Displacement `to - from` in squished coordinates.
    pub fn arrow(&self) -> Pt {
        lattice::sub(self.to, self.from)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SquishedConfig {
    pub dimers: Vec<ADimer>,
    /// Whether all four vertices of a b-face belong to the graph.
    pub interior: Grid<bool>,
    /// Number of a-dimers incident to each b-face.
    pub incidence: Grid<u8>,
    /// a-dimer ids on each mixed face.
    pub on_mixed: Grid<[u32; 2]>,
}

pub const NO_DIMER: u32 = u32::MAX;

/// The b-face vertex set of a b-face center.
pub fn b_face_vertices(b: Pt) -> [Pt; 4] {
    [add(b, (1, 0)), add(b, (0, 1)), add(b, (-1, 0)), add(b, (0, -1))]
}

/// The four a-faces around a b-face: east, north, west, south.
pub fn a_faces_around(b: Pt) -> [Pt; 4] {
    [add(b, (2, 0)), add(b, (0, 2)), add(b, (-2, 0)), add(b, (0, -2))]
}

pub fn squish(g: &Graph, cov: &Covering) -> SquishedConfig {
    let region = &g.region;
    let bounds = region.bounds();
    let mut interior = Grid::new(bounds, false);
    let pts: Vec<Pt> = interior.points().collect();
    for (x, y) in pts {
        if lattice::is_b_face((x, y)) {
            let inside = b_face_vertices((x, y)).iter().all(|&v| region.contains(v));
            interior.set((x, y), inside);
        }
    }
    let mut incidence = Grid::new(bounds, 0u8);
    let mut on_mixed = Grid::new(bounds, [NO_DIMER; 2]);
    let mut dimers = Vec::new();
    for (bi, &wi) in cov.black_to_white.iter().enumerate() {
        let (b, w) = (region.blacks[bi], region.whites[wi as usize]);
        let cell = edge_cell(w, b);
        if !is_a_face(cell) {
            continue;
        }
        let d = ADimer {
            white: w,
            black: b,
            cell,
            mixed: edge_mixed_face(w, b),
            from: lattice::vertex_faces(w).1,
            to: lattice::vertex_faces(b).1,
        };
        let id = dimers.len() as u32;
        *incidence.get_mut(d.from).unwrap() += 1;
        *incidence.get_mut(d.to).unwrap() += 1;
        let slot = on_mixed.get_mut(d.mixed).unwrap();
        if slot[0] == NO_DIMER {
            slot[0] = id;
        } else {
            slot[1] = id;
        }
        dimers.push(d);
    }
    SquishedConfig { dimers, interior, incidence, on_mixed }
}

impl SquishedConfig {
    pub fn is_interior(&self, b: Pt) -> bool {
        self.interior.get(b).copied().unwrap_or(false)
    }

    pub fn is_double(&self, id: usize) -> bool {
        self.on_mixed.get(self.dimers[id].mixed).map(|s| s[1] != NO_DIMER).unwrap_or(false)
    }

    /// Change of the a-height from the a-face `c` to `c + 2d`.
    pub fn a_jump(&self, c: Pt, d: Pt) -> i32 {
        let m = add(c, d);
        let Some(slot) = self.on_mixed.get(m) else { return 0 };
        let mut t = (0, 0);
        for &id in slot.iter().filter(|&&id| id != NO_DIMER) {
            let a = self.dimers[id as usize].arrow();
            t = add(t, a);
        }
        // rot_cw(t) = (t.y, -t.x)
        let s = d.0 * t.1 - d.1 * t.0;
        4 * s.signum()
    }

    /// b-faces with four incident a-dimers, none of them doubled.
    pub fn meeting_points(&self) -> Vec<Pt> {
        let mut out = Vec::new();
        for p in self.incidence.points() {
            if self.incidence.get(p) == Some(&4) && self.is_interior(p) {
                let singles = F.iter().all(|&d| {
                    self.on_mixed
                        .get(add(p, d))
                        .map(|s| s[0] != NO_DIMER && s[1] == NO_DIMER)
                        .unwrap_or(false)
                });
                if singles {
                    out.push(p);
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MirrorAxis {
    /// Joins the east and west a-faces.
    Horizontal,
    /// Joins the north and south a-faces.
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mirror {
    pub at: Pt,
    pub axis: MirrorAxis,
}

impl Mirror {
    /// The two a-faces the mirror joins.
    pub fn faces(&self) -> (Pt, Pt) {
        let f = a_faces_around(self.at);
        match self.axis {
            MirrorAxis::Horizontal => (f[0], f[2]),
            MirrorAxis::Vertical => (f[1], f[3]),
        }
    }

    /// Side of the squished edge `at + d`.
    fn side(&self, d: Pt) -> bool {
        match self.axis {
            MirrorAxis::Horizontal => d.1 > 0,
            MirrorAxis::Vertical => d.0 > 0,
        }
    }
}

/// One mirror per meeting point, joining its two lowest a-faces.
pub fn place_mirrors(sq: &SquishedConfig, ha: &HeightField) -> Result<Vec<Mirror>> {
    let mut out = Vec::new();
    for p in sq.meeting_points() {
        let f = a_faces_around(p);
        let mut h = [0i32; 4];
        for (k, &q) in f.iter().enumerate() {
            h[k] = ha.get(q).ok_or_else(|| Error::Decomposition(format!("no a-height at {q:?}")))?;
        }
        let lo = *h.iter().min().unwrap();
        let axis = if h[0] == lo && h[2] == lo && h[1] > lo && h[3] > lo {
            MirrorAxis::Horizontal
        } else if h[1] == lo && h[3] == lo && h[0] > lo && h[2] > lo {
            MirrorAxis::Vertical
        } else {
            return Err(Error::MirrorTie(p.0, p.1));
        };
        out.push(Mirror { at: p, axis });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loop {
    /// a-dimer ids in traversal order.
    pub dimers: Vec<u32>,
    /// b-faces visited; `bfaces[i]` is the start of `dimers[i]`.
    pub bfaces: Vec<Pt>,
    /// `+1` clockwise, `-1` counterclockwise.
    pub sign: i8,
}

impl Loop {
    pub fn len(&self) -> usize {
        self.dimers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimers.is_empty()
    }

    /// The same loop traversed backwards.
    pub fn reversed(&self) -> Loop {
        let mut bfaces: Vec<Pt> = self.bfaces.iter().rev().copied().collect();
        bfaces.rotate_right(1);
        Loop { dimers: self.dimers.iter().rev().copied().collect(), bfaces: bfaces.clone(), sign: loop_sign(&bfaces) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub dimers: Vec<u32>,
    /// b-faces visited, start to end (one more than `dimers`).
    pub bfaces: Vec<Pt>,
}

impl Path {
    pub fn start(&self) -> Pt {
        self.bfaces[0]
    }

    pub fn end(&self) -> Pt {
        *self.bfaces.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.dimers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimers.is_empty()
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Decomposition {
    /// Pairs of a-dimer ids sharing a squished edge.
    pub double_edges: Vec<(u32, u32)>,
    pub loops: Vec<Loop>,
    pub paths: Vec<Path>,
    pub mirrors: Vec<Mirror>,
}

/// `+1` for a clockwise polygon (negative signed area), `-1` otherwise.
pub fn loop_sign(poly: &[Pt]) -> i8 {
    let mut area2: i64 = 0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        area2 += p.0 as i64 * q.1 as i64 - q.0 as i64 * p.1 as i64;
    }
    if area2 < 0 {
        1
    } else {
        -1
    }
}

pub fn decompose(sq: &SquishedConfig, mirrors: &[Mirror]) -> Result<Decomposition> {
    let nd = sq.dimers.len();
    let mut dec = Decomposition { mirrors: mirrors.to_vec(), ..Default::default() };
    let mut used = vec![false; nd];
    for (id, d) in sq.dimers.iter().enumerate() {
        let slot = sq.on_mixed.get(d.mixed).unwrap();
        if slot[1] != NO_DIMER && slot[0] == id as u32 {
            dec.double_edges.push((slot[0], slot[1]));
            used[slot[0] as usize] = true;
            used[slot[1] as usize] = true;
        }
    }
    let mirror_at: std::collections::HashMap<Pt, Mirror> = mirrors.iter().map(|m| (m.at, *m)).collect();

    // incoming and outgoing single a-dimers at every interior b-face
    let bounds = sq.incidence.bounds();
    let mut ins: Grid<Vec<u32>> = Grid::new(bounds, Vec::new());
    let mut outs: Grid<Vec<u32>> = Grid::new(bounds, Vec::new());
    for (id, d) in sq.dimers.iter().enumerate() {
        if used[id] {
            continue;
        }
        outs.get_mut(d.from).unwrap().push(id as u32);
        ins.get_mut(d.to).unwrap().push(id as u32);
    }
    let mut next = vec![NO_DIMER; nd];
    for p in sq.incidence.points() {
        if !sq.is_interior(p) {
            continue;
        }
        let (i, o) = (ins.get(p).unwrap(), outs.get(p).unwrap());
        match (i.len(), o.len()) {
            (0, 0) => {}
            (1, 1) => next[i[0] as usize] = o[0],
            (2, 2) => {
                let m = mirror_at
                    .get(&p)
                    .ok_or_else(|| Error::Decomposition(format!("no mirror at meeting point {p:?}")))?;
                let side = |id: u32| m.side(lattice::sub(sq.dimers[id as usize].mixed, p));
                for &x in i {
                    let partner: Vec<u32> = o.iter().copied().filter(|&y| side(y) == side(x)).collect();
                    if partner.len() != 1 {
                        return Err(Error::Decomposition(format!("mirror at {p:?} does not split the a-dimers")));
                    }
                    next[x as usize] = partner[0];
                }
            }
            (a, b) => {
                return Err(Error::Decomposition(format!("b-face {p:?} has {a} incoming and {b} outgoing a-dimers")))
            }
        }
    }

    let mut starts: Vec<(Pt, u32)> = Vec::new();
    for p in sq.incidence.points() {
        if !sq.is_interior(p) {
            for &o in outs.get(p).unwrap() {
                starts.push((p, o));
            }
        }
    }
    starts.sort_by_key(|&(p, id)| (p.1, p.0, id));
    for (p, first) in starts {
        let mut path = Path { dimers: Vec::new(), bfaces: vec![p] };
        let mut cur = first;
        loop {
            if std::mem::replace(&mut used[cur as usize], true) {
                return Err(Error::Decomposition(format!("path from {p:?} revisits an a-dimer")));
            }
            path.dimers.push(cur);
            let to = sq.dimers[cur as usize].to;
            path.bfaces.push(to);
            if !sq.is_interior(to) {
                break;
            }
            cur = next[cur as usize];
            if cur == NO_DIMER {
                return Err(Error::Decomposition(format!("path from {p:?} stops at {to:?}")));
            }
        }
        dec.paths.push(path);
    }
    for id in 0..nd {
        if used[id] {
            continue;
        }
        let mut lp = Loop { dimers: Vec::new(), bfaces: Vec::new(), sign: 0 };
        let mut cur = id as u32;
        while !used[cur as usize] {
            used[cur as usize] = true;
            lp.dimers.push(cur);
            lp.bfaces.push(sq.dimers[cur as usize].from);
            cur = next[cur as usize];
            if cur == NO_DIMER {
                return Err(Error::Decomposition(format!("open loop through {:?}", sq.dimers[id].from)));
            }
        }
        if cur != id as u32 {
            return Err(Error::Decomposition(format!("trace from {:?} does not close", sq.dimers[id].from)));
        }
        if lp.len() < 4 {
            return Err(Error::Decomposition(format!("loop of length {} at {:?}", lp.len(), lp.bfaces[0])));
        }
        lp.sign = loop_sign(&lp.bfaces);
        dec.loops.push(lp);
    }
    let total = 2 * dec.double_edges.len()
        + dec.loops.iter().map(Loop::len).sum::<usize>()
        + dec.paths.iter().map(Path::len).sum::<usize>();
    if total != nd {
        return Err(Error::Decomposition(format!("{total} of {nd} a-dimers classified")));
    }
    Ok(dec)
}

/// Squish, place mirrors from the covering's a-height, and decompose.
pub fn squish_and_decompose(g: &Graph, cov: &Covering, ha: &HeightField) -> Result<(SquishedConfig, Decomposition)> {
    let sq = squish(g, cov);
    let mirrors = place_mirrors(&sq, ha)?;
    let dec = decompose(&sq, &mirrors)?;
    Ok((sq, dec))
}

/// Loop lengths with orientation signs.
pub fn loop_census(dec: &Decomposition) -> Vec<(usize, i8)> {
    dec.loops.iter().map(|l| (l.len(), l.sign)).collect()
}

/// Start face, end face and length of every path.
pub fn path_census(dec: &Decomposition) -> Vec<(Pt, Pt, usize)> {
    dec.paths.iter().map(|p| (p.start(), p.end(), p.len())).collect()
}

/// Lengths of maximal straight chains of double edges.
///
/// Double edges on the mixed faces `M` and `M + 2d` continue each other
/// along the diagonal `d` when they share a b-face; a chain of `r` double
/// edges holds `2r` a-dimers, and that count is reported.
pub fn double_edge_chains(sq: &SquishedConfig, dec: &Decomposition) -> Vec<(Pt, usize)> {
    use std::collections::HashSet;
    let doubles: HashSet<Pt> = dec.double_edges.iter().map(|&(a, _)| sq.dimers[a as usize].mixed).collect();
    let mut out = Vec::new();
    for &m in &doubles {
        // squished edge at m runs along the diagonal joining its two b-faces
        let d = squished_edge_dir(sq, m);
        let prev = (m.0 - 2 * d.0, m.1 - 2 * d.1);
        if doubles.contains(&prev) {
            continue;
        }
        let mut len = 0;
        let mut cur = m;
        while doubles.contains(&cur) {
            len += 1;
            cur = (cur.0 + 2 * d.0, cur.1 + 2 * d.1);
        }
        out.push((m, 2 * len));
    }
    out.sort();
    out
}

/// Unit diagonal along which the squished edge at mixed face `m` runs.
fn squished_edge_dir(sq: &SquishedConfig, m: Pt) -> Pt {
    let id = sq.on_mixed.get(m).unwrap()[0] as usize;
    let t = sq.dimers[id].arrow();
    // canonical direction: positive x component
    let (dx, dy) = (t.0.signum(), t.1.signum());
    if dx > 0 {
        (dx, dy)
    } else {
        (-dx, -dy)
    }
}
