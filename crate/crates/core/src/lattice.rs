//! Lattice geometry: vertices, faces, the two-periodic Aztec diamond graph,
//! its Kasteleyn matrix, and brute-force oracles.
//!
//! Coordinates follow the usual conventions: white vertices are (odd, even),
//! black vertices (even, odd), edges join `w` to `w + f_s` with
//! `f = (e1, e2, -e1, -e2)`, `e1 = (1,1)`, `e2 = (-1,1)`. Faces sit at the
//! points with `x + y` even. The (odd, odd) faces carry the weights: a-faces
//! when `(x + y) mod 4 = 2`, b-faces when it is 0. Every edge borders exactly
//! one (odd, odd) face, at `(w.x, b.y)`.

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, BandLu, Cdd, DenseMatrix, Scalar};
use crate::C64;
use serde::{Deserialize, Serialize};

pub type Pt = (i32, i32);

pub const E1: Pt = (1, 1);
pub const E2: Pt = (-1, 1);
/// `f_1..f_4` of the local-configuration notation, as offsets black - white.
pub const F: [Pt; 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

#[inline]
pub fn add(p: Pt, d: Pt) -> Pt {
    (p.0 + d.0, p.1 + d.1)
}

#[inline]
pub fn sub(p: Pt, d: Pt) -> Pt {
    (p.0 - d.0, p.1 - d.1)
}

/// Index of `d` in [`F`], if it is one of the four edge offsets.
#[inline]
pub fn dir_index(d: Pt) -> Option<usize> {
    F.iter().position(|&f| f == d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Color {
    White,
    Black,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub x: i32,
    pub y: i32,
    pub color: Color,
    pub parity: u8,
}

/// `i` such that `(x + y) mod 4 = 2i + 1`.
#[inline]
pub fn vertex_parity(p: Pt) -> u8 {
    (((p.0 + p.1).rem_euclid(4) - 1) / 2) as u8
}

pub fn color_of(p: Pt) -> Option<Color> {
    match (p.0.rem_euclid(2), p.1.rem_euclid(2)) {
        (1, 0) => Some(Color::White),
        (0, 1) => Some(Color::Black),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceKind {
    /// (odd, odd) face with `(x + y) mod 4 = 2`.
    A,
    /// (odd, odd) face with `(x + y) mod 4 = 0`.
    B,
    /// (even, even) face: two a-edges and two b-edges.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    pub cx: i32,
    pub cy: i32,
    pub kind: FaceKind,
    pub boundary: bool,
}

pub fn face_kind(p: Pt) -> Option<FaceKind> {
    if (p.0 + p.1).rem_euclid(2) != 0 {
        return None;
    }
    if p.0.rem_euclid(2) == 0 {
        return Some(FaceKind::Mixed);
    }
    if (p.0 + p.1).rem_euclid(4) == 2 {
        Some(FaceKind::A)
    } else {
        Some(FaceKind::B)
    }
}

#[inline]
pub fn is_a_face(p: Pt) -> bool {
    face_kind(p) == Some(FaceKind::A)
}

#[inline]
pub fn is_b_face(p: Pt) -> bool {
    face_kind(p) == Some(FaceKind::B)
}

/// The (odd, odd) face bordering the edge `(w, b)`.
#[inline]
pub fn edge_cell(w: Pt, b: Pt) -> Pt {
    (w.0, b.1)
}

/// The (even, even) face bordering the edge `(w, b)`.
#[inline]
pub fn edge_mixed_face(w: Pt, b: Pt) -> Pt {
    (b.0, w.1)
}

/// The a-face and b-face containing a vertex, in that order.
pub fn vertex_faces(v: Pt) -> (Pt, Pt) {
    let (p, q) = if v.0.rem_euclid(2) == 1 {
        ((v.0, v.1 + 1), (v.0, v.1 - 1))
    } else {
        ((v.0 + 1, v.1), (v.0 - 1, v.1))
    };
    if is_a_face(p) {
        (p, q)
    } else {
        (q, p)
    }
}

const NONE: u32 = u32::MAX;

/// A finite set of white and black lattice points with O(1) lookups.
/// Both lists are kept in raster order (y, then x).
#[derive(Clone, Debug)]
pub struct Region {
    x0: i32,
    y0: i32,
    w: i32,
    h: i32,
    wid: Vec<u32>,
    bid: Vec<u32>,
    pub whites: Vec<Pt>,
    pub blacks: Vec<Pt>,
}

impl Region {
    pub fn new(mut whites: Vec<Pt>, mut blacks: Vec<Pt>) -> Result<Region> {
        for &p in &whites {
            if color_of(p) != Some(Color::White) {
                return invalid(format!("({}, {}) is not a white site", p.0, p.1));
            }
        }
        for &p in &blacks {
            if color_of(p) != Some(Color::Black) {
                return invalid(format!("({}, {}) is not a black site", p.0, p.1));
            }
        }
        let key = |p: &Pt| (p.1, p.0);
        whites.sort_by_key(key);
        blacks.sort_by_key(key);
        whites.dedup();
        blacks.dedup();
        let all = whites.iter().chain(blacks.iter());
        let x0 = all.clone().map(|p| p.0).min().unwrap_or(0) - 2;
        let y0 = all.clone().map(|p| p.1).min().unwrap_or(0) - 2;
        let x1 = all.clone().map(|p| p.0).max().unwrap_or(0) + 2;
        let y1 = all.map(|p| p.1).max().unwrap_or(0) + 2;
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut wid = vec![NONE; (w * h) as usize];
        let mut bid = vec![NONE; (w * h) as usize];
        for (i, p) in whites.iter().enumerate() {
            wid[((p.1 - y0) * w + (p.0 - x0)) as usize] = i as u32;
        }
        for (i, p) in blacks.iter().enumerate() {
            bid[((p.1 - y0) * w + (p.0 - x0)) as usize] = i as u32;
        }
        Ok(Region { x0, y0, w, h, wid, bid, whites, blacks })
    }

    #[inline]
    fn slot(&self, p: Pt) -> Option<usize> {
        let (x, y) = (p.0 - self.x0, p.1 - self.y0);
        if x < 0 || y < 0 || x >= self.w || y >= self.h {
            None
        } else {
            Some((y * self.w + x) as usize)
        }
    }

    #[inline]
    pub fn white_index(&self, p: Pt) -> Option<usize> {
        let i = self.wid[self.slot(p)?];
        (i != NONE).then_some(i as usize)
    }

    #[inline]
    pub fn black_index(&self, p: Pt) -> Option<usize> {
        let i = self.bid[self.slot(p)?];
        (i != NONE).then_some(i as usize)
    }

    #[inline]
    pub fn contains(&self, p: Pt) -> bool {
        self.white_index(p).is_some() || self.black_index(p).is_some()
    }

    /// Bounding box `(xmin, ymin, xmax, ymax)` with a margin of 2.
    pub fn bounds(&self) -> (i32, i32, i32, i32) {
        (self.x0, self.y0, self.x0 + self.w - 1, self.y0 + self.h - 1)
    }

    pub fn vertices(&self) -> Vec<Vertex> {
        let mk = |p: &Pt, color| Vertex { x: p.0, y: p.1, color, parity: vertex_parity(*p) };
        self.whites
            .iter()
            .map(|p| mk(p, Color::White))
            .chain(self.blacks.iter().map(|p| mk(p, Color::Black)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub white: u32,
    pub black: u32,
    /// Index into [`F`]: black = white + F[dir].
    pub dir: u8,
    pub weight: f64,
    pub a_edge: bool,
}

/// A weighted bipartite subgraph of the plane lattice.
#[derive(Clone, Debug)]
pub struct Graph {
    pub region: Region,
    pub edges: Vec<Edge>,
    by_white: Vec<u32>,
}

impl Graph {
    /// All lattice edges between sites of `region`, weighted by `weight(w, dir)`.
    pub fn new(region: Region, weight: impl Fn(Pt, usize) -> f64) -> Graph {
        let mut edges = Vec::new();
        let mut by_white = vec![NONE; 4 * region.whites.len()];
        for (wi, &w) in region.whites.iter().enumerate() {
            for (s, &f) in F.iter().enumerate() {
                let b = add(w, f);
                if let Some(bi) = region.black_index(b) {
                    by_white[4 * wi + s] = edges.len() as u32;
                    edges.push(Edge {
                        white: wi as u32,
                        black: bi as u32,
                        dir: s as u8,
                        weight: weight(w, s),
                        a_edge: is_a_face(edge_cell(w, b)),
                    });
                }
            }
        }
        Graph { region, edges, by_white }
    }

    /// Edge id of `(white, white + F[dir])`.
    #[inline]
    pub fn edge_at(&self, white: usize, dir: usize) -> Option<usize> {
        let e = self.by_white[4 * white + dir];
        (e != NONE).then_some(e as usize)
    }

    pub fn edge_between(&self, black: Pt, white: Pt) -> Option<usize> {
        let wi = self.region.white_index(white)?;
        self.edge_at(wi, dir_index(sub(black, white))?)
    }

    pub fn n_white(&self) -> usize {
        self.region.whites.len()
    }

    pub fn n_black(&self) -> usize {
        self.region.blacks.len()
    }

    /// Kasteleyn sign pattern: the imaginary unit on `±e2` edges.
    pub fn kasteleyn(&self) -> KasteleynMatrix {
        let entries = self
            .edges
            .iter()
            .map(|e| (e.black, e.white, kasteleyn_phase(e.dir as usize) * e.weight))
            .collect();
        KasteleynMatrix { rows: self.n_black(), cols: self.n_white(), entries }
    }

    pub fn covering_weight(&self, cov: &Covering) -> f64 {
        cov.black_to_white
            .iter()
            .enumerate()
            .map(|(bi, &wi)| {
                let d = sub(self.region.blacks[bi], self.region.whites[wi as usize]);
                let e = self.edge_at(wi as usize, dir_index(d).unwrap()).unwrap();
                self.edges[e].weight
            })
            .product()
    }
}

#[inline]
pub fn kasteleyn_phase(dir: usize) -> C64 {
    if dir % 2 == 1 {
        C64::new(0.0, 1.0)
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Two-periodic weight of `(w, w + F[dir])`: `a` on a-face edges, `b` otherwise.
pub fn two_periodic_weight(a: f64, b: f64) -> impl Fn(Pt, usize) -> f64 {
    move |w, s| {
        if is_a_face(edge_cell(w, add(w, F[s]))) {
            a
        } else {
            b
        }
    }
}

/// The Aztec diamond graph of size `n` with two-periodic weights.
#[derive(Clone, Debug)]
pub struct DiamondGraph {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub graph: Graph,
}

impl DiamondGraph {
    /// Diamond of arbitrary size `n`; weights need only be positive.
    pub fn with_size(n: usize, a: f64, b: f64) -> Result<DiamondGraph> {
        if n == 0 {
            return invalid("size must be positive");
        }
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return invalid("weights must be positive and finite");
        }
        let n2 = 2 * n as i32;
        let mut whites = Vec::new();
        let mut blacks = Vec::new();
        for y in 0..=n2 {
            for x in 0..=n2 {
                match color_of((x, y)) {
                    Some(Color::White) if (1..n2).contains(&x) => whites.push((x, y)),
                    Some(Color::Black) if (1..n2).contains(&y) => blacks.push((x, y)),
                    _ => {}
                }
            }
        }
        let region = Region::new(whites, blacks)?;
        let graph = Graph::new(region, two_periodic_weight(a, b));
        Ok(DiamondGraph { n, a, b, graph })
    }

    pub fn m(&self) -> Option<usize> {
        (self.n % 4 == 0).then_some(self.n / 4)
    }

    pub fn region(&self) -> &Region {
        &self.graph.region
    }

    /// All face centers `(x, y)`, `x + y` even, in `[0, 2n]^2`.
    pub fn faces(&self) -> Vec<Face> {
        let n2 = 2 * self.n as i32;
        let mut out = Vec::new();
        for y in 0..=n2 {
            for x in 0..=n2 {
                if let Some(kind) = face_kind((x, y)) {
                    let boundary = x == 0 || y == 0 || x == n2 || y == n2;
                    out.push(Face { cx: x, cy: y, kind, boundary });
                }
            }
        }
        out
    }

    pub fn kasteleyn(&self) -> KasteleynMatrix {
        self.graph.kasteleyn()
    }
}

/// Diamond of size `n = 4m` with `a` in (0, 1).
pub fn build_diamond(m: usize, a: f64, b: f64) -> Result<DiamondGraph> {
    if m == 0 {
        return invalid("m must be at least 1");
    }
    if !(a > 0.0 && a < 1.0) {
        return invalid(format!("a = {a} is outside (0, 1)"));
    }
    DiamondGraph::with_size(4 * m, a, b)
}

/// Sparse Kasteleyn matrix, black rows and white columns in raster order.
#[derive(Clone, Debug)]
pub struct KasteleynMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(u32, u32, C64)>,
}

impl KasteleynMatrix {
    pub fn lu(&self) -> Result<BandLu> {
        BandLu::factor(self.rows, &self.entries)
    }

    pub fn det(&self) -> Result<C64> {
        Ok(self.lu()?.det())
    }

    /// LU factors in double-double arithmetic, for diamonds whose inverse
    /// has entries far beyond `1 / f64::EPSILON`.
    pub fn lu_extended(&self) -> Result<BandLu<Cdd>> {
        BandLu::factor(self.rows, &self.entries)
    }

    /// Column `c` of `K^{-1}` from double-double factors, rounded to `f64`,
    /// with `max |K x - e_c|` evaluated in double-double.
    pub fn extended_inverse_column(&self, lu: &BandLu<Cdd>, c: usize) -> (Vec<C64>, f64) {
        let x = lu.inverse_column(c);
        let mut r = vec![Cdd::new(0.0.into(), 0.0.into()); self.rows];
        for &(i, j, v) in &self.entries {
            r[i as usize] += Cdd::from_c64(v) * x[j as usize];
        }
        r[c] -= Cdd::new(1.0.into(), 0.0.into());
        let res = r.iter().fold(0.0f64, |m, z| m.max(z.modulus()));
        (x.iter().map(Scalar::to_c64).collect(), res)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            d[(r as usize, c as usize)] = v;
        }
        d
    }

    /// `(row, col, re, im)` lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,re,im\n");
        for &(r, c, v) in &self.entries {
            s.push_str(&format!("{},{},{},{}\n", r, c, crate::io::format_f64(v.re), crate::io::format_f64(v.im)));
        }
        s
    }
}

/// Default cap on the number of vertices per color for dense inverses.
pub const DENSE_CAP: usize = 5000;

/// Dense inverse of the Kasteleyn matrix, indexed (white, black).
#[derive(Clone, Debug)]
pub struct KInverse {
    pub n: usize,
    /// Column-major by black: `data[b * n + w]`.
    data: Vec<C64>,
}

impl KInverse {
    #[inline]
    pub fn get(&self, white: usize, black: usize) -> C64 {
        self.data[black * self.n + white]
    }

    /// `max |K K^{-1} - I|`.
    pub fn residual(&self, k: &KasteleynMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for b2 in 0..self.n {
            let mut col = vec![C64::new(0.0, 0.0); self.n];
            for &(r, c, v) in &k.entries {
                col[r as usize] += v * self.get(c as usize, b2);
            }
            col[b2] -= 1.0;
            worst = col.iter().fold(worst, |m, z| m.max(z.norm()));
        }
        worst
    }
}

pub fn exact_inverse_kasteleyn(g: &Graph) -> Result<KInverse> {
    exact_inverse_with_cap(g, DENSE_CAP)
}

pub fn exact_inverse_with_cap(g: &Graph, cap: usize) -> Result<KInverse> {
    let n = g.n_black();
    if n != g.n_white() {
        return invalid("Kasteleyn matrix is not square");
    }
    if n > cap {
        return Err(Error::SizeGuard(format!("{n} vertices per color exceeds cap {cap}")));
    }
    let lu = g.kasteleyn().lu()?;
    let data = linalg::inverse_columns(&lu);
    Ok(KInverse { n, data })
}

/// Probability that all edges `(black, white)` are covered.
pub fn local_statistics(g: &Graph, kinv: &KInverse, edges: &[(Pt, Pt)]) -> Result<f64> {
    let mut idx = Vec::with_capacity(edges.len());
    for (i, &(b, w)) in edges.iter().enumerate() {
        if edges[..i].contains(&(b, w)) {
            return invalid("duplicate edge");
        }
        let e = g
            .edge_between(b, w)
            .ok_or_else(|| Error::InvalidParameter(format!("({:?}, {:?}) is not an edge", b, w)))?;
        idx.push(e);
    }
    for i in 0..edges.len() {
        for j in 0..i {
            if edges[i].0 == edges[j].0 || edges[i].1 == edges[j].1 {
                return Ok(0.0);
            }
        }
    }
    let r = idx.len();
    let mut m = DenseMatrix::zeros(r, r);
    for i in 0..r {
        let ei = &g.edges[idx[i]];
        let kbw = kasteleyn_phase(ei.dir as usize) * ei.weight;
        for j in 0..r {
            let ej = &g.edges[idx[j]];
            m[(i, j)] = kbw * kinv.get(ej.white as usize, ei.black as usize);
        }
    }
    Ok(m.det().re)
}

/// A perfect matching, stored as the white partner of each black vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Covering {
    pub black_to_white: Vec<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Covering {
    pub fn new(black_to_white: Vec<u32>) -> Covering {
        Covering { black_to_white, seed: None }
    }

    pub fn white_to_black(&self) -> Vec<u32> {
        let mut out = vec![NONE; self.black_to_white.len()];
        for (b, &w) in self.black_to_white.iter().enumerate() {
            out[w as usize] = b as u32;
        }
        out
    }

    /// Dimers as `(black, white)` coordinate pairs.
    pub fn dimers(&self, region: &Region) -> Vec<(Pt, Pt)> {
        self.black_to_white
            .iter()
            .enumerate()
            .map(|(b, &w)| (region.blacks[b], region.whites[w as usize]))
            .collect()
    }

    pub fn from_dimers(region: &Region, dimers: &[(Pt, Pt)]) -> Result<Covering> {
        let mut b2w = vec![NONE; region.blacks.len()];
        for &(b, w) in dimers {
            let bi = region
                .black_index(b)
                .ok_or_else(|| Error::InvalidCovering(format!("{:?} is not a black site", b)))?;
            let wi = region
                .white_index(w)
                .ok_or_else(|| Error::InvalidCovering(format!("{:?} is not a white site", w)))?;
            b2w[bi] = wi as u32;
        }
        let c = Covering::new(b2w);
        c.validate(region)?;
        Ok(c)
    }

    /// Perfect matching along lattice edges.
    pub fn validate(&self, region: &Region) -> Result<()> {
        if self.black_to_white.len() != region.blacks.len() {
            return Err(Error::InvalidCovering("wrong number of black vertices".into()));
        }
        let mut seen = vec![false; region.whites.len()];
        for (b, &w) in self.black_to_white.iter().enumerate() {
            if w == NONE || w as usize >= seen.len() {
                return Err(Error::InvalidCovering(format!("black {:?} uncovered", region.blacks[b])));
            }
            if std::mem::replace(&mut seen[w as usize], true) {
                return Err(Error::InvalidCovering(format!(
                    "white {:?} covered twice",
                    region.whites[w as usize]
                )));
            }
            if dir_index(sub(region.blacks[b], region.whites[w as usize])).is_none() {
                return Err(Error::InvalidCovering(format!(
                    "{:?}-{:?} is not an edge",
                    region.blacks[b], region.whites[w as usize]
                )));
            }
        }
        if seen.len() != self.black_to_white.len() {
            return Err(Error::InvalidCovering("color classes differ in size".into()));
        }
        Ok(())
    }
}

/// Largest diamond the enumeration oracle accepts.
pub const ENUM_MAX_N: usize = 6;

/// Visit every perfect matching of `g` with its weight. Branches on the
/// lowest-index uncovered black vertex, trying its neighbors in `F` order.
pub fn for_each_covering(g: &Graph, mut visit: impl FnMut(&[u32], f64)) {
    let nb = g.n_black();
    let mut b2w = vec![NONE; nb];
    let mut used = vec![false; g.n_white()];
    let mut nbrs: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nb];
    for e in &g.edges {
        nbrs[e.black as usize].push((e.white, e.weight));
    }
    for (bi, l) in nbrs.iter_mut().enumerate() {
        let b = g.region.blacks[bi];
        l.sort_by_key(|&(w, _)| dir_index(sub(g.region.whites[w as usize], b)).unwrap());
    }
    fn rec(
        k: usize,
        wt: f64,
        nbrs: &[Vec<(u32, f64)>],
        b2w: &mut [u32],
        used: &mut [bool],
        visit: &mut dyn FnMut(&[u32], f64),
    ) {
        if k == nbrs.len() {
            visit(b2w, wt);
            return;
        }
        for &(w, ew) in &nbrs[k] {
            if !used[w as usize] {
                used[w as usize] = true;
                b2w[k] = w;
                rec(k + 1, wt * ew, nbrs, b2w, used, visit);
                used[w as usize] = false;
            }
        }
        b2w[k] = NONE;
    }
    if nb == g.n_white() {
        rec(0, 1.0, &nbrs, &mut b2w, &mut used, &mut visit);
    }
}

/// Every covering of a diamond of size at most [`ENUM_MAX_N`], with weights.
pub fn enumerate_coverings(g: &DiamondGraph) -> Result<Vec<(Covering, f64)>> {
    if g.n > ENUM_MAX_N {
        return Err(Error::SizeGuard(format!("enumeration needs n <= {ENUM_MAX_N}, got {}", g.n)));
    }
    let mut out = Vec::new();
    for_each_covering(&g.graph, |c, w| out.push((Covering::new(c.to_vec()), w)));
    Ok(out)
}

/// `Σ_coverings Π weights` by enumeration.
pub fn partition_function_enum(g: &Graph) -> f64 {
    let mut z = 0.0;
    for_each_covering(g, |_, w| z += w);
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m1_counts() {
        let g = build_diamond(1, 0.5, 1.0).unwrap();
        assert_eq!(g.region().whites.len(), 20);
        assert_eq!(g.region().blacks.len(), 20);
        let xs: Vec<i32> = g.region().whites.iter().map(|p| p.0).collect();
        assert!(xs.iter().all(|x| [1, 3, 5, 7].contains(x)));
        assert_eq!(face_kind((1, 1)), Some(FaceKind::A));
    }

    #[test]
    fn m75_size() {
        let g = build_diamond(75, 0.5, 1.0).unwrap();
        assert_eq!(g.n, 300);
        assert_eq!(g.region().whites.len(), 300 * 301);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_diamond(0, 0.5, 1.0).is_err());
        assert!(build_diamond(1, 1.0, 1.0).is_err());
        assert!(build_diamond(1, 0.0, 1.0).is_err());
    }

    /// The weight rule `a^{(1-k)(1-j)+kj}` for `(w, w + (-1)^k e_i)`, `w in W_j`.
    #[test]
    fn cell_rule_matches_white_parity_formula() {
        for x in -9..9 {
            for y in -9..9 {
                if color_of((x, y)) != Some(Color::White) {
                    continue;
                }
                let j = vertex_parity((x, y)) as i32;
                for s in 0..4 {
                    let k = (s >= 2) as i32;
                    let expo = (1 - k) * (1 - j) + k * j;
                    let w = two_periodic_weight(0.5, 1.0)((x, y), s);
                    assert_eq!(w, 0.5f64.powi(expo));
                }
            }
        }
    }

    /// Entries follow the black-indexed display literally.
    #[test]
    fn kasteleyn_matches_display() {
        let (a, b) = (0.3, 1.7);
        let g = DiamondGraph::with_size(4, a, b).unwrap();
        let k = g.kasteleyn();
        let i = C64::new(0.0, 1.0);
        for &(r, c, v) in &k.entries {
            let x = g.region().blacks[r as usize];
            let y = g.region().whites[c as usize];
            let j = vertex_parity(x) as f64;
            let expect = match sub(y, x) {
                (1, 1) => C64::from(a * (1.0 - j) + b * j),
                (-1, 1) => (a * j + b * (1.0 - j)) * i,
                (-1, -1) => C64::from(a * j + b * (1.0 - j)),
                (1, -1) => (a * (1.0 - j) + b * j) * i,
                _ => unreachable!(),
            };
            assert!((v - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn face_products_negative() {
        let g = DiamondGraph::with_size(5, 0.4, 1.0).unwrap();
        let k = g.kasteleyn();
        let dense = k.to_dense();
        let r = g.region();
        for f in g.faces().iter().filter(|f| !f.boundary) {
            let c = (f.cx, f.cy);
            let vs = [(c.0 + 1, c.1), (c.0, c.1 + 1), (c.0 - 1, c.1), (c.0, c.1 - 1)];
            let mut prod = C64::new(1.0, 0.0);
            for i in 0..4 {
                let (p, q) = (vs[i], vs[(i + 1) % 4]);
                let (b, w) = if color_of(p) == Some(Color::Black) { (p, q) } else { (q, p) };
                prod *= dense[(r.black_index(b).unwrap(), r.white_index(w).unwrap())];
            }
            assert!(prod.im.abs() < 1e-14 && prod.re < 0.0, "face {:?}: {}", c, prod);
        }
    }

    #[test]
    fn enumeration_counts() {
        let g2 = DiamondGraph::with_size(2, 1.0, 1.0).unwrap();
        assert_eq!(enumerate_coverings(&g2).unwrap().len(), 8);
        let g4 = DiamondGraph::with_size(4, 0.5, 1.0).unwrap();
        let all = enumerate_coverings(&g4).unwrap();
        assert_eq!(all.len(), 1024);
        let mut keys: Vec<_> = all.iter().map(|(c, _)| c.black_to_white.clone()).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 1024);
        for (c, w) in &all {
            c.validate(g4.region()).unwrap();
            assert!((g4.graph.covering_weight(c) - w).abs() < 1e-15);
        }
        assert!(DiamondGraph::with_size(7, 0.5, 1.0).map(|g| enumerate_coverings(&g)).unwrap().is_err());
    }

    #[test]
    fn det_matches_enumeration() {
        for n in 1..=5 {
            for &a in &[0.2, 0.5, 0.9] {
                let g = DiamondGraph::with_size(n, a, 1.0).unwrap();
                let z = partition_function_enum(&g.graph);
                let d = g.kasteleyn().det().unwrap().norm();
                assert!(((d - z) / z).abs() < 1e-9, "n={n} a={a}: {d} vs {z}");
            }
        }
        let g = DiamondGraph::with_size(2, 1.0, 1.0).unwrap();
        assert!((g.kasteleyn().det().unwrap().norm() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_and_local_statistics() {
        let g = DiamondGraph::with_size(4, 0.5, 1.0).unwrap();
        let kinv = exact_inverse_kasteleyn(&g.graph).unwrap();
        assert!(kinv.residual(&g.kasteleyn()) < 1e-9);
        let all = enumerate_coverings(&g).unwrap();
        let z: f64 = all.iter().map(|(_, w)| w).sum();
        let r = g.region();
        // single edges, and a few pairs and triples
        let edge_sets: Vec<Vec<usize>> = (0..g.graph.edges.len())
            .map(|e| vec![e])
            .chain((0..40).map(|e| vec![e, (e * 7 + 13) % 64]))
            .chain((0..20).map(|e| vec![e, (e * 5 + 3) % 64, (e * 11 + 29) % 64]))
            .collect();
        for set in edge_sets {
            let mut set = set;
            set.sort();
            set.dedup();
            let pairs: Vec<(Pt, Pt)> = set
                .iter()
                .map(|&e| {
                    let ed = &g.graph.edges[e];
                    (r.blacks[ed.black as usize], r.whites[ed.white as usize])
                })
                .collect();
            let p = local_statistics(&g.graph, &kinv, &pairs).unwrap();
            let exact: f64 = all
                .iter()
                .filter(|(c, _)| {
                    set.iter().all(|&e| {
                        let ed = &g.graph.edges[e];
                        c.black_to_white[ed.black as usize] == ed.white
                    })
                })
                .map(|(_, w)| w)
                .sum::<f64>()
                / z;
            assert!((p - exact).abs() < 1e-9, "{:?}: {} vs {}", pairs, p, exact);
        }
        assert_eq!(local_statistics(&g.graph, &kinv, &[]).unwrap(), 1.0);
        let w = (1, 2);
        let shared = [((0, 1), w), ((2, 1), w)];
        assert_eq!(local_statistics(&g.graph, &kinv, &shared).unwrap(), 0.0);
        assert!(local_statistics(&g.graph, &kinv, &[((0, 1), w), ((0, 1), w)]).is_err());
    }
}
