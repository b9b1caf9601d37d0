//! The box graphs `L_R`, their gauge-equivalent reweightings, drifted
//! directed spanning trees and the tree/dimer correspondence.
//!
//! The three variants share vertices and edges. For `w` in `W̄_j` the edge
//! `(w, w + (-1)^k e_i)` carries `a` to the power
//!
//! * `(1-j)(1-k) + kj` on the plain box (two-periodic weights),
//! * `2kj` on the `w` box,
//! * `2(1-k)(1-j)` on the `f` box.
//!
//! In lattice terms `(-1)^k e_i` is `F[s]` with `k = s / 2`.
//!
//! On the `w` box every dimer at a vertex of `W̄_1` is an arrow `v -> v + 2F[s]`
//! of the primal tree, wired to a single exterior root. Dimers at `W̄_0` give
//! the dual tree, rooted at the corner `(1 - 2R, -2R)`. On the `f` box the
//! roles swap.

use crate::error::{invalid, Error, Result};
use crate::lattice::{add, dir_index, edge_cell, is_a_face, sub, vertex_parity, Covering, Graph, Pt, Region, F};
use crate::linalg::DenseMatrix;
use crate::rng::{stream, StreamRng};
use crate::C64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Plain,
    W,
    F,
}

impl Variant {
    /// Exponent of `a` on `(w, w + F[s])` for `w` in `W̄_j`.
    pub fn exponent(self, j: u8, s: usize) -> i32 {
        let (j, k) = (j as i32, (s / 2) as i32);
        match self {
            Variant::Plain => (1 - j) * (1 - k) + k * j,
            Variant::W => 2 * k * j,
            Variant::F => 2 * (1 - k) * (1 - j),
        }
    }
}

/// White and black sites of `L_R`.
pub fn box_sites(r: usize) -> (Vec<Pt>, Vec<Pt>) {
    let r = r as i32;
    let mut w = Vec::new();
    for i in 0..=2 * r - 2 {
        for j in 0..=2 * r - 2 {
            w.push((2 * i + 1 - 2 * r, 2 * j + 2 - 2 * r));
        }
    }
    for i in 1..r {
        w.push((4 * i + 1 - 2 * r, -2 * r));
    }
    for j in 0..r {
        w.push((-1 - 2 * r, 4 * j + 2 - 2 * r));
        w.push((4 * j + 1 - 2 * r, 2 * r));
        w.push((2 * r - 1, 4 * j + 2 - 2 * r));
    }
    let mut b = Vec::new();
    for i in 0..2 * r {
        for j in 0..2 * r {
            b.push((2 * i - 2 * r, 2 * j + 1 - 2 * r));
        }
    }
    (w, b)
}

/// Root of the dual tree on the `w` box (and of the primal tree on the `f` box).
pub fn corner_root(r: usize) -> Pt {
    let r = r as i32;
    (1 - 2 * r, -2 * r)
}

#[derive(Clone, Debug)]
pub struct BoxGraph {
    pub r: usize,
    pub a: f64,
    pub variant: Variant,
    pub graph: Graph,
    /// Exponent of `a` on each edge of `graph`.
    pub exponents: Vec<i32>,
}

pub fn build_box(r: usize, a: f64, variant: Variant) -> Result<BoxGraph> {
    if r <= 1 {
        return invalid(format!("R = {r} must exceed 1"));
    }
    if !(a > 0.0 && a < 1.0) {
        return invalid(format!("a = {a} is outside (0, 1)"));
    }
    let (w, b) = box_sites(r);
    let region = Region::new(w, b)?;
    let graph = Graph::new(region, |w, s| a.powi(variant.exponent(vertex_parity(w), s)));
    let exponents = graph
        .edges
        .iter()
        .map(|e| variant.exponent(vertex_parity(graph.region.whites[e.white as usize]), e.dir as usize))
        .collect();
    Ok(BoxGraph { r, a, variant, graph, exponents })
}

impl BoxGraph {
    pub fn white(&self, i: u32) -> Pt {
        self.graph.region.whites[i as usize]
    }

    pub fn black(&self, i: u32) -> Pt {
        self.graph.region.blacks[i as usize]
    }

    /// Alternating weight product around every face bounded by four edges,
    /// keyed by face center: `w(w1,b1) w(w2,b2) / (w(w1,b2) w(w2,b1))`.
    pub fn face_weights(&self) -> Vec<(Pt, f64)> {
        let (x0, y0, x1, y1) = self.graph.region.bounds();
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                if (x + y).rem_euclid(2) != 0 {
                    continue;
                }
                let c = (x, y);
                let around = [add(c, (1, 0)), add(c, (0, 1)), add(c, (-1, 0)), add(c, (0, -1))];
                let mut ws = Vec::new();
                let mut bs = Vec::new();
                for p in around {
                    if self.graph.region.white_index(p).is_some() {
                        ws.push(p);
                    } else if self.graph.region.black_index(p).is_some() {
                        bs.push(p);
                    }
                }
                if ws.len() != 2 || bs.len() != 2 {
                    continue;
                }
                let wt = |w: Pt, b: Pt| self.graph.edge_between(b, w).map(|e| self.graph.edges[e].weight);
                if let (Some(p), Some(q), Some(u), Some(v)) =
                    (wt(ws[0], bs[0]), wt(ws[1], bs[1]), wt(ws[0], bs[1]), wt(ws[1], bs[0]))
                {
                    out.push((c, p * q / (u * v)));
                }
            }
        }
        out
    }
}

/// Vertex multipliers of a gauge transformation, as exponents of `a`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeMultipliers {
    pub r: usize,
    pub target: Variant,
    /// Indexed like the box's white sites.
    pub white: Vec<i32>,
    pub black: Vec<i32>,
}

/// Multipliers taking the plain box to `target`.
///
/// `w` box: whites in `W̄_j` get `a^{j + (x2 - 2 + 2R)/2}`, blacks `a^{-(y2 - 1 + 2R)/2}`.
/// The `f` box uses the reciprocals.
pub fn gauge_multipliers(r: usize, target: Variant) -> Result<GaugeMultipliers> {
    let sign = match target {
        Variant::W => 1,
        Variant::F => -1,
        Variant::Plain => return invalid("gauge target must be the w or f box"),
    };
    if r <= 1 {
        return invalid(format!("R = {r} must exceed 1"));
    }
    let (w, b) = box_sites(r);
    let region = Region::new(w, b)?;
    let ri = r as i32;
    let white = region
        .whites
        .iter()
        .map(|&p| sign * (vertex_parity(p) as i32 + (p.1 - 2 + 2 * ri) / 2))
        .collect();
    let black = region.blacks.iter().map(|&p| -sign * ((p.1 - 1 + 2 * ri) / 2)).collect();
    Ok(GaugeMultipliers { r, target, white, black })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeReport {
    pub r: usize,
    pub target: Variant,
    pub edges: usize,
    /// Edges whose transformed exponent differs from the target's.
    pub exponent_mismatches: usize,
    /// Largest relative error of the transformed weights evaluated at `a`.
    pub max_rel_err: f64,
}

/// Apply the multipliers to the plain box and compare with `target`, in
/// exponent arithmetic and in floating point at `a`.
pub fn check_gauge(r: usize, a: f64, target: Variant) -> Result<GaugeReport> {
    let plain = build_box(r, a, Variant::Plain)?;
    let tgt = build_box(r, a, target)?;
    let g = gauge_multipliers(r, target)?;
    let mut mism = 0;
    let mut worst: f64 = 0.0;
    for (i, e) in plain.graph.edges.iter().enumerate() {
        let ex = g.white[e.white as usize] + plain.exponents[i] + g.black[e.black as usize];
        if ex != tgt.exponents[i] {
            mism += 1;
        }
        let v = a.powi(g.white[e.white as usize]) * e.weight * a.powi(g.black[e.black as usize]);
        let t = tgt.graph.edges[i].weight;
        worst = worst.max((v - t).abs() / t);
    }
    Ok(GaugeReport { r, target, edges: plain.graph.edges.len(), exponent_mismatches: mism, max_rel_err: worst })
}

/// Marks an arrow into the root.
pub const ROOT: u32 = u32::MAX;
/// Marks a missing arrow.
pub const NO_MOVE: u32 = u32::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Root {
    /// Every exit from the vertex set goes to one exterior vertex.
    Wired,
    /// A single root vertex; other exits are not edges.
    Vertex(Pt),
}

/// Directed graph on which trees live: arrows `v -> v + 2F[s]`.
#[derive(Clone, Debug)]
pub struct TreeGraph {
    pub vertices: Vec<Pt>,
    index: HashMap<Pt, u32>,
    /// Target vertex index, [`ROOT`] or [`NO_MOVE`] per direction.
    pub moves: Vec<[u32; 4]>,
    /// Exponent of `a` on each arrow.
    pub exponents: Vec<[i32; 4]>,
    pub root: Root,
}

impl TreeGraph {
    fn from_parts(vertices: Vec<Pt>, root: Root, allowed: impl Fn(Pt, usize) -> Option<i32>) -> TreeGraph {
        let index: HashMap<Pt, u32> = vertices.iter().enumerate().map(|(i, &p)| (p, i as u32)).collect();
        let mut moves = Vec::with_capacity(vertices.len());
        let mut exponents = Vec::with_capacity(vertices.len());
        for &v in &vertices {
            let mut mv = [NO_MOVE; 4];
            let mut ex = [0; 4];
            for s in 0..4 {
                let Some(e) = allowed(v, s) else { continue };
                let t = add(v, (2 * F[s].0, 2 * F[s].1));
                let target = match (index.get(&t), root) {
                    (Some(&i), _) => i,
                    (None, Root::Wired) => ROOT,
                    (None, Root::Vertex(r)) if t == r => ROOT,
                    (None, Root::Vertex(_)) => continue,
                };
                mv[s] = target;
                ex[s] = e;
            }
            moves.push(mv);
            exponents.push(ex);
        }
        TreeGraph { vertices, index, moves, exponents, root }
    }

    /// Wired window of `side x side` vertices `(1, 2) + 2i e1 + 2j e2`, all four
    /// arrows present with weights `(1, 1, a^2, a^2)` in directions `(e1, e2, -e1, -e2)`.
    pub fn wired_window(side: usize) -> TreeGraph {
        let mut vs = Vec::new();
        for j in 0..side as i32 {
            for i in 0..side as i32 {
                vs.push((1 + 2 * i - 2 * j, 2 + 2 * i + 2 * j));
            }
        }
        TreeGraph::from_parts(vs, Root::Wired, |_, s| Some(2 * (s / 2) as i32))
    }

    /// Tree graph on the whites of class `j` of a box: class 1 is wired,
    /// class 0 is rooted at the corner. Arrow weights are the box's edge weights.
    pub fn of_box(bx: &BoxGraph, j: u8) -> TreeGraph {
        let region = &bx.graph.region;
        let vs: Vec<Pt> = region.whites.iter().copied().filter(|&p| vertex_parity(p) == j).collect();
        let root = if j == 1 { Root::Wired } else { Root::Vertex(corner_root(bx.r)) };
        TreeGraph::from_parts(vs, root, |v, s| {
            let wi = region.white_index(v)?;
            let e = bx.graph.edge_at(wi, s)?;
            Some(bx.exponents[e])
        })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn index_of(&self, p: Pt) -> Option<u32> {
        self.index.get(&p).copied()
    }

    /// `Σ_trees Π a^{exponent}` by the directed matrix-tree theorem.
    pub fn tree_partition_function(&self, a: f64) -> f64 {
        let n = self.len();
        let mut m = DenseMatrix::zeros(n, n);
        for v in 0..n {
            for s in 0..4 {
                let t = self.moves[v][s];
                if t == NO_MOVE {
                    continue;
                }
                let w = a.powi(self.exponents[v][s]);
                m[(v, v)] += C64::new(w, 0.0);
                if t != ROOT {
                    m[(v, t as usize)] -= C64::new(w, 0.0);
                }
            }
        }
        m.det().re
    }
}

/// A directed spanning tree: one outgoing arrow per vertex, all chains ending at the root.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirectedForest {
    pub vertices: Vec<Pt>,
    /// Arrow direction of each vertex: `v -> v + 2F[dir]`.
    pub dir: Vec<u8>,
    pub root: Root,
}

impl DirectedForest {
    /// Parent-pointer form: `None` means the arrow goes to the root.
    pub fn parents(&self, tg: &TreeGraph) -> Vec<Option<Pt>> {
        (0..self.vertices.len())
            .map(|v| {
                let t = tg.moves[v][self.dir[v] as usize];
                (t != ROOT).then(|| tg.vertices[t as usize])
            })
            .collect()
    }

    /// Checks arrows exist and every chain reaches the root.
    pub fn validate(&self, tg: &TreeGraph) -> Result<()> {
        if self.vertices != tg.vertices || self.dir.len() != tg.len() {
            return Err(Error::Forest("vertex set does not match the tree graph".into()));
        }
        let n = tg.len();
        for v in 0..n {
            if self.dir[v] > 3 || tg.moves[v][self.dir[v] as usize] == NO_MOVE {
                return Err(Error::Forest(format!("no arrow from {:?} in direction {}", tg.vertices[v], self.dir[v])));
            }
        }
        // 0 unvisited, 1 on the current chain, 2 reaches the root
        let mut state = vec![0u8; n];
        for s in 0..n {
            let mut chain = Vec::new();
            let mut v = s as u32;
            loop {
                if v == ROOT || state[v as usize] == 2 {
                    break;
                }
                if state[v as usize] == 1 {
                    return Err(Error::Forest(format!("cycle through {:?}", tg.vertices[v as usize])));
                }
                state[v as usize] = 1;
                chain.push(v);
                v = tg.moves[v as usize][self.dir[v as usize] as usize];
            }
            for c in chain {
                state[c as usize] = 2;
            }
        }
        Ok(())
    }

    pub fn exponent(&self, tg: &TreeGraph) -> i32 {
        (0..self.dir.len()).map(|v| tg.exponents[v][self.dir[v] as usize]).sum()
    }

    pub fn weight(&self, tg: &TreeGraph, a: f64) -> f64 {
        a.powi(self.exponent(tg))
    }
}

/// Counters from one run of Wilson's algorithm.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct WalkStats {
    pub steps: u64,
    /// Steps taken in each direction `F[s]`, loop-erased ones included.
    pub dir_counts: [u64; 4],
}

pub const WALK_CAP: u64 = 1_000_000_000;

/// Wilson's algorithm with walks started from the vertices in `order`.
pub fn wilson(tg: &TreeGraph, a: f64, order: &[u32], rng: &mut StreamRng) -> Result<(DirectedForest, WalkStats)> {
    let n = tg.len();
    let cum: Vec<[f64; 4]> = (0..n)
        .map(|v| {
            let mut c = [0.0; 4];
            let mut acc = 0.0;
            for s in 0..4 {
                if tg.moves[v][s] != NO_MOVE {
                    acc += a.powi(tg.exponents[v][s]);
                }
                c[s] = acc;
            }
            c
        })
        .collect();
    if let Some(v) = (0..n).find(|&v| cum[v][3] == 0.0) {
        return Err(Error::Forest(format!("vertex {:?} has no outgoing arrow", tg.vertices[v])));
    }
    let mut in_tree = vec![false; n];
    let mut next = vec![0u8; n];
    let mut stats = WalkStats::default();
    for &start in order {
        let mut u = start as usize;
        while !in_tree[u] {
            let x = rng.random::<f64>() * cum[u][3];
            let s = (0..4).find(|&s| x < cum[u][s] && tg.moves[u][s] != NO_MOVE).unwrap_or(3);
            next[u] = s as u8;
            stats.steps += 1;
            stats.dir_counts[s] += 1;
            if stats.steps > WALK_CAP {
                return Err(Error::Forest("random walk exceeded the step cap".into()));
            }
            let t = tg.moves[u][s];
            if t == ROOT {
                break;
            }
            u = t as usize;
        }
        let mut u = start as u32;
        while u != ROOT && !in_tree[u as usize] {
            in_tree[u as usize] = true;
            u = tg.moves[u as usize][next[u as usize] as usize];
        }
    }
    if in_tree.iter().any(|&b| !b) {
        return Err(Error::Forest("ordering does not cover every vertex".into()));
    }
    Ok((DirectedForest { vertices: tg.vertices.clone(), dir: next, root: tg.root }, stats))
}

/// Wilson's algorithm in vertex order with the random stream `(seed, index)`.
pub fn wilson_sample(tg: &TreeGraph, a: f64, seed: u64, index: u64) -> Result<(DirectedForest, WalkStats)> {
    let order: Vec<u32> = (0..tg.len() as u32).collect();
    wilson(tg, a, &order, &mut stream(seed, index))
}

/// Every arborescence of a small tree graph with its weight.
pub fn enumerate_trees(tg: &TreeGraph, a: f64) -> Result<Vec<(DirectedForest, f64)>> {
    let n = tg.len();
    let opts: Vec<Vec<u8>> =
        (0..n).map(|v| (0..4u8).filter(|&s| tg.moves[v][s as usize] != NO_MOVE).collect()).collect();
    let space: f64 = opts.iter().map(|o| o.len() as f64).product();
    if space > 1e7 {
        return Err(Error::SizeGuard(format!("{space} arrow choices is too many to enumerate trees")));
    }
    let mut out = Vec::new();
    let mut pick = vec![0usize; n];
    loop {
        let f = DirectedForest {
            vertices: tg.vertices.clone(),
            dir: (0..n).map(|v| opts[v][pick[v]]).collect(),
            root: tg.root,
        };
        if f.validate(tg).is_ok() {
            let w = f.weight(tg, a);
            out.push((f, w));
        }
        let mut k = 0;
        while k < n {
            pick[k] += 1;
            if pick[k] < opts[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    Ok(out)
}

fn primal_class(bx: &BoxGraph) -> Result<u8> {
    match bx.variant {
        Variant::W => Ok(1),
        Variant::F => Ok(0),
        Variant::Plain => invalid("the tree correspondence needs the w or f box"),
    }
}

/// Primal and dual tree graphs of a `w` or `f` box.
pub fn tree_graphs(bx: &BoxGraph) -> Result<(TreeGraph, TreeGraph)> {
    let j = primal_class(bx)?;
    Ok((TreeGraph::of_box(bx, j), TreeGraph::of_box(bx, 1 - j)))
}

/// The dimer covering of a primal tree. The dual tree is rebuilt by a
/// breadth-first search from its root over the dual arrows whose black
/// vertex is not used by the primal tree.
pub fn tree_to_dimers(bx: &BoxGraph, primal: &DirectedForest) -> Result<Covering> {
    let (ptg, dtg) = tree_graphs(bx)?;
    primal.validate(&ptg)?;
    let region = &bx.graph.region;
    let nb = region.blacks.len();
    let mut b2w = vec![u32::MAX; nb];
    for (v, &p) in ptg.vertices.iter().enumerate() {
        let b = add(p, F[primal.dir[v] as usize]);
        let bi = region.black_index(b).ok_or_else(|| Error::Forest(format!("no black at {b:?}")))?;
        b2w[bi] = region.white_index(p).unwrap() as u32;
    }
    let dual = dual_tree(bx, &dtg, &b2w)?;
    for (v, &p) in dtg.vertices.iter().enumerate() {
        let bi = region.black_index(add(p, F[dual.dir[v] as usize])).unwrap();
        b2w[bi] = region.white_index(p).unwrap() as u32;
    }
    if let Some(bi) = b2w.iter().position(|&w| w == u32::MAX) {
        return Err(Error::Forest(format!("black {:?} left uncovered", region.blacks[bi])));
    }
    Ok(Covering::new(b2w))
}

fn dual_tree(bx: &BoxGraph, dtg: &TreeGraph, b2w: &[u32]) -> Result<DirectedForest> {
    let region = &bx.graph.region;
    let n = dtg.len();
    let mut incoming: HashMap<u32, Vec<(u32, u8)>> = HashMap::new();
    for v in 0..n {
        for s in 0..4 {
            let t = dtg.moves[v][s];
            if t == NO_MOVE {
                continue;
            }
            let bi = region.black_index(add(dtg.vertices[v], F[s])).unwrap();
            if b2w[bi] == u32::MAX {
                incoming.entry(t).or_default().push((v as u32, s as u8));
            }
        }
    }
    let mut dir = vec![u8::MAX; n];
    let mut queue = VecDeque::from([ROOT]);
    while let Some(t) = queue.pop_front() {
        for &(v, s) in incoming.get(&t).map(|x| x.as_slice()).unwrap_or(&[]) {
            if dir[v as usize] == u8::MAX {
                dir[v as usize] = s;
                queue.push_back(v);
            }
        }
    }
    if let Some(v) = dir.iter().position(|&d| d == u8::MAX) {
        return Err(Error::Forest(format!("dual vertex {:?} not reached from the root", dtg.vertices[v])));
    }
    let f = DirectedForest { vertices: dtg.vertices.clone(), dir, root: dtg.root };
    f.validate(dtg)?;
    Ok(f)
}

/// Read the primal and dual trees off a covering of a `w` or `f` box.
pub fn dimers_to_trees(bx: &BoxGraph, cov: &Covering) -> Result<(DirectedForest, DirectedForest)> {
    let (ptg, dtg) = tree_graphs(bx)?;
    let region = &bx.graph.region;
    cov.validate(region).map_err(|e| Error::Forest(format!("not a perfect matching: {e}")))?;
    let w2b = cov.white_to_black();
    let read = |tg: &TreeGraph| -> Result<DirectedForest> {
        let dir = tg
            .vertices
            .iter()
            .map(|&p| {
                let wi = region.white_index(p).unwrap();
                let b = region.blacks[w2b[wi] as usize];
                dir_index(sub(b, p)).map(|s| s as u8).ok_or_else(|| Error::Forest("covering uses a non-edge".into()))
            })
            .collect::<Result<Vec<u8>>>()?;
        let f = DirectedForest { vertices: tg.vertices.clone(), dir, root: tg.root };
        f.validate(tg)?;
        Ok(f)
    };
    Ok((read(&ptg)?, read(&dtg)?))
}

/// Exhaustive comparison of dimer and tree probabilities on a small box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BijectionReport {
    pub r: usize,
    pub a: f64,
    pub variant: Variant,
    pub coverings: usize,
    pub trees: usize,
    /// `|det K|` of the box.
    pub kasteleyn_z: f64,
    /// Matrix-tree partition function of the primal tree graph.
    pub tree_z: f64,
    /// Largest `|P_dimer - P_tree| / P_tree` over all coverings.
    pub max_rel_err: f64,
    /// Every covering maps to a distinct primal tree and back.
    pub bijective: bool,
}

pub fn bijection_report(r: usize, a: f64, variant: Variant) -> Result<BijectionReport> {
    let bx = build_box(r, a, variant)?;
    let (ptg, _) = tree_graphs(&bx)?;
    let kz = bx.graph.kasteleyn().det()?.norm();
    let tz = ptg.tree_partition_function(a);
    let trees = enumerate_trees(&ptg, a)?;
    let mut seen = std::collections::HashSet::new();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut bij = true;
    let mut err = None;
    crate::lattice::for_each_covering(&bx.graph, |b2w, w| {
        if err.is_some() {
            return;
        }
        count += 1;
        let cov = Covering::new(b2w.to_vec());
        match dimers_to_trees(&bx, &cov) {
            Ok((p, _)) => {
                let back = tree_to_dimers(&bx, &p);
                if back.as_ref().ok() != Some(&cov) {
                    bij = false;
                }
                let pt = p.weight(&ptg, a) / tz;
                worst = worst.max((w / kz - pt).abs() / pt);
                if !seen.insert(p) {
                    bij = false;
                }
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    bij &= seen.len() == trees.len();
    Ok(BijectionReport {
        r,
        a,
        variant,
        coverings: count,
        trees: trees.len(),
        kasteleyn_z: kz,
        tree_z: tz,
        max_rel_err: worst,
        bijective: bij,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub r: usize,
    pub white: Pt,
    pub black: Pt,
    pub finite: C64,
    pub smooth: C64,
    pub discrepancy: f64,
    /// `max |(K K^{-1} - I) e_black|` for the computed column.
    pub residual: f64,
}

/// `|K_R^{-1}(x, y) - K^{-1}_{smooth}(x, y)|` on the plain box for each `R`
/// and each `(white, black)` pair.
pub fn box_kinv_convergence(rs: &[usize], a: f64, pairs: &[(Pt, Pt)]) -> Result<Vec<ConvergenceRow>> {
    let kc = crate::kernels::KernelCache::new(a)?;
    let mut out = Vec::new();
    for &r in rs {
        let bx = build_box(r, a, Variant::Plain)?;
        let k = bx.graph.kasteleyn();
        let lu = k.lu()?;
        let region = &bx.graph.region;
        for &(x, y) in pairs {
            let wi = region
                .white_index(x)
                .ok_or_else(|| Error::InvalidParameter(format!("{x:?} is not a white vertex of L_{r}")))?;
            let bi = region
                .black_index(y)
                .ok_or_else(|| Error::InvalidParameter(format!("{y:?} is not a black vertex of L_{r}")))?;
            let col = lu.inverse_column(bi);
            let mut res = vec![C64::new(0.0, 0.0); k.rows];
            for &(rr, c, v) in &k.entries {
                res[rr as usize] += v * col[c as usize];
            }
            res[bi] -= 1.0;
            let residual = res.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            let smooth = kc.smooth_kinv(x, y)?;
            out.push(ConvergenceRow {
                r,
                white: x,
                black: y,
                finite: col[wi],
                smooth,
                discrepancy: (col[wi] - smooth).norm(),
                residual,
            });
        }
    }
    Ok(out)
}

/// Whether the plain box weights agree with the two-periodic plane weights.
pub fn plain_matches_plane(bx: &BoxGraph) -> bool {
    bx.graph.edges.iter().enumerate().all(|(i, e)| {
        let w = bx.white(e.white);
        let on_a = is_a_face(edge_cell(w, add(w, F[e.dir as usize])));
        on_a == (bx.exponents[i] == 1) && (bx.exponents[i] == 0 || bx.exponents[i] == 1)
    })
}

/// Loop and path content of tree-induced coverings of the `w` box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForestStatistics {
    pub r: usize,
    pub a: f64,
    pub samples: usize,
    /// Fraction of samples with a path entering the inner half-window.
    pub spanning_frequency: f64,
    /// Fraction of a-dimers in the inner half-window that are on paths.
    pub path_dimer_fraction: f64,
    /// Every sample was a single tree reaching the wired root.
    pub single_tree: bool,
    pub mean_walk_steps: f64,
}

/// Inner half-window of `L_R`: `|x|, |y| <= R`.
pub fn in_inner_window(r: usize, p: Pt) -> bool {
    let r = r as i32;
    p.0.abs() <= r && p.1.abs() <= r
}

/// Wilson samples on the `w` box, squished and decomposed.
pub fn forest_statistics(r: usize, a: f64, samples: usize, seed: u64) -> Result<ForestStatistics> {
    use rayon::prelude::*;
    let bx = build_box(r, a, Variant::W)?;
    let (ptg, _) = tree_graphs(&bx)?;
    let per: Vec<(bool, usize, usize, bool, u64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let (f, st) = wilson_sample(&ptg, a, seed, i)?;
            let single = f.validate(&ptg).is_ok();
            let cov = tree_to_dimers(&bx, &f)?;
            let (sq, dec, _) = box_decomposition(&bx, &cov)?;
            let mut on_path = vec![false; sq.dimers.len()];
            for p in &dec.paths {
                for &id in &p.dimers {
                    on_path[id as usize] = true;
                }
            }
            let mut inner = 0;
            let mut inner_path = 0;
            for (id, d) in sq.dimers.iter().enumerate() {
                if in_inner_window(r, d.mixed) {
                    inner += 1;
                    inner_path += on_path[id] as usize;
                }
            }
            Ok((inner_path > 0, inner, inner_path, single, st.steps))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per.len().max(1) as f64;
    let inner: usize = per.iter().map(|t| t.1).sum();
    let inner_path: usize = per.iter().map(|t| t.2).sum();
    Ok(ForestStatistics {
        r,
        a,
        samples,
        spanning_frequency: per.iter().filter(|t| t.0).count() as f64 / n,
        path_dimer_fraction: if inner == 0 { 0.0 } else { inner_path as f64 / inner as f64 },
        single_tree: per.iter().all(|t| t.3),
        mean_walk_steps: per.iter().map(|t| t.4 as f64).sum::<f64>() / n,
    })
}

/// Squish and decompose a covering of a box; also returns the a-height,
/// anchored at `h(0, 0) = 0`.
pub fn box_decomposition(
    bx: &BoxGraph,
    cov: &Covering,
) -> Result<(crate::squish::SquishedConfig, crate::squish::Decomposition, crate::heights::HeightField)> {
    let h = crate::heights::height_function_on(&bx.graph, cov, (0, 0), 0)?;
    let ha = crate::heights::a_height(&h);
    let (sq, dec) = crate::squish::squish_and_decompose(&bx.graph, cov, &ha)?;
    Ok((sq, dec, ha))
}
