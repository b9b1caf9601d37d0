//! Verification harness: Peierls tail bounds, exact coupling distances
//! between the diamond and the smooth phase, smooth-phase decorrelation and
//! the loop-orientation symmetry.

use crate::error::{invalid, Error, Result};
use crate::heights::{a_height, height_function_on, loop_height};
use crate::kernels::{derived_constants, scaled_point, KernelCache, ScaledPoint};
use crate::lattice::{
    add, edge_mixed_face, is_a_face, kasteleyn_phase, two_periodic_weight, DiamondGraph, Graph, Pt, F,
};
use crate::linalg::det_in_place;
use crate::measures::analyze_covering;
use crate::sampler::{Sampler, SamplerConfig};
use crate::squish::double_edge_chains;
use crate::stats::{clopper_pearson_upper, mean_se, two_sample_chi_square};
use crate::trees::{box_decomposition, build_box, tree_graphs, tree_to_dimers, wilson_sample, Variant};
use crate::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// One-sided confidence used by every tail check.
pub const CONFIDENCE: f64 = 0.99;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub a: f64,
    pub d: usize,
    pub s_size: usize,
    pub n: usize,
    pub samples: usize,
    pub bound: f64,
    pub hits: u64,
    pub empirical: f64,
    /// Clopper-Pearson upper limit of the tail probability.
    pub upper: f64,
    pub pass: bool,
}

/// `|S| (3a)^d / (1 - 3a)`, for `a < 1/3`.
pub fn loop_tail_bound(a: f64, d: usize, s: usize) -> Result<f64> {
    if !(a > 0.0 && a < 1.0 / 3.0) {
        return invalid(format!("the loop bound needs a in (0, 1/3), got {a}"));
    }
    Ok(s as f64 * (3.0 * a).powi(d as i32) / (1.0 - 3.0 * a))
}

/// `2 |S| a^d / (1 - a)`.
pub fn double_edge_tail_bound(a: f64, d: usize, s: usize) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return invalid(format!("a = {a} is outside (0, 1)"));
    }
    Ok(2.0 * s as f64 * a.powi(d as i32) / (1.0 - a))
}

/// The a-edge `((4m+1, 4m+2), (4m+2, 4m+1))` on the central a-face of a diamond of size `n = 4m`.
pub fn central_a_edge(n: usize) -> (Pt, Pt) {
    let c = (n as i32 + 1, n as i32 + 1);
    (add(c, (0, 1)), add(c, (1, 0)))
}

/// Longest loop and longest double-edge chain through a set of a-edges, per sample.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct TailSample {
    pub loop_len: usize,
    pub chain_len: usize,
}

/// Samples a diamond of size `n` and records, for each sample, the longest
/// loop and the longest double-edge chain with an a-dimer on an edge of `s`.
pub fn tail_samples(n: usize, a: f64, s: &[(Pt, Pt)], samples: usize, seed: u64) -> Result<Vec<TailSample>> {
    for &(w, b) in s {
        if !is_a_face(crate::lattice::edge_cell(w, b)) {
            return invalid(format!("({w:?}, {b:?}) is not an a-edge"));
        }
    }
    let g = DiamondGraph::with_size(n, a, 1.0)?;
    let sampler = Sampler::new(SamplerConfig::with_size(n, a, seed))?;
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let cov = sampler.sample_index(i);
            let (_, sq, dec) = analyze_covering(&g, &cov)?;
            let on_s = |id: u32| {
                let d = &sq.dimers[id as usize];
                s.contains(&(d.white, d.black))
            };
            let loop_len = dec.loops.iter().filter(|l| l.dimers.iter().any(|&id| on_s(id))).map(|l| l.len()).max();
            let mut chain_len = 0;
            let s_mixed: Vec<Pt> = s
                .iter()
                .filter(|&&(w, b)| sq.dimers.iter().any(|d| d.white == w && d.black == b))
                .map(|&(w, b)| edge_mixed_face(w, b))
                .collect();
            if !s_mixed.is_empty() {
                let doubled: Vec<Pt> = dec.double_edges.iter().map(|&(x, _)| sq.dimers[x as usize].mixed).collect();
                for (start, len) in double_edge_chains(&sq, &dec) {
                    let dir = chain_direction(&doubled, start);
                    let hit = (0..len as i32 / 2)
                        .any(|j| s_mixed.contains(&(start.0 + 2 * j * dir.0, start.1 + 2 * j * dir.1)));
                    if hit {
                        chain_len = chain_len.max(len);
                    }
                }
            }
            Ok(TailSample { loop_len: loop_len.unwrap_or(0), chain_len })
        })
        .collect()
}

fn chain_direction(doubled: &[Pt], start: Pt) -> Pt {
    for d in [(1, 1), (1, -1)] {
        if doubled.contains(&(start.0 + 2 * d.0, start.1 + 2 * d.1)) {
            return d;
        }
    }
    (1, 1)
}

fn report(name: &str, a: f64, d: usize, s: usize, n: usize, bound: f64, hits: u64, samples: usize) -> BoundReport {
    let upper = clopper_pearson_upper(hits, samples as u64, CONFIDENCE);
    BoundReport {
        name: name.into(),
        a,
        d,
        s_size: s,
        n,
        samples,
        bound,
        hits,
        empirical: hits as f64 / samples.max(1) as f64,
        upper,
        pass: upper <= bound,
    }
}

/// Loop tail check from precomputed samples.
pub fn loop_report(ts: &[TailSample], a: f64, d: usize, s: usize, n: usize) -> Result<BoundReport> {
    let bound = loop_tail_bound(a, d, s)?;
    let hits = ts.iter().filter(|t| t.loop_len >= d && t.loop_len > 0).count() as u64;
    Ok(report("peierls_loops", a, d, s, n, bound, hits, ts.len()))
}

/// Double-edge tail check from precomputed samples.
pub fn double_edge_report(ts: &[TailSample], a: f64, d: usize, s: usize, n: usize) -> Result<BoundReport> {
    let bound = double_edge_tail_bound(a, d, s)?;
    let hits = ts.iter().filter(|t| t.chain_len >= d && t.chain_len > 0).count() as u64;
    Ok(report("peierls_double_edges", a, d, s, n, bound, hits, ts.len()))
}

/// Peierls loop bound at the central a-edge of a diamond of size `n`.
pub fn peierls_loops(a: f64, d: usize, n: usize, samples: usize, seed: u64) -> Result<BoundReport> {
    loop_tail_bound(a, d, 1)?;
    let ts = tail_samples(n, a, &[central_a_edge(n)], samples, seed)?;
    loop_report(&ts, a, d, 1, n)
}

/// Peierls double-edge bound at the central a-edge of a diamond of size `n`.
pub fn peierls_double_edges(a: f64, d: usize, n: usize, samples: usize, seed: u64) -> Result<BoundReport> {
    double_edge_tail_bound(a, d, 1)?;
    let ts = tail_samples(n, a, &[central_a_edge(n)], samples, seed)?;
    double_edge_report(&ts, a, d, 1, n)
}

/// Closed non-backtracking edge-simple walks of length `d` on the squished
/// square lattice that start with a fixed edge, for each `d <= dmax`.
/// These bound the number of loop shapes through an edge.
pub fn loop_shape_counts(dmax: usize) -> Vec<(usize, u64)> {
    use std::collections::HashSet;
    fn rec(pos: Pt, last: usize, len: usize, dmax: usize, used: &mut HashSet<(Pt, Pt)>, counts: &mut [u64]) {
        if len >= dmax {
            return;
        }
        for (s, f) in F.iter().enumerate() {
            if len > 0 && s == (last + 2) % 4 {
                continue;
            }
            let next = (pos.0 + f.0, pos.1 + f.1);
            let key = if pos < next { (pos, next) } else { (next, pos) };
            if used.contains(&key) {
                continue;
            }
            if next == (0, 0) {
                counts[len + 1] += 1;
                continue;
            }
            used.insert(key);
            rec(next, s, len + 1, dmax, used, counts);
            used.remove(&key);
        }
    }
    let mut counts = vec![0u64; dmax + 1];
    let mut used = HashSet::new();
    used.insert(((0, 0), (1, 1)));
    rec((1, 1), 0, 1, dmax, &mut used, &mut counts);
    (1..=dmax).map(|d| (d, counts[d])).collect()
}

/// Whites of the box of side `L = 2` around the a-face `c`: its two own
/// whites and the four whites joined to its blacks across the box boundary.
pub fn box_whites(c: Pt) -> Result<Vec<Pt>> {
    if !is_a_face(c) {
        return invalid(format!("{c:?} is not an a-face"));
    }
    let mut w = vec![add(c, (0, 1)), add(c, (0, -1))];
    for dx in [-2, 2] {
        w.push(add(c, (dx, 1)));
        w.push(add(c, (dx, -1)));
    }
    w.sort_by_key(|p| (p.1, p.0));
    Ok(w)
}

/// `P(edges (w_i, w_i + F[s_i]) all covered)` for every `s ∈ [4]^R`, as
/// `det[K(b_i, w_i) K^{-1}(w_j, b_i)]`, with `s_1` the fastest digit.
pub fn local_probabilities(
    whites: &[Pt],
    kentry: &dyn Fn(Pt, Pt) -> C64,
    kinv: &HashMap<(Pt, Pt), C64>,
) -> Result<Vec<f64>> {
    let r = whites.len();
    if r > 12 {
        return Err(Error::SizeGuard(format!("{r} whites gives too many configurations")));
    }
    let total = 1usize << (2 * r);
    let mut out = vec![0.0; total];
    let mut m = vec![C64::new(0.0, 0.0); r * r];
    let mut blacks = vec![(0, 0); r];
    for (code, o) in out.iter_mut().enumerate() {
        let mut c = code;
        for i in 0..r {
            blacks[i] = add(whites[i], F[c & 3]);
            c >>= 2;
        }
        if (0..r).any(|i| (0..i).any(|j| blacks[i] == blacks[j])) {
            continue;
        }
        for i in 0..r {
            let k = kentry(blacks[i], whites[i]);
            for j in 0..r {
                let v = kinv.get(&(whites[j], blacks[i])).copied().unwrap_or_default();
                m[i * r + j] = k * v;
            }
        }
        *o = det_in_place(&mut m, r).re;
    }
    Ok(out)
}

fn plane_entry(a: f64) -> impl Fn(Pt, Pt) -> C64 {
    let wt = two_periodic_weight(a, 1.0);
    move |b, w| {
        let s = crate::lattice::dir_index(crate::lattice::sub(b, w)).unwrap();
        kasteleyn_phase(s) * wt(w, s)
    }
}

fn graph_entry(g: &Graph) -> impl Fn(Pt, Pt) -> C64 + '_ {
    move |b, w| match g.edge_between(b, w) {
        Some(e) => kasteleyn_phase(g.edges[e].dir as usize) * g.edges[e].weight,
        None => C64::new(0.0, 0.0),
    }
}

fn candidate_blacks(whites: &[Pt]) -> Vec<Pt> {
    let mut b: Vec<Pt> = whites.iter().flat_map(|&w| F.map(|f| add(w, f))).collect();
    b.sort();
    b.dedup();
    b
}

fn smooth_table(kc: &KernelCache, whites: &[Pt]) -> Result<HashMap<(Pt, Pt), C64>> {
    let mut t = HashMap::new();
    for &b in &candidate_blacks(whites) {
        for &w in whites {
            t.insert((w, b), kc.smooth_kinv(w, b)?);
        }
    }
    Ok(t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingReport {
    pub m: usize,
    pub a: f64,
    pub location: Pt,
    pub whites: Vec<Pt>,
    pub configurations: usize,
    pub sum_az: f64,
    pub sum_sm: f64,
    /// Configurations with two edges at one black vertex, all of probability 0.
    pub overlaps: usize,
    pub d_tv: f64,
    /// Largest `|(K K^{-1} - I)|` entry over the diamond columns used.
    pub residual: f64,
}

/// Exact total variation distance between the diamond and the smooth phase
/// on the `L = 2` box at the scaled location `p`, for a diamond of size `4m`.
pub fn coupling_tv(m: usize, a: f64, p: &ScaledPoint) -> Result<CouplingReport> {
    if m > 16 {
        return Err(Error::SizeGuard(format!("m = {m} exceeds the exact-inverse limit 16")));
    }
    let consts = derived_constants(a)?;
    let c = scaled_point(p, m, &consts);
    let whites = box_whites(c)?;
    let g = DiamondGraph::with_size(4 * m, a, 1.0)?;
    let region = &g.graph.region;
    if whites.iter().any(|&w| region.white_index(w).is_none()) {
        return Err(Error::OutOfBounds { label: "coupling box".into(), x: c.0 as i64, y: c.1 as i64 });
    }
    let k = g.graph.kasteleyn();
    let lu = k.lu_extended()?;
    let mut az = HashMap::new();
    let mut residual: f64 = 0.0;
    for &b in &candidate_blacks(&whites) {
        let Some(bi) = region.black_index(b) else { continue };
        let (col, res) = k.extended_inverse_column(&lu, bi);
        residual = residual.max(res);
        for &w in &whites {
            az.insert((w, b), col[region.white_index(w).unwrap()]);
        }
    }
    let kc = KernelCache::new(a)?;
    let sm = smooth_table(&kc, &whites)?;
    let p_az = local_probabilities(&whites, &graph_entry(&g.graph), &az)?;
    let p_sm = local_probabilities(&whites, &plane_entry(a), &sm)?;
    let overlaps = count_overlaps(&whites);
    let d_tv = 0.5 * p_az.iter().zip(&p_sm).map(|(x, y)| (x - y).abs()).sum::<f64>();
    Ok(CouplingReport {
        m,
        a,
        location: c,
        whites,
        configurations: p_az.len(),
        sum_az: p_az.iter().sum(),
        sum_sm: p_sm.iter().sum(),
        overlaps,
        d_tv,
        residual,
    })
}

fn count_overlaps(whites: &[Pt]) -> usize {
    let r = whites.len();
    (0..1usize << (2 * r))
        .filter(|&code| {
            let b: Vec<Pt> = (0..r).map(|i| add(whites[i], F[(code >> (2 * i)) & 3])).collect();
            (0..r).any(|i| (0..i).any(|j| b[i] == b[j]))
        })
        .count()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub a: f64,
    pub separation: i32,
    pub first: Pt,
    pub second: Pt,
    /// `Σ |p(s | Λ1 ∪ Λ2) - p(s1 | Λ1) p(s2 | Λ2)|`.
    pub discrepancy: f64,
    pub joint_sum: f64,
}

/// Smooth-phase factorization discrepancy for two `L = 2` boxes around the
/// a-faces `c` and `c + (separation, 0)`.
pub fn smooth_independence(a: f64, c: Pt, separation: i32) -> Result<IndependenceReport> {
    let c2 = add(c, (separation, 0));
    let w1 = box_whites(c)?;
    let w2 = box_whites(c2)?;
    let b1 = candidate_blacks(&w1);
    let b2 = candidate_blacks(&w2);
    if w1.iter().any(|w| w2.contains(w)) || b1.iter().any(|b| b2.contains(b)) {
        return invalid(format!("boxes at {c:?} and {c2:?} overlap"));
    }
    let kc = KernelCache::new(a)?;
    let entry = plane_entry(a);
    let mut all = w1.clone();
    all.extend(&w2);
    let table = smooth_table(&kc, &all)?;
    let p1 = local_probabilities(&w1, &entry, &table)?;
    let p2 = local_probabilities(&w2, &entry, &table)?;
    let live1: Vec<usize> = (0..p1.len()).filter(|&s| p1[s] != 0.0 || !collides(&w1, s)).collect();
    let live2: Vec<usize> = (0..p2.len()).filter(|&s| p2[s] != 0.0 || !collides(&w2, s)).collect();
    let r = all.len();
    let joint: Vec<(f64, f64)> = live1
        .par_iter()
        .map(|&s1| {
            let mut m = vec![C64::new(0.0, 0.0); r * r];
            let mut blacks = vec![(0, 0); r];
            let (mut disc, mut sum) = (0.0, 0.0);
            for &s2 in &live2 {
                for i in 0..6 {
                    blacks[i] = add(all[i], F[(s1 >> (2 * i)) & 3]);
                    blacks[6 + i] = add(all[6 + i], F[(s2 >> (2 * i)) & 3]);
                }
                for i in 0..r {
                    let k = entry(blacks[i], all[i]);
                    for j in 0..r {
                        m[i * r + j] = k * table[&(all[j], blacks[i])];
                    }
                }
                let pj = det_in_place(&mut m, r).re;
                sum += pj;
                disc += (pj - p1[s1] * p2[s2]).abs();
            }
            (disc, sum)
        })
        .collect();
    Ok(IndependenceReport {
        a,
        separation,
        first: c,
        second: c2,
        discrepancy: joint.iter().map(|x| x.0).sum(),
        joint_sum: joint.iter().map(|x| x.1).sum(),
    })
}

fn collides(whites: &[Pt], code: usize) -> bool {
    let r = whites.len();
    let b: Vec<Pt> = (0..r).map(|i| add(whites[i], F[(code >> (2 * i)) & 3])).collect();
    (0..r).any(|i| (0..i).any(|j| b[i] == b[j]))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub r: usize,
    pub a: f64,
    pub samples: usize,
    pub face: Pt,
    pub mean: f64,
    pub se: f64,
    pub pass: bool,
    /// Two-sample test of the values against their negatives.
    pub flip_p_value: f64,
    pub proxy: String,
}

/// Loop height at `face` for coverings of the wired box `L_R` sampled by
/// Wilson's algorithm.
pub fn loop_height_samples(r: usize, a: f64, face: Pt, samples: usize, seed: u64) -> Result<Vec<i32>> {
    if !is_a_face(face) {
        return invalid(format!("{face:?} is not an a-face"));
    }
    let bx = build_box(r, a, Variant::W)?;
    let (ptg, _) = tree_graphs(&bx)?;
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (f, _) = wilson_sample(&ptg, a, seed, i)?;
            let cov = tree_to_dimers(&bx, &f)?;
            let (_, dec, ha) = box_decomposition(&bx, &cov)?;
            let hl = loop_height(&ha, &dec.loops)?;
            hl.get(face).ok_or(Error::OutOfBounds { label: "loop height face".into(), x: face.0 as i64, y: face.1 as i64 })
        })
        .collect()
}

/// Mean loop height at `face` over wired-box samples, tested against 0.
pub fn loop_symmetry(r: usize, a: f64, face: Pt, samples: usize, seed: u64) -> Result<SymmetryReport> {
    let hs = loop_height_samples(r, a, face, samples, seed)?;
    let xs: Vec<f64> = hs.iter().map(|&h| h as f64).collect();
    let (mean, se) = mean_se(&xs);
    let lo = hs.iter().map(|h| h.abs()).max().unwrap_or(0);
    let mut pos = vec![0u64; (2 * lo + 1) as usize];
    let mut neg = vec![0u64; (2 * lo + 1) as usize];
    for &h in &hs {
        pos[(h + lo) as usize] += 1;
        neg[(-h + lo) as usize] += 1;
    }
    let flip = two_sample_chi_square(&pos, &neg);
    Ok(SymmetryReport {
        r,
        a,
        samples,
        face,
        mean,
        se,
        pass: mean.abs() <= 3.0 * se || (mean == 0.0 && se == 0.0),
        flip_p_value: flip.p_value,
        proxy: format!("wired box L_{r} sampled by Wilson's algorithm"),
    })
}

/// Loop height of `face` for a box covering; 0 when the covering has no loops.
pub fn box_loop_height(r: usize, a: f64, cov: &crate::lattice::Covering, face: Pt) -> Result<i32> {
    let bx = build_box(r, a, Variant::Plain)?;
    let h = height_function_on(&bx.graph, cov, (0, 0), 0)?;
    let ha = a_height(&h);
    let (_, dec, _) = box_decomposition(&bx, cov)?;
    let hl = loop_height(&ha, &dec.loops)?;
    hl.get(face).ok_or(Error::OutOfBounds { label: "loop height face".into(), x: face.0 as i64, y: face.1 as i64 })
}
