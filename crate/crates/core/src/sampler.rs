//! Exact sampling of weighted Aztec diamond coverings by domino shuffling.
//!
//! Cells are the (odd, odd) faces `(2I+1, 2J+1)`, `0 <= I, J < k`, of the
//! diamond of order `k`. Each cell owns four edges, indexed like
//! [`F`](crate::lattice::F): the edge in direction `d` joins the black corner
//! `c + (dx, 0)` to the white corner `c + (0, dy)`.
//!
//! Urban renewal at every cell maps order `k` to order `k - 1`: the new cell
//! at old position `P` (even, even) takes, in direction `d`, the weight of the
//! old cell `P + d` in direction `d` divided by that cell's
//! `Δ = w_NE w_SW + w_NW w_SE`. Sampling runs the reductions backwards:
//! pairs of dimers in a cell annihilate, single dimers slide across, and
//! empty cells are filled with a parallel pair chosen with probability
//! proportional to its weight product.
//!
//! Face weights are stored on a periodic torus of cells (period 2 for the
//! two-periodic model), which the reduction preserves, so the coin table
//! costs O(n) memory. Weights are renormalized by their maximum after every
//! reduction, which leaves all coin probabilities unchanged.

use crate::error::{invalid, Error, Result};
use crate::lattice::{self, Covering, DiamondGraph, Pt, ENUM_MAX_N, F};
use crate::rng::{stream, StreamRng};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Shuffle,
    EnumerateAndSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Diamond size; `n = 4m` for two-periodic runs.
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
    pub method: Method,
}

impl SamplerConfig {
    pub fn new(m: usize, a: f64, seed: u64) -> SamplerConfig {
        SamplerConfig { n: 4 * m, a, b: 1.0, seed, method: Method::Shuffle }
    }

    pub fn with_size(n: usize, a: f64, seed: u64) -> SamplerConfig {
        SamplerConfig { n, a, b: 1.0, seed, method: Method::Shuffle }
    }

    pub fn method(mut self, method: Method) -> SamplerConfig {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("diamond size must be positive");
        }
        if !(self.a > 0.0 && self.a.is_finite() && self.b > 0.0 && self.b.is_finite()) {
            return invalid("weights must be positive");
        }
        if self.method == Method::EnumerateAndSample && self.n > ENUM_MAX_N {
            return invalid(format!("enumerate-and-sample needs n <= {ENUM_MAX_N}"));
        }
        Ok(())
    }
}

/// Creation probabilities for the pair {NE, SW}, per order and torus cell.
#[derive(Clone, Debug)]
struct CoinTable {
    #[cfg_attr(not(test), allow(dead_code))]
    period: usize,
    /// `probs[k - 1][(I % p) * p + J % p]` for order `k`.
    #[cfg_attr(not(test), allow(dead_code))]
    probs: Vec<Vec<f64>>,
    /// The same probabilities scaled to `u64` thresholds.
    thresholds: Vec<Vec<u64>>,
}

impl CoinTable {
    /// `weights[(I % p) * p + J % p][d]` are the order-`n` cell weights.
    fn new(n: usize, period: usize, weights: Vec<[f64; 4]>) -> CoinTable {
        let p = period;
        let mut w = weights;
        let mut probs = vec![Vec::new(); n];
        for k in (1..=n).rev() {
            let delta: Vec<f64> = w.iter().map(|c| c[0] * c[2] + c[1] * c[3]).collect();
            probs[k - 1] = w.iter().zip(&delta).map(|(c, dl)| c[0] * c[2] / dl).collect();
            let mut next = vec![[0.0; 4]; p * p];
            for i in 0..p {
                for j in 0..p {
                    for (d, f) in F.iter().enumerate() {
                        let oi = (i + ((1 + f.0) / 2) as usize) % p;
                        let oj = (j + ((1 + f.1) / 2) as usize) % p;
                        next[i * p + j][d] = w[oi * p + oj][d] / delta[oi * p + oj];
                    }
                }
            }
            let top = next.iter().flat_map(|c| c.iter()).fold(0.0f64, |m, &x| m.max(x));
            for c in next.iter_mut() {
                for x in c.iter_mut() {
                    *x /= top;
                }
            }
            w = next;
        }
        let thresholds = probs
            .iter()
            .map(|v| v.iter().map(|&q| (q * 18446744073709551616.0) as u64).collect())
            .collect();
        CoinTable { period: p, probs, thresholds }
    }

    #[cfg(test)]
    fn prob(&self, k: usize, i: usize, j: usize) -> f64 {
        let p = self.period;
        self.probs[k - 1][(i % p) * p + j % p]
    }
}

const OPP: [usize; 4] = [2, 3, 0, 1];
const COIN: u8 = 0xff;

/// Lifted cell content for each pattern of present inner edges.
const LIFT: [u8; 16] = {
    let mut t = [0u8; 16];
    let mut p = 0;
    while p < 16 {
        t[p] = match (p as u8).count_ones() {
            0 => COIN,
            1 => 1 << OPP[(p as u8).trailing_zeros() as usize],
            _ => 0,
        };
        p += 1;
    }
    t
};

/// Reusable sampler for one configuration.
pub struct Sampler {
    pub cfg: SamplerConfig,
    pub graph: DiamondGraph,
    coins: CoinTable,
    table: Option<EnumTable>,
}

struct EnumTable {
    cumulative: Vec<f64>,
    coverings: Vec<Covering>,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig) -> Result<Sampler> {
        cfg.validate()?;
        let graph = DiamondGraph::with_size(cfg.n, cfg.a, cfg.b)?;
        let weights = (0..4)
            .map(|t| {
                let (i, j) = (t / 2, t % 2);
                let v = if (i + j) % 2 == 0 { cfg.a } else { cfg.b };
                [v; 4]
            })
            .collect();
        let coins = CoinTable::new(cfg.n, 2, weights);
        let table = if cfg.method == Method::EnumerateAndSample {
            let all = lattice::enumerate_coverings(&graph)?;
            let mut acc = 0.0;
            let mut cumulative = Vec::with_capacity(all.len());
            let mut coverings = Vec::with_capacity(all.len());
            for (c, w) in all {
                acc += w;
                cumulative.push(acc);
                coverings.push(c);
            }
            Some(EnumTable { cumulative, coverings })
        } else {
            None
        };
        Ok(Sampler { cfg, graph, coins, table })
    }

    /// Sample number `index` of this configuration's stream.
    pub fn sample_index(&self, index: u64) -> Covering {
        let mut rng = stream(self.cfg.seed, index);
        let mut c = self.sample_with(&mut rng);
        c.seed = Some(self.cfg.seed);
        c
    }

    pub fn sample_with(&self, rng: &mut StreamRng) -> Covering {
        match &self.table {
            Some(t) => {
                let u = rng.random::<f64>() * t.cumulative.last().unwrap();
                let k = t.cumulative.partition_point(|&c| c <= u).min(t.coverings.len() - 1);
                t.coverings[k].clone()
            }
            None => self.cells_to_covering(&self.shuffle(rng)),
        }
    }

    /// Dimer bits of the order-`n` cells, `cells[I * n + J]`, bit `d` = direction `F[d]`.
    pub fn shuffle(&self, rng: &mut StreamRng) -> Vec<u8> {
        let n = self.cfg.n;
        // order-k cells live at (I + 1) * (k + 2) + J + 1 inside a zero border
        let mut prev = vec![0u8; 4];
        let mut cur: Vec<u8> = Vec::new();
        for k in 1..=n {
            let (ps, cs) = (k + 1, k + 2);
            cur.clear();
            cur.resize(cs * cs, 0);
            let thr = &self.coins.thresholds[k - 1];
            for i in 0..k {
                // the inner edge d of cell (i, j) is the edge -d of the reduced
                // cell (i + (dx - 1) / 2, j + (dy - 1) / 2)
                let (r0, r1) = ((i + 1) * ps, i * ps);
                let t = &thr[(i % 2) * 2..(i % 2) * 2 + 2];
                let row = &mut cur[(i + 1) * cs + 1..(i + 1) * cs + 1 + k];
                for (j, out) in row.iter_mut().enumerate() {
                    let present = ((prev[r0 + j + 1] >> 2) & 1)
                        | (((prev[r1 + j + 1] >> 3) & 1) << 1)
                        | ((prev[r1 + j] & 1) << 2)
                        | (((prev[r0 + j] >> 1) & 1) << 3);
                    let v = LIFT[present as usize];
                    *out = if v == COIN {
                        if rng.next_u64() < t[j % 2] {
                            0b0101
                        } else {
                            0b1010
                        }
                    } else {
                        v
                    };
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        let s = n + 2;
        (0..n).flat_map(|i| prev[(i + 1) * s + 1..(i + 1) * s + 1 + n].to_vec()).collect()
    }

    pub fn cells_to_covering(&self, cells: &[u8]) -> Covering {
        let n = self.cfg.n;
        let region = self.graph.region();
        let mut b2w = vec![u32::MAX; region.blacks.len()];
        for i in 0..n {
            for j in 0..n {
                let bits = cells[i * n + j];
                if bits == 0 {
                    continue;
                }
                let c: Pt = (2 * i as i32 + 1, 2 * j as i32 + 1);
                for (d, f) in F.iter().enumerate() {
                    if bits & (1 << d) != 0 {
                        let black = (c.0 + f.0, c.1);
                        let white = (c.0, c.1 + f.1);
                        let bi = region.black_index(black).expect("black corner");
                        b2w[bi] = region.white_index(white).expect("white corner") as u32;
                    }
                }
            }
        }
        Covering::new(b2w)
    }
}

/// One sample for `cfg`, drawn from stream 0 of its seed.
pub fn sample(cfg: &SamplerConfig) -> Result<Covering> {
    Ok(Sampler::new(cfg.clone())?.sample_index(0))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub empirical: f64,
    pub exact: f64,
    pub z: f64,
}

/// Empirical frequency of `edge = (black, white)` against its exact probability.
pub fn edge_marginal_check(cfg: &SamplerConfig, edge: (Pt, Pt), n_samples: usize) -> Result<MarginalCheck> {
    use rayon::prelude::*;
    let s = Sampler::new(cfg.clone())?;
    let g = &s.graph;
    let kinv = lattice::exact_inverse_kasteleyn(&g.graph)?;
    let exact = lattice::local_statistics(&g.graph, &kinv, &[edge])?;
    let region = g.region();
    let bi = region.black_index(edge.0).ok_or_else(|| Error::InvalidParameter("not a black site".into()))?;
    let wi = region.white_index(edge.1).ok_or_else(|| Error::InvalidParameter("not a white site".into()))? as u32;
    let hits: usize = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| (s.sample_index(i).black_to_white[bi] == wi) as usize)
        .sum();
    let empirical = hits as f64 / n_samples as f64;
    let var = exact * (1.0 - exact) / n_samples as f64;
    let z = if var > 0.0 {
        (empirical - exact) / var.sqrt()
    } else if (empirical - exact).abs() < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MarginalCheck { empirical, exact, z })
}

/// Chi-square of shuffling frequencies against exact enumeration weights.
pub fn boltzmann_chi_square(n: usize, a: f64, seed: u64, n_samples: usize) -> Result<crate::stats::ChiSquare> {
    use rayon::prelude::*;
    let s = Sampler::new(SamplerConfig::with_size(n, a, seed))?;
    let samples: Vec<Covering> = (0..n_samples as u64).into_par_iter().map(|i| s.sample_index(i)).collect();
    chi_square_against_enumeration(&s.graph, &samples)
}

/// Chi-square of the empirical law of `samples` against the Boltzmann
/// weights of all coverings of `g`.
pub fn chi_square_against_enumeration(g: &DiamondGraph, samples: &[Covering]) -> Result<crate::stats::ChiSquare> {
    use std::collections::HashMap;
    let all = lattice::enumerate_coverings(g)?;
    let index: HashMap<&[u32], usize> =
        all.iter().enumerate().map(|(i, (c, _))| (c.black_to_white.as_slice(), i)).collect();
    let mut observed = vec![0u64; all.len()];
    for c in samples {
        let Some(&h) = index.get(c.black_to_white.as_slice()) else {
            return Err(Error::InvalidCovering("sample outside the enumeration".into()));
        };
        observed[h] += 1;
    }
    let expected: Vec<f64> = all.iter().map(|(_, w)| *w).collect();
    Ok(crate::stats::chi_square(&observed, &expected, 5.0))
}
