//! Interface faces at the rough-smooth boundary and the random measures
//! κ_m, ν_m and μ_m read off sampled height functions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::heights::{a_height, corridor_height, height_function, loop_height, HeightField};
use crate::kernels::{airy_fredholm, derived_constants, rho_m, AiryQuery, DerivedConstants};
use crate::lattice::{is_a_face, Covering, DiamondGraph, Pt, E1};
use crate::sampler::{Sampler, SamplerConfig};
use crate::squish::{squish_and_decompose, Decomposition, SquishedConfig};
use crate::stats::mean_se;
use crate::C64;

/// Floor arguments this close to a nonzero integer are rejected.
pub const GUARD_BAND: f64 = 1e-9;

/// Default number of averaging terms, `⌈(log m)²⌉`.
pub fn default_big_m(m: usize) -> usize {
    ((m as f64).ln().powi(2)).ceil().max(1.0) as usize
}

fn guarded_floor(x: f64, label: impl Fn() -> String) -> Result<i64> {
    let r = x.round();
    if x != r && (x - r).abs() < GUARD_BAND {
        return Err(Error::GuardBand { label: label(), value: x });
    }
    Ok(x.floor() as i64)
}

/// Inputs of [`resolve_interface`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterfaceInputs {
    pub m: usize,
    pub a: f64,
    pub betas: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    /// Number of averaging terms; `None` uses [`default_big_m`].
    pub big_m: Option<usize>,
    /// Also resolve the faces `J_{p,q,1,k}` used by μ_m.
    pub with_mu: bool,
}

impl InterfaceInputs {
    pub fn new(m: usize, a: f64, betas: Vec<f64>, intervals: Vec<(f64, f64)>) -> InterfaceInputs {
        InterfaceInputs { m, a, betas, intervals, big_m: None, with_mu: false }
    }
}

/// Resolved interface: every face needed by κ_m, ν_m and (optionally) μ_m.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub m: usize,
    pub a: f64,
    pub big_m: usize,
    pub betas: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub rho: i64,
    /// `τ_m(q)`.
    pub tau: Vec<i64>,
    /// `J^l_{p,q,k,1}` and `J^r_{p,q,k,1}`, indexed `[p][q][k - 1]`.
    pub jl: Vec<Vec<Vec<Pt>>>,
    pub jr: Vec<Vec<Vec<Pt>>>,
    /// `J^l_{p,q,1,k}` and `J^r_{p,q,1,k}`; empty unless requested.
    pub jl_mu: Vec<Vec<Vec<Pt>>>,
    pub jr_mu: Vec<Vec<Vec<Pt>>>,
}

impl InterfaceSpec {
    pub fn lines(&self) -> usize {
        self.betas.len()
    }

    pub fn n_intervals(&self) -> usize {
        self.intervals.len()
    }

    pub fn has_mu(&self) -> bool {
        !self.jl_mu.is_empty()
    }
}

/// `β_m(q, k) = 2⌊β_q λ2 (2m)^{2/3} + k λ2 (log m)²⌋`.
pub fn beta_m(beta: f64, k: usize, m: usize, c: &DerivedConstants) -> Result<i64> {
    let mf = m as f64;
    let x = beta * c.lambda2 * (2.0 * mf).powf(2.0 / 3.0) + k as f64 * c.lambda2 * mf.ln().powi(2);
    Ok(2 * guarded_floor(x, || format!("beta_m(beta={beta}, k={k})"))?)
}

/// `τ_m(q) = ⌊β_q² λ1 (2m)^{1/3}⌋`.
pub fn tau_m(beta: f64, m: usize, c: &DerivedConstants) -> Result<i64> {
    let x = beta * beta * c.lambda1 * (2.0 * m as f64).cbrt();
    guarded_floor(x, || format!("tau_m(beta={beta})"))
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
}

fn j_face(
    side: Side,
    alpha: f64,
    tau: i64,
    bm: i64,
    k1: usize,
    m: usize,
    c: &DerivedConstants,
    rho: i64,
) -> Result<(i64, i64)> {
    let mf = m as f64;
    let core = alpha * c.lambda1 * (2.0 * mf).cbrt();
    let shift = c.lambda1 * k1 as f64 * mf.ln().powi(2);
    let (arg, off) = match side {
        Side::Left => (core - shift, -1),
        Side::Right => (core + shift, 1),
    };
    let u = rho + 2 * guarded_floor(arg, || format!("J(alpha={alpha}, k1={k1})"))? + off - 2 * tau;
    // u e1 - bm e2
    Ok((u + bm, u - bm))
}

/// Resolve the a-faces `J^l`, `J^r` for every interval, line and averaging index.
pub fn resolve_interface(inp: &InterfaceInputs) -> Result<InterfaceSpec> {
    if inp.m < 2 {
        return invalid("interface needs m >= 2 (log m > 0)");
    }
    let c = derived_constants(inp.a)?;
    let q = AiryQuery {
        betas: inp.betas.clone(),
        intervals: inp.intervals.clone(),
        weights: vec![vec![C64::new(0.0, 0.0); inp.betas.len()]; inp.intervals.len()],
    };
    q.validate(f64::INFINITY)?;
    let big_m = inp.big_m.unwrap_or_else(|| default_big_m(inp.m));
    if big_m == 0 {
        return invalid("M must be at least 1");
    }
    let m = inp.m;
    let rho = rho_m(m, &c);
    let tau: Vec<i64> = inp.betas.iter().map(|&b| tau_m(b, m, &c)).collect::<Result<_>>()?;
    let hi = 8 * m as i64;
    let check = |p: (i64, i64), label: &str| -> Result<Pt> {
        if p.0 < 1 || p.1 < 1 || p.0 > hi - 1 || p.1 > hi - 1 {
            return Err(Error::OutOfBounds { label: label.to_string(), x: p.0, y: p.1 });
        }
        let pt = (p.0 as i32, p.1 as i32);
        assert!(is_a_face(pt), "{label} = {pt:?} is not an a-face");
        Ok(pt)
    };
    let np = inp.intervals.len();
    let nq = inp.betas.len();
    let mut jl = vec![vec![Vec::new(); nq]; np];
    let mut jr = jl.clone();
    let mut jl_mu = if inp.with_mu { jl.clone() } else { Vec::new() };
    let mut jr_mu = jl_mu.clone();
    for (p, &(al, ar)) in inp.intervals.iter().enumerate() {
        for (qi, &beta) in inp.betas.iter().enumerate() {
            let b1 = beta_m(beta, 1, m, &c)?;
            for k in 1..=big_m {
                let l = j_face(Side::Left, al, tau[qi], b1, k, m, &c, rho)?;
                let r = j_face(Side::Right, ar, tau[qi], b1, k, m, &c, rho)?;
                jl[p][qi].push(check(l, &format!("J^l[p={p},q={qi},k1={k},k2=1]"))?);
                jr[p][qi].push(check(r, &format!("J^r[p={p},q={qi},k1={k},k2=1]"))?);
                if inp.with_mu {
                    let bk = beta_m(beta, k, m, &c)?;
                    let l = j_face(Side::Left, al, tau[qi], bk, 1, m, &c, rho)?;
                    let r = j_face(Side::Right, ar, tau[qi], bk, 1, m, &c, rho)?;
                    jl_mu[p][qi].push(check(l, &format!("J^l[p={p},q={qi},k1=1,k2={k}]"))?);
                    jr_mu[p][qi].push(check(r, &format!("J^r[p={p},q={qi},k1=1,k2={k}]"))?);
                }
            }
        }
    }
    Ok(InterfaceSpec {
        m,
        a: inp.a,
        big_m,
        betas: inp.betas.clone(),
        intervals: inp.intervals.clone(),
        rho,
        tau,
        jl,
        jr,
        jl_mu,
        jr_mu,
    })
}

/// Heights of one covering: full, a-height, loop and corridor.
#[derive(Clone, Debug)]
pub struct SampleHeights {
    pub h: HeightField,
    pub ha: HeightField,
    pub hl: HeightField,
    pub hc: HeightField,
}

/// Squish, decompose and compute all four height functions of `cov`.
pub fn analyze_covering(g: &DiamondGraph, cov: &Covering) -> Result<(SampleHeights, SquishedConfig, Decomposition)> {
    let h = height_function(g, cov)?;
    let ha = a_height(&h);
    let (sq, dec) = squish_and_decompose(&g.graph, cov, &ha)?;
    let hl = loop_height(&ha, &dec.loops)?;
    let hc = corridor_height(&ha, &hl)?;
    Ok((SampleHeights { h, ha, hl, hc }, sq, dec))
}

fn at(f: &HeightField, p: Pt) -> Result<i64> {
    f.get(p)
        .map(|v| v as i64)
        .ok_or(Error::OutOfBounds { label: "height lookup".into(), x: p.0 as i64, y: p.1 as i64 })
}

/// κ_m({β_q} × A_p) = (h^a_c(J^r) - h^a_c(J^l)) / 4 at `k1 = k2 = 1`.
pub fn kappa(hc: &HeightField, spec: &InterfaceSpec, p: usize, q: usize) -> Result<i64> {
    kappa_between(hc, spec.jl[p][q][0], spec.jr[p][q][0])
}

/// `(h^a_c(r) - h^a_c(l)) / 4` for two a-faces.
pub fn kappa_between(hc: &HeightField, l: Pt, r: Pt) -> Result<i64> {
    let d = at(hc, r)? - at(hc, l)?;
    debug_assert_eq!(d.rem_euclid(4), 0);
    Ok(d / 4)
}

/// Signed count of path dimers crossing the diagonal segment from `l` to
/// `r = l + 2j e1`, read directly from the traced paths.
pub fn kappa_by_paths(sq: &SquishedConfig, dec: &Decomposition, l: Pt, r: Pt) -> Result<i64> {
    let steps = (r.0 - l.0) / 2;
    if r.0 - l.0 != r.1 - l.1 || steps < 0 || (r.0 - l.0) % 2 != 0 {
        return invalid(format!("{l:?} -> {r:?} is not a forward diagonal of a-faces"));
    }
    let mut arrows = std::collections::HashMap::<Pt, Pt>::new();
    for path in &dec.paths {
        for &id in &path.dimers {
            let d = &sq.dimers[id as usize];
            let e = arrows.entry(d.mixed).or_insert((0, 0));
            let a = d.arrow();
            *e = (e.0 + a.0, e.1 + a.1);
        }
    }
    let mut total = 0i64;
    for j in 0..steps {
        let mixed = (l.0 + 2 * j + E1.0, l.1 + 2 * j + E1.1);
        if let Some(t) = arrows.get(&mixed) {
            total += (E1.0 * t.1 - E1.1 * t.0).signum() as i64;
        }
    }
    Ok(total)
}

/// ν_m = (1/4M) Σ_k [h^a(J^r_{k,1}) - h^a(J^l_{k,1})].
pub fn nu(ha: &HeightField, spec: &InterfaceSpec, p: usize, q: usize) -> Result<f64> {
    let mut s = 0i64;
    for k in 0..spec.big_m {
        s += at(ha, spec.jr[p][q][k])? - at(ha, spec.jl[p][q][k])?;
    }
    Ok(s as f64 / (4 * spec.big_m) as f64)
}

/// μ_m = (1/4M) Σ_k [h(J^r_{1,k}) - h(J^l_{1,k})].
pub fn mu(h: &HeightField, spec: &InterfaceSpec, p: usize, q: usize) -> Result<f64> {
    if !spec.has_mu() {
        return invalid("interface was resolved without the mu faces");
    }
    let mut s = 0i64;
    for k in 0..spec.big_m {
        s += at(h, spec.jr_mu[p][q][k])? - at(h, spec.jl_mu[p][q][k])?;
    }
    Ok(s as f64 / (4 * spec.big_m) as f64)
}

/// Measures of one sample, indexed `[p][q]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleMeasures {
    pub kappa: Vec<Vec<i64>>,
    pub nu: Vec<Vec<f64>>,
    pub mu: Option<Vec<Vec<f64>>>,
}

pub fn measure_sample(g: &DiamondGraph, cov: &Covering, spec: &InterfaceSpec) -> Result<SampleMeasures> {
    let (hs, _, _) = analyze_covering(g, cov)?;
    let (np, nq) = (spec.n_intervals(), spec.lines());
    let mut out = SampleMeasures { kappa: vec![vec![0; nq]; np], nu: vec![vec![0.0; nq]; np], mu: None };
    let mut mus = vec![vec![0.0; nq]; np];
    for p in 0..np {
        for q in 0..nq {
            out.kappa[p][q] = kappa(&hs.hc, spec, p, q)?;
            out.nu[p][q] = nu(&hs.ha, spec, p, q)?;
            if spec.has_mu() {
                mus[p][q] = mu(&hs.h, spec, p, q)?;
            }
        }
    }
    if spec.has_mu() {
        out.mu = Some(mus);
    }
    Ok(out)
}

/// Mean, variance and standard error of one statistic.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Moments {
        let (mean, stderr) = mean_se(xs);
        let variance = if xs.len() > 1 { stderr * stderr * xs.len() as f64 } else { f64::NAN };
        Moments { mean, variance, stderr }
    }
}

/// Ensemble statistics for one cell `{β_q} × A_p`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellStats {
    pub p: usize,
    pub q: usize,
    pub kappa: Moments,
    pub nu: Moments,
    pub mu: Option<Moments>,
    /// κ_m - ν_m per sample.
    pub kappa_minus_nu: Moments,
    pub kappa_histogram: BTreeMap<i64, u64>,
    /// `E[μ_Ai]` and `Var[μ_Ai]` of the limiting extended Airy process.
    pub oracle_mean: f64,
    pub oracle_variance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub m: usize,
    pub a: f64,
    pub samples: usize,
    pub seed: u64,
    pub big_m: usize,
    /// Set when `a >= 1/3`, outside the hypothesis of the limit theorem for κ_m.
    pub outside_hypothesis: bool,
    pub cells: Vec<CellStats>,
}

/// Sample `n_samples` coverings and aggregate κ_m, ν_m, μ_m per cell.
pub fn interface_ensemble(cfg: &SamplerConfig, spec: &InterfaceSpec, n_samples: usize) -> Result<EnsembleStats> {
    if cfg.n != 4 * spec.m || cfg.a != spec.a || cfg.b != 1.0 {
        return invalid("sampler configuration does not match the interface (need n = 4m, same a, b = 1)");
    }
    let sampler = Sampler::new(cfg.clone())?;
    let g = &sampler.graph;
    let per: Vec<SampleMeasures> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| measure_sample(g, &sampler.sample_index(i), spec))
        .collect::<Result<_>>()?;
    let (np, nq) = (spec.n_intervals(), spec.lines());
    let q = AiryQuery {
        betas: spec.betas.clone(),
        intervals: spec.intervals.clone(),
        weights: vec![vec![C64::new(0.0, 0.0); nq]; np],
    };
    let oracle = airy_fredholm(&q)?;
    let mut cells = Vec::new();
    for p in 0..np {
        for qi in 0..nq {
            let k: Vec<f64> = per.iter().map(|s| s.kappa[p][qi] as f64).collect();
            let v: Vec<f64> = per.iter().map(|s| s.nu[p][qi]).collect();
            let d: Vec<f64> = k.iter().zip(&v).map(|(a, b)| a - b).collect();
            let mu = if spec.has_mu() {
                let u: Vec<f64> = per.iter().map(|s| s.mu.as_ref().unwrap()[p][qi]).collect();
                Some(Moments::of(&u))
            } else {
                None
            };
            let mut hist = BTreeMap::new();
            for s in &per {
                *hist.entry(s.kappa[p][qi]).or_insert(0) += 1;
            }
            let idx = p * nq + qi;
            cells.push(CellStats {
                p,
                q: qi,
                kappa: Moments::of(&k),
                nu: Moments::of(&v),
                mu,
                kappa_minus_nu: Moments::of(&d),
                kappa_histogram: hist,
                oracle_mean: oracle.mean[p][qi],
                oracle_variance: oracle.covariance[idx][idx],
            });
        }
    }
    Ok(EnsembleStats {
        m: spec.m,
        a: spec.a,
        samples: n_samples,
        seed: cfg.seed,
        big_m: spec.big_m,
        outside_hypothesis: spec.a >= 1.0 / 3.0,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_line_has_zero_tau() {
        let c = derived_constants(0.5).unwrap();
        assert_eq!(tau_m(0.0, 64, &c).unwrap(), 0);
    }

    #[test]
    fn guard_band_rejects_near_integers() {
        assert!(guarded_floor(3.0 + 1e-12, || "x".into()).is_err());
        assert_eq!(guarded_floor(3.0, || "x".into()).unwrap(), 3);
        assert_eq!(guarded_floor(-0.5, || "x".into()).unwrap(), -1);
    }

    #[test]
    fn resolved_faces_are_a_faces_inside() {
        let mut inp = InterfaceInputs::new(64, 0.5, vec![-0.2, 0.0, 0.3], vec![(-1.0, 0.0), (0.5, 1.5)]);
        inp.big_m = Some(3);
        inp.with_mu = true;
        let s = resolve_interface(&inp).unwrap();
        for fam in [&s.jl, &s.jr, &s.jl_mu, &s.jr_mu] {
            for f in fam.iter().flatten().flatten() {
                assert_eq!((f.0 + f.1).rem_euclid(4), 2);
                assert!(f.0 >= 1 && f.1 >= 1 && f.0 < 512 && f.1 < 512);
            }
        }
        // J^r - J^l runs along e1
        let (l, r) = (s.jl[0][1][0], s.jr[0][1][0]);
        assert_eq!(r.0 - l.0, r.1 - l.1);
        assert!(r.0 > l.0);
    }

    #[test]
    fn out_of_bounds_is_reported() {
        let inp = InterfaceInputs::new(8, 0.5, vec![0.0], vec![(-1.0, 1.0)]);
        match resolve_interface(&inp) {
            Err(Error::OutOfBounds { label, .. }) => assert!(label.starts_with("J^")),
            other => panic!("expected out of bounds, got {other:?}"),
        }
    }
}
