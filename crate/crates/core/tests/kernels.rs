use aztec_core::kernels::*;
use aztec_core::lattice::{DiamondGraph, Pt};
use aztec_core::stats::slope;
use aztec_core::C64;

// Ai and Ai' from a 40-digit arbitrary-precision evaluation.
const AIRY_TABLE: [(f64, f64, f64); 13] = [
    (-10.0, 0.040241238486443190689, 0.9962650441327900559),
    (-7.5, 0.32177571638064787527, 0.31880950669855459621),
    (-5.0, 0.35076100902411431979, 0.32719281855444313679),
    (-3.3, -0.41718093737455014137, -0.070963617177835884113),
    (-2.0, 0.22740742820168557599, 0.61825902074169104141),
    (-1.0, 0.5355608832923521188, -0.010160567116645209395),
    (0.0, 0.35502805388781723926, -0.25881940379280679841),
    (0.5, 0.23169360648083348977, -0.22491053266468389314),
    (1.0, 0.13529241631288141552, -0.15914744129679321279),
    (2.5, 0.015725923380470489995, -0.026250881035903230365),
    (5.0, 0.00010834442813607441735, -0.000247413890868462476),
    (8.0, 4.6922076160992316256e-8, -1.3414392979067865743e-7),
    (12.0, 1.393184688875360839e-13, -4.854736554985308463e-13),
];

#[test]
fn airy_matches_high_precision_values() {
    for &(x, ai, aip) in &AIRY_TABLE {
        let (v, d) = airy_pair(x);
        assert!((v - ai).abs() < 1e-12, "Ai({x}) = {v}, want {ai}");
        assert!((d - aip).abs() < 1e-11, "Ai'({x}) = {d}, want {aip}");
    }
}

#[test]
fn airy_is_continuous_across_method_boundaries() {
    for x in [-2.0f64, 2.0, 10.0] {
        let (l, r) = (airy(x - 1e-9), airy(x + 1e-9));
        assert!((r - l - 2e-9 * airy_prime(x)).abs() < 1e-13, "jump at {x}");
    }
}

#[test]
fn extended_kernel_matches_quadrature_oracle() {
    // (τ1, ζ1, τ2, ζ2, Ã, φ)
    let table = [
        (0.0, 0.0, 0.0, 0.0, 0.066987483779663974144, 0.0),
        (0.0, 0.5, 0.0, -0.3, 0.051477345789635177688, 0.0),
        (-0.5, 0.2, 0.5, -0.4, 0.13851389688093186167, 0.3096914529714031647),
        (0.5, -1.0, -0.5, 0.3, 0.063450222134885824567, 0.0),
        (0.0, 1.0, 1.0, -1.0, 0.075830116187887149416, 0.11279550498326686465),
    ];
    for &(t1, z1, t2, z2, at, ph) in &table {
        assert!((airy_tilde(t1, z1, t2, z2) - at).abs() < 1e-11);
        assert!((airy_phi(t1, z1, t2, z2) - ph).abs() < 1e-14);
        assert!((extended_airy(t1, z1, t2, z2) - (at - ph)).abs() < 1e-11);
    }
    let ap0 = airy_prime(0.0);
    assert!((extended_airy(0.2, 0.0, 0.2, 0.0) - ap0 * ap0).abs() < 1e-12);
}

#[test]
fn e_kl_matches_golden_table() {
    let text = include_str!("golden/ekl.csv");
    let caches = [KernelCache::new(0.2).unwrap(), KernelCache::new(0.5).unwrap()];
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let a: f64 = f[0].parse().unwrap();
        let (k, l): (i64, i64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        let want: f64 = f[3].parse().unwrap();
        let c = if a == 0.2 { &caches[0] } else { &caches[1] };
        for (kk, ll) in [(k, l), (l, k), (-k, -l), (k, -l)] {
            let got = c.e_kl(kk, ll).unwrap();
            assert!((got - want).abs() < 1e-12 * want.abs().max(1e-3), "a={a} E_{kk},{ll}: {got} vs {want}");
        }
        rows += 1;
    }
    assert_eq!(rows, 162);
}

#[test]
fn e00_value() {
    let c = KernelCache::new(0.5).unwrap();
    assert!((c.e_kl(0, 0).unwrap() - 0.508099680048529116).abs() < 1e-14);
}

#[test]
fn e_kl_is_reproducible_across_resolutions() {
    let mut coarse = KernelCache::new(0.5).unwrap();
    coarse.base_nodes = 32;
    let mut fine = KernelCache::new(0.5).unwrap();
    fine.base_nodes = 1024;
    for (k, l) in [(0, 0), (3, 5), (10, 2), (20, 20), (40, 0)] {
        let (x, y) = (coarse.e_kl(k, l).unwrap(), fine.e_kl(k, l).unwrap());
        assert!((x - y).abs() <= 1e-10 * y.abs(), "E_{k},{l}: {x} vs {y}");
    }
}

#[test]
fn smooth_kinv_routes_agree_on_offset_grid() {
    let c = KernelCache::new(0.5).unwrap();
    let y: Pt = (4, 1);
    for i in -2..=2 {
        for j in -2..=2 {
            let x = (y.0 + 2 * i + 1, y.1 + 2 * j - 1);
            let e = c.smooth_kinv(x, y).unwrap();
            let d = c.smooth_kinv_direct(x, y).unwrap();
            assert!((e - d).norm() < 1e-9, "{x:?}: {e} vs {d}");
        }
    }
}

#[test]
fn smooth_kinv_translation_invariance_and_parity() {
    let c = KernelCache::new(0.4).unwrap();
    let (x, y) = ((5, 2), (2, 7));
    let v = c.smooth_kinv(x, y).unwrap();
    // shifts by the period lattice (4,0), (2,2) keep parity classes
    for s in [(4, 0), (2, 2), (-8, 4)] {
        let w = c.smooth_kinv((x.0 + s.0, x.1 + s.1), (y.0 + s.0, y.1 + s.1)).unwrap();
        assert!((v - w).norm() < 1e-15);
    }
    assert!(c.smooth_kinv((2, 2), y).is_err());
    assert!(c.smooth_kinv(x, (3, 2)).is_err());
}

#[test]
fn single_edge_smooth_probabilities() {
    // K(b, w) K^{-1}(w, b) for the four edges at a white vertex of each class
    let a = 0.5;
    let c = KernelCache::new(a).unwrap();
    let wt = aztec_core::lattice::two_periodic_weight(a, 1.0);
    for w in [(1, 0), (3, 0)] {
        let mut total = 0.0;
        for d in 0..4 {
            let b = aztec_core::lattice::add(w, aztec_core::lattice::F[d]);
            let p = (aztec_core::lattice::kasteleyn_phase(d) * wt(w, d) * c.smooth_kinv(w, b).unwrap()).re;
            assert!(p > 0.0 && p < 1.0, "edge {w:?}->{b:?}: {p}");
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn decay_rate_of_diagonal_entries() {
    // |E_{b,b}| decays like 𝒞^{2b} up to a power of b
    let c = KernelCache::new(0.5).unwrap();
    let bs: Vec<f64> = (10..=30).map(|b| b as f64).collect();
    let logs: Vec<f64> = (10..=30).map(|b| c.e_kl(b, b).unwrap().abs().ln()).collect();
    let twice: Vec<f64> = bs.iter().map(|b| 2.0 * b).collect();
    let s = slope(&twice, &logs);
    assert!((s / c.consts.big_c.ln() - 1.0).abs() < 0.05, "slope {s}");
}

#[test]
fn as2_relative_error_shrinks_along_the_window() {
    let c = KernelCache::new(0.5).unwrap();
    let x = ScaledPoint { f: (1, 0), ..Default::default() };
    let y = ScaledPoint { alpha: 0.3, beta: 0.5, f: (0, 1), ..Default::default() };
    let (mut lm, mut lr) = (vec![], vec![]);
    for e in 6..=12 {
        let m = 1usize << e;
        let (xp, yp, v) = ka_asymptotic(&x, &y, m, AsymptoticMode::K11, &c.consts).unwrap();
        let s = c.smooth_kinv(xp, yp).unwrap();
        lm.push((m as f64).ln());
        lr.push(((s - v).norm() / v.norm()).ln());
    }
    assert!(slope(&lm, &lr) < -0.1);
    assert!(lr[6] < lr[0] - 1.0);
}

#[test]
fn as2_vanishes_at_equal_lines() {
    let k = derived_constants(0.5).unwrap();
    let x = ScaledPoint { f: (1, 0), ..Default::default() };
    let y = ScaledPoint { alpha: 0.5, f: (0, 1), ..Default::default() };
    let (_, _, v) = ka_asymptotic(&x, &y, 64, AsymptoticMode::K11, &k).unwrap();
    assert_eq!(v, C64::new(0.0, 0.0));
}

#[test]
fn prefactor_decays_with_vertical_separation() {
    let k = derived_constants(0.5).unwrap();
    let x = ScaledPoint { f: (1, 0), ..Default::default() };
    let m = 512;
    let mut last = f64::INFINITY;
    for beta in [0.2, 0.4, 0.6] {
        let y = ScaledPoint { beta, f: (0, 1), ..Default::default() };
        let (xp, yp, v) = ka_asymptotic(&x, &y, m, AsymptoticMode::K11, &k).unwrap();
        let kern = airy_phi(0.0, 0.0, beta, beta * beta);
        let e = (-2 - xp.0 + xp.1 + yp.0 - yp.1) / 2;
        let rest = k.c0 * k.g[0][0].norm() * (2.0 / 3.0 * beta.powi(3)).exp() * (2.0 * m as f64).powf(-1.0 / 3.0) * kern;
        assert!((v.norm() / rest / k.big_c.powi(e) - 1.0).abs() < 1e-12);
        assert!(v.norm() < last);
        last = v.norm();
    }
}

#[test]
fn split_term_scales_like_the_airy_window() {
    // K_A = smooth K^{-1} - finite K^{-1} at the rough-smooth location
    let a = 0.5;
    let c = KernelCache::new(a).unwrap();
    let (mut lm, mut lk) = (vec![], vec![]);
    for m in 4usize..=16 {
        let g = DiamondGraph::with_size(4 * m, a, 1.0).unwrap();
        let lu = g.kasteleyn().lu().unwrap();
        let x = ScaledPoint { f: (1, 0), ..Default::default() };
        let y = ScaledPoint { f: (0, 1), ..Default::default() };
        let (xp, yp, _) = ka_asymptotic(&x, &y, m, AsymptoticMode::KA, &c.consts).unwrap();
        let r = g.region();
        let col = lu.inverse_column(r.black_index(yp).unwrap());
        let exact = col[r.white_index(xp).unwrap()];
        let ka = c.smooth_kinv(xp, yp).unwrap() - exact;
        lm.push((m as f64).ln());
        lk.push(ka.norm().ln());
    }
    let s = slope(&lm, &lk);
    assert!((s + 1.0 / 3.0).abs() < 0.15, "slope {s}");
}

// Values from an independent scipy Nyström oracle.
#[test]
fn gap_probabilities_match_oracle() {
    let table = [
        (-3.0, 0.08031955293933801),
        (-2.0, 0.41322414250513645),
        (-1.0, 0.8072142419992947),
        (0.0, 0.9693728283552646),
        (1.0, 0.99750543814939),
    ];
    // e^w - 1 = -1 in the limit; w = -40 gives e^w below 1e-17
    for &(s, want) in &table {
        let q = AiryQuery { betas: vec![0.0], intervals: vec![(s, 16.0)], weights: vec![vec![C64::new(-40.0, 0.0)]] };
        let mut opt = FredholmOptions::default();
        opt.weight_radius = 50.0;
        let r = airy_fredholm_with(&q, &opt).unwrap();
        assert!((r.det.re - want).abs() < 1e-10 && r.det.im.abs() < 1e-12, "F2({s}) = {}", r.det);
    }
}

#[test]
fn multi_line_determinants_match_oracle() {
    let c = |re: f64, im: f64| C64::new(re, im);
    let cases = [
        (vec![0.0], vec![(-1.0, 1.0)], vec![vec![c(0.3, 0.8)]], c(0.9883929074238387, 0.18453672035444638)),
        (
            vec![0.0],
            vec![(-2.0, -0.5), (0.0, 1.5)],
            vec![vec![c(-0.7, 0.0)], vec![c(0.2, -0.4)]],
            c(0.745217308402498, -0.013545614031156762),
        ),
        (
            vec![0.0, 0.6],
            vec![(-1.0, 0.5), (0.8, 2.0)],
            vec![vec![c(-0.7, 0.0), c(0.4, 0.0)], vec![c(0.3, 0.5), c(-1.1, 0.0)]],
            c(0.9783136993592977, 0.003285375920707589),
        ),
        (
            vec![-0.4, 0.0, 0.5],
            vec![(-1.5, 1.0)],
            vec![vec![c(-0.5, 0.0), c(0.1, 0.6), c(0.8, 0.0)]],
            c(1.1716580440454263, 0.2993673315310138),
        ),
    ];
    for (betas, intervals, weights, want) in cases {
        let q = AiryQuery { betas, intervals, weights };
        let r = airy_fredholm(&q).unwrap();
        assert!((r.det - want).norm() < 1e-9, "{:?}: {} vs {}", q.betas, r.det, want);
    }
}

#[test]
fn fredholm_moments_match_oracle() {
    let z = C64::new(0.0, 0.0);
    let q = AiryQuery { betas: vec![0.7], intervals: vec![(-1.0, 1.0)], weights: vec![vec![z]] };
    let r = airy_fredholm(&q).unwrap();
    assert!((r.mean[0][0] - 0.19060509813659836351).abs() < 1e-11);
    assert!((r.covariance[0][0] - 0.15482642468808447).abs() < 1e-9);
    let q = AiryQuery { betas: vec![-1.0], intervals: vec![(-2.0, 0.5)], weights: vec![vec![z]] };
    assert!((airy_fredholm(&q).unwrap().mean[0][0] - 0.59124224395594499248).abs() < 1e-11);
    let q = AiryQuery {
        betas: vec![0.0, 0.6],
        intervals: vec![(-1.0, 0.5), (0.8, 2.0)],
        weights: vec![vec![z, z], vec![z, z]],
    };
    let r = airy_fredholm(&q).unwrap();
    // Cov(μ({0} × A_0), μ({0.6} × A_1)): cells are indexed p * lines + q
    assert!((r.covariance[0][3] - 0.0018071501774262998).abs() < 1e-9);
    assert!((r.covariance[3][0] - r.covariance[0][3]).abs() < 1e-13);
}

#[test]
fn fredholm_derivative_is_the_trace() {
    let h = 1e-5;
    let q = |w: f64| AiryQuery {
        betas: vec![-0.3, 0.4],
        intervals: vec![(-1.0, 1.0)],
        weights: vec![vec![C64::new(w, 0.0), C64::new(0.0, 0.0)]],
    };
    let mean = airy_fredholm(&q(0.0)).unwrap().mean[0][0];
    let d = (airy_fredholm(&q(h)).unwrap().det - airy_fredholm(&q(-h)).unwrap().det) / (2.0 * h);
    assert!((d.re - mean).abs() < 1e-5 && d.im.abs() < 1e-9);
}

#[test]
fn fredholm_stable_under_doubling() {
    let q = AiryQuery { betas: vec![0.0], intervals: vec![(-2.0, 3.0)], weights: vec![vec![C64::new(-1.2, 0.3)]] };
    let base = airy_fredholm(&q).unwrap().det;
    let mut opt = FredholmOptions::default();
    opt.nodes *= 2;
    opt.window *= 2.0;
    let fine = airy_fredholm_with(&q, &opt).unwrap().det;
    assert!((base - fine).norm() < 1e-6);
}
