use aztec_core::kernels::ScaledPoint;
use aztec_core::lattice::{Covering, Pt};
use aztec_core::trees::{build_box, tree_graphs, tree_to_dimers, wilson_sample, Variant};
use aztec_core::verify::*;
use aztec_core::C64;
use std::collections::HashMap;

#[test]
fn tail_bounds_scale_with_s() {
    let one = loop_tail_bound(0.2, 8, 1).unwrap();
    assert!((loop_tail_bound(0.2, 8, 3).unwrap() - 3.0 * one).abs() < 1e-15);
    // 2 |S| a^d / (1 - a)
    let de = double_edge_tail_bound(0.9, 6, 1).unwrap();
    assert!((de - 2.0 * 0.9f64.powi(6) / 0.1).abs() < 1e-12);
    assert!(loop_tail_bound(0.4, 8, 1).is_err());
    assert!(double_edge_tail_bound(1.0, 6, 1).is_err());
}

#[test]
fn central_edge_is_an_a_edge_in_the_middle() {
    let (w, b) = central_a_edge(64);
    assert_eq!(w, (65, 66));
    assert_eq!(b, (66, 65));
}

#[test]
fn peierls_loops_small() {
    for d in [4, 8] {
        let r = peierls_loops(0.2, d, 32, 400, 7).unwrap();
        assert_eq!(r.samples, 400);
        assert!(r.empirical <= r.upper);
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn peierls_double_edges_small() {
    for a in [0.5, 0.9] {
        for d in [6, 10] {
            let r = peierls_double_edges(a, d, 32, 1500, 8).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }
}

#[test]
fn tail_samples_are_reproducible() {
    let s = [central_a_edge(16)];
    let x = tail_samples(16, 0.5, &s, 20, 3).unwrap();
    let y = tail_samples(16, 0.5, &s, 20, 3).unwrap();
    let key = |v: &[TailSample]| v.iter().map(|t| (t.loop_len, t.chain_len)).collect::<Vec<_>>();
    assert_eq!(key(&x), key(&y));
}

#[test]
fn shape_counts_start_at_four() {
    let c = loop_shape_counts(8);
    assert_eq!(c[0].1, 0);
    assert_eq!(c[1].1, 0);
    assert!(c[7].1 >= c[3].1);
}

#[test]
fn local_probabilities_on_a_single_white() {
    // one white with K = 1 on all four edges and K^{-1}(w, b_s) = p_s
    let w: Pt = (1, 0);
    let ps = [0.1, 0.2, 0.3, 0.4];
    let mut kinv = HashMap::new();
    for (s, f) in [(1, 1), (-1, 1), (-1, -1), (1, -1)].iter().enumerate() {
        kinv.insert((w, (w.0 + f.0, w.1 + f.1)), C64::new(ps[s], 0.0));
    }
    let p = local_probabilities(&[w], &|_, _| C64::new(1.0, 0.0), &kinv).unwrap();
    assert_eq!(p.len(), 4);
    for s in 0..4 {
        assert!((p[s] - ps[s]).abs() < 1e-15);
    }
}

#[test]
fn coupling_is_normalised_and_decreasing() {
    let loc = ScaledPoint { f: (1, 1), ..Default::default() };
    let mut prev = f64::INFINITY;
    for m in [4, 8] {
        let r = coupling_tv(m, 0.4, &loc).unwrap();
        assert_eq!(r.configurations, 4096);
        assert_eq!(r.overlaps, 2972);
        assert!((r.sum_az - 1.0).abs() < 1e-8, "m={m}: {}", r.sum_az);
        assert!((r.sum_sm - 1.0).abs() < 1e-8, "m={m}: {}", r.sum_sm);
        assert!(r.d_tv > 0.0 && r.d_tv < prev);
        prev = r.d_tv;
    }
    assert!(coupling_tv(17, 0.4, &loc).is_err());
}

#[test]
fn independence_decays_with_separation() {
    let d: Vec<f64> = [8, 16]
        .iter()
        .map(|&s| {
            let r = smooth_independence(0.5, (1, 1), s).unwrap();
            assert!((r.joint_sum - 1.0).abs() < 1e-10);
            r.discrepancy
        })
        .collect();
    assert!(d[1] < d[0] / 100.0, "{d:?}");
    assert!(smooth_independence(0.5, (1, 1), 0).is_err());
    assert!(smooth_independence(0.5, (1, 1), 2).is_err());
}

#[test]
fn loop_symmetry_small_box() {
    let r = loop_symmetry(6, 0.3, (1, 1), 400, 5).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.mean.abs() <= 4.0 * r.se.max(1e-12), "{r:?}");
}

#[test]
fn loop_height_bounded_by_loop_count() {
    let bx = build_box(4, 0.3, Variant::W).unwrap();
    let (ptg, _) = tree_graphs(&bx).unwrap();
    for i in 0..50 {
        let (f, _) = wilson_sample(&ptg, 0.3, 2, i).unwrap();
        let cov: Covering = tree_to_dimers(&bx, &f).unwrap();
        let h = box_loop_height(4, 0.3, &cov, (1, 1)).unwrap();
        assert_eq!(h % 4, 0, "loop heights move in steps of 4");
    }
    assert!(loop_height_samples(4, 0.3, (1, 3), 1, 0).is_err());
}
