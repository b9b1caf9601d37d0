use aztec_core::lattice::{vertex_parity, Covering};
use aztec_core::stats::{chi_square, two_sample_chi_square};
use aztec_core::trees::*;
use proptest::prelude::*;
use std::collections::HashMap;

#[test]
fn box_r3_vertex_classes() {
    // 36 whites: 13 of class 1 (the interior lattice points with i + j even)
    let bx = build_box(3, 0.5, Variant::Plain).unwrap();
    let c1 = bx.graph.region.whites.iter().filter(|&&p| vertex_parity(p) == 1).count();
    assert_eq!(bx.graph.n_white(), 36);
    assert_eq!(bx.graph.n_black(), 36);
    assert_eq!(c1, 13);
}

#[test]
fn gauge_exact_for_r_2_to_8() {
    for r in 2..=8 {
        for t in [Variant::W, Variant::F] {
            let rep = check_gauge(r, 0.5, t).unwrap();
            assert_eq!(rep.exponent_mismatches, 0, "R={r} {t:?}");
            assert!(rep.max_rel_err < 1e-12, "R={r} {t:?}: {}", rep.max_rel_err);
        }
    }
}

#[test]
fn face_weights_agree_across_variants() {
    for r in [2, 3, 5] {
        let fw: Vec<Vec<(aztec_core::lattice::Pt, f64)>> = [Variant::Plain, Variant::W, Variant::F]
            .iter()
            .map(|&v| build_box(r, 0.5, v).unwrap().face_weights())
            .collect();
        assert!(!fw[0].is_empty());
        for other in &fw[1..] {
            assert_eq!(other.len(), fw[0].len());
            for (p, q) in fw[0].iter().zip(other) {
                assert_eq!(p.0, q.0);
                assert!((p.1 - q.1).abs() < 1e-12 * p.1, "face {:?}: {} vs {}", p.0, p.1, q.1);
            }
        }
    }
}

#[test]
fn exhaustive_bijection_r2() {
    // oracle: 768 coverings; Z of the w box at a = 1/2 is 82.03125
    for v in [Variant::W, Variant::F] {
        let rep = bijection_report(2, 0.5, v).unwrap();
        assert_eq!(rep.coverings, 768);
        assert_eq!(rep.trees, 768);
        assert!(rep.bijective);
        assert!(rep.max_rel_err < 1e-12, "{v:?}: {}", rep.max_rel_err);
        if v == Variant::W {
            assert!((rep.kasteleyn_z - 82.03125).abs() < 1e-10);
            assert!((rep.tree_z - 82.03125).abs() < 1e-10);
        }
    }
    assert!(bijection_report(2, 0.5, Variant::Plain).is_err());
}

#[test]
fn dual_root_is_the_missing_corner() {
    let bx = build_box(3, 0.5, Variant::W).unwrap();
    let (_, dual) = tree_graphs(&bx).unwrap();
    assert_eq!(dual.root, Root::Vertex((-5, -6)));
    let into_root = dual.moves.iter().flatten().filter(|&&t| t == ROOT).count();
    assert_eq!(into_root, 2);
}

fn chi_square_against_enumeration(tg: &TreeGraph, a: f64, runs: u64, seed: u64) -> f64 {
    let trees = enumerate_trees(tg, a).unwrap();
    let z: f64 = trees.iter().map(|t| t.1).sum();
    let index: HashMap<Vec<u8>, usize> = trees.iter().enumerate().map(|(i, t)| (t.0.dir.clone(), i)).collect();
    let mut obs = vec![0u64; trees.len()];
    for i in 0..runs {
        let (f, _) = wilson_sample(tg, a, seed, i).unwrap();
        obs[index[&f.dir]] += 1;
    }
    let exp: Vec<f64> = trees.iter().map(|t| t.1 / z * runs as f64).collect();
    chi_square(&obs, &exp, 5.0).p_value
}

#[test]
fn wilson_law_on_2x2_window() {
    let tg = TreeGraph::wired_window(2);
    let p = chi_square_against_enumeration(&tg, 0.5, 100_000, 11);
    assert!(p > 1e-3, "p = {p}");
}

#[test]
fn wilson_law_on_r2_box() {
    let bx = build_box(2, 0.5, Variant::W).unwrap();
    let (tg, _) = tree_graphs(&bx).unwrap();
    let p = chi_square_against_enumeration(&tg, 0.5, 100_000, 12);
    assert!(p > 1e-3, "p = {p}");
}

#[test]
fn wilson_law_independent_of_ordering() {
    let tg = TreeGraph::wired_window(2);
    let trees = enumerate_trees(&tg, 0.5).unwrap();
    let index: HashMap<Vec<u8>, usize> = trees.iter().enumerate().map(|(i, t)| (t.0.dir.clone(), i)).collect();
    let mut fwd = vec![0u64; trees.len()];
    let mut rev = vec![0u64; trees.len()];
    let order: Vec<u32> = (0..tg.len() as u32).collect();
    let back: Vec<u32> = order.iter().rev().copied().collect();
    for i in 0..50_000 {
        let (f, _) = wilson(&tg, 0.5, &order, &mut aztec_core::rng::stream(21, i)).unwrap();
        fwd[index[&f.dir]] += 1;
        let (f, _) = wilson(&tg, 0.5, &back, &mut aztec_core::rng::stream(22, i)).unwrap();
        rev[index[&f.dir]] += 1;
    }
    let t = two_sample_chi_square(&fwd, &rev);
    assert!(t.p_value > 1e-3, "p = {}", t.p_value);
}

#[test]
fn wilson_step_law() {
    let bx = build_box(6, 0.5, Variant::W).unwrap();
    let (tg, _) = tree_graphs(&bx).unwrap();
    let mut counts = [0u64; 4];
    for i in 0..200 {
        let (_, st) = wilson_sample(&tg, 0.5, 5, i).unwrap();
        for s in 0..4 {
            counts[s] += st.dir_counts[s];
        }
    }
    let n: u64 = counts.iter().sum();
    let exp: Vec<f64> = [0.4, 0.4, 0.1, 0.1].iter().map(|p| p * n as f64).collect();
    let t = chi_square(&counts, &exp, 5.0);
    assert!(t.p_value > 1e-3, "{counts:?} p = {}", t.p_value);
}

#[test]
fn roundtrip_on_wilson_forests_r4() {
    for v in [Variant::W, Variant::F] {
        let bx = build_box(4, 0.5, v).unwrap();
        let (ptg, dtg) = tree_graphs(&bx).unwrap();
        for i in 0..1000 {
            let (f, _) = wilson_sample(&ptg, 0.5, 3, i).unwrap();
            let cov = tree_to_dimers(&bx, &f).unwrap();
            cov.validate(&bx.graph.region).unwrap();
            let (p, d) = dimers_to_trees(&bx, &cov).unwrap();
            assert_eq!(p, f);
            d.validate(&dtg).unwrap();
            // the dual tree has unit weight, so the covering weight is the tree weight
            let w = bx.graph.covering_weight(&cov);
            assert!((w - f.weight(&ptg, 0.5)).abs() < 1e-12 * w);
            assert_eq!(d.exponent(&dtg), 0);
        }
    }
}

#[test]
fn non_spanning_or_imperfect_inputs_rejected() {
    let bx = build_box(3, 0.5, Variant::W).unwrap();
    let (ptg, _) = tree_graphs(&bx).unwrap();
    let (mut f, _) = wilson_sample(&ptg, 0.5, 1, 0).unwrap();
    // point two neighbours at each other
    let v = (0..ptg.len()).find(|&v| ptg.moves[v][0] != ROOT).unwrap();
    let t = ptg.moves[v][0] as usize;
    f.dir[v] = 0;
    f.dir[t] = 2;
    assert!(tree_to_dimers(&bx, &f).is_err());
    let bad = Covering::new(vec![0; bx.graph.n_black()]);
    assert!(dimers_to_trees(&bx, &bad).is_err());
}

#[test]
fn box_kinv_converges_to_smooth_phase() {
    let pairs = [((1, 0), (0, 1)), ((1, 0), (2, -1)), ((-1, 2), (2, 1)), ((3, 2), (0, -1))];
    let rows = box_kinv_convergence(&[4, 8, 12, 16], 0.5, &pairs).unwrap();
    for (k, _) in pairs.iter().enumerate() {
        let d: Vec<f64> = rows.iter().skip(k).step_by(pairs.len()).map(|r| r.discrepancy).collect();
        for w in d.windows(2) {
            assert!(w[1] < w[0], "pair {k}: {d:?}");
        }
        assert!(d[1] > 10.0 * d[3], "pair {k}: {d:?}");
    }
    for r in &rows {
        assert!(r.residual < 1e-9, "R={}: {}", r.r, r.residual);
    }
}

#[test]
fn wired_samples_are_single_trees() {
    let st = forest_statistics(6, 0.3, 50, 9).unwrap();
    assert!(st.single_tree);
    assert!(st.mean_walk_steps > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn roundtrip_any_seed(seed in any::<u64>(), r in 2usize..6, f_box in any::<bool>()) {
        let bx = build_box(r, 0.4, if f_box { Variant::F } else { Variant::W }).unwrap();
        let (ptg, _) = tree_graphs(&bx).unwrap();
        let (f, _) = wilson_sample(&ptg, 0.4, seed, 0).unwrap();
        let cov = tree_to_dimers(&bx, &f).unwrap();
        prop_assert_eq!(dimers_to_trees(&bx, &cov).unwrap().0, f);
    }
}
