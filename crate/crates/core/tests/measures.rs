use aztec_core::lattice::DiamondGraph;
use aztec_core::measures::*;
use aztec_core::sampler::{Sampler, SamplerConfig};

#[test]
fn j_faces_match_golden_values() {
    let text = include_str!("golden/jfaces.csv");
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let (m, a, beta, al, ar) = (f[0] as usize, f[1], f[2], f[3], f[4]);
        let (k1, k2) = (f[5] as usize, f[6] as usize);
        let mut inp = InterfaceInputs::new(m, a, vec![beta], vec![(al, ar)]);
        inp.big_m = Some(k1.max(k2));
        inp.with_mu = k2 > 1;
        let s = resolve_interface(&inp).unwrap();
        let (l, r) = if k2 > 1 {
            (s.jl_mu[0][0][k2 - 1], s.jr_mu[0][0][k2 - 1])
        } else {
            (s.jl[0][0][k1 - 1], s.jr[0][0][k1 - 1])
        };
        assert_eq!(l, (f[7] as i32, f[8] as i32), "{line}");
        assert_eq!(r, (f[9] as i32, f[10] as i32), "{line}");
    }
}

#[test]
fn resolution_is_deterministic() {
    let mut inp = InterfaceInputs::new(64, 0.3, vec![-0.1, 0.2], vec![(-1.0, 1.0)]);
    inp.big_m = Some(2);
    let a = serde_json::to_string(&resolve_interface(&inp).unwrap()).unwrap();
    let b = serde_json::to_string(&resolve_interface(&inp).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn kappa_matches_path_crossings_on_every_diagonal() {
    // at m <= 4 the interface faces leave the diamond, so every diagonal
    // segment of a-faces is checked instead
    let m = 4;
    let n2 = 8 * m as i32;
    let sampler = Sampler::new(SamplerConfig::new(m, 0.4, 11)).unwrap();
    let g: &DiamondGraph = &sampler.graph;
    let mut nonzero = 0;
    for i in 0..100 {
        let (hs, sq, dec) = analyze_covering(g, &sampler.sample_index(i)).unwrap();
        for (x, y) in hs.ha.iter().map(|(f, _)| f) {
            let l = (x, y);
            let mut j = 0;
            while l.0 + 2 * j < n2 && l.1 + 2 * j < n2 {
                let r = (l.0 + 2 * j, l.1 + 2 * j);
                let k = kappa_between(&hs.hc, l, r).unwrap();
                assert_eq!(k, kappa_by_paths(&sq, &dec, l, r).unwrap(), "sample {i} {l:?} {r:?}");
                nonzero += (k != 0) as usize;
                j += 1;
            }
        }
    }
    assert!(nonzero > 0);
}

#[test]
fn nu_and_kappa_differ_by_loop_heights_when_m_is_one() {
    let m = 32;
    let a = 0.3;
    let mut inp = InterfaceInputs::new(m, a, vec![0.0], vec![(-0.5, 0.5)]);
    inp.big_m = Some(1);
    let spec = resolve_interface(&inp).unwrap();
    let sampler = Sampler::new(SamplerConfig::new(m, a, 12)).unwrap();
    let (l, r) = (spec.jl[0][0][0], spec.jr[0][0][0]);
    for i in 0..20 {
        let (hs, _, _) = analyze_covering(&sampler.graph, &sampler.sample_index(i)).unwrap();
        let k = kappa(&hs.hc, &spec, 0, 0).unwrap();
        let v = nu(&hs.ha, &spec, 0, 0).unwrap();
        let dl = hs.hl.get(r).unwrap() - hs.hl.get(l).unwrap();
        assert_eq!(4.0 * (k as f64 - v), -(dl as f64));
        assert_eq!(4.0 * v, (4.0 * v).round());
    }
}

#[test]
fn frozen_corner_count_is_deterministic() {
    // a short diagonal next to the (0,0) corner lies in the frozen region
    let m = 8;
    let sampler = Sampler::new(SamplerConfig::new(m, 0.5, 3)).unwrap();
    let g = &sampler.graph;
    let (l, r) = ((1, 1), (7, 7));
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..100 {
        let (hs, sq, dec) = analyze_covering(g, &sampler.sample_index(i)).unwrap();
        let k = kappa_between(&hs.hc, l, r).unwrap();
        assert_eq!(k, kappa_by_paths(&sq, &dec, l, r).unwrap());
        seen.insert(k);
    }
    assert_eq!(seen.len(), 1, "{seen:?}");
}

#[test]
fn degenerate_segment_gives_zero() {
    let sampler = Sampler::new(SamplerConfig::new(2, 0.5, 1)).unwrap();
    let (hs, _, _) = analyze_covering(&sampler.graph, &sampler.sample_index(0)).unwrap();
    assert_eq!(kappa_between(&hs.hc, (5, 5), (5, 5)).unwrap(), 0);
}

#[test]
fn small_ensemble_runs() {
    let m = 16;
    let mut inp = InterfaceInputs::new(m, 0.25, vec![0.0], vec![(-1.0, 1.0)]);
    inp.big_m = Some(1);
    inp.with_mu = false;
    let spec = resolve_interface(&inp).unwrap();
    let stats = interface_ensemble(&SamplerConfig::new(m, 0.25, 5), &spec, 40).unwrap();
    assert_eq!(stats.cells.len(), 1);
    let c = &stats.cells[0];
    assert_eq!(c.kappa_histogram.values().sum::<u64>(), 40);
    assert!((c.oracle_mean - 0.19060509813659836351).abs() < 1e-10);
    assert!(!stats.outside_hypothesis);
}
