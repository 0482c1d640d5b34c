use hypcyl::cylproc::*;
use hypcyl::hypgeo::{dist_geodesics, dist_point_geodesic, sample_point_in_ball, Geodesic, Point};
use hypcyl::linemeasure::measure_hitting_ball;
use hypcyl::mc::{ks_critical_1pct, ks_statistic, replicate, RngStream};

fn perp(rho: f64) -> Geodesic {
    Geodesic::from_foot(rho.abs(), &[rho.signum(), 0.0], &[0.0, 1.0]).unwrap()
}

fn planted_triple() -> Vec<Geodesic> {
    let a = Geodesic::from_foot(0.5, &[-1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
    let b = Geodesic::from_foot(0.5, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
    let c_at = |h: f64| Geodesic::from_foot(h, &[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]).unwrap();
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist_geodesics(&c_at(mid), &a).unwrap().d < 5.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    vec![a, b, c_at(0.5 * (lo + hi))]
}

#[test]
fn mean_line_count() {
    let est = replicate(1000, 7, |rng| Ok(realize(rng, 0.1, 2, 5.0, 1.0)?.len() as f64)).unwrap();
    let want = 0.1 * measure_hitting_ball(2, 5.0).unwrap();
    assert!((want - 39.672_570_532_567_75).abs() < 1e-9);
    assert!(est.agrees_with(want, 3.0), "{} ± {}", est.mean, est.stderr);
}

#[test]
fn realizations_are_reproducible() {
    let a = realize(&mut RngStream::new(3, 9), 0.5, 3, 3.0, 1.0).unwrap();
    let b = realize(&mut RngStream::new(3, 9), 0.5, 3, 3.0, 1.0).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.seed, a.stream_id), (3, 9));
    let o = Point::origin(3);
    for l in &a.lines {
        assert!(dist_point_geodesic(&o, l).unwrap().d <= 3.0 + 1e-12);
    }
}

#[test]
fn trivial_graphs() {
    let one = build_graph_lines(&[perp(1.0)], 1.0);
    assert_eq!(one.n_components(), 1);
    let two = build_graph_lines(&[Geodesic::axis(2, 0), Geodesic::axis(2, 1)], 1.0);
    assert_eq!(two.n_components(), 1);
    assert_eq!(two.edges, vec![(0, 1)]);
}

#[test]
fn planted_triple_has_two_components() {
    let lines = planted_triple();
    let d = |i: usize, j: usize| dist_geodesics(&lines[i], &lines[j]).unwrap().d;
    assert!((d(0, 1) - 1.0).abs() < 1e-9);
    assert!((d(0, 2) - 5.0).abs() < 1e-9);
    assert!((d(1, 2) - 5.0).abs() < 1e-9);
    let g = build_graph_lines(&lines, 1.0);
    assert_eq!(g.n_components(), 2);
    assert_eq!(g.cdist(0, 2), None);
}

#[test]
fn planted_chain() {
    let lines: Vec<Geodesic> = [0.0, 1.5, 3.0, 4.5].iter().map(|&r| perp(r)).collect();
    let g = build_graph_lines(&lines, 1.0);
    assert_eq!(g.edges, vec![(0, 1), (1, 2), (2, 3)]);
    assert_eq!(g.cdist(0, 3), Some(2));
    assert_eq!(g.cdist(0, 1), Some(0));
    assert_eq!(g.diam_hat(), Some(2));
}

#[test]
fn boundary_ties_are_adjacent() {
    let g = build_graph_lines(&[perp(0.0), perp(2.0)], 1.0);
    assert_eq!(g.n_components(), 1);
}

#[test]
fn graph_invariants_on_random_realizations() {
    for seed in 0..5 {
        let real = realize(&mut RngStream::new(seed, 0), 0.3, 2, 4.0, 1.0).unwrap();
        let g = build_graph(&real);
        let n = g.n_nodes;
        for i in 0..n {
            for &j in g.neighbors(i) {
                assert!(g.neighbors(j).contains(&i));
                assert!(dist_geodesics(&real.lines[i], &real.lines[j]).unwrap().d <= 2.0 + 1e-9);
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !g.neighbors(i).contains(&j) {
                    assert!(dist_geodesics(&real.lines[i], &real.lines[j]).unwrap().d > 2.0 - 1e-9);
                }
                let same = g.component_labels[i] == g.component_labels[j];
                assert_eq!(same, g.cdist(i, j).is_some());
            }
        }
        assert_eq!(build_graph(&real), g);
        assert_eq!(component_labels(&real.lines, 1.0), g.component_labels);
        for a in 0..n.min(12) {
            for b in 0..n.min(12) {
                for c in 0..n.min(12) {
                    if let (Some(ab), Some(bc)) = (g.cdist(a, b), g.cdist(b, c)) {
                        assert!(g.cdist(a, c).unwrap() <= ab + bc + 1);
                    }
                }
            }
        }
    }
}

#[test]
fn superposition_only_adds_connections() {
    for seed in 0..5 {
        let low = realize(&mut RngStream::new(seed, 0), 0.1, 2, 4.0, 1.0).unwrap();
        let extra = realize(&mut RngStream::new(seed, 1), 0.1, 2, 4.0, 1.0).unwrap();
        let merged = low.superpose(&extra);
        assert!((merged.u - 0.2).abs() < 1e-15);
        let g_low = build_graph(&low);
        let g_all = build_graph(&merged);
        for i in 0..low.len() {
            for j in 0..low.len() {
                if g_low.component_labels[i] == g_low.component_labels[j] {
                    assert_eq!(g_all.component_labels[i], g_all.component_labels[j]);
                }
            }
        }
    }
}

#[test]
fn coverage_queries() {
    let mut rng = RngStream::new(40, 0);
    let real = realize(&mut rng, 5.0, 2, 4.0, 1.0).unwrap();
    let on_line = real.lines[0].at(0.3);
    assert!(covers_point(&real, &on_line).unwrap().covered);
    let covered = (0..1000)
        .filter(|_| {
            let x = sample_point_in_ball(&mut rng, 2, 2.0);
            let c = covers_point(&real, &x).unwrap();
            assert!(!c.edge_warning);
            c.covered
        })
        .count();
    assert!(covered >= 990, "covered {covered}/1000");
    let far = Point::from_polar(3.5, &[1.0, 0.0]);
    assert!(covers_point(&real, &far).unwrap().edge_warning);
}

#[test]
fn closest_points_have_sampler_law() {
    let real = realize(&mut RngStream::new(41, 0), 2.0, 2, 5.0, 1.0).unwrap();
    let feet = closest_point_process(&real);
    assert_eq!(feet.len(), real.len());
    for (x, l) in feet.iter().zip(&real.lines) {
        assert!(dist_point_geodesic(x, l).unwrap().d < 1e-7);
    }
    let rhos: Vec<f64> = feet.iter().map(|p| p.rho()).collect();
    let ks = ks_statistic(&rhos, |x| x.sinh() / 5f64.sinh());
    assert!(ks <= ks_critical_1pct(rhos.len()), "KS {ks}");
}

#[test]
fn one_step_decay_shape() {
    let o = Point::origin(2);
    let u = 0.01;
    let scaled: Vec<f64> = [4.0f64, 6.0, 8.0]
        .iter()
        .map(|&r| {
            let y = Point::from_polar(r, &[0.6, 0.8]);
            let c = connect_prob_one_step(50, 2, u, &o, &y, 1_000_000).unwrap();
            assert!(!c.exact);
            c.probability * r.exp() / u
        })
        .collect();
    let hi = scaled.iter().cloned().fold(0.0, f64::max);
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.0 && hi / lo <= 2.0, "{scaled:?}");
}

#[test]
fn one_step_is_translation_invariant() {
    let x = Point::from_polar(2.0, &[0.0, 1.0]);
    let y = Point::from_polar(2.0, &[1.0, 0.0]);
    let a = connect_prob_one_step(51, 2, 0.1, &x, &y, 200_000).unwrap();
    let o = Point::origin(2);
    let r = hypcyl::hypgeo::dist(&x, &y).unwrap();
    let b = connect_prob_one_step(52, 2, 0.1, &o, &Point::from_polar(r, &[1.0, 0.0]), 200_000).unwrap();
    let se = a.measure.stderr.hypot(b.measure.stderr);
    assert!((a.measure.mean - b.measure.mean).abs() <= 3.0 * se);
}

#[test]
fn chain_length_is_monotone_and_matches_components() {
    let o = Point::origin(2);
    let y = Point::from_polar(3.0, &[1.0, 0.0]);
    for seed in 0..30 {
        let real = realize(&mut RngStream::new(seed, 0), 0.3, 2, 5.0, 1.0).unwrap();
        let mut prev = false;
        for m in 1..=6 {
            let now = chain_length(&real.lines, 1.0, &o, &y, m).is_some();
            assert!(now || !prev, "seed {seed}: connection lost at m = {m}");
            prev = now;
        }
        let labels = component_labels(&real.lines, 1.0);
        let near = |p: &Point, i: usize| dist_point_geodesic(p, &real.lines[i]).unwrap().d <= 2.0;
        let any = (0..real.len())
            .any(|i| near(&o, i) && (0..real.len()).any(|j| near(&y, j) && labels[i] == labels[j]));
        assert_eq!(chain_length(&real.lines, 1.0, &o, &y, real.len().max(1)).is_some(), any);
    }
}

#[test]
fn m_step_trivia() {
    let zero = estimate_connect_prob_msteps(1, 2, 0.0, 3.0, 2, 2.0, 50).unwrap();
    assert_eq!(zero.estimate.mean, 0.0);
    assert!(!zero.truncation_possible);
    let three = estimate_connect_prob_msteps(1, 2, 0.05, 3.0, 3, 2.0, 10).unwrap();
    assert!(three.truncation_possible);
    let sens = margin_sensitivity(2, 2, 0.05, 3.0, 2, 2.0, 2000).unwrap();
    assert_eq!(sens.wider.window_r, 7.0);
}

#[test]
fn phase_scan_behaviour() {
    let grid = [0.05, 0.1, 0.2, 0.4, 0.8];
    let rows = phase_scan(60, 2, 6.0, &grid, 30).unwrap();
    for w in rows.windows(2) {
        let se = w[0].largest_frac_se.hypot(w[1].largest_frac_se);
        assert!(
            w[1].largest_frac >= w[0].largest_frac - 2.0 * se,
            "{:?} -> {:?}",
            w[0],
            w[1]
        );
    }
    let csv = rows[0].csv();
    assert_eq!(csv.split(',').count(), PHASE_CSV_HEADER.split(',').count());

    let tiny = phase_scan(61, 2, 6.0, &[0.0005], 200).unwrap()[0];
    // Nearly every realization has at most one line, so components equal lines.
    let mean_lines = 0.0005 * measure_hitting_ball(2, 6.0).unwrap();
    assert!((tiny.mean_components - mean_lines).abs() < 0.2);
}

#[test]
fn supercritical_window_is_connected() {
    let rows = phase_scan(62, 2, 6.0, &[5.0], 20).unwrap();
    // mean_components == 1 with zero spread means every rep had one component.
    let r = rows[0];
    assert!(r.mean_components <= 1.0 + 0.05 + 1e-12, "{r:?}");
    assert!(r.largest_frac > 0.99);
}
