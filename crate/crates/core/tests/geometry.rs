use std::f64::consts::PI;

use hypcyl::hypgeo::*;
use hypcyl::mc::RngStream;
use proptest::prelude::*;
use rand::Rng;

fn ball_point() -> impl Strategy<Value = Vec<f64>> {
    (2usize..=4).prop_flat_map(|d| {
        (prop::collection::vec(-1.0f64..1.0, d), 0.0f64..0.95).prop_map(|(v, r)| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
            v.iter().map(|x| x / n * r).collect()
        })
    })
}

fn triple(d: usize) -> impl Strategy<Value = [Point; 3]> {
    let pt = move || {
        (prop::collection::vec(-1.0f64..1.0, d), 0.0f64..0.97).prop_map(move |(v, r)| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
            let b: Vec<f64> = v.iter().map(|x| x / n * r).collect();
            Point::from_ball(&b).unwrap()
        })
    };
    (pt(), pt(), pt()).prop_map(|(a, b, c)| [a, b, c])
}

fn random_line<R: Rng>(rng: &mut R, d: usize, max_rho: f64) -> Geodesic {
    let u = random_direction(rng, d);
    let g = random_direction(rng, d);
    let c: f64 = u.iter().zip(&g).map(|(a, b)| a * b).sum();
    let w: Vec<f64> = g.iter().zip(&u).map(|(gi, ui)| gi - c * ui).collect();
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let w: Vec<f64> = w.iter().map(|x| x / n).collect();
    Geodesic::from_foot(rng.random_range(0.0..max_rho), &u, &w).unwrap()
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-11 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b))
}

proptest! {
    #[test]
    fn metric_axioms_d2(t in triple(2)) { check_axioms(&t)?; }

    #[test]
    fn metric_axioms_d3(t in triple(3)) { check_axioms(&t)?; }

    #[test]
    fn ball_round_trip(b in ball_point()) {
        let p = Point::from_ball(&b).unwrap();
        let back = p.to_ball();
        for (x, y) in b.iter().zip(&back) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!(p.coords()[0] > 0.0);
        prop_assert!(p.norm_defect().abs() <= 1e-12 * p.coords()[0].powi(2));
    }

    #[test]
    fn cosine_rules_agree(a in 0.01f64..4.0, b in 0.01f64..4.0, gamma in 0.01f64..3.13) {
        let t = Triangle::from_sas(a, b, gamma).unwrap();
        prop_assert!(t.side_rule_residual() < 1e-9);
        prop_assert!(t.angle_rule_residual() < 1e-8, "residual {}", t.angle_rule_residual());
    }

    #[test]
    fn cosh_rule_matches_constructed_triangle(a in 0.0f64..3.0, b in 0.0f64..3.0, gamma in 0.0f64..PI) {
        let x = Point::from_polar(a, &[1.0, 0.0]);
        let y = Point::from_polar(b, &[gamma.cos(), gamma.sin()]);
        let c = cosh_rule_side(a, b, gamma).unwrap();
        prop_assert!((dist(&x, &y).unwrap() - c).abs() < 1e-9);
    }
}

fn check_axioms(t: &[Point; 3]) -> Result<(), TestCaseError> {
    let [x, y, z] = t;
    let dxy = dist(x, y).unwrap();
    prop_assert_eq!(dxy, dist(y, x).unwrap());
    prop_assert!(dxy >= 0.0);
    prop_assert!(dist(x, z).unwrap() <= dxy + dist(y, z).unwrap() + 1e-9);
    prop_assert_eq!(dist(x, x).unwrap(), 0.0);
    if dxy == 0.0 {
        for (a, b) in x.coords().iter().zip(y.coords()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
    Ok(())
}

#[test]
fn hyperboloid_matches_ball_formula() {
    let mut rng = RngStream::new(1, 0);
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let d = 2 + i % 3;
        let a: Vec<f64> = random_direction(&mut rng, d)
            .iter()
            .map(|x| x * rng.random_range(0.0..0.99))
            .collect();
        let b: Vec<f64> = random_direction(&mut rng, d)
            .iter()
            .map(|x| x * rng.random_range(0.0..0.99))
            .collect();
        let h = dist(&Point::from_ball(&a).unwrap(), &Point::from_ball(&b).unwrap()).unwrap();
        let e = dist_ball(&a, &b).unwrap();
        if e > 0.0 {
            worst = worst.max((h - e).abs() / e);
        }
    }
    assert!(worst <= 1e-9, "worst relative error {worst}");
}

#[test]
fn point_line_closed_form_matches_golden_section() {
    let mut rng = RngStream::new(2, 0);
    for i in 0..1000 {
        let d = 2 + i % 3;
        let l = random_line(&mut rng, d, 3.0);
        let x = sample_point_in_ball(&mut rng, d, 4.0);
        let r = dist_point_geodesic(&x, &l).unwrap();
        let g = golden_min(|t| dist(&x, &l.at(t)).unwrap(), -40.0, 40.0);
        assert!((r.d - g).abs() < 1e-8, "case {i}: {} vs {}", r.d, g);
        assert!((dist(&x, &l.at(r.t_star)).unwrap() - r.d).abs() < 1e-10);
    }
}

#[test]
fn point_line_examples() {
    let l = Geodesic::from_foot(1.7, &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
    let r = dist_point_geodesic(&Point::origin(3), &l).unwrap();
    assert!((r.d - 1.7).abs() < 1e-12);
    let l1 = Geodesic::from_foot(1.0, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let x = l1.at(1.0);
    let want = (1f64.cosh() * 1f64.cosh()).acosh();
    assert!((dist(&Point::origin(2), &x).unwrap() - want).abs() < 1e-12);
    assert!((want - 1.513_374_006_596_5).abs() < 1e-12);
}

#[test]
fn foot_invariants() {
    let mut rng = RngStream::new(3, 0);
    let o = Point::origin(3);
    for _ in 0..500 {
        let l = random_line(&mut rng, 3, 5.0);
        assert!((dist(&o, l.foot()).unwrap() - l.rho()).abs() < 1e-10);
        for _ in 0..5 {
            let t = rng.random_range(-8.0..8.0);
            let p = l.at(t);
            assert!(p.norm_defect().abs() <= 1e-12 * p.coords()[0].powi(2));
            assert!(dist(&o, &p).unwrap() >= l.rho() - 1e-10);
        }
    }
}

#[test]
fn geodesic_distance_closed_form_matches_newton() {
    let mut rng = RngStream::new(4, 0);
    for i in 0..1000 {
        let d = 2 + i % 3;
        let a = random_line(&mut rng, d, 3.0);
        let b = random_line(&mut rng, d, 3.0);
        let exact = dist_geodesics(&a, &b).unwrap();
        let numeric = dist_geodesics_numeric(&a, &b, 8.0).unwrap();
        assert!(
            (exact.d - numeric).abs() < 1e-7,
            "case {i}: closed {} numeric {}",
            exact.d,
            numeric
        );
        if exact.t1.is_finite() {
            let pa = a.at(exact.t1);
            let pb = b.at(exact.t2);
            assert!((dist(&pa, &pb).unwrap() - exact.d).abs() < 1e-9);
        }
    }
}

#[test]
fn common_perpendicular_example() {
    for rho in [0.1, 0.5, 1.0, 2.5] {
        let a = Geodesic::from_foot(rho, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        let b = Geodesic::from_foot(rho, &[-1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((dist_geodesics(&a, &b).unwrap().d - 2.0 * rho).abs() < 1e-12);
        assert!((dist_geodesics_numeric(&a, &b, 5.0).unwrap() - 2.0 * rho).abs() < 1e-9);
    }
    let e1 = Geodesic::axis(2, 0);
    let e2 = Geodesic::axis(2, 1);
    assert!(dist_geodesics(&e1, &e2).unwrap().d < 1e-12);
}

#[test]
fn isometry_invariance() {
    let mut rng = RngStream::new(5, 0);
    for i in 0..300 {
        let d = 2 + i % 3;
        let g = Isometry::random(&mut rng, d);
        let x = sample_point_in_ball(&mut rng, d, 2.0);
        let y = sample_point_in_ball(&mut rng, d, 2.0);
        let l1 = random_line(&mut rng, d, 2.0);
        let l2 = random_line(&mut rng, d, 2.0);
        let (gx, gy) = (g.apply(&x), g.apply(&y));
        let (gl1, gl2) = (g.apply_geodesic(&l1), g.apply_geodesic(&l2));
        let tol = |v: f64| 1e-9 * v.max(1.0);
        let dxy = dist(&x, &y).unwrap();
        assert!((dist(&gx, &gy).unwrap() - dxy).abs() < tol(dxy));
        let dpl = dist_point_geodesic(&x, &l1).unwrap().d;
        assert!((dist_point_geodesic(&gx, &gl1).unwrap().d - dpl).abs() < tol(dpl));
        let dll = dist_geodesics(&l1, &l2).unwrap().d;
        assert!((dist_geodesics(&gl1, &gl2).unwrap().d - dll).abs() < tol(dll));
    }
}

#[test]
fn cap_area_is_monotone_with_power_bounds() {
    for d in 2..=4usize {
        let mut prev = 0.0;
        for k in 1..=200 {
            let th = PI / 2.0 * k as f64 / 200.0;
            let a = cap_area(th, d).unwrap();
            assert!(a > prev);
            prev = a;
        }
        let ratios: Vec<f64> = (0..=30)
            .map(|k| {
                let th = 1e-4 * (1e3f64).powf(k as f64 / 30.0);
                cap_area(th, d).unwrap() / th.powi(d as i32 - 1)
            })
            .collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        // Small caps are (d-1)-balls: A ≈ V_{d-1} θ^{d-1}.
        let flat = sphere_area(d - 1) / (d - 1) as f64;
        assert!(lo > 0.98 * flat && hi <= flat * (1.0 + 1e-9), "d={d} lo={lo} hi={hi}");
    }
}

#[test]
fn net_of_radius_five_disk() {
    let net = greedy_net(2, 5.0, 0.5).unwrap();
    let n = net.centers.len() as f64;
    let lower = ball_volume(2, 5.0).unwrap() / ball_volume(2, 1.0).unwrap();
    let upper = ball_volume(2, 6.0).unwrap() / ball_volume(2, 0.2).unwrap();
    assert!(lower <= n && n <= upper, "N = {n} not in [{lower}, {upper}]");
    assert!(net.packing >= 0.5 - 1e-9);
    assert!(net.covering <= 0.5);

    for (i, a) in net.centers.iter().enumerate() {
        for b in &net.centers[i + 1..] {
            assert!(dist(a, b).unwrap() >= net.packing - 1e-9);
        }
    }
    let mut rng = RngStream::new(99, 0);
    for _ in 0..20_000 {
        let z = sample_point_in_ball(&mut rng, 2, 5.0);
        let nearest = net
            .centers
            .iter()
            .map(|c| dist(&z, c).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= 0.5 + 1e-6, "uncovered point at distance {nearest}");
    }
}

#[test]
fn net_size_grows_like_volume() {
    let rs = [3.0, 4.0, 5.0, 6.0, 7.0];
    let logs: Vec<f64> = rs
        .iter()
        .map(|&r| (greedy_net(2, r, 0.5).unwrap().centers.len() as f64).ln())
        .collect();
    let slope = least_squares_slope(&rs, &logs);
    assert!((slope - 1.0).abs() <= 0.15, "slope {slope}");
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn shell_centers_lie_on_sphere_and_grow() {
    let c4 = shell_ball_centers(2, 4.0).unwrap();
    let c5 = shell_ball_centers(2, 5.0).unwrap();
    let o = Point::origin(2);
    for c in c4.iter().chain(&c5) {
        assert!((dist(&o, c).unwrap() - c.rho()).abs() < 1e-9);
    }
    for c in &c5 {
        assert!((dist(&o, c).unwrap() - 5.0).abs() < 1e-9);
    }
    let ratio = c5.len() as f64 / c4.len() as f64;
    let e = 1f64.exp();
    assert!((ratio - e).abs() <= 0.3 * e, "ratio {ratio}");
}
