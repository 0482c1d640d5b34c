use hypcyl::branching::big_f_n;
use hypcyl::hypgeo::geodesics_within;
use hypcyl::linemeasure::{LineWindow, MeasureEstimate};
use hypcyl::mc::{ks_two_sample, ks_two_sample_critical_1pct, replicate_vec, Estimate, RngStream};
use hypcyl::particles::*;
use hypcyl::Error;

fn within(e: &Estimate, want: f64, k: f64) -> bool {
    e.agrees_with(want, k)
}

#[test]
fn offspring_means() {
    let est = replicate_vec(20_000, 1, |rng| {
        let ys = sample_offspring_mu(rng, 0.0, 0.5, 6.0)?;
        Ok(vec![ys.len() as f64])
    })
    .unwrap();
    assert!(within(&est[0], 3.0, 3.0), "{:?}", est[0]);

    let est = replicate_vec(20_000, 2, |rng| {
        let ys = sample_offspring_mu(rng, 2.0, 1.0, 10.0)?;
        Ok(vec![ys.len() as f64, ys.iter().filter(|&&y| y < 2.0).count() as f64])
    })
    .unwrap();
    let below = 1.0 - (-2.0f64).exp();
    assert!(within(&est[0], below + 8.0, 3.0), "{:?}", est[0]);
    assert!(within(&est[1], below, 3.0), "{:?}", est[1]);
    // Share of the mass that falls below x.
    assert!((below / (below + 8.0) - 0.097_540_6).abs() < 1e-7);
}

#[test]
fn first_generation_is_poisson() {
    let (u, r) = (0.3, 2.5);
    let est = replicate_vec(40_000, 3, |rng| {
        let gens = simulate_zeta(rng, u, 1, r, r + DEFAULT_CAP_MARGIN, 1000)?;
        let c = gens[1].count_in(0.0, r) as f64;
        Ok(vec![c, c * c])
    })
    .unwrap();
    let mean = u * r;
    assert!(within(&est[0], mean, 3.0));
    assert!(within(&est[1], mean + mean * mean, 3.0));
}

#[test]
fn zeta_counts_match_closed_form() {
    let counts = estimate_zeta_counts(4, 0.1, 2.0, 4, 42.0, 100_000, 1_000_000).unwrap();
    assert!((counts.counts[0].mean - 0.2).abs() <= 3.0 * counts.counts[0].stderr);
    for (n, e) in counts.counts.iter().enumerate() {
        let want = big_f_n(n + 1, 2.0, 0.1).unwrap();
        assert!(within(e, want, 3.0), "n={}: {} ± {} vs {want}", n + 1, e.mean, e.stderr);
        assert!(counts.truncation_bound[n] < 1e-15);
    }
    assert!((big_f_n(2, 2.0, 0.1).unwrap() - 0.04).abs() < 1e-15);
}

#[test]
fn counts_scale_with_intensity() {
    let a = estimate_zeta_counts(5, 0.05, 2.0, 3, 42.0, 100_000, 1_000_000).unwrap();
    let b = estimate_zeta_counts(6, 0.1, 2.0, 3, 42.0, 100_000, 1_000_000).unwrap();
    for n in 0..3 {
        let ratio = b.counts[n].mean / a.counts[n].mean;
        let rel = (b.counts[n].stderr / b.counts[n].mean).hypot(a.counts[n].stderr / a.counts[n].mean);
        let want = 2f64.powi(n as i32 + 1);
        assert!((ratio - want).abs() <= 3.0 * rel * want, "n={}: {ratio}", n + 1);
    }
}

#[test]
fn generic_kernel_matches_zeta() {
    let mu = MuKernel { u: 0.4 };
    let (mut ra, mut rb) = (RngStream::new(7, 0), RngStream::new(7, 1));
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for _ in 0..3000 {
        a.extend(simulate_kernel(&mut ra, &mu, 1, 3.0, 8.0, 1000).unwrap()[1].types.clone());
        b.extend(simulate_zeta(&mut rb, 0.4, 1, 3.0, 8.0, 1000).unwrap()[1].types.clone());
    }
    let ks = ks_two_sample(&a, &b);
    assert!(ks <= ks_two_sample_critical_1pct(a.len(), b.len()), "KS {ks}");
}

#[test]
fn dominated_kernel_stays_below() {
    let u = 0.2;
    let half = ScaledKernel {
        inner: MuKernel { u },
        factor: 0.5,
    };
    let c = kernel_domination_constant(&half, u, 8, 8, 1.0).unwrap();
    assert!(c.value <= 0.5 * std::f64::consts::E + 1e-12);
    let counts = estimate_kernel_counts(8, &half, 2.0, 3, 42.0, 40_000, 100_000).unwrap();
    for (n, e) in counts.iter().enumerate() {
        let bound = c.value.powi(n as i32 + 1) * big_f_n(n + 1, 2.0, u).unwrap();
        assert!(e.mean <= bound + 3.0 * e.stderr, "n={}", n + 1);
    }
}

struct Atomic;

impl OffspringKernel for Atomic {
    fn bin_intensity(&self, _x: f64, _k: usize) -> f64 {
        1.0
    }

    fn sample(&self, _rng: &mut RngStream, _x: f64, _cap: f64) -> Vec<f64> {
        vec![0.0]
    }

    fn label(&self) -> String {
        "atomic".into()
    }

    fn atom_at_zero(&self, x: f64) -> f64 {
        if x > 2.0 {
            0.5
        } else {
            0.0
        }
    }
}

#[test]
fn atoms_are_rejected() {
    let err = kernel_domination_constant(&Atomic, 0.1, 4, 4, 1.0).unwrap_err();
    assert!(matches!(err, Error::InvalidKernel(_)));
}

#[test]
fn domination_of_mu() {
    let mu = MuKernel { u: 0.3 };
    let c = kernel_domination_constant(&mu, 0.3, 10, 10, 1.0).unwrap();
    assert!(c.value >= 1.0 && c.value <= std::f64::consts::E, "{c:?}");
    let double = ScaledKernel { inner: mu, factor: 2.0 };
    let c2 = kernel_domination_constant(&double, 0.3, 10, 10, 1.0).unwrap();
    assert!((c2.value - 2.0 * c.value).abs() < 1e-12);
    let fine = kernel_domination_constant(&mu, 0.3, 10, 1000, 0.01).unwrap();
    assert!(fine.value < 1.011, "{fine:?}");
    assert_eq!(domination_grid(2, 0.5)[DOMINATION_GRID - 1], 1.5);
}

fn direct_tau(seed: u64, x: f64, window: f64, bins: usize, n: usize) -> Vec<MeasureEstimate> {
    let axis = line_at_distance(2, x).unwrap();
    let w = LineWindow::new(2, window).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let mut hits = vec![0u64; bins];
    for _ in 0..n {
        let l = w.sample(&mut rng);
        let k = (l.rho().ceil() as usize).saturating_sub(1);
        if k < bins && geodesics_within(&l, &axis, 2.0) {
            hits[k] += 1;
        }
    }
    hits.iter().map(|&h| Estimate::from_proportion(h, n, w.measure(), seed).into()).collect()
}

#[test]
fn tau_bins_match_direct_count() {
    for (x, seed) in [(1.0, 10), (3.5, 11)] {
        let direct = direct_tau(seed, x, 4.0, 4, 1_000_000);
        let tau = estimate_tau_bins(seed, 2, 1.0, x, 3, 100_000).unwrap();
        for ((k, t), dct) in tau.iter().zip(&direct) {
            let se = t.stderr.hypot(dct.stderr);
            assert!((t.mean - dct.mean).abs() <= 3.5 * se, "x={x} k={k}: {} vs {}", t.mean, dct.mean);
        }
    }
}

#[test]
fn tau_bins_scale_with_intensity() {
    let zero = estimate_tau_bins(1, 2, 0.0, 2.5, 4, 1000).unwrap();
    assert!(zero.iter().all(|(_, e)| e.mean == 0.0));
    let a = estimate_tau_bins(2, 2, 1.0, 2.5, 4, 1000).unwrap();
    let b = estimate_tau_bins(2, 2, 0.25, 2.5, 4, 1000).unwrap();
    for ((_, a), (_, b)) in a.iter().zip(&b) {
        assert!((0.25 * a.mean - b.mean).abs() < 1e-12 * a.mean.max(1.0));
    }
}

#[test]
fn tau_decays_below_the_line() {
    let x = 7.0;
    let bins = estimate_tau_bins(12, 2, 1.0, x, 5, 50_000).unwrap();
    let scaled: Vec<f64> = bins.iter().map(|(k, e)| e.mean * (x - *k as f64).exp()).collect();
    let hi = scaled.iter().cloned().fold(0.0, f64::max);
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.0 && hi / lo < 2.0, "{scaled:?}");
}

#[test]
fn tau_kernel_lookup_and_truncation() {
    let tk = TauKernel::estimate(13, 2, 0.5, 3, 2, 2000).unwrap();
    assert_eq!(tk.xs.len(), 2 * DOMINATION_GRID);
    assert_eq!(tk.bin_intensity(tk.xs[5] + 1e-9, 1), tk.table[5][1]);
    assert_eq!(tk.bin_intensity(0.0, 2), tk.table[0][2]);
    assert_eq!(tk.bin_intensity(1.0, 7), 0.0);
    let small = tk.truncate(2, 1);
    assert_eq!((small.k_bins, small.l_cells, small.xs.len()), (2, 1, DOMINATION_GRID));
    let mut rng = RngStream::new(0, 0);
    for _ in 0..200 {
        for y in tk.sample(&mut rng, 1.2, 2.5) {
            assert!(y > 0.0 && y <= 2.5);
        }
    }
}

#[test]
fn eta_children_meet_their_parents() {
    for seed in 0..20 {
        let eta = simulate_eta(&mut RngStream::new(seed, 0), 0.05, 2, 3, 4.0, 100_000).unwrap();
        for n in 1..eta.generations.len() {
            let gen = &eta.generations[n];
            assert!(gen.windows(2).all(|w| w[0].rho() <= w[1].rho()));
            for (l, &p) in gen.iter().zip(&eta.parents[n]) {
                assert!(geodesics_within(l, &eta.generations[n - 1][p], 2.0 + 1e-9));
                assert!(l.rho() <= 4.0 + 1e-9);
            }
            assert_eq!(eta.bin_counts[n].iter().sum::<usize>(), gen.len());
        }
        assert_eq!(eta.cumulative_within(4.0), eta.total_lines());
    }
}

#[test]
fn eta_first_generation_matches_tau_at_root() {
    let (u, r) = (0.1, 3.0);
    let h = estimate_eta_generation_counts(14, u, 2, r, 1, r, 20_000, 100_000).unwrap();
    assert_eq!((h[0].mean, h[0].stderr), (1.0, 0.0));
    let tau = estimate_tau_bins(15, 2, u, 0.0, 2, 200_000).unwrap();
    let want: f64 = tau.iter().map(|(_, e)| e.mean).sum();
    let se = tau.iter().map(|(_, e)| e.stderr.powi(2)).sum::<f64>().sqrt();
    assert!((h[1].mean - want).abs() <= 3.0 * h[1].stderr.hypot(se), "{} vs {want}", h[1].mean);
}

#[test]
fn growth_report_edge_cases() {
    let err = growth_rate_comparison(1, 2, 0.01, &[2.0, 3.0], 2, 10, 1.0, 0.1).unwrap_err();
    assert!(matches!(err, Error::InsufficientRange(_)));
    assert!(growth_rate_comparison(1, 2, 0.01, &[1.0, 1.5, 2.0], 2, 10, 1.0, 0.1).is_err());

    let none = growth_rate_comparison(2, 2, 0.0, &[2.0, 3.0, 4.0], 2, 10, 1.0, 0.1).unwrap();
    assert_eq!(none.eta_rate, 0.0);
    assert!(none.disconnected_analogue);
    assert!((none.ambient_rate - 1.0).abs() < 0.1);

    let r = growth_rate_comparison(3, 2, 0.01, &[2.0, 3.0, 4.0, 5.0], 3, 2000, 1.0, 0.1).unwrap();
    assert!((r.ambient_rate - 1.0).abs() < 0.1);
    assert!(r.eta_counts.iter().all(|e| e.mean >= 1.0));
    assert!(r.eta_rate_upper95 >= r.eta_rate);
}
