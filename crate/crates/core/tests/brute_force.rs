//! Naive reference implementations checked against the production paths,
//! plus property tests for the scaling and correlation invariants.

use longmem_core::dcca::{cross_fluctuation, rho_from_profiles};
use longmem_core::hurst::fit_hurst;
use longmem_core::scaling::{fluctuation, segment_bounds, DetrendMethod, ScaleGrid};
use proptest::prelude::*;

mod naive;
use naive::*;

#[test]
fn segment_tilings_match_definition() {
    for n in 10..=60 {
        for s in [5, 10] {
            let ranges = segment_bounds(n, s).unwrap();
            assert_eq!(ranges.len(), 2 * (n / s));
            assert!(ranges.iter().all(|r| r.len() == s && r.end <= n));
            assert_eq!(ranges[n / s].end, n);
        }
    }
}

#[test]
fn fluctuation_matches_naive_reference() {
    let grid = ScaleGrid::new(vec![5, 10]).unwrap();
    for n in [20, 23, 37, 50, 60] {
        for seed in 0..5 {
            let p = random_profile("p", n, seed * 100 + n as u64);
            for m in METHODS {
                let f = fluctuation(&p, &grid, &m).unwrap();
                for pt in &f.points {
                    let naive = naive_fluctuation(p.values(), pt.scale, m);
                    assert!(
                        rel_close(pt.value, naive, 1e-10),
                        "{m} n={n} s={}: {} vs {naive}",
                        pt.scale,
                        pt.value
                    );
                }
            }
        }
    }
}

#[test]
fn dcca_matches_naive_reference() {
    let grid = ScaleGrid::new(vec![5, 10]).unwrap();
    for n in [20, 31, 44, 60] {
        for seed in 0..5 {
            let a = random_profile("a", n, seed);
            let b = random_profile("b", n, seed + 1000);
            for m in METHODS {
                let cross = cross_fluctuation(&a, &b, &grid, &m).unwrap();
                for &(s, f2) in &cross.points {
                    let ra = naive_residuals(a.values(), s, m);
                    let rb = naive_residuals(b.values(), s, m);
                    let naive = naive_f2(&ra, &rb);
                    assert!(
                        rel_close(f2, naive, 1e-10),
                        "{m} n={n} s={s}: {f2} vs {naive}"
                    );
                    let rho = rho_from_profiles(&a, &b, s, &m).unwrap();
                    let naive_r = naive_rho(a.values(), b.values(), s, m);
                    assert!(
                        rel_close(rho, naive_r, 1e-10),
                        "{m} n={n} s={s}: {rho} vs {naive_r}"
                    );
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dfa_ignores_added_polynomials(
        seed in any::<u64>(),
        n in 40usize..200,
        c0 in -50.0f64..50.0,
        c1 in -5.0f64..5.0,
        c2 in -0.05f64..0.05,
    ) {
        let p = random_profile("p", n, seed);
        let grid = ScaleGrid::new(vec![5, 8, 13, 20]).unwrap();
        for (order, shift) in [(1usize, [c0, c1, 0.0]), (2, [c0, c1, c2])] {
            let m = DetrendMethod::Dfa { order };
            let shifted = p
                .map(|i, v| v + shift[0] + shift[1] * i as f64 + shift[2] * (i * i) as f64)
                .unwrap();
            let f = fluctuation(&p, &grid, &m).unwrap();
            let g = fluctuation(&shifted, &grid, &m).unwrap();
            for (a, b) in f.points.iter().zip(&g.points) {
                prop_assert!(rel_close(a.value, b.value, 1e-8), "{} vs {}", a.value, b.value);
            }
        }
    }

    #[test]
    fn fluctuation_is_homogeneous(seed in any::<u64>(), n in 40usize..200, c in -100.0f64..100.0) {
        prop_assume!(c.abs() > 1e-3);
        let p = random_profile("p", n, seed);
        let scaled = p.map(|_, v| c * v).unwrap();
        let grid = ScaleGrid::new(vec![5, 9, 17]).unwrap();
        for m in METHODS {
            let f = fluctuation(&p, &grid, &m).unwrap();
            let g = fluctuation(&scaled, &grid, &m).unwrap();
            for (a, b) in f.points.iter().zip(&g.points) {
                prop_assert!(rel_close(c.abs() * a.value, b.value, 1e-10));
            }
        }
    }

    #[test]
    fn rho_bounded_symmetric_and_scale_free(
        seed in any::<u64>(),
        n in 40usize..300,
        s_frac in 0.05f64..0.5,
        ca in 0.01f64..100.0,
        cb in 0.01f64..100.0,
    ) {
        let a = random_profile("a", n, seed);
        let b = random_profile("b", n, seed ^ 0x5555);
        let s = ((n as f64 * s_frac) as usize).max(4);
        for m in METHODS {
            let r = rho_from_profiles(&a, &b, s, &m).unwrap();
            prop_assert!(r.abs() <= 1.0 + 1e-9);
            prop_assert_eq!(r, rho_from_profiles(&b, &a, s, &m).unwrap());
            let a2 = a.map(|_, v| ca * v).unwrap();
            let b2 = b.map(|_, v| cb * v).unwrap();
            let r2 = rho_from_profiles(&a2, &b2, s, &m).unwrap();
            prop_assert!((r - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn hurst_ignores_constant_factor(h in 0.05f64..1.5, c in 1e-6f64..1e6, k in 0.1f64..10.0) {
        let scales: Vec<usize> = (2..20).map(|i| i * 7).collect();
        let f = longmem_core::scaling::FluctuationFunction::from_points(
            "x",
            DetrendMethod::DFA1,
            scales.iter().map(|&s| (s, k * (s as f64).powf(h) * (1.0 + 0.1 * ((s as f64).sin())))),
        );
        let mut g = f.clone();
        for p in &mut g.points {
            p.value *= c;
        }
        let a = fit_hurst(&f, None).unwrap();
        let b = fit_hurst(&g, None).unwrap();
        prop_assert!((a.hurst - b.hurst).abs() < 1e-12);
        prop_assert!((b.intercept - a.intercept - c.log10()).abs() < 1e-9);
    }
}
