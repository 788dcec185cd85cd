mod common;

use histowas::assoc;
use histowas::ppstats::{self, DistanceGrid, EdgeCorrection};
use histowas::{ObservationWindow, Point2D, PointPattern};
use proptest::prelude::*;

use common::*;

fn pattern_strategy() -> impl Strategy<Value = Vec<Point2D>> {
    prop::collection::vec((0.0..500.0f64, 0.0..500.0f64).prop_map(|(x, y)| Point2D::new(x, y)), 2..80)
}

/// Kernel-smoothed pair correlation summed directly over ordered pairs.
fn naive_pcf(points: &[Point2D], area: f64, radii: &[f64], b: f64) -> Vec<f64> {
    let n = points.len() as f64;
    let lambda = n / area;
    radii
        .iter()
        .map(|&r| {
            let mut s = 0.0;
            for (i, a) in points.iter().enumerate() {
                for (j, c) in points.iter().enumerate() {
                    let z = (r - a.distance(c)) / b;
                    if i != j && z.abs() < 1.0 {
                        s += 0.75 / b * (1.0 - z * z);
                    }
                }
            }
            s / (2.0 * std::f64::consts::PI * r * lambda * lambda * area)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uncorrected_estimators_match_direct_sums(pts in pattern_strategy()) {
        let w = ObservationWindow::rectangle(0.0, 0.0, 500.0, 500.0).unwrap();
        let grid = DistanceGrid::uniform(120.0, 24).unwrap();
        let p = PointPattern::from_points(pts).unwrap();
        let k = ppstats::k_function(&p, &w, &grid, EdgeCorrection::None).unwrap();
        for (a, b) in k.values.iter().zip(naive_k(p.points(), 250000.0, grid.radii())) {
            prop_assert!(rel_close(*a, b, 1e-12));
        }
        let g = ppstats::g_empirical_cdf(&p, &w, &grid, EdgeCorrection::None).unwrap();
        prop_assert_eq!(g.values, naive_g(p.points(), grid.radii()));
        prop_assert!(rel_close(ppstats::ann(&p).unwrap(), naive_ann(p.points()), 1e-12));
        let b = 15.0;
        let pcf = ppstats::g_function(&p, &w, &grid, EdgeCorrection::None, b).unwrap();
        for (a, c) in pcf.values.iter().zip(naive_pcf(p.points(), 250000.0, grid.radii(), b)) {
            prop_assert!((a - c).abs() <= 1e-9 * c.abs().max(1.0));
        }
    }

    #[test]
    fn corrected_k_is_never_below_uncorrected(pts in pattern_strategy()) {
        let w = ObservationWindow::rectangle(0.0, 0.0, 500.0, 500.0).unwrap();
        let grid = DistanceGrid::uniform(120.0, 12).unwrap();
        let p = PointPattern::from_points(pts).unwrap();
        let iso = ppstats::k_function(&p, &w, &grid, EdgeCorrection::RipleyIsotropic).unwrap();
        let raw = ppstats::k_function(&p, &w, &grid, EdgeCorrection::None).unwrap();
        for (a, b) in iso.values.iter().zip(&raw.values) {
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn ols_matches_normal_equations(
        xy in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 3..30)
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        prop_assume!(x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() > 1e-3);
        let fit = assoc::fit_univariate(&x, &y).unwrap();
        let o = ols_normal_equations(&x, &y);
        prop_assume!(o.se > 0.0);
        prop_assert!(close(fit.beta1, o.beta1, 1e-9));
        prop_assert!(close(fit.se, o.se, 1e-9));
        prop_assert!(close(fit.p, o.p, 1e-9));
        prop_assert!(close(fit.ci_low, o.ci.0, 1e-9));
    }
}

#[test]
fn t_oracle_reference_values() {
    // Standard two-sided 5% critical values.
    for (df, t) in [(1, 12.706204736174707), (2, 4.302652729749464), (10, 2.228138851986274), (30, 2.042272456301238)] {
        assert!((t_975(df) - t).abs() < 1e-9, "df={df}");
        assert!((assoc::t_quantile(0.975, df as f64) - t).abs() < 1e-9, "df={df}");
    }
}

#[test]
fn duplicated_points_count_as_zero_distance_neighbours() {
    let pts = vec![Point2D::new(10.0, 10.0), Point2D::new(10.0, 10.0), Point2D::new(40.0, 10.0)];
    let p = PointPattern::from_points(pts).unwrap();
    let d = ppstats::nearest_neighbor_distances(&p).unwrap();
    assert_eq!(d, vec![0.0, 0.0, 30.0]);
    assert_eq!(ppstats::ann(&p).unwrap(), 10.0);
}
