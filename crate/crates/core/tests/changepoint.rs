mod common;

use ment_core::changepoint::{
    candidate_peaks, evaluate, fit_piecewise, fixed_knot_rss, fuse_topk, llt_scores,
    order0_separation_closed_form, order1_segment_bound, separation_oracle, template, Order,
    Stream,
};
use proptest::prelude::*;

/// Residual of projecting `y` onto the span of `cols` by modified Gram-Schmidt.
fn projection_residual(y: &[f64], cols: &[Vec<f64>]) -> f64 {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            basis.push(v.iter().map(|a| a / norm).collect());
        }
    }
    let mut r = y.to_vec();
    for q in &basis {
        let dot: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
        r.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
    }
    r.iter().map(|a| a * a).sum()
}

fn hinge_columns(horizon: usize, k: usize) -> Vec<Vec<f64>> {
    let t: Vec<f64> = (1..=horizon).map(|t| t as f64).collect();
    vec![
        vec![1.0; horizon],
        t.clone(),
        t.iter().map(|&t| (t - k as f64).max(0.0)).collect(),
    ]
}

fn step_columns(horizon: usize, k: usize) -> Vec<Vec<f64>> {
    vec![
        (1..=horizon).map(|t| (t < k) as u8 as f64).collect(),
        (1..=horizon).map(|t| (t >= k) as u8 as f64).collect(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hinge_rss_matches_brute_force(psi in prop::collection::vec(-5.0f64..5.0, 4..40), pick in 0usize..1000) {
        let horizon = psi.len();
        let k = 2 + pick % (horizon - 2);
        let rss = fixed_knot_rss(&psi, Order::Slope, k).unwrap();
        let oracle = projection_residual(&psi, &hinge_columns(horizon, k));
        prop_assert!((rss - oracle).abs() <= 1e-8, "{rss} vs {oracle}");
    }

    #[test]
    fn step_rss_matches_brute_force(psi in prop::collection::vec(-5.0f64..5.0, 3..40), pick in 0usize..1000) {
        let horizon = psi.len();
        let k = 2 + pick % (horizon - 1);
        let rss = fixed_knot_rss(&psi, Order::Level, k).unwrap();
        let oracle = projection_residual(&psi, &step_columns(horizon, k));
        prop_assert!((rss - oracle).abs() <= 1e-8);
    }

    #[test]
    fn noiseless_templates_are_recovered(horizon in 6usize..40, pick in 0usize..1000, a in -2.0f64..2.0, jump in 0.5f64..3.0) {
        let k = 3 + pick % (horizon - 4);
        let level = template(Order::Level, horizon, k, &[a, a + jump]);
        prop_assert_eq!(fit_piecewise(&level, Order::Level).unwrap().knot, k);
        let slope = template(Order::Slope, horizon, k, &[a, 0.1, 0.1 + jump]);
        prop_assert_eq!(fit_piecewise(&slope, Order::Slope).unwrap().knot, k);
    }

    #[test]
    fn trend_scores_ignore_sign_and_shift_and_follow_scale(
        psi in prop::collection::vec(-3.0f64..3.0, 8..30),
        shift in -10.0f64..10.0,
        scale in 0.1f64..10.0,
    ) {
        let base = llt_scores(&psi).unwrap();
        let flipped: Vec<f64> = psi.iter().map(|v| shift - scale * v).collect();
        let other = llt_scores(&flipped).unwrap();
        let top = base.level.iter().chain(&base.slope).fold(0.0f64, |m, v| m.max(*v)).max(1e-12);
        for (a, b) in base.level.iter().zip(&other.level).chain(base.slope.iter().zip(&other.slope)) {
            prop_assert!((scale * a - b).abs() <= 1e-6 * scale * top, "{a} vs {b}");
        }
    }

    #[test]
    fn separation_lower_bounds_hold(horizon in 5usize..40, t_pick in 0usize..1000, k_pick in 0usize..1000,
                                    theta in prop::collection::vec(-3.0f64..3.0, 3)) {
        let t_star = 2 + t_pick % (horizon - 2);
        let k = 2 + k_pick % (horizon - 2);
        let level = separation_oracle(Order::Level, horizon, t_star, k, &theta[..2]).unwrap();
        prop_assert!(level.holds, "{level:?}");
        if k < t_star {
            let closed = order0_separation_closed_form(horizon, t_star, k, theta[0] - theta[1]);
            prop_assert!((level.value - closed).abs() <= 1e-10 * closed.max(1.0));
        }
        let slope = separation_oracle(Order::Slope, horizon, t_star, k, &theta).unwrap();
        let segment = order1_segment_bound(horizon, t_star, k, theta[1] - theta[2]);
        prop_assert!(slope.value >= segment - 1e-10 * segment.max(1.0), "{} < {segment}", slope.value);
    }
}

#[test]
fn uniform_slope_alpha_times_distance_can_exceed_the_value() {
    let check = separation_oracle(Order::Slope, 6, 2, 4, &[0.0, 1.0, 0.0]).unwrap();
    assert!((check.alpha - 1.0 / 6.0).abs() < 1e-15);
    assert!(check.value >= order1_segment_bound(6, 2, 4, 1.0));
    assert!(!check.holds, "{check:?}");
}

#[test]
fn peaks_are_strict_and_ranked() {
    let peaks = candidate_peaks(&[0.0, 2.0, 2.0, 1.0, 3.0, 0.5, 3.0, 0.0]);
    let times: Vec<usize> = peaks.iter().map(|p| p.time).collect();
    assert_eq!(times, vec![5, 7]);
}

#[test]
fn fusion_respects_separation_and_k() {
    let mut level = vec![0.1; 20];
    level[4] = 5.0;
    level[5] = 1.0;
    level[6] = 4.0;
    let mut slope = vec![0.1; 20];
    slope[14] = 2.0;
    let streams = vec![
        Stream {
            mode: 0,
            order: Order::Level,
            scores: level,
        },
        Stream {
            mode: 1,
            order: Order::Slope,
            scores: slope,
        },
    ];
    let report = fuse_topk(&streams, 3, 2).unwrap();
    let times = report.times();
    assert_eq!(times, vec![5, 7, 15]);
    let eval = evaluate(&times, &[5, 8, 15], 2);
    assert_eq!(eval.true_positives, 3);
    assert!((eval.mae.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(fuse_topk(&streams, 1, 2).unwrap().times(), vec![5]);
}
