mod common;

use common::{random_series, rng, uniform_matrix};
use ment_core::attribution::{attribute, mv_sandwich_check, pairwise_bound_check, top_k_report};
use ment_core::embedding::{EmbeddingSeries, Flavor};
use ment_core::geometry::{aggregate_operator, distance_matrix, Metric, ModeBasis, PairSet};
use ment_core::trajectory::{cmds_distances, numerical_rank};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn mode_values_carry_the_direction_of_motion() {
    let mut r = rng(5);
    let base = uniform_matrix(&mut r, 30, 3);
    let basis = ModeBasis::standard(3);
    let mut moved = base.clone();
    moved[(4, 1)] += 0.8;
    moved[(9, 1)] -= 0.5;
    let y = EmbeddingSeries::new(vec![base, moved], Flavor::Modified).unwrap();
    let table = attribute(&y, 1, 0, Metric::Mode(1), Some(&basis)).unwrap();
    let scale = 30f64.sqrt();
    assert!((table.values[4] - 0.8 / scale).abs() < 1e-15);
    assert!((table.values[9] + 0.5 / scale).abs() < 1e-15);
    assert!(table
        .values
        .iter()
        .enumerate()
        .all(|(i, v)| i == 4 || i == 9 || *v == 0.0));
    let report = top_k_report(&table, 1);
    assert_eq!(report.top[0].index, 4);
    assert_eq!(report.bottom[0].index, 9);
}

#[test]
fn planted_movers_lead_the_trace_table() {
    let mut r = rng(8);
    let n = 200;
    let base = uniform_matrix(&mut r, n, 3);
    let jitter = uniform_matrix(&mut r, n, 3) * 0.01;
    let mut moved = &base + jitter;
    let movers = [17, 60, 133];
    for (j, &i) in movers.iter().enumerate() {
        moved[(i, j)] += 1.0;
    }
    let y = EmbeddingSeries::new(vec![base, moved], Flavor::Modified).unwrap();
    let table = attribute(&y, 1, 0, Metric::Tv, None).unwrap();
    let mut top: Vec<usize> = table.order_by_magnitude()[..3].to_vec();
    top.sort();
    assert_eq!(top, movers);
}

fn check_bounds(y: &EmbeddingSeries) -> Result<(), TestCaseError> {
    let basis = aggregate_operator(y, &PairSet::all_pairs(y.horizon())).unwrap();
    let mut metrics = vec![Metric::Tv];
    metrics.extend((0..y.dim()).map(Metric::Mode));
    for c in 1..=3usize.min(y.horizon()) {
        for &metric in &metrics {
            let traj =
                cmds_distances(&distance_matrix(y, metric, Some(&basis)).unwrap(), c).unwrap();
            let report = pairwise_bound_check(&traj, y, metric, Some(&basis)).unwrap();
            prop_assert!(
                report.all_hold && report.aggregated_holds,
                "{metric} c={c}: {}",
                report.min_slack
            );
        }
        let mv = cmds_distances(&distance_matrix(y, Metric::Mv, None).unwrap(), c).unwrap();
        let sandwich = mv_sandwich_check(&mv, y).unwrap();
        prop_assert!(sandwich.all_hold, "mv c={c}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectory_bounds_hold(seed in any::<u64>()) {
        check_bounds(&random_series(seed))?;
    }

    #[test]
    fn low_rank_geometry_is_matched_exactly_at_three(seed in any::<u64>()) {
        let y = random_series(seed);
        if y.horizon() < 3 {
            return Ok(());
        }
        let basis = aggregate_operator(&y, &PairSet::all_pairs(y.horizon())).unwrap();
        for k in 0..y.dim() {
            let d = distance_matrix(&y, Metric::Mode(k), Some(&basis)).unwrap();
            let spectrum: Vec<f64> = d.spectrum().iter().copied().collect();
            if numerical_rank(&spectrum) > 3 {
                continue;
            }
            let traj = cmds_distances(&d, 3).unwrap();
            let report = pairwise_bound_check(&traj, &y, Metric::Mode(k), Some(&basis)).unwrap();
            prop_assert!(report.max_residual <= 1e-8, "mode {k}: {}", report.max_residual);
        }
    }
}

#[test]
fn single_direction_motion_has_rank_one_geometry() {
    let mut r = rng(21);
    let base = uniform_matrix(&mut r, 40, 2);
    let dir = DMatrix::from_fn(40, 2, |i, j| if j == 0 { (i % 5) as f64 } else { 0.0 });
    let blocks: Vec<_> = (0..6)
        .map(|t| &base + &dir * (t as f64 * t as f64 * 0.01))
        .collect();
    let y = EmbeddingSeries::new(blocks, Flavor::Modified).unwrap();
    let d = distance_matrix(&y, Metric::Tv, None).unwrap();
    let spectrum: Vec<f64> = d.spectrum().iter().copied().collect();
    assert_eq!(numerical_rank(&spectrum), 1);
    let traj = cmds_distances(&d, 1).unwrap();
    let report = pairwise_bound_check(&traj, &y, Metric::Tv, None).unwrap();
    assert!(report.max_residual <= 1e-12, "{}", report.max_residual);
}
