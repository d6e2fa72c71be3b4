mod common;

use ment_core::embedding::{embed, Flavor};
use ment_core::evaluation::aligned_series_error;
use ment_core::geometry::{aggregate_operator, distance_matrix, Metric, PairSet};
use ment_core::model::{
    dataset1_spec, dataset2_spec, population_distance_matrix, population_mode_basis,
    sample_dynamic_sbm,
};
use ment_core::trajectory::cmds_distances;

fn centered_over_three(xs: &[f64]) -> Vec<f64> {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) / 3.0).collect()
}

#[test]
fn population_mode_trajectories_are_centered_strengths() {
    for model in [dataset1_spec(), dataset2_spec()] {
        for r in 0..model.dim() {
            let d = population_distance_matrix(&model, Metric::Mode(r)).unwrap();
            let psi = cmds_distances(&d, 1).unwrap().series(0);
            let expected = centered_over_three(&model.strengths()[model.mode_order()[r]]);
            let sign = if psi.iter().zip(&expected).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
                -1.0
            } else {
                1.0
            };
            for (a, b) in psi.iter().zip(&expected) {
                assert!(
                    (sign * a - b).abs() < 1e-10,
                    "{} mode {r}: {a} vs {b}",
                    model.name()
                );
            }
        }
    }
}

#[test]
fn population_basis_ranks_modes_by_variation() {
    for model in [dataset1_spec(), dataset2_spec()] {
        let basis = population_mode_basis(&model, None).unwrap();
        let ev = basis.eigenvalues();
        assert!(ev[0] > ev[1] && ev[1] > ev[2], "{}: {ev:?}", model.name());
        for r in 0..model.dim() {
            let u = basis.vector(r);
            let col = model.basis().column(model.mode_order()[r]);
            assert!((u.dot(&col).abs() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn sampled_mode_trajectories_track_the_population() {
    let model = dataset1_spec();
    let (_, series) = sample_dynamic_sbm(&model, 500, 3).unwrap();
    let (_, y) = embed(&series, 3, Flavor::Modified).unwrap();
    let basis = aggregate_operator(&y, &PairSet::all_pairs(y.horizon())).unwrap();
    for r in 0..3 {
        let est = cmds_distances(
            &distance_matrix(&y, Metric::Mode(r), Some(&basis)).unwrap(),
            1,
        )
        .unwrap()
        .series(0);
        let pop = cmds_distances(
            &population_distance_matrix(&model, Metric::Mode(r)).unwrap(),
            1,
        )
        .unwrap()
        .series(0);
        let err = aligned_series_error(&est, &pop, false);
        let size = pop.iter().map(|v| v * v).sum::<f64>();
        assert!(
            err < 0.1 * size,
            "mode {r}: squared error {err} against {size}"
        );
    }
}
