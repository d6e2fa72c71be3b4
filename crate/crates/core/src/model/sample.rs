use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use super::{AdjacencyMatrix, AnchorDistribution, LatentModel, SnapshotSeries, PROB_TOL};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Latent positions behind one sampled network series.
#[derive(Clone, Debug)]
pub struct LatentSample {
    /// Anchor positions X, n×d (isotropic parameterization).
    pub anchors: DMatrix<f64>,
    /// Dynamic positions Y(t), n×d each.
    pub dynamic: Vec<DMatrix<f64>>,
    /// Community index per node for atom anchors.
    pub communities: Option<Vec<usize>>,
}

impl LatentSample {
    pub fn n(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.dynamic.len()
    }

    /// P(t) = X·Y(t)ᵀ at 0-based time `t`.
    pub fn probability(&self, t: usize) -> DMatrix<f64> {
        &self.anchors * self.dynamic[t].transpose()
    }
}

/// Samples latent positions and adjacency snapshots for `n` nodes.
pub fn sample_dynamic_sbm(
    model: &LatentModel,
    n: usize,
    seed: u64,
) -> Result<(LatentSample, SnapshotSeries)> {
    let mut rng = rng::seeded(seed);
    sample_with_rng(model, n, &mut rng)
}

/// As [`sample_dynamic_sbm`] with a caller-provided generator.
pub fn sample_with_rng(
    model: &LatentModel,
    n: usize,
    rng: &mut Rng,
) -> Result<(LatentSample, SnapshotSeries)> {
    let d = model.dim();
    if n < d {
        return Err(Error::Validation(format!("need n >= d, got n={n}, d={d}")));
    }
    let mut raw = DMatrix::zeros(n, d);
    let mut communities = None;
    match model.anchor() {
        AnchorDistribution::CommunityAtoms { scale } => {
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = rng.random_range(0..d);
                raw[(i, c)] = *scale;
                labels.push(c);
            }
            communities = Some(labels);
        }
        AnchorDistribution::Custom { sampler, .. } => {
            for i in 0..n {
                let chi: DVector<f64> = sampler(rng);
                if chi.len() != d {
                    return Err(Error::Validation(format!(
                        "anchor sampler returned length {}, expected {d}",
                        chi.len()
                    )));
                }
                raw.set_row(i, &chi.transpose());
            }
        }
    }
    let (mut sample, series) = sample_from_anchors(model, &raw, rng)?;
    sample.communities = communities;
    Ok((sample, series))
}

/// Samples snapshots given raw anchor rows (before any whitening).
///
/// Anisotropic anchors are whitened first: rows become `S^{-1/2}χ` and the
/// block matrices `S^{1/2}B(t)S^{1/2}`, which leaves every edge probability
/// unchanged.
pub fn sample_from_anchors(
    model: &LatentModel,
    raw_anchors: &DMatrix<f64>,
    rng: &mut Rng,
) -> Result<(LatentSample, SnapshotSeries)> {
    let d = model.dim();
    let n = raw_anchors.nrows();
    if raw_anchors.ncols() != d {
        return Err(Error::Validation(format!(
            "anchor matrix has {} columns, expected {d}",
            raw_anchors.ncols()
        )));
    }
    let anchors = match model.whitening()? {
        None => raw_anchors.clone(),
        Some((inv_sqrt, _)) => raw_anchors * inv_sqrt,
    };
    let beta = model.block_scale();
    let mut dynamic = Vec::with_capacity(model.horizon());
    let mut snapshots = Vec::with_capacity(model.horizon());
    for t in 0..model.horizon() {
        let b = model.effective_block_matrix(t)?;
        // rows φ_i(t) = β B χ_i, B symmetric
        let y = &anchors * &b * beta;
        let p = &anchors * y.transpose();
        let mut a = AdjacencyMatrix::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let pij = p[(i, j)];
                if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&pij) {
                    return Err(Error::InvalidProbability {
                        t: t + 1,
                        i,
                        j,
                        value: pij,
                    });
                }
                if rng.random::<f64>() < pij {
                    a.insert(i, j)?;
                }
            }
        }
        dynamic.push(y);
        snapshots.push(a);
    }
    let series = SnapshotSeries::with_default_ids(snapshots)?;
    Ok((
        LatentSample {
            anchors,
            dynamic,
            communities: None,
        },
        series,
    ))
}

#[cfg(test)]
mod tests {
    use super::super::{dataset1_spec, presets::community_mode_basis};
    use super::*;
    use std::sync::Arc;

    #[test]
    fn zero_strengths_give_empty_graphs() {
        let model = LatentModel::new(
            "zero",
            community_mode_basis(),
            vec![vec![0.0; 4]; 3],
            AnchorDistribution::CommunityAtoms { scale: 3f64.sqrt() },
            1.0 / 3.0,
        )
        .unwrap();
        let (latent, series) = sample_dynamic_sbm(&model, 30, 1).unwrap();
        for t in 0..4 {
            assert_eq!(series.snapshot(t).edge_count(), 0);
            assert!(latent.probability(t).iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn one_node_per_community_gives_block_probabilities() {
        let mut model = dataset1_spec();
        // all-1/3 block: ξ = (1, 0, 0)
        model = LatentModel::new(
            "flat",
            model.basis().clone(),
            vec![vec![1.0; 2], vec![0.0; 2], vec![0.0; 2]],
            model.anchor().clone(),
            model.block_scale(),
        )
        .unwrap();
        let anchors = DMatrix::identity(3, 3) * 3f64.sqrt();
        let (latent, _) = sample_from_anchors(&model, &anchors, &mut rng::seeded(0)).unwrap();
        for t in 0..2 {
            for p in latent.probability(t).iter() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dynamic_positions_follow_block_matrix() {
        let model = dataset1_spec();
        let (latent, _) = sample_dynamic_sbm(&model, 40, 3).unwrap();
        for t in [0, 7, 15] {
            let expected = &latent.anchors * model.block_matrix(t) / 3.0;
            assert!((&latent.dynamic[t] - expected).abs().max() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = dataset1_spec();
        let (_, a) = sample_dynamic_sbm(&model, 50, 11).unwrap();
        let (_, b) = sample_dynamic_sbm(&model, 50, 11).unwrap();
        let (_, c) = sample_dynamic_sbm(&model, 50, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_block_density_concentrates() {
        let model = dataset1_spec();
        let (latent, series) = sample_dynamic_sbm(&model, 2000, 5).unwrap();
        let comm = latent.communities.as_ref().unwrap();
        let t = 9;
        let b = model.block_matrix(t);
        let a = series.snapshot(t);
        for ca in 0..3 {
            for cb in ca..3 {
                let mut pairs = 0usize;
                let mut hits = 0usize;
                for i in 0..2000 {
                    for j in (i + 1)..2000 {
                        let (x, y) = (comm[i], comm[j]);
                        if (x == ca && y == cb) || (x == cb && y == ca) {
                            pairs += 1;
                            hits += a.contains(i, j) as usize;
                        }
                    }
                }
                let p = b[(ca, cb)];
                let dens = hits as f64 / pairs as f64;
                let se = (p * (1.0 - p) / pairs as f64).sqrt();
                assert!(
                    (dens - p).abs() <= 3.0 * se,
                    "block ({ca},{cb}) {dens} vs {p}"
                );
            }
        }
    }

    #[test]
    fn anisotropic_anchors_are_whitened() {
        let basis = community_mode_basis();
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.25]));
        let sampler = Arc::new(|rng: &mut Rng| {
            let c = rng.random_range(0..3);
            let mut v = DVector::zeros(3);
            v[c] = [12f64.sqrt(), 3f64.sqrt(), 0.75f64.sqrt()][c];
            v
        });
        let model = LatentModel::new(
            "aniso",
            basis,
            vec![vec![0.1, 0.2], vec![0.05, 0.02], vec![0.02, 0.01]],
            AnchorDistribution::Custom {
                sampler,
                second_moment: s.clone(),
            },
            1.0 / 3.0,
        )
        .unwrap();
        let raw = DMatrix::from_row_slice(
            3,
            3,
            &[
                12f64.sqrt(),
                0.,
                0.,
                0.,
                3f64.sqrt(),
                0.,
                0.,
                0.,
                0.75f64.sqrt(),
            ],
        );
        let (latent, _) = sample_from_anchors(&model, &raw, &mut rng::seeded(2)).unwrap();
        for t in 0..2 {
            let unwhitened = &raw * model.block_matrix(t) * raw.transpose() / 3.0;
            assert!((latent.probability(t) - unwhitened).abs().max() < 1e-14);
        }
        let (big, _) = sample_with_rng(&model, 3000, &mut rng::seeded(4)).unwrap();
        let gram = big.anchors.transpose() * &big.anchors / 3000.0;
        assert!((gram - DMatrix::<f64>::identity(3, 3)).abs().max() < 0.1);
    }
}
