//! Population generative model, synthetic presets and sampling.
//!
//! A node carries a time-invariant anchor `χ` and dynamic positions
//! `φ(t) = β·B(t)·χ` where `B(t) = Σ_k ξ_k(t) u_k u_kᵀ` is built from an
//! orthonormal mode basis and per-mode strength curves, and `β` is the block
//! scale (`1/d` for the community presets). Edge probabilities are
//! `P_ij(t) = χ_iᵀ φ_j(t)`.

mod adjacency;
mod population;
mod presets;
mod sample;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::changepoint::Order;
use crate::error::{Error, Result};
use crate::linalg::orthonormality_defect;
use crate::rng::Rng;

pub use adjacency::{AdjacencyMatrix, SnapshotSeries};
pub use population::{
    population_distance_matrix, population_distance_matrix_in_basis, population_mode_basis,
    population_second_moment,
};
pub use presets::{dataset1_spec, dataset2_spec, preset_by_name, PresetExport};
pub use sample::{sample_dynamic_sbm, sample_from_anchors, sample_with_rng, LatentSample};

const BASIS_TOL: f64 = 1e-10;
const PROB_TOL: f64 = 1e-12;

/// Returns `Σ_k ξ_k u_k u_kᵀ` for the columns `u_k` of `basis`.
pub fn build_block_matrix(strengths: &[f64], basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = basis.nrows();
    if basis.ncols() != d || strengths.len() != d {
        return Err(Error::Validation(format!(
            "basis is {}x{} but {} strengths were given",
            basis.nrows(),
            basis.ncols(),
            strengths.len()
        )));
    }
    let defect = orthonormality_defect(basis);
    if defect > BASIS_TOL {
        return Err(Error::Validation(format!(
            "mode basis is not orthonormal (defect {defect:.3e})"
        )));
    }
    let mut b = DMatrix::zeros(d, d);
    for (k, &xi) in strengths.iter().enumerate() {
        let u = basis.column(k);
        b += xi * &u * u.transpose();
    }
    Ok(crate::linalg::symmetrize(&b))
}

/// A change planted in one strength curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedChange {
    /// Column of the mode basis whose strength changes.
    pub basis: usize,
    /// 1-based time of the change.
    pub time: usize,
    pub order: Order,
}

type AnchorSampler = dyn Fn(&mut Rng) -> DVector<f64> + Send + Sync;

/// Distribution of the anchor vector `χ`.
#[derive(Clone)]
pub enum AnchorDistribution {
    /// `χ = scale·e_c` with the community `c` uniform over `0..d`.
    CommunityAtoms { scale: f64 },
    /// Arbitrary anchors. `second_moment` must equal `E[χχᵀ]`.
    Custom {
        sampler: Arc<AnchorSampler>,
        second_moment: DMatrix<f64>,
    },
}

impl AnchorDistribution {
    pub fn second_moment(&self, d: usize) -> DMatrix<f64> {
        match self {
            AnchorDistribution::CommunityAtoms { scale } => {
                DMatrix::identity(d, d) * (scale * scale / d as f64)
            }
            AnchorDistribution::Custom { second_moment, .. } => second_moment.clone(),
        }
    }

    pub fn is_isotropic(&self, d: usize) -> bool {
        let s = self.second_moment(d);
        (s - DMatrix::<f64>::identity(d, d)).abs().max() <= 1e-12
    }
}

impl fmt::Debug for AnchorDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnchorDistribution::CommunityAtoms { scale } => f
                .debug_struct("CommunityAtoms")
                .field("scale", scale)
                .finish(),
            AnchorDistribution::Custom { second_moment, .. } => f
                .debug_struct("Custom")
                .field("second_moment", second_moment)
                .finish_non_exhaustive(),
        }
    }
}

/// Population description of a dynamic network.
#[derive(Clone, Debug)]
pub struct LatentModel {
    name: String,
    basis: DMatrix<f64>,
    /// `strengths[k][t]` is ξ_k at 0-based time t, attached to basis column k.
    strengths: Vec<Vec<f64>>,
    anchor: AnchorDistribution,
    block_scale: f64,
    events: Vec<PlantedChange>,
    /// `mode_order[r]` is the basis column that carries the r-th largest
    /// share of temporal variation.
    mode_order: Vec<usize>,
}

impl LatentModel {
    pub fn new(
        name: impl Into<String>,
        basis: DMatrix<f64>,
        strengths: Vec<Vec<f64>>,
        anchor: AnchorDistribution,
        block_scale: f64,
    ) -> Result<Self> {
        let d = basis.nrows();
        if d == 0 || basis.ncols() != d {
            return Err(Error::Validation(
                "mode basis must be a nonempty square matrix".into(),
            ));
        }
        let defect = orthonormality_defect(&basis);
        if defect > BASIS_TOL {
            return Err(Error::Validation(format!(
                "mode basis is not orthonormal (defect {defect:.3e})"
            )));
        }
        if strengths.len() != d {
            return Err(Error::Validation(format!(
                "expected {d} strength curves, got {}",
                strengths.len()
            )));
        }
        let horizon = strengths[0].len();
        if horizon == 0 || strengths.iter().any(|s| s.len() != horizon) {
            return Err(Error::Validation(
                "strength curves must share a nonzero length".into(),
            ));
        }
        if strengths.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("strength curves must be finite".into()));
        }
        if !(block_scale > 0.0) {
            return Err(Error::Validation("block scale must be positive".into()));
        }
        if let AnchorDistribution::CommunityAtoms { scale } = anchor {
            if !(scale > 0.0) {
                return Err(Error::Validation("anchor scale must be positive".into()));
            }
        }
        let model = Self {
            name: name.into(),
            basis,
            strengths,
            anchor,
            block_scale,
            events: Vec::new(),
            mode_order: (0..d).collect(),
        };
        if matches!(model.anchor, AnchorDistribution::CommunityAtoms { .. }) {
            model.validate_block_probabilities()?;
        }
        Ok(model)
    }

    pub fn with_events(mut self, events: Vec<PlantedChange>) -> Result<Self> {
        for e in &events {
            if e.basis >= self.dim() || e.time < 1 || e.time > self.horizon() {
                return Err(Error::Validation(format!(
                    "planted change {e:?} out of range"
                )));
            }
        }
        self.events = events;
        Ok(self)
    }

    pub fn with_mode_order(mut self, order: Vec<usize>) -> Result<Self> {
        let mut seen = order.clone();
        seen.sort_unstable();
        if seen != (0..self.dim()).collect::<Vec<_>>() {
            return Err(Error::Validation(format!(
                "mode order {order:?} is not a permutation"
            )));
        }
        self.mode_order = order;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.strengths[0].len()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn strengths(&self) -> &[Vec<f64>] {
        &self.strengths
    }

    pub fn anchor(&self) -> &AnchorDistribution {
        &self.anchor
    }

    pub fn block_scale(&self) -> f64 {
        self.block_scale
    }

    pub fn events(&self) -> &[PlantedChange] {
        &self.events
    }

    pub fn mode_order(&self) -> &[usize] {
        &self.mode_order
    }

    /// Planted changes of the r-th mode (by importance), sorted by time.
    pub fn mode_events(&self, mode: usize) -> Vec<PlantedChange> {
        let basis = self.mode_order[mode];
        let mut ev: Vec<_> = self
            .events
            .iter()
            .filter(|e| e.basis == basis)
            .copied()
            .collect();
        ev.sort_by_key(|e| e.time);
        ev
    }

    /// Sorted, deduplicated 1-based change times.
    pub fn change_times(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.events.iter().map(|e| e.time).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// ξ(t) for all modes at 0-based time `t`.
    pub fn strengths_at(&self, t: usize) -> Vec<f64> {
        self.strengths.iter().map(|s| s[t]).collect()
    }

    /// B(t) at 0-based time `t`.
    pub fn block_matrix(&self, t: usize) -> DMatrix<f64> {
        build_block_matrix(&self.strengths_at(t), &self.basis).expect("basis validated")
    }

    /// Checks every entry of every B(t) lies in [0, 1].
    pub fn validate_block_probabilities(&self) -> Result<()> {
        for t in 0..self.horizon() {
            let b = self.block_matrix(t);
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    let v = b[(i, j)];
                    if v < -PROB_TOL || v > 1.0 + PROB_TOL {
                        return Err(Error::InvalidProbability {
                            t: t + 1,
                            i,
                            j,
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// `(S^{-1/2}, S^{1/2})` for the anchor second moment `S`, or `None`
    /// when the anchor is already isotropic.
    pub fn whitening(&self) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
        if self.anchor.is_isotropic(self.dim()) {
            return Ok(None);
        }
        crate::linalg::inv_sqrt_spd(&self.anchor.second_moment(self.dim())).map(Some)
    }

    /// Block matrix in the isotropic parameterization, `S^{1/2} B(t) S^{1/2}`.
    pub fn effective_block_matrix(&self, t: usize) -> Result<DMatrix<f64>> {
        let b = self.block_matrix(t);
        Ok(match self.whitening()? {
            None => b,
            Some((_, sqrt)) => &sqrt * b * &sqrt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn community_basis() -> DMatrix<f64> {
        presets::community_mode_basis()
    }

    #[test]
    fn zero_strengths_give_zero_block() {
        let b = build_block_matrix(&[0.0, 0.0, 0.0], &community_basis()).unwrap();
        assert_eq!(b, DMatrix::zeros(3, 3));
    }

    #[test]
    fn global_mode_gives_constant_block() {
        let b = build_block_matrix(&[1.0, 0.0, 0.0], &community_basis()).unwrap();
        for v in b.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn block_spectrum_equals_strengths() {
        let xi = [0.9, 0.3, 0.2];
        let b = build_block_matrix(&xi, &community_basis()).unwrap();
        let mut eig: Vec<f64> = b
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (e, x) in eig.iter().zip(xi) {
            assert!((e - x).abs() < 1e-12, "{eig:?}");
        }
        assert_eq!(b, b.transpose());
    }

    #[test]
    fn rejects_non_orthonormal_basis() {
        let mut basis = community_basis();
        basis[(0, 0)] += 1e-6;
        assert!(matches!(
            build_block_matrix(&[0.1, 0.1, 0.1], &basis),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn invalid_block_probability_names_location() {
        let r = LatentModel::new(
            "bad",
            community_basis(),
            vec![vec![0.3, 4.0], vec![0.0, 0.0], vec![0.0, 0.0]],
            AnchorDistribution::CommunityAtoms { scale: 3f64.sqrt() },
            1.0 / 3.0,
        );
        assert!(matches!(r, Err(Error::InvalidProbability { t: 2, .. })));
    }
}
