//! Closed-form population geometry.
//!
//! With isotropic anchors, `φ(t) − φ(s) = β·ΔB·χ` gives
//! `M_φ(t,s) = β²·ΔB·E[χχᵀ]·ΔB = β²·ΔB²`, and for `ΔB = Σ_k Δξ_k u_k u_kᵀ`
//! this is `β² Σ_k Δξ_k² u_k u_kᵀ`. Non-isotropic anchors are handled through
//! the whitened block matrices.

use nalgebra::DMatrix;

use super::LatentModel;
use crate::error::{Error, Result};
use crate::geometry::{
    distance_matrices_from, DistanceMatrix, Metric, ModeBasis, PairSet, SecondMoment,
};

/// `M_φ(t,s)` for 0-based times.
pub fn population_second_moment(model: &LatentModel, t: usize, s: usize) -> Result<SecondMoment> {
    let horizon = model.horizon();
    if t >= horizon || s >= horizon {
        return Err(Error::OutOfRange(format!(
            "pair ({t}, {s}) with horizon {horizon}"
        )));
    }
    let beta = model.block_scale();
    let delta = model.effective_block_matrix(t)? - model.effective_block_matrix(s)?;
    let m: DMatrix<f64> = &delta * &delta * (beta * beta);
    Ok(SecondMoment::new(m, (t, s)))
}

/// Eigenbasis of the population aggregated operator over `pairs`
/// (all unordered pairs when `None`).
pub fn population_mode_basis(model: &LatentModel, pairs: Option<&PairSet>) -> Result<ModeBasis> {
    let all = PairSet::all_pairs(model.horizon());
    let pairs = pairs.unwrap_or(&all);
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    let d = model.dim();
    let mut op = DMatrix::zeros(d, d);
    for &(t, s) in pairs.pairs() {
        op += population_second_moment(model, t, s)?.matrix;
    }
    ModeBasis::from_operator(&op, Some(pairs.clone()))
}

/// Population distance matrix; mode-wise metrics use the population
/// eigenbasis over all pairs.
pub fn population_distance_matrix(model: &LatentModel, metric: Metric) -> Result<DistanceMatrix> {
    let basis = population_mode_basis(model, None)?;
    population_distance_matrix_in_basis(model, metric, &basis)
}

/// Population distance matrix with mode-wise distances along `basis`.
pub fn population_distance_matrix_in_basis(
    model: &LatentModel,
    metric: Metric,
    basis: &ModeBasis,
) -> Result<DistanceMatrix> {
    if basis.dim() != model.dim() {
        return Err(Error::Validation(format!(
            "basis dimension {} does not match model dimension {}",
            basis.dim(),
            model.dim()
        )));
    }
    let mut out = distance_matrices_from(model.horizon(), &[metric], Some(basis), |t, s| {
        population_second_moment(model, t, s)
    })?;
    Ok(out.remove(0))
}
