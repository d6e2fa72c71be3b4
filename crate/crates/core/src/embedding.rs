//! Unfolded adjacency spectral embedding.
//!
//! The snapshots are concatenated column-wise into `A = [A(1) | … | A(T)]`
//! and a rank-d SVD `A ≈ U Σ Vᵀ` is taken. `V` splits into per-time blocks
//! `V(t)`, which give the two embedding flavors
//!
//! * original: `Ŷ(t) = V(t) Σ^{1/2}`,
//! * modified: `Ŷ(t) = n^{-1/2} V(t) Σ`.
//!
//! Because `nT ≫ n`, the SVD goes through the n×n Gram matrix `AAᵀ`, which
//! for binary snapshots is accumulated with popcounts over packed rows.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::model::{AdjacencyMatrix, SnapshotSeries};

const REPEAT_REL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
enum Blocks {
    Binary(Vec<AdjacencyMatrix>),
    Dense(Vec<DMatrix<f64>>),
}

/// n×nT column concatenation of the snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct UnfoldedMatrix {
    n: usize,
    blocks: Blocks,
}

pub fn unfold(series: &SnapshotSeries) -> UnfoldedMatrix {
    UnfoldedMatrix {
        n: series.n(),
        blocks: Blocks::Binary(series.snapshots().to_vec()),
    }
}

impl UnfoldedMatrix {
    /// Wraps an arbitrary real n×nT matrix split into `horizon` square blocks.
    pub fn from_dense(data: &DMatrix<f64>, horizon: usize) -> Result<Self> {
        let n = data.nrows();
        if horizon == 0 || data.ncols() != n * horizon {
            return Err(Error::Validation(format!(
                "unfolded matrix is {}x{}, expected {n}x{}",
                n,
                data.ncols(),
                n * horizon
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("unfolded matrix".into()));
        }
        let blocks = (0..horizon)
            .map(|t| data.columns(t * n, n).into_owned())
            .collect();
        Ok(Self {
            n,
            blocks: Blocks::Dense(blocks),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        match &self.blocks {
            Blocks::Binary(b) => b.len(),
            Blocks::Dense(b) => b.len(),
        }
    }

    /// Column offset of block `t`.
    pub fn offset(&self, t: usize) -> usize {
        t * self.n
    }

    pub fn block(&self, t: usize) -> DMatrix<f64> {
        match &self.blocks {
            Blocks::Binary(b) => b[t].to_dense(),
            Blocks::Dense(b) => b[t].clone(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut out = DMatrix::zeros(n, n * self.horizon());
        for t in 0..self.horizon() {
            out.columns_mut(t * n, n).copy_from(&self.block(t));
        }
        out
    }

    /// `A Aᵀ = Σ_t A(t) A(t)ᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.n;
        match &self.blocks {
            Blocks::Binary(snaps) => {
                let rows: Vec<Vec<u64>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        (i..n)
                            .map(|j| snaps.iter().map(|a| a.common_neighbours(i, j) as u64).sum())
                            .collect()
                    })
                    .collect();
                let mut g = DMatrix::zeros(n, n);
                for (i, row) in rows.iter().enumerate() {
                    for (off, &v) in row.iter().enumerate() {
                        g[(i, i + off)] = v as f64;
                        g[(i + off, i)] = v as f64;
                    }
                }
                g
            }
            Blocks::Dense(blocks) => {
                let mut g = DMatrix::zeros(n, n);
                for b in blocks {
                    g += b * b.transpose();
                }
                crate::linalg::symmetrize(&g)
            }
        }
    }

    /// `A(t)ᵀ U` for an n×k matrix `U`.
    pub fn block_transpose_mul(&self, t: usize, u: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.blocks {
            Blocks::Binary(snaps) => {
                let a = &snaps[t];
                let mut out = DMatrix::zeros(self.n, u.ncols());
                for i in 0..self.n {
                    for j in a.neighbours(i) {
                        for c in 0..u.ncols() {
                            out[(i, c)] += u[(j, c)];
                        }
                    }
                }
                out
            }
            Blocks::Dense(blocks) => blocks[t].transpose() * u,
        }
    }
}

/// Solver diagnostics kept alongside the truncated SVD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdDiagnostics {
    /// All n singular values of the unfolded matrix, decreasing (scree).
    pub spectrum: Vec<f64>,
    /// Indices j (0-based) with σ_j and σ_{j+1} tied, among the retained ones
    /// and the first discarded one.
    pub repeated: Vec<usize>,
    /// σ_{d+1}, the spectral residual of the rank-d approximation.
    pub next_singular_value: Option<f64>,
}

/// Rank-d truncated SVD of an unfolded matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_blocks: Vec<DMatrix<f64>>,
    pub diagnostics: SvdDiagnostics,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.v_blocks.len()
    }

    /// `U Σ V(t)ᵀ`.
    pub fn reconstruct_block(&self, t: usize) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sigma) * self.v_blocks[t].transpose()
    }
}

/// Top-d singular triples of `a`.
///
/// A zero matrix yields σ = 0 and the leading columns of the identity as U.
pub fn truncated_svd(a: &UnfoldedMatrix, d: usize) -> Result<TruncatedSvd> {
    let n = a.n();
    if d == 0 || d > n {
        return Err(Error::RankTooLarge {
            rank: d,
            rows: n,
            cols: n * a.horizon(),
        });
    }
    let gram = a.gram();
    let (lambda, vectors) = sym_eigen_desc(&gram)?;
    let top = lambda[0].max(0.0);
    let floor = n as f64 * f64::EPSILON * top;
    let spectrum: Vec<f64> = lambda
        .iter()
        .map(|&l| if l > floor { l.sqrt() } else { 0.0 })
        .collect();

    let u = if top > 0.0 {
        vectors.columns(0, d).into_owned()
    } else {
        DMatrix::identity(n, d)
    };
    let sigma = DVector::from_iterator(d, spectrum.iter().take(d).copied());
    let inv: Vec<f64> = sigma
        .iter()
        .map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 })
        .collect();
    let inv = DMatrix::from_diagonal(&DVector::from_vec(inv));
    let v_blocks: Vec<DMatrix<f64>> = (0..a.horizon())
        .into_par_iter()
        .map(|t| a.block_transpose_mul(t, &u) * &inv)
        .collect();

    let s1 = spectrum[0];
    let last = (d + 1).min(n);
    let repeated = (0..last.saturating_sub(1))
        .filter(|&j| s1 > 0.0 && spectrum[j] - spectrum[j + 1] <= REPEAT_REL * s1)
        .collect::<Vec<_>>();
    if !repeated.is_empty() {
        log::warn!("repeated singular values at indices {repeated:?}");
    }
    Ok(TruncatedSvd {
        u,
        sigma,
        v_blocks,
        diagnostics: SvdDiagnostics {
            next_singular_value: spectrum.get(d).copied(),
            spectrum,
            repeated,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Original,
    Modified,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Original => "original",
            Flavor::Modified => "modified",
        })
    }
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Flavor::Original),
            "modified" => Ok(Flavor::Modified),
            other => Err(Error::Validation(format!(
                "unknown embedding flavor `{other}`"
            ))),
        }
    }
}

/// Per-time n×d embedding blocks in a shared coordinate system.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSeries {
    blocks: Vec<DMatrix<f64>>,
    flavor: Flavor,
}

impl EmbeddingSeries {
    pub fn new(blocks: Vec<DMatrix<f64>>, flavor: Flavor) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Validation("embedding series needs at least one block".into()))?;
        let shape = first.shape();
        if let Some(t) = blocks.iter().position(|b| b.shape() != shape) {
            return Err(Error::Validation(format!(
                "block {} has shape {:?}, expected {shape:?}",
                t + 1,
                blocks[t].shape()
            )));
        }
        if blocks.iter().flat_map(|b| b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding block".into()));
        }
        Ok(Self { blocks, flavor })
    }

    pub fn n(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn horizon(&self) -> usize {
        self.blocks.len()
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn block(&self, t: usize) -> &DMatrix<f64> {
        &self.blocks[t]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Every block right-multiplied by `g` (d×d).
    pub fn transformed(&self, g: &DMatrix<f64>) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b * g).collect(),
            flavor: self.flavor,
        }
    }
}

/// `Ŷ(t) = n^{-1/2} V(t) Σ`.
pub fn modified_uase(svd: &TruncatedSvd, n: usize) -> Result<EmbeddingSeries> {
    if n != svd.n() || n == 0 {
        return Err(Error::Validation(format!(
            "node count {n} does not match the decomposition ({})",
            svd.n()
        )));
    }
    let scale = DMatrix::from_diagonal(&svd.sigma) / (n as f64).sqrt();
    EmbeddingSeries::new(
        svd.v_blocks.iter().map(|v| v * &scale).collect(),
        Flavor::Modified,
    )
}

/// `Ŷ(t) = V(t) Σ^{1/2}`.
pub fn original_uase(svd: &TruncatedSvd) -> Result<EmbeddingSeries> {
    let scale = DMatrix::from_diagonal(&svd.sigma.map(f64::sqrt));
    EmbeddingSeries::new(
        svd.v_blocks.iter().map(|v| v * &scale).collect(),
        Flavor::Original,
    )
}

/// Unfold, decompose and embed in one step.
pub fn embed(
    series: &SnapshotSeries,
    d: usize,
    flavor: Flavor,
) -> Result<(TruncatedSvd, EmbeddingSeries)> {
    let svd = truncated_svd(&unfold(series), d)?;
    let y = match flavor {
        Flavor::Original => original_uase(&svd)?,
        Flavor::Modified => modified_uase(&svd, series.n())?,
    };
    Ok((svd, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn series_from(dense: &[DMatrix<f64>]) -> SnapshotSeries {
        SnapshotSeries::with_default_ids(
            dense
                .iter()
                .map(|m| AdjacencyMatrix::from_dense(m).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_snapshot_unfolds_to_itself() {
        let a = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        assert_eq!(unfold(&series_from(&[a.clone()])).to_dense(), a);
    }

    #[test]
    fn concatenation_example() {
        let a1 = DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]);
        let a2 = DMatrix::zeros(2, 2);
        let u = unfold(&series_from(&[a1, a2]));
        assert_eq!(
            u.to_dense(),
            DMatrix::from_row_slice(2, 4, &[0., 1., 0., 0., 1., 0., 0., 0.])
        );
        assert_eq!(u.offset(1), 2);
    }

    #[test]
    fn blocks_round_trip_and_gram_matches_dense() {
        let mut r = rng::seeded(9);
        let n = 70;
        let dense: Vec<DMatrix<f64>> = (0..3)
            .map(|_| {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in (i + 1)..n {
                        if r.random::<f64>() < 0.2 {
                            m[(i, j)] = 1.0;
                            m[(j, i)] = 1.0;
                        }
                    }
                }
                m
            })
            .collect();
        let u = unfold(&series_from(&dense));
        for (t, m) in dense.iter().enumerate() {
            assert_eq!(&u.block(t), m);
        }
        let full = u.to_dense();
        assert_eq!(u.gram(), &full * full.transpose());
        let probe = DMatrix::from_fn(n, 2, |i, j| (i * 3 + j) as f64);
        assert_eq!(
            u.block_transpose_mul(1, &probe),
            dense[1].transpose() * &probe
        );
    }

    #[test]
    fn zero_matrix_has_canonical_basis() {
        let u = unfold(&series_from(&[DMatrix::zeros(4, 4), DMatrix::zeros(4, 4)]));
        let svd = truncated_svd(&u, 2).unwrap();
        assert_eq!(svd.sigma, DVector::zeros(2));
        assert_eq!(svd.u, DMatrix::identity(4, 2));
        let y = modified_uase(&svd, 4).unwrap();
        assert!(y.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn rank_one_outer_product() {
        let a = DVector::from_vec(vec![2.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 2.0, 0.0]);
        let m = UnfoldedMatrix::from_dense(&(&a * b.transpose()), 2).unwrap();
        let svd = truncated_svd(&m, 1).unwrap();
        assert!((svd.sigma[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rank() {
        let m = UnfoldedMatrix::from_dense(&DMatrix::zeros(3, 6), 2).unwrap();
        assert!(matches!(
            truncated_svd(&m, 0),
            Err(Error::RankTooLarge { .. })
        ));
        assert!(matches!(
            truncated_svd(&m, 4),
            Err(Error::RankTooLarge { .. })
        ));
    }

    #[test]
    fn agrees_with_dense_svd() {
        let mut r = rng::seeded(21);
        let data = DMatrix::from_fn(50, 200, |_, _| r.random::<f64>() - 0.5);
        let m = UnfoldedMatrix::from_dense(&data, 4).unwrap();
        let d = 5;
        let svd = truncated_svd(&m, d).unwrap();
        let reference = data.clone().svd(true, true);
        let mut order: Vec<usize> = (0..50).collect();
        order.sort_by(|&i, &j| {
            reference.singular_values[j].total_cmp(&reference.singular_values[i])
        });
        let ref_u = DMatrix::from_fn(50, d, |i, j| reference.u.as_ref().unwrap()[(i, order[j])]);
        for j in 0..d {
            let s = reference.singular_values[order[j]];
            assert!((svd.sigma[j] - s).abs() < 1e-8 * s.max(1.0));
        }
        let p = &svd.u * svd.u.transpose();
        let p_ref = &ref_u * ref_u.transpose();
        assert!((p - p_ref).abs().max() < 1e-8);
        assert!(crate::linalg::orthonormality_defect(&svd.u) < 1e-8);

        // A v_j = σ_j u_j with v_j stacked across blocks
        for j in 0..d {
            let mut av = DVector::zeros(50);
            for t in 0..4 {
                av += m.block(t) * svd.v_blocks[t].column(j);
            }
            let res = (av - svd.u.column(j) * svd.sigma[j]).norm();
            assert!(res <= 1e-6 * svd.sigma[0]);
        }
        let next = svd.diagnostics.next_singular_value.unwrap();
        assert!((next - reference.singular_values[order[d]]).abs() < 1e-8);
    }

    #[test]
    fn modified_scaling_cancels_in_one_dimension() {
        let v = DMatrix::from_column_slice(4, 1, &[0.5, 0.5, 0.5, 0.5]);
        let svd = TruncatedSvd {
            u: DMatrix::from_column_slice(4, 1, &[0.5; 4]),
            sigma: DVector::from_vec(vec![2.0]),
            v_blocks: vec![v.clone()],
            diagnostics: SvdDiagnostics {
                spectrum: vec![2.0],
                repeated: vec![],
                next_singular_value: None,
            },
        };
        assert_eq!(modified_uase(&svd, 4).unwrap().block(0), &v);
    }

    #[test]
    fn original_flavor_homogeneity() {
        let v = DMatrix::from_row_slice(3, 2, &[1., 2., 3., 4., 5., 6.]);
        let mut svd = TruncatedSvd {
            u: DMatrix::identity(3, 2),
            sigma: DVector::from_vec(vec![1.0, 1.0]),
            v_blocks: vec![v.clone()],
            diagnostics: SvdDiagnostics {
                spectrum: vec![1.0, 1.0, 0.0],
                repeated: vec![0],
                next_singular_value: Some(0.0),
            },
        };
        assert_eq!(original_uase(&svd).unwrap().block(0), &v);
        svd.sigma *= 2.0;
        let doubled = original_uase(&svd).unwrap();
        assert!((doubled.block(0) - &v * 2f64.sqrt()).abs().max() < 1e-15);
    }
}
