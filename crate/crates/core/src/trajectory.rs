//! Classical multidimensional scaling of time points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centered_gram, DistanceMatrix, Metric};
use crate::linalg::{procrustes, sym_eigen_desc};

const POSITIVE_REL: f64 = 1e-12;
const RANK_REL: f64 = 1e-10;

/// CMDS coordinates of the T time points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// T×c coordinates; row t is ψ(t).
    pub coords: DMatrix<f64>,
    pub metric: Option<Metric>,
    /// Eigenvalues used for the coordinates, decreasing and positive.
    pub eigenvalues: Vec<f64>,
    /// Full spectrum of the centered Gram matrix, decreasing.
    pub spectrum: Vec<f64>,
    /// sqrt of the sum of squared eigenvalues not used for coordinates.
    pub strain: f64,
    /// Fewer than c positive eigenvalues; trailing columns are zero.
    pub rank_deficient: bool,
    /// Negative Gram eigenvalues (non-Euclidean input), largest magnitude first.
    pub negative_eigenvalues: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    /// Column `k` as a time series.
    pub fn series(&self, k: usize) -> Vec<f64> {
        self.coords.column(k).iter().copied().collect()
    }

    /// ‖ψ(t) − ψ(s)‖.
    pub fn distance(&self, t: usize, s: usize) -> f64 {
        (self.coords.row(t) - self.coords.row(s)).norm()
    }

    pub fn distance_matrix(&self) -> DMatrix<f64> {
        let t = self.horizon();
        DMatrix::from_fn(t, t, |i, j| self.distance(i, j))
    }
}

/// `E = −½ J D² J`.
pub fn double_center(d: &DistanceMatrix) -> DMatrix<f64> {
    d.gram().clone()
}

/// Number of eigenvalues above `RANK_REL·λ_1`.
pub fn numerical_rank(spectrum: &[f64]) -> usize {
    let top = spectrum.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    spectrum.iter().filter(|&&l| l > RANK_REL * top).count()
}

/// Top-c CMDS embedding `Z = U_c Λ_c^{1/2}` of a centered Gram matrix.
pub fn cmds(e: &DMatrix<f64>, c: usize) -> Result<Trajectory> {
    if c == 0 {
        return Err(Error::Validation(
            "target dimension must be at least 1".into(),
        ));
    }
    let t = e.nrows();
    let (values, vectors) = sym_eigen_desc(e)?;
    let top = values.iter().cloned().fold(0.0, f64::max);
    let positive = values
        .iter()
        .take_while(|&&l| top > 0.0 && l > POSITIVE_REL * top)
        .count();
    let used = positive.min(c).min(t);
    let rank_deficient = used < c;
    if rank_deficient {
        log::warn!("only {used} positive Gram eigenvalues for a {c}-dimensional trajectory");
    }

    let mut coords = DMatrix::zeros(t, c);
    for k in 0..used {
        coords.set_column(k, &(vectors.column(k) * values[k].sqrt()));
    }
    orient_first_nonzero(&mut coords);

    let strain = values.iter().skip(used).map(|l| l * l).sum::<f64>().sqrt();
    let mut negative: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&l| l < -POSITIVE_REL * top)
        .collect();
    negative.sort_by(|a, b| a.total_cmp(b));
    if !negative.is_empty() {
        log::warn!(
            "centered Gram matrix has {} negative eigenvalues",
            negative.len()
        );
    }
    Ok(Trajectory {
        coords,
        metric: None,
        eigenvalues: values.iter().take(used).copied().collect(),
        spectrum: values.iter().copied().collect(),
        strain,
        rank_deficient,
        negative_eigenvalues: negative,
    })
}

/// CMDS of a distance matrix, tagged with its metric.
pub fn cmds_distances(d: &DistanceMatrix, c: usize) -> Result<Trajectory> {
    let mut tr = cmds(d.gram(), c)?;
    tr.metric = Some(d.metric());
    Ok(tr)
}

/// Centered Gram matrix from squared distances (convenience for raw input).
pub fn gram_from_squared(squared: &DMatrix<f64>) -> DMatrix<f64> {
    centered_gram(squared)
}

fn orient_first_nonzero(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let scale = m.column(j).amax();
        if scale == 0.0 {
            continue;
        }
        if let Some(first) = m
            .column(j)
            .iter()
            .copied()
            .find(|v| v.abs() > 1e-12 * scale)
        {
            if first < 0.0 {
                m.column_mut(j).neg_mut();
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignGroup {
    Orthogonal,
    /// Independent sign flip per coordinate.
    Sign,
}

/// Best alignment of a reference trajectory onto an estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// c×c orthogonal matrix minimising ‖Ψ̂ − Ψ W‖_F (rows are time points).
    pub w: DMatrix<f64>,
    /// Σ_t ‖ψ̂(t) − Wᵀψ(t)‖².
    pub error: f64,
}

pub fn align(est: &Trajectory, reference: &Trajectory, group: AlignGroup) -> Result<Alignment> {
    align_coords(&est.coords, &reference.coords, group)
}

pub fn align_coords(
    est: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    group: AlignGroup,
) -> Result<Alignment> {
    if est.shape() != reference.shape() {
        return Err(Error::Validation(format!(
            "cannot align {:?} against {:?}",
            est.shape(),
            reference.shape()
        )));
    }
    let c = est.ncols();
    let w = match group {
        AlignGroup::Orthogonal if c > 1 => procrustes(reference, est),
        _ => {
            // per-column sign; for c = 1 this is the full orthogonal group
            let signs = (0..c).map(|k| {
                if est.column(k).dot(&reference.column(k)) < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            });
            DMatrix::from_diagonal(&DVector::from_iterator(c, signs))
        }
    };
    let error = (est - reference * &w).norm_squared();
    Ok(Alignment { w, error })
}

/// CMDS perturbation diagnostics for the eigenvalue block a..=b (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub gap: f64,
    pub kappa: f64,
    pub degenerate: bool,
}

/// `gap(a,b) = min(λ_{a−1} − λ_a, λ_b − λ_{b+1})` with `λ_0 = ∞`,
/// `λ_{r+1} = −∞`, and `κ = λ_a / min(gap, λ_b)` over a decreasing spectrum
/// of length r.
pub fn conditioning_from_spectrum(spectrum: &[f64], a: usize, b: usize) -> Result<Conditioning> {
    let r = spectrum.len();
    if a == 0 || a > b || b > r {
        return Err(Error::OutOfRange(format!(
            "eigenvalue block {a}..={b} of {r}"
        )));
    }
    let lam = |i: usize| -> f64 {
        if i == 0 {
            f64::INFINITY
        } else if i > r {
            f64::NEG_INFINITY
        } else {
            spectrum[i - 1]
        }
    };
    let gap = (lam(a - 1) - lam(a)).min(lam(b) - lam(b + 1));
    let denom = gap.min(lam(b));
    let degenerate = gap <= 0.0;
    if degenerate {
        log::warn!("zero spectral gap for eigenvalue block {a}..={b}");
    }
    let kappa = if denom > 0.0 {
        lam(a) / denom
    } else {
        f64::INFINITY
    };
    Ok(Conditioning {
        gap,
        kappa,
        degenerate,
    })
}

/// Conditioning of a centered Gram matrix over its positive spectrum.
pub fn cmds_conditioning(e: &DMatrix<f64>, a: usize, b: usize) -> Result<Conditioning> {
    let (values, _) = sym_eigen_desc(e)?;
    let top = values.iter().cloned().fold(0.0, f64::max);
    let positive: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&l| top > 0.0 && l > POSITIVE_REL * top)
        .collect();
    conditioning_from_spectrum(&positive, a, b)
}
