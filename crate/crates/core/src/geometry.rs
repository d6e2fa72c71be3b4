//! Second-moment geometry of embedding displacements.
//!
//! For two times t, s the displacement second moment is
//! `M(t,s) = (1/n)(Y(t) − Y(s))ᵀ(Y(t) − Y(s))`. From it:
//!
//! * trace variation `d_TV = sqrt(tr M)`,
//! * maximum directional variation `d_MV = sqrt(λ_max(M))`,
//! * mode-wise variation `d_k = sqrt(u_kᵀ M u_k)` along a unit vector.
//!
//! Over any orthonormal basis `Σ_k d_k² = d_TV²`. The aggregated operator
//! `𝓜 = Σ_{(t,s)∈S} M(t,s)` supplies the canonical basis, and its k-th
//! eigenvalue equals `Σ_S d_k²`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::embedding::EmbeddingSeries;
use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, sym_eigen_desc};

const PSD_CLAMP_REL: f64 = 1e-10;
const UNIT_TOL: f64 = 1e-10;
const TIE_REL: f64 = 1e-10;

/// Distance family tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Tv,
    Mv,
    /// Mode-wise distance along the k-th (0-based) basis vector.
    Mode(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Tv => write!(f, "tv"),
            Metric::Mv => write!(f, "mv"),
            Metric::Mode(k) => write!(f, "mode-{}", k + 1),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    /// Accepts `tv`, `mv` and `mode-K` with K ≥ 1.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "tv" => Ok(Metric::Tv),
            "mv" => Ok(Metric::Mv),
            _ => lower
                .strip_prefix("mode-")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| Metric::Mode(k - 1))
                .ok_or_else(|| Error::UnknownMetric(s.to_string())),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Second-moment matrix of the displacement between two times.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondMoment {
    pub matrix: DMatrix<f64>,
    /// 0-based time pair.
    pub pair: (usize, usize),
}

impl SecondMoment {
    pub fn new(matrix: DMatrix<f64>, pair: (usize, usize)) -> Self {
        Self {
            matrix: crate::linalg::symmetrize(&matrix),
            pair,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// `(1/n)(Y(t) − Y(s))ᵀ(Y(t) − Y(s))` for 0-based times.
pub fn displacement_second_moment(y: &EmbeddingSeries, t: usize, s: usize) -> Result<SecondMoment> {
    check_time(y, t)?;
    check_time(y, s)?;
    let delta = y.block(t) - y.block(s);
    let n = y.n() as f64;
    Ok(SecondMoment::new(delta.transpose() * &delta / n, (t, s)))
}

fn check_time(y: &EmbeddingSeries, t: usize) -> Result<()> {
    if t >= y.horizon() {
        return Err(Error::OutOfRange(format!(
            "time index {t} with horizon {}",
            y.horizon()
        )));
    }
    Ok(())
}

fn clamp_sqrt(v: f64, scale: f64, what: &str) -> f64 {
    if v < 0.0 {
        if v < -PSD_CLAMP_REL * scale.abs().max(f64::MIN_POSITIVE) {
            log::warn!("{what}: negative value {v:.3e} clamped to zero");
        }
        return 0.0;
    }
    v.sqrt()
}

pub fn tv_distance(m: &SecondMoment) -> f64 {
    let tr = m.trace();
    clamp_sqrt(tr, tr, "trace variation")
}

pub fn mv_distance(m: &SecondMoment) -> f64 {
    if m.dim() == 0 {
        return 0.0;
    }
    let lambda_max = match sym_eigen_desc(&m.matrix) {
        Ok((vals, _)) => vals[0],
        Err(_) => crate::linalg::spectral_norm(&m.matrix),
    };
    clamp_sqrt(lambda_max, m.trace(), "maximum directional variation")
}

/// `sqrt(uᵀ M u)` for a unit vector `u`.
pub fn modewise_distance(m: &SecondMoment, u: &DVector<f64>) -> Result<f64> {
    if u.len() != m.dim() {
        return Err(Error::Validation(format!(
            "direction has length {}, expected {}",
            u.len(),
            m.dim()
        )));
    }
    let norm = u.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::Validation(format!(
            "direction is not a unit vector (norm {norm})"
        )));
    }
    let q = (u.transpose() * &m.matrix * u)[(0, 0)];
    Ok(clamp_sqrt(q, m.trace(), "mode-wise variation"))
}

/// Collection of time pairs used to aggregate second moments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    horizon: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairSet {
    /// Validates 0-based pairs: distinct times inside the horizon, no repeats.
    pub fn new(horizon: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(t, s) in &pairs {
            if t >= horizon || s >= horizon {
                return Err(Error::OutOfRange(format!(
                    "pair ({t}, {s}) with horizon {horizon}"
                )));
            }
            if t == s {
                return Err(Error::Validation(format!("pair ({t}, {t}) repeats a time")));
            }
            if !seen.insert((t, s)) {
                return Err(Error::Validation(format!("duplicate pair ({t}, {s})")));
            }
        }
        Ok(Self { horizon, pairs })
    }

    /// All unordered pairs t < s.
    pub fn all_pairs(horizon: usize) -> Self {
        Self::window(horizon, horizon)
    }

    /// (t, t+1) for consecutive times.
    pub fn adjacent(horizon: usize) -> Self {
        Self::window(horizon, 1)
    }

    /// Pairs with 0 < s − t ≤ width.
    pub fn window(horizon: usize, width: usize) -> Self {
        let pairs = (0..horizon)
            .flat_map(|t| ((t + 1)..horizon.min(t + width + 1)).map(move |s| (t, s)))
            .collect();
        Self { horizon, pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Orthonormal mode directions, columns sorted by decreasing eigenvalue.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeBasis {
    vectors: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    pairs: Option<PairSet>,
    /// Indices k with λ_k and λ_{k+1} tied (relative to λ_1).
    degenerate: Vec<usize>,
}

impl ModeBasis {
    /// Eigenbasis of a symmetric aggregated operator.
    pub fn from_operator(operator: &DMatrix<f64>, pairs: Option<PairSet>) -> Result<Self> {
        let (eigenvalues, vectors) = sym_eigen_desc(operator)?;
        let top = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let degenerate: Vec<usize> = (0..eigenvalues.len().saturating_sub(1))
            .filter(|&k| (eigenvalues[k] - eigenvalues[k + 1]).abs() <= TIE_REL * top)
            .collect();
        if !degenerate.is_empty() {
            log::warn!("aggregated operator has tied eigenvalues at modes {degenerate:?}");
        }
        Ok(Self {
            vectors,
            eigenvalues,
            pairs,
            degenerate,
        })
    }

    /// Standard basis e_1..e_d, with zero eigenvalues.
    pub fn standard(d: usize) -> Self {
        Self {
            vectors: DMatrix::identity(d, d),
            eigenvalues: DVector::zeros(d),
            pairs: None,
            degenerate: Vec::new(),
        }
    }

    /// Arbitrary orthonormal columns.
    pub fn from_columns(vectors: DMatrix<f64>) -> Result<Self> {
        if vectors.nrows() != vectors.ncols() || orthonormality_defect(&vectors) > UNIT_TOL {
            return Err(Error::Validation(
                "basis columns must be orthonormal".into(),
            ));
        }
        let d = vectors.ncols();
        Ok(Self {
            vectors,
            eigenvalues: DVector::zeros(d),
            pairs: None,
            degenerate: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn pairs(&self) -> Option<&PairSet> {
        self.pairs.as_ref()
    }

    pub fn degenerate(&self) -> &[usize] {
        &self.degenerate
    }

    /// Basis rotated by an orthogonal `w`: columns become `wᵀu_k`.
    pub fn rotated(&self, w: &DMatrix<f64>) -> Self {
        Self {
            vectors: w.transpose() * &self.vectors,
            ..self.clone()
        }
    }
}

/// Eigenbasis of `Σ_{(t,s)∈S} M(t,s)`.
pub fn aggregate_operator(y: &EmbeddingSeries, pairs: &PairSet) -> Result<ModeBasis> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    if pairs.horizon() > y.horizon() {
        return Err(Error::OutOfRange(format!(
            "pair set horizon {} exceeds embedding horizon {}",
            pairs.horizon(),
            y.horizon()
        )));
    }
    let d = y.dim();
    let moments: Vec<DMatrix<f64>> = pairs
        .pairs()
        .par_iter()
        .map(|&(t, s)| displacement_second_moment(y, t, s).map(|m| m.matrix))
        .collect::<Result<_>>()?;
    let op = moments.iter().fold(DMatrix::zeros(d, d), |acc, m| acc + m);
    ModeBasis::from_operator(&op, Some(pairs.clone()))
}

/// T×T distance matrix with its centered Gram matrix and spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    metric: Metric,
    distances: DMatrix<f64>,
    squared: DMatrix<f64>,
    gram: DMatrix<f64>,
    spectrum: DVector<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry, nonnegativity and the zero diagonal.
    pub fn new(metric: Metric, distances: DMatrix<f64>) -> Result<Self> {
        let t = distances.nrows();
        if distances.ncols() != t {
            return Err(Error::Validation("distance matrix must be square".into()));
        }
        for i in 0..t {
            if distances[(i, i)] != 0.0 {
                return Err(Error::Validation(format!("nonzero diagonal at {i}")));
            }
            for j in 0..t {
                let v = distances[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!(
                        "invalid distance {v} at ({i}, {j})"
                    )));
                }
                if v != distances[(j, i)] {
                    return Err(Error::Validation(format!(
                        "asymmetric distance at ({i}, {j})"
                    )));
                }
            }
        }
        let squared = distances.map(|v| v * v);
        let gram = centered_gram(&squared);
        let (spectrum, _) = sym_eigen_desc(&gram)?;
        Ok(Self {
            metric,
            distances,
            squared,
            gram,
            spectrum,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn horizon(&self) -> usize {
        self.distances.nrows()
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.distances
    }

    pub fn squared(&self) -> &DMatrix<f64> {
        &self.squared
    }

    /// `E = −½ J D² J`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Eigenvalues of the centered Gram matrix, decreasing.
    pub fn spectrum(&self) -> &DVector<f64> {
        &self.spectrum
    }
}

/// `−½ J A J` with `J = I − 11ᵀ/T`.
pub fn centered_gram(squared: &DMatrix<f64>) -> DMatrix<f64> {
    let t = squared.nrows();
    if t == 0 {
        return DMatrix::zeros(0, 0);
    }
    let tf = t as f64;
    let row_means: Vec<f64> = (0..t).map(|i| squared.row(i).sum() / tf).collect();
    let col_means: Vec<f64> = (0..t).map(|j| squared.column(j).sum() / tf).collect();
    let grand = row_means.iter().sum::<f64>() / tf;
    let e = DMatrix::from_fn(t, t, |i, j| {
        -0.5 * (squared[(i, j)] - row_means[i] - col_means[j] + grand)
    });
    crate::linalg::symmetrize(&e)
}

fn metric_value(m: &SecondMoment, metric: Metric, basis: Option<&ModeBasis>) -> Result<f64> {
    match metric {
        Metric::Tv => Ok(tv_distance(m)),
        Metric::Mv => Ok(mv_distance(m)),
        Metric::Mode(k) => {
            let basis = basis.ok_or(Error::MissingBasis)?;
            if k >= basis.dim() {
                return Err(Error::OutOfRange(format!(
                    "mode {} of a {}-dimensional basis",
                    k + 1,
                    basis.dim()
                )));
            }
            modewise_distance(m, &basis.vector(k))
        }
    }
}

/// Fills distance matrices for several metrics from a second-moment oracle.
pub fn distance_matrices_from<F>(
    horizon: usize,
    metrics: &[Metric],
    basis: Option<&ModeBasis>,
    moment: F,
) -> Result<Vec<DistanceMatrix>>
where
    F: Fn(usize, usize) -> Result<SecondMoment> + Sync,
{
    for m in metrics {
        if let Metric::Mode(_) = m {
            if basis.is_none() {
                return Err(Error::MissingBasis);
            }
        }
    }
    let pairs: Vec<(usize, usize)> = PairSet::all_pairs(horizon).pairs().to_vec();
    let values: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(t, s)| {
            let m = moment(t, s)?;
            metrics
                .iter()
                .map(|&metric| metric_value(&m, metric, basis))
                .collect()
        })
        .collect::<Result<_>>()?;
    metrics
        .iter()
        .enumerate()
        .map(|(idx, &metric)| {
            let mut d = DMatrix::zeros(horizon, horizon);
            for (&(t, s), v) in pairs.iter().zip(&values) {
                d[(t, s)] = v[idx];
                d[(s, t)] = v[idx];
            }
            DistanceMatrix::new(metric, d)
        })
        .collect()
}

/// Distance matrices of an embedding series for several metrics at once.
pub fn distance_matrices(
    y: &EmbeddingSeries,
    metrics: &[Metric],
    basis: Option<&ModeBasis>,
) -> Result<Vec<DistanceMatrix>> {
    if let Some(b) = basis {
        if b.dim() != y.dim() {
            return Err(Error::Validation(format!(
                "basis dimension {} does not match embedding dimension {}",
                b.dim(),
                y.dim()
            )));
        }
    }
    distance_matrices_from(y.horizon(), metrics, basis, |t, s| {
        displacement_second_moment(y, t, s)
    })
}

pub fn distance_matrix(
    y: &EmbeddingSeries,
    metric: Metric,
    basis: Option<&ModeBasis>,
) -> Result<DistanceMatrix> {
    Ok(distance_matrices(y, &[metric], basis)?.remove(0))
}

/// All mode-wise distance matrices of a basis, in mode order.
pub fn mode_distance_matrices(
    y: &EmbeddingSeries,
    basis: &ModeBasis,
) -> Result<Vec<DistanceMatrix>> {
    let metrics: Vec<Metric> = (0..basis.dim()).map(Metric::Mode).collect();
    distance_matrices(y, &metrics, Some(basis))
}
