//! Small dense linear-algebra helpers shared by the pipeline stages.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_MAX_ITER: usize = 10_000;

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
///
/// The input is symmetrized before decomposition. Each eigenvector is
/// oriented so that its entry of largest magnitude is positive (ties go to
/// the lowest index), which makes the output independent of solver sign
/// choices.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Validation(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to eigensolver".into()));
    }
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER).ok_or(
        Error::NonConvergence {
            size: n,
            max_iter: EIGEN_MAX_ITER,
        },
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps solver order among exact ties
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    orient_columns(&mut vectors);
    Ok((values, vectors))
}

/// Flip each column so its largest-magnitude entry is positive.
pub fn orient_columns(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if best_abs > 0.0 && m[(best, j)] < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Max |(QᵀQ)_jk − δ_jk| over the columns of `q`.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let mut worst: f64 = 0.0;
    for j in 0..g.nrows() {
        for k in 0..g.ncols() {
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((g[(j, k)] - target).abs());
        }
    }
    worst
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Orthogonal `W` minimising ‖target − source·W‖_F.
pub fn procrustes(source: &DMatrix<f64>, target: &DMatrix<f64>) -> DMatrix<f64> {
    let cross = source.transpose() * target;
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    u * v_t
}

/// Symmetric inverse square root `S^{-1/2}` of a positive definite matrix.
pub fn inv_sqrt_spd(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = sym_eigen_desc(s)?;
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::Validation(
            "second-moment matrix is not positive definite".into(),
        ));
    }
    let n = vals.len();
    let sqrt = DMatrix::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|v| v.sqrt())));
    let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        vals.iter().map(|v| 1.0 / v.sqrt()),
    ));
    Ok((
        &vecs * inv_sqrt * vecs.transpose(),
        &vecs * sqrt * vecs.transpose(),
    ))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_oriented() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, -1.0]);
        let (vals, vecs) = sym_eigen_desc(&m).unwrap();
        assert_eq!(vals.as_slice(), &[5.0, 2.0, -1.0]);
        assert_eq!(vecs[(1, 0)], 1.0);
        assert_eq!(vecs[(0, 1)], 1.0);
        assert_eq!(vecs[(2, 2)], 1.0);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 2.0, -1.0, 1.0, 3.0, 0.5]);
        let th: f64 = 0.7;
        let r = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let b = &a * &r;
        let w = procrustes(&a, &b);
        assert!((w - r).abs().max() < 1e-12);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
