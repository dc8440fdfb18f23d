//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Multiplies a column by a unit phase so that its first non-negligible
/// entry is real and positive.
pub fn fix_phase(v: &mut DVector<C64>) {
    let scale = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if scale == 0.0 {
        return;
    }
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-8 * scale).copied() {
        let phase = z.conj() / z.norm();
        v.iter_mut().for_each(|x| *x *= phase);
    }
}

/// Real analogue of [`fix_phase`]: first non-negligible entry made positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if scale == 0.0 {
        return;
    }
    if let Some(&x) = v.iter().find(|x| x.abs() > 1e-8 * scale) {
        if x < 0.0 {
            v.neg_mut();
        }
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending,
/// eigenvector phases fixed by [`fix_phase`].
pub fn hermitian_eigen(m: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues descending,
/// eigenvector signs fixed by [`fix_sign`].
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// `S q`, accumulated column by column.
pub fn matvec(s: &DMatrix<C64>, q: &DVector<C64>) -> DVector<C64> {
    let mut out = vec![C64::new(0.0, 0.0); s.nrows()];
    for (col, &qj) in s.column_iter().zip(q.iter()) {
        for (o, &sij) in out.iter_mut().zip(col.iter()) {
            *o += sij * qj;
        }
    }
    DVector::from_vec(out)
}

/// Quadratic form `q† S q`, real part only (exact for Hermitian `S`).
pub fn quad_form(s: &DMatrix<C64>, q: &DVector<C64>) -> f64 {
    // column-wise, without the temporary `S q`
    let q = q.as_slice();
    s.column_iter()
        .zip(q)
        .map(|(col, &qj)| {
            let acc: C64 = col.iter().zip(q).map(|(&sij, qi)| qi.conj() * sij).sum();
            (acc * qj).re
        })
        .sum()
}

pub fn trace_re(s: &DMatrix<C64>) -> f64 {
    (0..s.nrows()).map(|i| s[(i, i)].re).sum()
}

/// Lifts a real matrix to complex.
pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// `max_ij |a_ij - b_ij|`.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
}

pub fn max_abs(a: &DMatrix<C64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.norm()))
}
