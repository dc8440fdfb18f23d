//! sLORETA inverse operator and ROI reduction of source time series.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::Recording;
use crate::simkit::Leadfield;

/// Eigenvalues of the regularized Gram matrix below this fraction of the
/// largest are treated as its null space (the average-reference direction).
const GRAM_NULL_RELATIVE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct InverseOperator {
    /// Standardized kernel, sources × electrodes.
    pub kernel: DMatrix<f64>,
    /// Minimum-norm kernel `Lᵀ (L Lᵀ + α H)⁺` before standardization.
    pub minimum_norm: DMatrix<f64>,
    pub alpha: f64,
    /// Resolution-matrix diagonal `(M L)_dd`.
    pub resolution: Vec<f64>,
    pub channels: Vec<String>,
}

impl InverseOperator {
    pub fn n_sources(&self) -> usize {
        self.kernel.nrows()
    }
}

/// `0.05 · tr(L Lᵀ) / N_e`.
pub fn default_alpha(lf: &Leadfield) -> f64 {
    0.05 * lf.matrix.norm_squared() / lf.n_channels() as f64
}

fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

pub fn sloreta_operator(lf: &Leadfield, alpha: f64) -> Result<InverseOperator> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidConfig(format!("regularization {alpha} must be positive")));
    }
    let l = &lf.matrix;
    let n_e = l.nrows();
    let gram = l * l.transpose() + centering(n_e) * alpha;
    let (vals, vecs) = linalg::symmetric_eigen(&gram)?;
    let cut = GRAM_NULL_RELATIVE * vals[0];
    let kept = vals.iter().filter(|&&v| v > cut).count();
    // only the constant direction may be missing
    if !(vals[0].is_finite()) || kept + 1 < n_e {
        return Err(Error::SingularGram);
    }
    let inv = DMatrix::from_diagonal(&DVector::from_iterator(
        n_e,
        vals.iter().map(|&v| if v > cut { 1.0 / v } else { 0.0 }),
    ));
    let pinv = &vecs * inv * vecs.transpose();
    let m = l.transpose() * pinv;
    let resolution: Vec<f64> = (0..l.ncols()).map(|d| m.row(d).dot(&l.column(d).transpose())).collect();
    if resolution.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::SingularGram);
    }
    let mut kernel = m.clone();
    for (mut row, r) in kernel.row_iter_mut().zip(&resolution) {
        row /= r.sqrt();
    }
    Ok(InverseOperator {
        kernel,
        minimum_norm: m,
        alpha,
        resolution,
        channels: lf.channels.clone(),
    })
}

/// Standardized source estimates, sources × samples.
pub fn apply_inverse(op: &InverseOperator, rec: &Recording) -> Result<DMatrix<f64>> {
    if op.kernel.ncols() != rec.n_channels() {
        return Err(Error::ShapeMismatch(format!(
            "operator expects {} channels, recording has {}",
            op.kernel.ncols(),
            rec.n_channels()
        )));
    }
    if op.channels != rec.channels {
        return Err(Error::ShapeMismatch("operator and recording use different channel labels".into()));
    }
    Ok(&op.kernel * &rec.data)
}

/// Per-ROI first principal component time courses.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSeries {
    /// ROIs × samples.
    pub data: DMatrix<f64>,
    /// Share of the ROI's variance carried by its first component.
    pub explained: Vec<f64>,
}

/// Reduces sources to ROIs; `assignment[d]` is the ROI index of source `d`.
///
/// Each ROI's series is `v₁ᵀ X / √m`, with `v₁` the leading left singular
/// vector of the centred member data, so identical members reproduce their
/// common signal. The sign makes it correlate non-negatively with the ROI
/// mean.
pub fn roi_reduce(sources: &DMatrix<f64>, assignment: &[usize]) -> Result<RoiSeries> {
    if assignment.len() != sources.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} assignments for {} sources",
            assignment.len(),
            sources.nrows()
        )));
    }
    let n_r = assignment.iter().max().map_or(0, |m| m + 1);
    let n_t = sources.ncols();
    let mut data = DMatrix::zeros(n_r, n_t);
    let mut explained = Vec::with_capacity(n_r);
    for r in 0..n_r {
        let members: Vec<usize> = (0..assignment.len()).filter(|&d| assignment[d] == r).collect();
        if members.is_empty() {
            return Err(Error::EmptyRoi(format!("roi{r}")));
        }
        let x = sources.select_rows(&members);
        let mut centred = x.clone();
        for mut row in centred.row_iter_mut() {
            let m = row.mean();
            row.add_scalar_mut(-m);
        }
        let svd = centred.clone().svd(true, false);
        let u = svd.u.ok_or(Error::EigenFailure)?;
        let sv = &svd.singular_values;
        let top = sv.imax();
        let total: f64 = sv.iter().map(|s| s * s).sum();
        explained.push(if total > 0.0 { sv[top] * sv[top] / total } else { 1.0 });
        let v = u.column(top);
        let mut pc = x.transpose() * v / (members.len() as f64).sqrt();
        // orient along the ROI mean
        let mean_row: DVector<f64> = centred.row_sum().transpose();
        let pc_centred = centred.transpose() * v;
        if pc_centred.dot(&mean_row) < 0.0 {
            pc.neg_mut();
        }
        data.set_row(r, &pc.transpose());
    }
    Ok(RoiSeries { data, explained })
}
