//! Symmetric FastICA with a log-cosh contrast, explained-variance ranking of
//! the components, and back-projection of the top-ranked ones.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::Recording;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub n_components: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl IcaOptions {
    pub fn new(n_components: usize, seed: u64) -> Self {
        Self {
            n_components,
            seed,
            tol: 1e-7,
            max_iter: 1000,
        }
    }
}

/// Components are ordered by descending explained variance.
#[derive(Debug, Clone)]
pub struct IcaModel {
    /// Channels × components.
    pub mixing: DMatrix<f64>,
    /// Components × channels, applied to mean-removed data.
    pub unmixing: DMatrix<f64>,
    /// Components × samples, unit variance.
    pub sources: DMatrix<f64>,
    /// Variance of each back-projected component over the total variance.
    pub explained: Vec<f64>,
    pub channel_means: Vec<f64>,
    pub fs: f64,
    pub channels: Vec<String>,
    pub reference: String,
    pub iterations: usize,
}

impl IcaModel {
    pub fn n_components(&self) -> usize {
        self.mixing.ncols()
    }
}

/// `(W Wᵀ)^{-1/2} W`.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = linalg::symmetric_eigen(&(w * w.transpose()))?;
    if vals.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateInput);
    }
    let inv_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|v| 1.0 / v.sqrt()),
    ));
    Ok(&vecs * inv_sqrt * vecs.transpose() * w)
}

/// Covariance eigenvalues at or below this fraction of the largest count as zero.
pub const RANK_RELATIVE: f64 = 1e-12;

fn rank_of(descending: &[f64]) -> usize {
    descending.iter().take_while(|&&v| v > RANK_RELATIVE * descending[0]).count()
}

/// Numerical rank of the channel covariance; the largest usable component
/// count. Average-referenced data lose one dimension.
pub fn data_rank(rec: &Recording) -> Result<usize> {
    let n_t = rec.n_samples().max(1) as f64;
    let mut x = rec.data.clone();
    for mut row in x.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    let (vals, _) = linalg::symmetric_eigen(&(&x * x.transpose() / n_t))?;
    if !(vals[0] > 0.0) {
        return Ok(0);
    }
    Ok(rank_of(&vals))
}

pub fn fastica(rec: &Recording, opts: &IcaOptions) -> Result<IcaModel> {
    let n_e = rec.n_channels();
    let n_t = rec.n_samples();
    let n_c = opts.n_components;
    if n_c == 0 || n_c > n_e {
        return Err(Error::InvalidConfig(format!("component count {n_c} outside 1..={n_e}")));
    }
    if n_t < 2 {
        return Err(Error::TooShort { samples: n_t, required: 2 });
    }

    let means: Vec<f64> = rec.data.row_iter().map(|r| r.mean()).collect();
    let mut x = rec.data.clone();
    for (mut row, m) in x.row_iter_mut().zip(&means) {
        row.add_scalar_mut(-m);
    }
    let cov = &x * x.transpose() / n_t as f64;
    let total = cov.trace();
    let (vals, vecs) = linalg::symmetric_eigen(&cov)?;
    if !(total > 0.0) {
        return Err(Error::DegenerateInput);
    }
    let rank = rank_of(&vals);
    if rank < n_c {
        return Err(Error::RankDeficient { components: n_c, rank });
    }

    // PCA whitening onto the leading n_c directions
    let e = vecs.columns(0, n_c).into_owned();
    let d_sqrt: Vec<f64> = vals[..n_c].iter().map(|v| v.sqrt()).collect();
    let whiten = DMatrix::from_fn(n_c, n_e, |i, j| e[(j, i)] / d_sqrt[i]);
    let dewhiten = DMatrix::from_fn(n_e, n_c, |i, j| e[(i, j)] * d_sqrt[j]);
    let z = &whiten * &x;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = DMatrix::from_fn(n_c, n_c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut w = symmetric_decorrelation(&init)?;
    let inv_t = 1.0 / n_t as f64;
    let mut lim = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let mut u = &w * &z;
        let mut dg = vec![0.0; n_c];
        for i in 0..n_c {
            let mut row = u.row_mut(i);
            for v in row.iter_mut() {
                let t = v.tanh();
                dg[i] += 1.0 - t * t;
                *v = t;
            }
        }
        let mut w_new = &u * z.transpose() * inv_t;
        for i in 0..n_c {
            let scale = dg[i] * inv_t;
            for j in 0..n_c {
                w_new[(i, j)] -= scale * w[(i, j)];
            }
        }
        let w_new = symmetric_decorrelation(&w_new)?;
        let overlap = &w_new * w.transpose();
        lim = (0..n_c).map(|i| (overlap[(i, i)].abs() - 1.0).abs()).fold(0.0, f64::max);
        w = w_new;
        if lim < opts.tol {
            break;
        }
    }
    if !(lim < opts.tol) {
        return Err(Error::IcaNoConvergence {
            iterations,
            delta: lim,
        });
    }

    let unmixing = &w * &whiten;
    let mixing = &dewhiten * w.transpose();
    let sources = &w * &z;

    // explained variance: sources have unit variance, so it is ‖a_j‖² / tr(C)
    let explained: Vec<f64> = (0..n_c).map(|j| mixing.column(j).norm_squared() / total).collect();
    let mut order: Vec<usize> = (0..n_c).collect();
    order.sort_by(|&a, &b| explained[b].total_cmp(&explained[a]).then(a.cmp(&b)));

    let mut a_sorted = DMatrix::zeros(n_e, n_c);
    let mut w_sorted = DMatrix::zeros(n_c, n_e);
    let mut s_sorted = DMatrix::zeros(n_c, n_t);
    for (dst, &src) in order.iter().enumerate() {
        let col = mixing.column(src);
        // largest mixing weight positive
        let imax = col.iamax();
        let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        a_sorted.set_column(dst, &(col * sign));
        w_sorted.set_row(dst, &(unmixing.row(src) * sign));
        s_sorted.set_row(dst, &(sources.row(src) * sign));
    }
    Ok(IcaModel {
        mixing: a_sorted,
        unmixing: w_sorted,
        sources: s_sorted,
        explained: order.iter().map(|&j| explained[j]).collect(),
        channel_means: means,
        fs: rec.fs,
        channels: rec.channels.clone(),
        reference: rec.reference.clone(),
        iterations,
    })
}

/// Back-projects the `keep_top_k` highest-variance components (plus the
/// channel means); the rest are discarded.
pub fn remove_components(model: &IcaModel, keep_top_k: usize) -> Result<Recording> {
    let n_c = model.n_components();
    if keep_top_k == 0 || keep_top_k > n_c {
        return Err(Error::InvalidConfig(format!("keep_top_k {keep_top_k} outside 1..={n_c}")));
    }
    let mut data = model.mixing.columns(0, keep_top_k) * model.sources.rows(0, keep_top_k);
    for (mut row, m) in data.row_iter_mut().zip(&model.channel_means) {
        row.add_scalar_mut(*m);
    }
    Ok(Recording::new(data, model.fs, model.channels.clone(), model.reference.clone()))
}
