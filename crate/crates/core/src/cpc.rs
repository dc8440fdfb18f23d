//! Stepwise common principal components of a family of Hermitian
//! cross-spectral matrices.
//!
//! Component `j` maximizes `Σ_ω log(q† S_ω q)` over unit vectors `q`
//! orthogonal to the components already accepted. The stationarity
//! condition `Σ_ω S_ω q / (q† S_ω q) ∝ q` is solved by a reweighted power
//! iteration started from the top eigenvector of the (deflated)
//! frequency-averaged matrix. Each power step is lengthened or shortened
//! along its own direction while the objective improves, which settles
//! nearly flat and oscillating directions in a few steps instead of
//! hundreds. After a few steps a second-order step is also tried: Newton
//! inside the basin of a maximum, or a search along the direction of
//! positive curvature when the iterate sits near a saddle.
//!
//! Directions carrying no power at any frequency are not iterated; they are
//! filled in from the null space of the averaged matrix so that the returned
//! basis is always complete up to `K` columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::spectra::CrossSpectra;

/// Relative eigenvalue below which a direction of the averaged matrix is
/// treated as carrying no power.
const NULL_RELATIVE: f64 = 1e-12;
/// Largest multiple (and smallest fraction) of the power step tried by the
/// line search.
const MAX_EXTRAPOLATION: f64 = 1024.0;
/// Power steps before second-order steps are also tried.
const NEWTON_AFTER: usize = 20;
/// Newton steps tried after convergence, while they shrink the gradient.
const POLISH_STEPS: usize = 4;
/// First step length, in radians, along a positive-curvature direction.
const ASCENT_START: f64 = 1e-4;
/// Floor on `q† S_ω q`, relative to `tr(S_ω)`, used in the reweighting.
const QUAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpcOptions {
    /// Number of components; `None` means all of them.
    pub n_components: Option<usize>,
    /// Stop when `1 - |q_new† q_old| < tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CpcOptions {
    fn default() -> Self {
        Self {
            n_components: None,
            tol: 1e-9,
            max_iter: 500,
        }
    }
}

/// Common basis `Γ` and the per-frequency variances `D_ω[j] = γ_j† S_ω γ_j`.
#[derive(Debug, Clone)]
pub struct CpcResult {
    /// Channels × components, orthonormal columns.
    pub gamma: DMatrix<C64>,
    /// `spectra[ω][j]`.
    pub spectra: Vec<Vec<f64>>,
    /// Power iterations spent on each component (0 for null-space fill).
    pub iterations: Vec<usize>,
}

impl CpcResult {
    pub fn n_components(&self) -> usize {
        self.gamma.ncols()
    }

    /// `Σ_ω D_ω[j]` for every component.
    pub fn explained(&self) -> Vec<f64> {
        let k = self.n_components();
        let mut out = vec![0.0; k];
        for d in &self.spectra {
            for (o, x) in out.iter_mut().zip(d) {
                *o += x;
            }
        }
        out
    }

    /// `Γ D_ω Γ†` at bin `w`.
    pub fn reconstruct(&self, w: usize) -> DMatrix<C64> {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.n_components(),
            self.spectra[w].iter().map(|&x| C64::new(x, 0.0)),
        ));
        &self.gamma * d * self.gamma.adjoint()
    }
}

pub fn stepwise_cpc(cs: &CrossSpectra, opts: &CpcOptions) -> Result<CpcResult> {
    let n = cs.n_channels();
    let k = opts.n_components.unwrap_or(n);
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("component count {k} outside 1..={n}")));
    }
    let total = cs.total_trace();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput);
    }

    let n_f = cs.n_freqs() as f64;
    let mut avg = DMatrix::<C64>::zeros(n, n);
    for s in cs.matrices() {
        avg += s;
    }
    avg /= C64::new(n_f, 0.0);
    let (avg_vals, avg_vecs) = linalg::hermitian_eigen(&avg)?;
    let rank = avg_vals.iter().take_while(|&&v| v > NULL_RELATIVE * avg_vals[0]).count();

    // Work inside the range of the averaged matrix; every S_ω lives there.
    let (basis, reduced): (Option<DMatrix<C64>>, Vec<DMatrix<C64>>) = if rank < n {
        let q = avg_vecs.columns(0, rank).into_owned();
        let qh = q.adjoint();
        let red = cs.matrices().iter().map(|s| &qh * s * &q).collect();
        (Some(q), red)
    } else {
        (None, cs.matrices().to_vec())
    };
    // Iterate on copies scaled to unit mean trace (by a power of two, so the
    // scaling is exact). The log objective of unscaled input carries a large
    // constant offset that swamps the differences the line search compares.
    let unit = 2f64.powi(-((total / n_f).log2().round() as i32));
    let work: Vec<DMatrix<C64>> = reduced.iter().map(|s| s * C64::new(unit, 0.0)).collect();
    let traces: Vec<f64> = work.iter().map(linalg::trace_re).collect();
    let red_avg = match &basis {
        Some(q) => q.adjoint() * &avg * q,
        None => avg.clone(),
    };

    let iterate_count = k.min(rank);
    let mut accepted = DMatrix::<C64>::zeros(rank, 0);
    let mut iterations = Vec::with_capacity(k);
    let mut real_forms: Option<Vec<DMatrix<f64>>> = None;
    for j in 0..iterate_count {
        let mut q = deflated_top(&red_avg, &accepted)?;
        let mut converged = false;
        let mut delta = f64::INFINITY;
        let mut used = 0;
        for it in 1..=opts.max_iter {
            used = it;
            let mut g = DVector::<C64>::zeros(rank);
            for (s, &tr) in work.iter().zip(&traces) {
                if tr > 0.0 {
                    let sq = linalg::matvec(s, &q);
                    let f = q
                        .iter()
                        .zip(sq.iter())
                        .map(|(a, b)| (a.conj() * b).re)
                        .sum::<f64>()
                        .max(QUAD_FLOOR * tr);
                    g.axpy(C64::new(1.0 / f, 0.0), &sq, C64::new(1.0, 0.0));
                }
            }
            project_out(&mut g, &accepted);
            project_out(&mut g, &accepted);
            let norm = g.norm();
            if !(norm > 0.0) {
                // no power left in the complement at any frequency
                converged = true;
                break;
            }
            g.unscale_mut(norm);
            let mut next = extrapolate(&work, &traces, &q, g, &accepted);
            if it > NEWTON_AFTER {
                let real = real_forms.get_or_insert_with(|| work.iter().map(real_form).collect());
                let to_beat = objective(&work, &traces, &next);
                match second_order_step(real, &traces, &q, &accepted) {
                    Some(SecondOrder::Newton(step)) => {
                        // backtrack until the Newton point beats the power step
                        let mut t = 1.0;
                        while t >= 1.0 / MAX_EXTRAPOLATION {
                            if let Some(cand) = along(&q, &step, t, &accepted) {
                                if objective(&work, &traces, &cand) > to_beat {
                                    next = cand;
                                    break;
                                }
                            }
                            t *= 0.5;
                        }
                    }
                    Some(SecondOrder::Ascent(dir)) => {
                        // grow the step along the positive-curvature direction
                        // while it improves, then compare with the power step
                        let mut best = objective(&work, &traces, &q);
                        let mut found = None;
                        let mut t = ASCENT_START;
                        while t <= 1.0 {
                            let Some(cand) = along(&q, &dir, t, &accepted) else { break };
                            let obj = objective(&work, &traces, &cand);
                            if obj <= best {
                                break;
                            }
                            best = obj;
                            found = Some(cand);
                            t *= 2.0;
                        }
                        if let Some(cand) = found {
                            if best > to_beat {
                                next = cand;
                            }
                        }
                    }
                    None => {}
                }
            }
            delta = 1.0 - (next.adjoint() * &q)[(0, 0)].norm();
            q = next;
            if delta < opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                component: j + 1,
                residual: delta,
            });
        }
        // The stopping rule only pins q down to about sqrt(tol) along flat
        // directions; Newton steps take it to the stationary point itself.
        let (mut grad_t, grad) = tangent_gradient(&work, &traces, &q, &accepted);
        for _ in 0..POLISH_STEPS {
            if grad_t <= 1e-14 * grad {
                break;
            }
            let real = real_forms.get_or_insert_with(|| work.iter().map(real_form).collect());
            let Some(SecondOrder::Newton(step)) = second_order_step(real, &traces, &q, &accepted) else {
                break;
            };
            let Some(cand) = along(&q, &step, 1.0, &accepted) else { break };
            let (cand_t, _) = tangent_gradient(&work, &traces, &cand, &accepted);
            if !(cand_t < grad_t) {
                break;
            }
            q = cand;
            grad_t = cand_t;
        }
        iterations.push(used);
        accepted = append_column(accepted, &q);
    }

    // Lift back to channel space and complete with null directions if needed.
    let mut gamma = match &basis {
        Some(qb) => qb * &accepted,
        None => accepted.clone(),
    };
    if k > iterate_count {
        let extra = if rank < n {
            avg_vecs.columns(rank, k - iterate_count).into_owned()
        } else {
            complement_basis(&gamma, k - iterate_count)?
        };
        for c in extra.column_iter() {
            gamma = append_column(gamma, &c.into_owned());
            iterations.push(0);
        }
    }

    // Variances in the coordinates the iteration used; null-space fill
    // directions have zero coordinates there and carry no power.
    let coords = match &basis {
        Some(_) => accepted.clone().resize_horizontally(k, C64::new(0.0, 0.0)),
        None => gamma.clone(),
    };
    let spectra_unsorted: Vec<Vec<f64>> = reduced
        .iter()
        .map(|s| (0..k).map(|j| linalg::quad_form(s, &coords.column(j).into_owned())).collect())
        .collect();

    // Order components by total explained variance, then fix phases.
    let mut totals = vec![0.0; k];
    for d in &spectra_unsorted {
        for (t, x) in totals.iter_mut().zip(d) {
            *t += x;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]));
    let mut sorted = DMatrix::<C64>::zeros(n, k);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = gamma.column(src).into_owned();
        linalg::fix_phase(&mut col);
        sorted.set_column(dst, &col);
    }
    let spectra = spectra_unsorted
        .iter()
        .map(|d| order.iter().map(|&j| d[j]).collect())
        .collect();
    let iterations = order.iter().map(|&j| iterations[j]).collect();
    Ok(CpcResult {
        gamma: sorted,
        spectra,
        iterations,
    })
}

/// `q† S q`, floored relative to the trace.
fn form(s: &DMatrix<C64>, q: &DVector<C64>, tr: f64) -> f64 {
    linalg::quad_form(s, q).max(QUAD_FLOOR * tr)
}

/// Norms of the objective's gradient along the sphere (excluding the phase
/// and accepted directions) and of the full gradient.
fn tangent_gradient(mats: &[DMatrix<C64>], traces: &[f64], q: &DVector<C64>, accepted: &DMatrix<C64>) -> (f64, f64) {
    let mut g = DVector::<C64>::zeros(q.len());
    for (s, &tr) in mats.iter().zip(traces) {
        if tr > 0.0 {
            let sq = linalg::matvec(s, q);
            g.axpy(C64::new(1.0 / form(s, q, tr), 0.0), &sq, C64::new(1.0, 0.0));
        }
    }
    let full = g.norm();
    let radial = q.dotc(&g);
    g.axpy(-radial, q, C64::new(1.0, 0.0));
    project_out(&mut g, accepted);
    (g.norm(), full)
}

/// `Σ_ω log(q† S_ω q)` over the bins with power.
fn objective(mats: &[DMatrix<C64>], traces: &[f64], q: &DVector<C64>) -> f64 {
    mats.iter()
        .zip(traces)
        .filter(|(_, &tr)| tr > 0.0)
        .map(|(s, &tr)| form(s, q, tr).ln())
        .sum()
}

/// Line search along `q → g`, where `g` is the power step from `q`.
///
/// On nearly flat directions the plain iteration creeps, so the step is
/// doubled while the objective improves; when it overshoots and oscillates,
/// it is halved instead.
fn extrapolate(
    mats: &[DMatrix<C64>],
    traces: &[f64],
    q: &DVector<C64>,
    g: DVector<C64>,
    accepted: &DMatrix<C64>,
) -> DVector<C64> {
    let step = &g - q;
    let at = |t: f64| {
        let cand = along(q, &step, t, accepted)?;
        let obj = objective(mats, traces, &cand);
        Some((cand, obj))
    };
    let mut best_obj = objective(mats, traces, &g);
    let mut best = g;
    let mut grew = false;
    let mut t = 2.0;
    while t <= MAX_EXTRAPOLATION {
        match at(t) {
            Some((cand, obj)) if obj > best_obj => {
                best = cand;
                best_obj = obj;
                grew = true;
                t *= 2.0;
            }
            _ => break,
        }
    }
    if !grew {
        let mut t = 0.5;
        while t >= 1.0 / MAX_EXTRAPOLATION {
            match at(t) {
                Some((cand, obj)) if obj > best_obj => {
                    best = cand;
                    best_obj = obj;
                    t *= 0.5;
                }
                _ => break,
            }
        }
    }
    best
}

/// `[[Re S, −Im S], [Im S, Re S]]`, so that `q† S q = xᵀ M x` for
/// `x = [Re q; Im q]`.
fn real_form(s: &DMatrix<C64>) -> DMatrix<f64> {
    let n = s.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = s[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn to_real(v: &DVector<C64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// `[Re q; Im q] ↦ [−Im q; Re q]`, multiplication by `i`.
fn times_i(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len() / 2;
    DVector::from_fn(2 * n, |i, _| if i < n { -x[i + n] } else { x[i - n] })
}

enum SecondOrder {
    /// Tangent Newton step; the Hessian is negative definite.
    Newton(DVector<C64>),
    /// Unit tangent direction of largest positive curvature, signed uphill.
    Ascent(DVector<C64>),
}

/// Second-order step for `Σ_ω log(xᵀ M_ω x)` on the unit sphere, restricted
/// to the complement of the accepted components and of the phase direction.
///
/// Inside the basin of a local maximum this is the Newton step. Near a
/// saddle, where the power iteration crawls, it is the direction of largest
/// positive curvature instead.
fn second_order_step(
    real: &[DMatrix<f64>],
    traces: &[f64],
    q: &DVector<C64>,
    accepted: &DMatrix<C64>,
) -> Option<SecondOrder> {
    let x = to_real(q);
    let m = x.len();
    let mut grad = DVector::<f64>::zeros(m);
    let mut hess = DMatrix::<f64>::zeros(m, m);
    for (mat, &tr) in real.iter().zip(traces) {
        if tr > 0.0 {
            let mx = mat * &x;
            let f = x.dot(&mx).max(QUAD_FLOOR * tr);
            grad.axpy(2.0 / f, &mx, 1.0);
            hess += mat * (2.0 / f);
            hess.ger(-4.0 / (f * f), &mx, &mx, 1.0);
        }
    }
    let radial = x.dot(&grad);
    for i in 0..m {
        hess[(i, i)] -= radial;
    }

    let mut fixed = vec![x.clone(), times_i(&x)];
    for a in accepted.column_iter() {
        let a = to_real(&a.into_owned());
        fixed.push(times_i(&a));
        fixed.push(a);
    }
    let b = DMatrix::from_columns(&fixed);
    let p = DMatrix::<f64>::identity(m, m) - &b * b.transpose();
    // the fixed directions get a large negative curvature so the system is
    // definite exactly when the tangent Hessian is
    let neg = -(&p * hess * &p) + &b * b.transpose() * (radial.abs() + 1.0);
    let n = m / 2;
    let to_complex = |v: &DVector<f64>| DVector::from_fn(n, |i, _| C64::new(v[i], v[i + n]));
    if let Some(chol) = neg.clone().cholesky() {
        let step = &p * chol.solve(&(&p * grad));
        return Some(SecondOrder::Newton(to_complex(&step)));
    }
    let (vals, vecs) = linalg::symmetric_eigen(&(-neg)).ok()?;
    // eigenvalues come in descending order
    if !(vals[0] > 0.0) {
        return None;
    }
    let mut dir = &p * vecs.column(0);
    let norm = dir.norm();
    if !(norm > 0.0) {
        return None;
    }
    dir /= norm;
    if dir.dot(&grad) < 0.0 {
        dir = -dir;
    }
    Some(SecondOrder::Ascent(to_complex(&dir)))
}

/// `q + t·step`, kept orthogonal to `accepted` and normalized.
fn along(q: &DVector<C64>, step: &DVector<C64>, t: f64, accepted: &DMatrix<C64>) -> Option<DVector<C64>> {
    let mut cand = q + step * C64::new(t, 0.0);
    project_out(&mut cand, accepted);
    let norm = cand.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    cand.unscale_mut(norm);
    Some(cand)
}

/// Top eigenvector of `avg` restricted to the orthogonal complement of `accepted`.
fn deflated_top(avg: &DMatrix<C64>, accepted: &DMatrix<C64>) -> Result<DVector<C64>> {
    let m = if accepted.ncols() == 0 {
        avg.clone()
    } else {
        let n = avg.nrows();
        let p = DMatrix::<C64>::identity(n, n) - accepted * accepted.adjoint();
        // push the accepted directions to the bottom of the spectrum
        let shift = C64::new(1.0 + linalg::trace_re(avg).abs(), 0.0);
        &p * avg * &p - accepted * accepted.adjoint() * shift
    };
    let (_, vecs) = linalg::hermitian_eigen(&m)?;
    let mut q = vecs.column(0).into_owned();
    project_out(&mut q, accepted);
    let norm = q.norm();
    q.unscale_mut(norm);
    Ok(q)
}

/// `count` orthonormal vectors orthogonal to the columns of `gamma`.
fn complement_basis(gamma: &DMatrix<C64>, count: usize) -> Result<DMatrix<C64>> {
    let n = gamma.nrows();
    let p = DMatrix::<C64>::identity(n, n) - gamma * gamma.adjoint();
    let (_, vecs) = linalg::hermitian_eigen(&p)?;
    Ok(vecs.columns(0, count).into_owned())
}

fn project_out(v: &mut DVector<C64>, basis: &DMatrix<C64>) {
    if basis.ncols() == 0 {
        return;
    }
    let coeffs = basis.adjoint() * &*v;
    *v -= basis * coeffs;
}

fn append_column(m: DMatrix<C64>, col: &DVector<C64>) -> DMatrix<C64> {
    let j = m.ncols();
    let mut out = m.insert_column(j, C64::new(0.0, 0.0));
    out.set_column(j, col);
    out
}
