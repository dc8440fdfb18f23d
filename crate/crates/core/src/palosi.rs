//! The PaLOS index and its per-frequency and per-channel breakdowns.
//!
//! Given a common basis `Γ` with per-frequency variances `D_ω`, the global
//! index is `Σ_ω max_j D_ω[j] / Σ_ω tr(S_ω)`. It approaches 1 when a single
//! spatial pattern carries the power at every frequency, which is what
//! parallel multichannel log spectra look like.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cpc::{stepwise_cpc, CpcOptions, CpcResult};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::{QcThresholds, SpectralConfig, ValidatedRecording};
use crate::spectra::{recording_cross_spectra, CrossSpectra};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalosIndices {
    pub global: f64,
    pub freqs: Vec<f64>,
    /// `max_j D_ω[j] / tr(S_ω)`.
    pub per_frequency: Vec<f64>,
    /// Share of each channel's power carried by the dominant component.
    pub per_channel: Vec<f64>,
    /// Index of the dominant component at each bin.
    pub dominant: Vec<usize>,
    pub flag: bool,
}

/// Computes all indices from cross-spectra and their CPC decomposition.
///
/// `cpc` should be a full decomposition (`K = N_e`); with fewer components
/// the global value is a lower bound.
pub fn palosi(cs: &CrossSpectra, cpc: &CpcResult, flag_threshold: f64) -> Result<PalosIndices> {
    if cpc.spectra.len() != cs.n_freqs() || cpc.gamma.nrows() != cs.n_channels() {
        return Err(Error::ShapeMismatch("CPC result does not match the cross-spectra".into()));
    }
    let total = cs.total_trace();
    if !(total > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let n = cs.n_channels();
    let mut numerator = 0.0;
    let mut per_frequency = Vec::with_capacity(cs.n_freqs());
    let mut dominant = Vec::with_capacity(cs.n_freqs());
    let mut channel_num = vec![0.0; n];
    let mut channel_den = vec![0.0; n];
    for (w, d) in cpc.spectra.iter().enumerate() {
        // ties resolve to the smallest index
        let (j_star, d_max) = d
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &x)| if x > best.1 { (j, x) } else { best });
        let tr = cs.trace(w);
        numerator += d_max;
        per_frequency.push(if tr > 0.0 { (d_max / tr).clamp(0.0, 1.0) } else { 0.0 });
        dominant.push(j_star);
        for c in 0..n {
            channel_num[c] += d_max * cpc.gamma[(c, j_star)].norm_sqr();
            channel_den[c] += cs.power(c, w);
        }
    }
    let global = (numerator / total).clamp(0.0, 1.0);
    let per_channel = channel_num
        .iter()
        .zip(&channel_den)
        .map(|(&a, &b)| if b > 0.0 { (a / b).max(0.0) } else { 0.0 })
        .collect();
    Ok(PalosIndices {
        global,
        freqs: cs.freqs().to_vec(),
        per_frequency,
        per_channel,
        dominant,
        flag: global > flag_threshold,
    })
}

/// Global PaLOSi of `T S_ω Tᵀ` for a real transform `T`, computed in the
/// column space of `T`.
///
/// With the thin factorization `T = Q R`, `T S Tᵀ = Q (R S Rᵀ) Qᵀ` and `Q`
/// has orthonormal columns, so the decomposition runs on the small matrices.
/// Used for source-space spectra, where `T` maps a few channels onto many
/// sources.
pub fn palosi_through(cs: &CrossSpectra, t: &DMatrix<f64>) -> Result<f64> {
    if t.ncols() != cs.n_channels() {
        return Err(Error::ShapeMismatch(format!(
            "transform has {} columns for {} channels",
            t.ncols(),
            cs.n_channels()
        )));
    }
    let r = if t.nrows() > t.ncols() {
        t.clone().qr().r()
    } else {
        t.clone()
    };
    let small = cs.congruence(&linalg::to_complex(&r))?;
    Ok(analyze_cross_spectra(small, 1.0)?.indices.global)
}

/// Intermediate products of a full recording analysis.
#[derive(Debug, Clone)]
pub struct PalosAnalysis {
    pub cross_spectra: CrossSpectra,
    pub cpc: CpcResult,
    pub indices: PalosIndices,
}

pub fn analyze_cross_spectra(cs: CrossSpectra, flag_threshold: f64) -> Result<PalosAnalysis> {
    let cpc = stepwise_cpc(&cs, &CpcOptions::default())?;
    let indices = palosi(&cs, &cpc, flag_threshold)?;
    Ok(PalosAnalysis {
        cross_spectra: cs,
        cpc,
        indices,
    })
}

pub fn analyze_recording(
    rec: &ValidatedRecording,
    cfg: &SpectralConfig,
    thresholds: &QcThresholds,
) -> Result<PalosAnalysis> {
    analyze_cross_spectra(recording_cross_spectra(rec, cfg)?, thresholds.palosi_flag)
}

/// Spectra → full stepwise CPC → indices.
pub fn palosi_from_recording(
    rec: &ValidatedRecording,
    cfg: &SpectralConfig,
    thresholds: &QcThresholds,
) -> Result<PalosIndices> {
    Ok(analyze_recording(rec, cfg, thresholds)?.indices)
}
