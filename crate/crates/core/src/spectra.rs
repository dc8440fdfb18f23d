//! Welch-style segmentation, windowed Fourier coefficients, cross-spectral
//! matrices and per-frequency principal components.
//!
//! Fourier coefficients are scaled so that `S_ω = Φ_ω Φ_ω† / N_s` is a
//! one-sided power spectral density: summing `diag(S_ω)·Δf` over all bins
//! recovers the broadband variance of each channel.

use nalgebra::DMatrix;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::par;
use crate::signal::{Detrend, SpectralConfig, ValidatedRecording};

/// Per-frequency Fourier coefficients `Φ_ω` (channels × segments).
#[derive(Debug, Clone)]
pub struct FourierSeries {
    pub freqs: Vec<f64>,
    pub coefficients: Vec<DMatrix<C64>>,
    /// `Σ w²` of the taper, used in the PSD scaling.
    pub window_power: f64,
}

impl FourierSeries {
    pub fn n_segments(&self) -> usize {
        self.coefficients.first().map_or(0, |m| m.ncols())
    }

    pub fn n_channels(&self) -> usize {
        self.coefficients.first().map_or(0, |m| m.nrows())
    }
}

/// Frequency-indexed Hermitian cross-spectral matrices.
#[derive(Debug, Clone)]
pub struct CrossSpectra {
    freqs: Vec<f64>,
    matrices: Vec<DMatrix<C64>>,
    n_segments: usize,
}

impl CrossSpectra {
    /// Builds cross-spectra from explicit matrices after checking shape,
    /// Hermitian symmetry (1e-10 relative) and real non-negative diagonals.
    ///
    /// Near-Hermitian input is symmetrized exactly.
    pub fn new(freqs: Vec<f64>, matrices: Vec<DMatrix<C64>>, n_segments: usize) -> Result<Self> {
        if freqs.len() != matrices.len() || matrices.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} frequencies for {} matrices",
                freqs.len(),
                matrices.len()
            )));
        }
        if freqs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("frequency axis must be strictly increasing".into()));
        }
        let n = matrices[0].nrows();
        let mut out = Vec::with_capacity(matrices.len());
        for (k, m) in matrices.into_iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::ShapeMismatch(format!("matrix {k} is not {n}×{n}")));
            }
            let scale = linalg::max_abs(&m).max(f64::MIN_POSITIVE);
            if linalg::max_abs_diff(&m, &m.adjoint()) > 1e-10 * scale {
                return Err(Error::InvalidConfig(format!("matrix at bin {k} is not Hermitian")));
            }
            for i in 0..n {
                if m[(i, i)].re < 0.0 || m[(i, i)].im.abs() > 1e-10 * scale {
                    return Err(Error::InvalidConfig(format!(
                        "diagonal entry {i} at bin {k} is not real non-negative"
                    )));
                }
            }
            out.push(hermitize(m));
        }
        Ok(Self {
            freqs,
            matrices: out,
            n_segments,
        })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.matrices
    }

    pub fn n_channels(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn n_freqs(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn trace(&self, k: usize) -> f64 {
        linalg::trace_re(&self.matrices[k])
    }

    pub fn total_trace(&self) -> f64 {
        (0..self.n_freqs()).map(|k| self.trace(k)).sum()
    }

    /// Power of channel `c` at bin `k`.
    pub fn power(&self, c: usize, k: usize) -> f64 {
        self.matrices[k][(c, c)].re
    }

    /// Applies `S ↦ T S T†` at every bin (e.g. a channel permutation,
    /// a unitary change of basis, or a linear inverse operator).
    pub fn congruence(&self, t: &DMatrix<C64>) -> Result<Self> {
        if t.ncols() != self.n_channels() {
            return Err(Error::ShapeMismatch(format!(
                "transform has {} columns for {} channels",
                t.ncols(),
                self.n_channels()
            )));
        }
        let th = t.adjoint();
        let matrices = par::map_slice(&self.matrices, |s| hermitize(t * s * &th));
        Ok(Self {
            freqs: self.freqs.clone(),
            matrices,
            n_segments: self.n_segments,
        })
    }

    /// Principal submatrices over the given channel indices.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&c) = channels.iter().find(|&&c| c >= self.n_channels()) {
            return Err(Error::ShapeMismatch(format!("channel index {c} out of range")));
        }
        let matrices = self
            .matrices
            .iter()
            .map(|s| DMatrix::from_fn(channels.len(), channels.len(), |i, j| s[(channels[i], channels[j])]))
            .collect();
        Ok(Self {
            freqs: self.freqs.clone(),
            matrices,
            n_segments: self.n_segments,
        })
    }

    /// Keeps only the bins for which `keep(freq)` holds.
    pub fn restrict(&self, keep: impl Fn(f64) -> bool) -> Option<Self> {
        let (freqs, matrices): (Vec<_>, Vec<_>) = self
            .freqs
            .iter()
            .zip(&self.matrices)
            .filter(|(f, _)| keep(**f))
            .map(|(f, m)| (*f, m.clone()))
            .unzip();
        if freqs.is_empty() {
            return None;
        }
        Some(Self {
            freqs,
            matrices,
            n_segments: self.n_segments,
        })
    }
}

/// Averages the upper and lower triangles and zeroes the diagonal's
/// imaginary part so the matrix is exactly Hermitian.
fn hermitize(mut m: DMatrix<C64>) -> DMatrix<C64> {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in i + 1..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    m
}

/// Splits the recording into overlapping tapered segments and returns the
/// scaled Fourier coefficients for every bin inside `[f_min, f_max]`.
pub fn segment_and_window(rec: &ValidatedRecording, cfg: &SpectralConfig) -> Result<FourierSeries> {
    cfg.validate(rec.fs)?;
    let seg_len = cfg.segment_len(rec.fs);
    let step = cfg.step_len(rec.fs);
    let n_seg = cfg.segment_count(rec.fs, rec.n_samples());
    if n_seg < 2 {
        return Err(Error::TooFewSegments(n_seg));
    }
    let taper = cfg.window.coefficients(seg_len);
    let window_power: f64 = taper.iter().map(|w| w * w).sum();
    let df = rec.fs / seg_len as f64;
    let bins: Vec<usize> = (1..=seg_len / 2)
        .filter(|&k| {
            let f = k as f64 * df;
            f >= cfg.f_min - 1e-9 && f <= cfg.f_max + 1e-9
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::InvalidConfig("no frequency bins fall inside [f_min, f_max]".into()));
    }
    let scales: Vec<f64> = bins
        .iter()
        .map(|&k| {
            let one_sided = if 2 * k == seg_len { 1.0 } else { 2.0 };
            (one_sided / (rec.fs * window_power)).sqrt()
        })
        .collect();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg_len);
    let n_ch = rec.n_channels();
    // one entry per segment: bins × channels
    let per_segment: Vec<Vec<C64>> = par::map_range(n_seg, |s| {
        let start = s * step;
        let mut buf = vec![C64::new(0.0, 0.0); seg_len];
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut out = vec![C64::new(0.0, 0.0); bins.len() * n_ch];
        for c in 0..n_ch {
            let row = rec.data.row(c);
            let mean = match cfg.detrend {
                Detrend::Demean => (start..start + seg_len).map(|t| row[t]).sum::<f64>() / seg_len as f64,
                Detrend::None => 0.0,
            };
            for (i, b) in buf.iter_mut().enumerate() {
                *b = C64::new((row[start + i] - mean) * taper[i], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (j, &k) in bins.iter().enumerate() {
                out[j * n_ch + c] = buf[k] * scales[j];
            }
        }
        out
    });

    let coefficients = (0..bins.len())
        .map(|j| DMatrix::from_fn(n_ch, n_seg, |c, s| per_segment[s][j * n_ch + c]))
        .collect();
    Ok(FourierSeries {
        freqs: bins.iter().map(|&k| k as f64 * df).collect(),
        coefficients,
        window_power,
    })
}

/// `S_ω = Φ_ω Φ_ω† / N_s` at every bin.
pub fn cross_spectra(series: &FourierSeries) -> Result<CrossSpectra> {
    let n_seg = series.n_segments();
    if n_seg < 2 {
        return Err(Error::TooFewSegments(n_seg));
    }
    let inv = 1.0 / n_seg as f64;
    let matrices = par::map_slice(&series.coefficients, |phi| {
        let n = phi.nrows();
        let mut s = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            let diag: f64 = phi.row(i).iter().map(|z| z.norm_sqr()).sum();
            s[(i, i)] = C64::new(diag * inv, 0.0);
            for j in i + 1..n {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..phi.ncols() {
                    acc += phi[(i, t)] * phi[(j, t)].conj();
                }
                s[(i, j)] = acc * inv;
                s[(j, i)] = acc.conj() * inv;
            }
        }
        s
    });
    Ok(CrossSpectra {
        freqs: series.freqs.clone(),
        matrices,
        n_segments: n_seg,
    })
}

/// Convenience: recording → cross-spectra with the given configuration.
pub fn recording_cross_spectra(rec: &ValidatedRecording, cfg: &SpectralConfig) -> Result<CrossSpectra> {
    cross_spectra(&segment_and_window(rec, cfg)?)
}

/// Per-frequency eigendecomposition `V_ω† S_ω V_ω = Λ_ω`.
#[derive(Debug, Clone)]
pub struct PerFrequencyPca {
    pub freqs: Vec<f64>,
    /// Descending, one vector per bin.
    pub eigenvalues: Vec<Vec<f64>>,
    pub eigenvectors: Vec<DMatrix<C64>>,
}

impl PerFrequencyPca {
    /// Principal-component scores `Ψ_ω = V_ω† Φ_ω`.
    pub fn components(&self, series: &FourierSeries) -> Result<Vec<DMatrix<C64>>> {
        if series.coefficients.len() != self.eigenvectors.len() {
            return Err(Error::ShapeMismatch("series and PCA have different frequency grids".into()));
        }
        Ok(self
            .eigenvectors
            .iter()
            .zip(&series.coefficients)
            .map(|(v, phi)| v.adjoint() * phi)
            .collect())
    }

    /// `λ_max(S_ω) / tr(S_ω)` per bin.
    pub fn dominance(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| {
                let tr: f64 = l.iter().sum();
                if tr > 0.0 {
                    l[0] / tr
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn per_frequency_pca(cs: &CrossSpectra) -> Result<PerFrequencyPca> {
    let decomps = par::map_slice(cs.matrices(), linalg::hermitian_eigen);
    let mut eigenvalues = Vec::with_capacity(decomps.len());
    let mut eigenvectors = Vec::with_capacity(decomps.len());
    for d in decomps {
        let (vals, vecs) = d?;
        eigenvalues.push(vals);
        eigenvectors.push(vecs);
    }
    Ok(PerFrequencyPca {
        freqs: cs.freqs().to_vec(),
        eigenvalues,
        eigenvectors,
    })
}

/// `log10` of each channel's auto-spectrum, channels × bins.
pub fn log_power_spectra(cs: &CrossSpectra) -> Result<DMatrix<f64>> {
    let n = cs.n_channels();
    let mut out = DMatrix::zeros(n, cs.n_freqs());
    for k in 0..cs.n_freqs() {
        for c in 0..n {
            let p = cs.power(c, k);
            if !(p > 0.0) {
                return Err(Error::ZeroPower {
                    channel: c,
                    freq_hz: cs.freqs()[k],
                });
            }
            out[(c, k)] = p.log10();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{validate_recording, Recording};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single_bin(phi: DMatrix<C64>) -> FourierSeries {
        FourierSeries {
            freqs: vec![10.0],
            coefficients: vec![phi],
            window_power: 1.0,
        }
    }

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        let fs = 500.0;
        let n = (60.0 * fs) as usize;
        let data = DMatrix::from_fn(2, n, |ch, t| {
            (2.0 * std::f64::consts::PI * 10.0 * t as f64 / fs).sin() * (ch + 1) as f64
        });
        let rec = validate_recording(Recording::new(data, fs, Recording::numbered_labels("c", 2), "Cz")).unwrap();
        let cs = recording_cross_spectra(&rec, &SpectralConfig::default()).unwrap();
        let k = (0..cs.n_freqs()).max_by(|&a, &b| cs.power(0, a).total_cmp(&cs.power(0, b))).unwrap();
        assert_eq!(cs.freqs()[k], 10.0);
        assert_eq!(cs.freqs().len(), 59);
        assert_eq!(cs.freqs()[0], 1.0);
        assert_eq!(*cs.freqs().last().unwrap(), 30.0);
    }

    #[test]
    fn psd_integrates_to_variance() {
        // white noise: one-sided PSD over [0, fs/2] integrates to the variance
        let fs = 100.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = DMatrix::from_fn(2, 12_000, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0);
        let rec = validate_recording(Recording::new(data, fs, Recording::numbered_labels("c", 2), "Cz")).unwrap();
        let cfg = SpectralConfig {
            f_min: 0.5,
            f_max: 50.0,
            ..SpectralConfig::default()
        };
        let cs = recording_cross_spectra(&rec, &cfg).unwrap();
        let df = cs.freqs()[1] - cs.freqs()[0];
        let integral: f64 = (0..cs.n_freqs()).map(|k| cs.power(0, k) * df).sum();
        assert!((integral / 9.0 - 1.0).abs() < 0.05, "integral {integral}");
    }

    #[test]
    fn too_few_segments_when_only_one_fits() {
        let fs = 500.0;
        let data = DMatrix::from_fn(2, 1250, |c, t| ((c + t) as f64).sin());
        let rec = validate_recording(Recording::new(data, fs, Recording::numbered_labels("c", 2), "Cz")).unwrap();
        assert!(matches!(
            segment_and_window(&rec, &SpectralConfig::default()),
            Err(Error::TooFewSegments(1))
        ));
        let data = DMatrix::from_fn(2, 1500, |c, t| ((c + t) as f64).sin());
        let rec = validate_recording(Recording::new(data, fs, Recording::numbered_labels("c", 2), "Cz")).unwrap();
        assert_eq!(segment_and_window(&rec, &SpectralConfig::default()).unwrap().n_segments(), 2);
    }

    #[test]
    fn identical_columns_give_rank_one_outer_product() {
        let v = DVector::from_vec(vec![c(1.0, 0.5), c(-2.0, 0.0), c(0.0, 1.0)]);
        let phi = DMatrix::from_fn(3, 4, |i, _| v[i]);
        let cs = cross_spectra(&single_bin(phi)).unwrap();
        let expected = &v * v.adjoint();
        assert!(linalg::max_abs_diff(&cs.matrices()[0], &expected) < 1e-14);
    }

    #[test]
    fn linearly_dependent_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let row: Vec<C64> = (0..6).map(|_| c(rng.random(), rng.random())).collect();
        let phi = DMatrix::from_fn(2, 6, |i, s| row[s] * (1.0 + i as f64));
        let s = cross_spectra(&single_bin(phi)).unwrap().matrices()[0].clone();
        assert!((s[(1, 1)].re - 4.0 * s[(0, 0)].re).abs() < 1e-12);
        assert!((s[(0, 1)].norm_sqr() - s[(0, 0)].re * s[(1, 1)].re).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phi = DMatrix::from_fn(4, 8, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let s = cross_spectra(&single_bin(phi.clone())).unwrap().matrices()[0].clone();
        let mut naive = DMatrix::<C64>::zeros(4, 4);
        for t in 0..8 {
            let col = phi.column(t);
            naive += &col * col.adjoint();
        }
        naive /= c(8.0, 0.0);
        assert!(linalg::max_abs_diff(&s, &naive) < 1e-12);
    }

    #[test]
    fn pca_of_diagonal_and_rank_one() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(4.0, 0.0), c(1.0, 0.0)]));
        let cs = CrossSpectra::new(vec![1.0], vec![d], 2).unwrap();
        let pca = per_frequency_pca(&cs).unwrap();
        assert!((pca.eigenvalues[0][0] - 4.0).abs() < 1e-12 && (pca.eigenvalues[0][1] - 1.0).abs() < 1e-12);
        assert!((pca.eigenvectors[0][(0, 0)].norm() - 1.0).abs() < 1e-12);

        let v = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)]);
        let cs = CrossSpectra::new(vec![1.0], vec![&v * v.adjoint()], 2).unwrap();
        let pca = per_frequency_pca(&cs).unwrap();
        assert!((pca.eigenvalues[0][0] - 1.0).abs() < 1e-12);
        assert!(pca.eigenvalues[0][1].abs() < 1e-12);
        let top = pca.eigenvectors[0].column(0);
        assert!(((top.adjoint() * &v)[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(6, 9, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let s = &a * a.adjoint();
        let cs = CrossSpectra::new(vec![2.0], vec![s.clone()], 9).unwrap();
        let pca = per_frequency_pca(&cs).unwrap();
        let v = &pca.eigenvectors[0];
        let lam = DMatrix::from_diagonal(&DVector::from_iterator(
            6,
            pca.eigenvalues[0].iter().map(|&x| c(x, 0.0)),
        ));
        let recon = v * lam * v.adjoint();
        assert!((recon - &s).norm() / s.norm() < 1e-10);
        assert!(pca.eigenvalues[0].windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = pca.eigenvalues[0].iter().sum();
        assert!((total - cs.trace(0)).abs() < 1e-8 * cs.trace(0));
    }

    #[test]
    fn log_power_offsets() {
        let v = DVector::from_vec(vec![c(1.0, 0.0), c(10f64.sqrt(), 0.0)]);
        let base = &v * v.adjoint();
        let mats: Vec<_> = [1.0, 3.0, 0.5].iter().map(|&a| &base * c(a, 0.0)).collect();
        let cs = CrossSpectra::new(vec![1.0, 2.0, 3.0], mats, 2).unwrap();
        let lp = log_power_spectra(&cs).unwrap();
        for k in 0..3 {
            assert!((lp[(1, k)] - lp[(0, k)] - 1.0).abs() < 1e-12);
        }
        let zero = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        let cs = CrossSpectra::new(vec![1.0], vec![zero], 2).unwrap();
        assert!(matches!(log_power_spectra(&cs), Err(Error::ZeroPower { channel: 1, .. })));
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = DMatrix::<C64>::identity(2, 2);
        m[(0, 1)] = c(0.5, 0.0);
        assert!(CrossSpectra::new(vec![1.0], vec![m], 2).is_err());
    }
}
