//! Degradation suite: ground-truth sources (GT) projected to clean scalp EEG
//! (CE), ICA-based removal of low-variance components (EPE), and sLORETA
//! reconstructions of both (SCE, SEPE).
//!
//! Every dataset draws from its own ChaCha stream, so results do not depend
//! on how datasets are scheduled. Spectra of back-projected and
//! reconstructed signals are formed from the component cross-spectra by
//! congruence, which equals running the Welch estimator on the signals
//! themselves because the estimator is linear.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connectivity::{self, Network, WeightHistogram, HISTOGRAM_BINS};
use crate::error::{Error, Result};
use crate::ica::{self, IcaOptions};
use crate::inverse::{self, InverseOperator};
use crate::linalg;
use crate::palosi::palosi_through;
use crate::par;
use crate::signal::{validate_recording, BandSet, Recording, SpectralConfig, COMMON_AVERAGE};
use crate::simkit::{self, HeadModel, Leadfield, Point};
use crate::spectra::{recording_cross_spectra, CrossSpectra};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n_datasets: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub fs: f64,
    pub n_sources: usize,
    pub grid_radius_mm: f64,
    /// Localized band-limited processes per dataset.
    pub n_latent: usize,
    /// Gaussian patch width of each localized process.
    pub patch_width_mm: f64,
    /// Range of the latent band widths in Hz; centres are uniform in 1–30 Hz.
    pub band_width_hz: [f64; 2],
    /// Gaussian patch width of the shared process.
    pub shared_width_mm: f64,
    pub n_rois: usize,
    /// Accepted GT PaLOSi range.
    pub gt_range: [f64; 2],
    pub max_attempts: usize,
    /// EPE is the first sweep point whose scalp PaLOSi exceeds this.
    pub epe_threshold: f64,
    pub network_freq_hz: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n_datasets: 200,
            seed: 0,
            duration_s: 60.0,
            fs: 100.0,
            n_sources: 103,
            grid_radius_mm: 70.0,
            n_latent: 24,
            patch_width_mm: 15.0,
            shared_width_mm: 30.0,
            band_width_hz: [8.0, 25.0],
            n_rois: 12,
            gt_range: [0.2, 0.4],
            max_attempts: 20,
            epe_threshold: 0.7,
            network_freq_hz: 10.0,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_datasets == 0 {
            return bad("suite needs at least one dataset");
        }
        if !(self.fs > 0.0 && self.duration_s > 0.0) {
            return bad("duration and sampling rate must be positive");
        }
        if self.n_sources == 0 || self.n_latent == 0 || self.n_rois < 2 {
            return bad("need sources, latent processes and at least two ROIs");
        }
        if self.n_rois > self.n_sources {
            return bad("more ROIs than sources");
        }
        if !(self.band_width_hz[0] > 0.0 && self.band_width_hz[0] <= self.band_width_hz[1]) {
            return bad("band widths must be positive and ordered");
        }
        if !(self.grid_radius_mm > 0.0 && self.patch_width_mm > 0.0 && self.shared_width_mm > 0.0) {
            return bad("grid radius and patch widths must be positive");
        }
        let [lo, hi] = self.gt_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad("GT PaLOSi range must satisfy 0 <= lo < hi <= 1");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

/// One point of the removal sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k_removed: usize,
    pub scalp_palosi: f64,
    pub source_palosi: f64,
    /// Scalp band-network entropies, in band order.
    pub entropies: Vec<f64>,
    /// Similarity of the reconstructed ROI network to the GT ROI network.
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub index: usize,
    pub attempts: usize,
    /// Weight of the shared process in the GT mixing.
    pub shared_weight: f64,
    pub gt_palosi: f64,
    /// `sweep[k]` has `k` components removed.
    pub sweep: Vec<SweepPoint>,
    pub epe_k_removed: usize,
    pub spearman: f64,
    /// Source below scalp at every sweep point that keeps two or more components.
    pub source_below_scalp: bool,
    /// EPE scalp band-network histograms, in band order.
    pub epe_histograms: Vec<WeightHistogram>,
}

impl DatasetResult {
    pub fn ce(&self) -> &SweepPoint {
        &self.sweep[0]
    }

    pub fn epe(&self) -> &SweepPoint {
        &self.sweep[self.epe_k_removed]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub band: String,
    pub median_se_ce: f64,
    pub median_se_epe: f64,
    /// Datasets with SE(EPE) < SE(CE).
    pub n_lower: usize,
    pub n_ties: usize,
    /// One-sided sign-test p-value for SE(EPE) < SE(CE).
    pub sign_test_p: f64,
    pub epe_pooled_counts: Vec<usize>,
    pub epe_modal_bin: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub n_datasets: usize,
    pub median_spearman: f64,
    pub fraction_source_below_scalp: f64,
    pub median_gt_palosi: f64,
    pub median_ce_palosi: f64,
    pub median_sce_palosi: f64,
    pub median_epe_palosi: f64,
    pub median_sepe_palosi: f64,
    pub median_epe_k_removed: f64,
    pub median_similarity_sce: f64,
    pub median_similarity_sepe: f64,
    pub bands: Vec<BandSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub config: SuiteConfig,
    pub bands: Vec<String>,
    pub datasets: Vec<DatasetResult>,
    pub summary: SuiteSummary,
}

/// Fixed per-suite geometry and operators.
struct Setup {
    leadfield: Leadfield,
    inverse: InverseOperator,
    grid: Vec<Point>,
    rois: Vec<usize>,
    roi_labels: Vec<String>,
    spectral: SpectralConfig,
    bands: BandSet,
}

fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Assigns every point to its nearest centre.
pub fn nearest_assignment(points: &[Point], centres: &[Point]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            (0..centres.len())
                .min_by(|&a, &b| distance(p, &centres[a]).total_cmp(&distance(p, &centres[b])))
                .unwrap_or(0)
        })
        .collect()
}

fn setup(cfg: &SuiteConfig, head: &HeadModel) -> Result<Setup> {
    let grid = simkit::hemisphere_grid(cfg.n_sources, cfg.grid_radius_mm);
    let leadfield = simkit::leadfield(head, &grid, &simkit::radial(&grid))?;
    let inverse = inverse::sloreta_operator(&leadfield, inverse::default_alpha(&leadfield))?;
    let centres = simkit::hemisphere_grid(cfg.n_rois, cfg.grid_radius_mm);
    let rois = nearest_assignment(&grid, &centres);
    Ok(Setup {
        leadfield,
        inverse,
        grid,
        rois,
        roi_labels: Recording::numbered_labels("roi", cfg.n_rois),
        spectral: SpectralConfig::default(),
        bands: BandSet::default(),
    })
}

fn spectra_of(data: &DMatrix<f64>, fs: f64, cfg: &SpectralConfig) -> Result<CrossSpectra> {
    let rec = Recording::new(data.clone(), fs, Recording::numbered_labels("x", data.nrows()), COMMON_AVERAGE);
    recording_cross_spectra(&validate_recording(rec)?, cfg)
}

/// Band-limited carrier under a slow log-normal envelope; the bursts make
/// the process super-Gaussian so ICA can identify it.
fn bursting(n: usize, fs: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let carrier = simkit::band_limited_noise(n, fs, lo, hi, rng);
    let slow = simkit::band_limited_noise(n, fs, 0.0, ENVELOPE_HZ, rng);
    let mut out: Vec<f64> = carrier
        .iter()
        .zip(&slow)
        .map(|(c, s)| c * (ENVELOPE_DEPTH * s).exp())
        .collect();
    simkit::standardize(&mut out);
    out
}

const ENVELOPE_HZ: f64 = 0.5;
const ENVELOPE_DEPTH: f64 = 1.0;

/// Gaussian weights around `seat`.
fn patch(grid: &[Point], seat: &Point, width_mm: f64) -> Vec<f64> {
    grid.iter()
        .map(|g| (-distance(g, seat).powi(2) / (2.0 * width_mm * width_mm)).exp())
        .collect()
}

/// Ground truth drawn from band-limited processes.
struct GroundTruth {
    latents: DMatrix<f64>,
    spectra: CrossSpectra,
    local: DMatrix<f64>,
    shared: DMatrix<f64>,
}

impl GroundTruth {
    fn draw(cfg: &SuiteConfig, grid: &[Point], rng: &mut ChaCha8Rng) -> Result<Self> {
        let n_t = (cfg.duration_s * cfg.fs).round() as usize;
        let nyquist = cfg.fs / 2.0;
        let mut rows = Vec::with_capacity(cfg.n_latent + 1);
        let mut local = DMatrix::zeros(grid.len(), cfg.n_latent);
        for p in 0..cfg.n_latent {
            let centre = rng.random_range(1.0..30.0f64);
            let [w_lo, w_hi] = cfg.band_width_hz;
            let width = if w_hi > w_lo { rng.random_range(w_lo..w_hi) } else { w_lo };
            let lo = (centre - width / 2.0).max(0.5);
            let hi = (centre + width / 2.0).min(0.95 * nyquist);
            // spectral level ∝ 1/f at the band centre, like the shared process
            let gain = ((hi - lo) / (0.5 * (hi + lo))).sqrt();
            rows.push(bursting(n_t, cfg.fs, lo, hi, rng).into_iter().map(|v| v * gain).collect());
            let mut col = patch(grid, &grid[rng.random_range(0..grid.len())], cfg.patch_width_mm);
            let norm = col.iter().map(|w| w * w).sum::<f64>().sqrt();
            col.iter_mut().for_each(|w| *w /= norm);
            local.set_column(p, &nalgebra::DVector::from_vec(col));
        }
        rows.push(simkit::pink_noise(n_t, cfg.fs, rng));
        let mut shared = patch(grid, &grid[rng.random_range(0..grid.len())], cfg.shared_width_mm);
        let norm = shared.iter().map(|w| w * w).sum::<f64>().sqrt();
        shared.iter_mut().for_each(|w| *w /= norm);
        let latents = DMatrix::from_fn(rows.len(), n_t, |i, t| rows[i][t]);
        let spectra = spectra_of(&latents, cfg.fs, &SpectralConfig::default())?;
        Ok(Self {
            latents,
            spectra,
            local,
            shared: DMatrix::from_vec(grid.len(), 1, shared),
        })
    }

    /// Sources × latents for shared weight `lambda`.
    fn mixing(&self, lambda: f64) -> DMatrix<f64> {
        let n = self.local.ncols();
        let mut w = DMatrix::zeros(self.local.nrows(), n + 1);
        w.columns_mut(0, n).copy_from(&(&self.local * (1.0 - lambda).sqrt()));
        w.set_column(n, &(self.shared.column(0) * lambda.sqrt()));
        w
    }

    fn palosi(&self, lambda: f64) -> Result<f64> {
        palosi_through(&self.spectra, &self.mixing(lambda))
    }

    /// Bisects the shared weight towards the middle of `range`.
    fn tune(&self, range: [f64; 2]) -> Result<Option<(f64, f64)>> {
        let target = 0.5 * (range[0] + range[1]);
        let inside = |p: f64| p >= range[0] && p <= range[1];
        let (mut lo, mut hi) = (0.0, 1.0);
        let p_lo = self.palosi(lo)?;
        if p_lo > range[1] {
            return Ok(None);
        }
        if inside(p_lo) && p_lo >= target {
            return Ok(Some((lo, p_lo)));
        }
        if self.palosi(hi)? < range[0] {
            return Ok(None);
        }
        let mut best = None;
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            let p = self.palosi(mid)?;
            if inside(p) {
                best = Some((mid, p));
                if (p - target).abs() < 0.01 * (range[1] - range[0]) {
                    break;
                }
            }
            if p < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(best)
    }
}

fn dataset_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn band_entropies(cs: &CrossSpectra, labels: &[String], bands: &BandSet) -> Result<(Vec<f64>, Vec<Network>)> {
    let per_freq = connectivity::coherence(cs, labels)?;
    let nets = bands
        .bands()
        .iter()
        .map(|b| connectivity::band_network(&per_freq, b))
        .collect::<Result<Vec<_>>>()?;
    let se = nets.iter().map(connectivity::shannon_entropy).collect::<Result<Vec<_>>>()?;
    Ok((se, nets))
}

fn roi_network(sources: &DMatrix<f64>, setup: &Setup, cfg: &SuiteConfig) -> Result<Network> {
    let roi = inverse::roi_reduce(sources, &setup.rois)?;
    let cs = spectra_of(&roi.data, cfg.fs, &setup.spectral)?;
    let per_freq = connectivity::coherence(&cs, &setup.roi_labels)?;
    connectivity::network_at(&per_freq, cfg.network_freq_hz)
        .cloned()
        .ok_or(Error::EmptyNetwork)
}

fn run_dataset(cfg: &SuiteConfig, setup: &Setup, index: usize) -> Result<DatasetResult> {
    let mut rng = dataset_rng(cfg.seed, index);
    let mut drawn = None;
    let mut attempts = 0;
    while attempts < cfg.max_attempts && drawn.is_none() {
        attempts += 1;
        let gt = GroundTruth::draw(cfg, &setup.grid, &mut rng)?;
        let Some((shared_weight, gt_palosi)) = gt.tune(cfg.gt_range)? else {
            continue;
        };
        let sources = gt.mixing(shared_weight) * &gt.latents * simkit::SOURCE_SCALE_NAM;
        let ce = simkit::forward(&setup.leadfield, &sources, cfg.fs)?;
        // the average reference removes one dimension
        let n_components = ce.n_channels() - 1;
        match ica::fastica(&ce, &IcaOptions::new(n_components, rng.random())) {
            Ok(model) => drawn = Some((sources, ce, model, shared_weight, gt_palosi)),
            // nearly collinear patches or too Gaussian a draw; redraw
            Err(Error::RankDeficient { .. } | Error::IcaNoConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let Some((sources, ce, model, shared_weight, gt_palosi)) = drawn else {
        return Err(Error::TargetUnreachable {
            lo: cfg.gt_range[0],
            hi: cfg.gt_range[1],
            min: f64::NAN,
            max: f64::NAN,
        });
    };
    let gt_network = roi_network(&sources, setup, cfg)?;
    let n_components = model.n_components();
    let ic_spectra = spectra_of(&model.sources, cfg.fs, &setup.spectral)?;

    let mut sweep = Vec::with_capacity(n_components);
    for k_removed in 0..n_components {
        let keep = n_components - k_removed;
        let kept: Vec<usize> = (0..keep).collect();
        let sub = ic_spectra.select(&kept)?;
        let mixing = model.mixing.columns(0, keep).into_owned();
        let to_sources = &setup.inverse.kernel * &mixing;
        let scalp_palosi = palosi_through(&sub, &mixing)?;
        let source_palosi = palosi_through(&sub, &to_sources)?;
        let scalp = sub.congruence(&linalg::to_complex(&mixing))?;
        let (entropies, _) = band_entropies(&scalp, &ce.channels, &setup.bands)?;
        let reconstructed = &to_sources * model.sources.rows(0, keep);
        let similarity = connectivity::network_similarity(&gt_network, &roi_network(&reconstructed, setup, cfg)?)?;
        sweep.push(SweepPoint {
            k_removed,
            scalp_palosi,
            source_palosi,
            entropies,
            similarity,
        });
    }

    let epe_k_removed = sweep
        .iter()
        .skip(1)
        .find(|p| p.scalp_palosi > cfg.epe_threshold)
        .map_or(n_components - 1, |p| p.k_removed);
    let keep = n_components - epe_k_removed;
    let kept: Vec<usize> = (0..keep).collect();
    let epe_scalp = ic_spectra
        .select(&kept)?
        .congruence(&linalg::to_complex(&model.mixing.columns(0, keep).into_owned()))?;
    let (_, epe_nets) = band_entropies(&epe_scalp, &ce.channels, &setup.bands)?;

    let removed: Vec<f64> = sweep.iter().map(|p| p.k_removed as f64).collect();
    let scalp: Vec<f64> = sweep.iter().map(|p| p.scalp_palosi).collect();
    let source_below_scalp = sweep
        .iter()
        .take(n_components.saturating_sub(1))
        .all(|p| p.source_palosi < p.scalp_palosi);
    Ok(DatasetResult {
        index,
        attempts,
        shared_weight,
        gt_palosi,
        spearman: spearman(&removed, &scalp),
        source_below_scalp,
        epe_k_removed,
        epe_histograms: epe_nets.iter().map(WeightHistogram::of).collect(),
        sweep,
    })
}

/// Runs every dataset of the suite; datasets are independent and run in parallel.
pub fn run_suite(cfg: &SuiteConfig, head: &HeadModel) -> Result<SuiteResult> {
    cfg.validate()?;
    head.validate()?;
    let setup = setup(cfg, head)?;
    let datasets = par::map_range(cfg.n_datasets, |i| run_dataset(cfg, &setup, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let bands: Vec<String> = setup.bands.bands().iter().map(|b| b.name.clone()).collect();
    let summary = summarize(&datasets, &bands);
    Ok(SuiteResult {
        config: cfg.clone(),
        bands,
        datasets,
        summary,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// `P(X >= successes)` for `X ~ Binomial(trials, 1/2)`.
pub fn sign_test_p(successes: usize, trials: usize) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    // log C(n, k) accumulated term by term
    let mut log_c = 0.0;
    let mut tail = 0.0;
    let log_half = trials as f64 * 0.5f64.ln();
    for k in 0..=trials {
        if k > 0 {
            log_c += ((trials - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= successes {
            tail += (log_c + log_half).exp();
        }
    }
    tail.min(1.0)
}

fn summarize(datasets: &[DatasetResult], bands: &[String]) -> SuiteSummary {
    let med = |f: &dyn Fn(&DatasetResult) -> f64| median(datasets.iter().map(f).collect());
    let band_summaries = bands
        .iter()
        .enumerate()
        .map(|(b, name)| {
            let (mut lower, mut ties) = (0, 0);
            let mut pooled = vec![0usize; HISTOGRAM_BINS];
            for d in datasets {
                let (ce, epe) = (d.ce().entropies[b], d.epe().entropies[b]);
                if epe < ce {
                    lower += 1;
                } else if epe == ce {
                    ties += 1;
                }
                for (p, c) in pooled.iter_mut().zip(&d.epe_histograms[b].counts) {
                    *p += c;
                }
            }
            let modal = WeightHistogram {
                counts: pooled.clone(),
                probabilities: vec![],
            }
            .modal_bin();
            let width = 1.0 / HISTOGRAM_BINS as f64;
            BandSummary {
                band: name.clone(),
                median_se_ce: median(datasets.iter().map(|d| d.ce().entropies[b]).collect()),
                median_se_epe: median(datasets.iter().map(|d| d.epe().entropies[b]).collect()),
                n_lower: lower,
                n_ties: ties,
                sign_test_p: sign_test_p(lower, datasets.len() - ties),
                epe_pooled_counts: pooled,
                epe_modal_bin: [modal as f64 * width, (modal + 1) as f64 * width],
            }
        })
        .collect();
    SuiteSummary {
        n_datasets: datasets.len(),
        median_spearman: med(&|d| d.spearman),
        fraction_source_below_scalp: datasets.iter().filter(|d| d.source_below_scalp).count() as f64
            / datasets.len().max(1) as f64,
        median_gt_palosi: med(&|d| d.gt_palosi),
        median_ce_palosi: med(&|d| d.ce().scalp_palosi),
        median_sce_palosi: med(&|d| d.ce().source_palosi),
        median_epe_palosi: med(&|d| d.epe().scalp_palosi),
        median_sepe_palosi: med(&|d| d.epe().source_palosi),
        median_epe_k_removed: med(&|d| d.epe_k_removed as f64),
        median_similarity_sce: med(&|d| d.ce().similarity),
        median_similarity_sepe: med(&|d| d.epe().similarity),
        bands: band_summaries,
    }
}

impl SuiteResult {
    /// One row per dataset and sweep point.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<String> = ["dataset", "k_removed", "n_kept", "gt_palosi", "scalp_palosi", "source_palosi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.bands.iter().map(|b| format!("se_{b}")));
        header.push("similarity_gt".into());
        header.push("is_epe".into());
        w.write_record(&header)?;
        for d in &self.datasets {
            let n = d.sweep.len();
            for p in &d.sweep {
                let mut row = vec![
                    d.index.to_string(),
                    p.k_removed.to_string(),
                    (n - p.k_removed).to_string(),
                    d.gt_palosi.to_string(),
                    p.scalp_palosi.to_string(),
                    p.source_palosi.to_string(),
                ];
                row.extend(p.entropies.iter().map(f64::to_string));
                row.push(p.similarity.to_string());
                row.push((p.k_removed == d.epe_k_removed).to_string());
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, &self.summary)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}
