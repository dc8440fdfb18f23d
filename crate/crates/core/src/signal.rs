//! Domain types shared by every stage: recordings, spectral configuration,
//! frequency bands and quality-control thresholds.

use std::collections::HashSet;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference label used when the data are average referenced.
pub const COMMON_AVERAGE: &str = "common-average";

/// A multichannel voltage recording, channels × samples, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub data: DMatrix<f64>,
    pub fs: f64,
    pub channels: Vec<String>,
    pub reference: String,
}

impl Recording {
    pub fn new(data: DMatrix<f64>, fs: f64, channels: Vec<String>, reference: impl Into<String>) -> Self {
        Self {
            data,
            fs,
            channels,
            reference: reference.into(),
        }
    }

    /// Labels `prefix0`, `prefix1`, ... for synthetic data.
    pub fn numbered_labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }
}

/// A recording whose invariants have been checked. Read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedRecording(Recording);

impl ValidatedRecording {
    pub fn into_inner(self) -> Recording {
        self.0
    }
}

impl Deref for ValidatedRecording {
    type Target = Recording;

    fn deref(&self) -> &Recording {
        &self.0
    }
}

/// Checks the recording invariants and returns the recording unchanged.
pub fn validate_recording(rec: Recording) -> Result<ValidatedRecording> {
    if !(rec.fs.is_finite() && rec.fs > 0.0) {
        return Err(Error::InvalidRecording(format!("sampling rate {} is not positive", rec.fs)));
    }
    if rec.n_channels() < 2 {
        return Err(Error::InvalidRecording(format!(
            "need at least 2 channels, got {}",
            rec.n_channels()
        )));
    }
    if rec.channels.len() != rec.n_channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} channels",
            rec.channels.len(),
            rec.n_channels()
        )));
    }
    let required = (2.0 * rec.fs).ceil() as usize;
    if rec.n_samples() < required {
        return Err(Error::TooShort {
            samples: rec.n_samples(),
            required,
        });
    }
    let mut seen = HashSet::with_capacity(rec.channels.len());
    for label in &rec.channels {
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateChannel(label.clone()));
        }
    }
    // column-major storage: index / nrows is the sample, index % nrows the channel
    if let Some(pos) = rec.data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            channel: pos % rec.n_channels(),
            sample: pos / rec.n_channels(),
        });
    }
    Ok(ValidatedRecording(rec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Hamming,
    Rect,
}

impl Window {
    /// Periodic-free (symmetric) window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        use std::f64::consts::PI;
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / denom;
                match self {
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::Hamming => 0.54 - 0.46 * x.cos(),
                    Window::Rect => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    Demean,
    None,
}

/// Welch segmentation and frequency-range settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub segment_seconds: f64,
    pub overlap_fraction: f64,
    pub window: Window,
    pub f_min: f64,
    pub f_max: f64,
    pub detrend: Detrend,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            segment_seconds: 2.0,
            overlap_fraction: 0.5,
            window: Window::Hann,
            f_min: 1.0,
            f_max: 30.0,
            detrend: Detrend::Demean,
        }
    }
}

impl SpectralConfig {
    pub fn segment_len(&self, fs: f64) -> usize {
        (self.segment_seconds * fs).round() as usize
    }

    /// Hop between consecutive segment starts, in samples (at least 1).
    pub fn step_len(&self, fs: f64) -> usize {
        let seg = self.segment_len(fs);
        ((seg as f64 * (1.0 - self.overlap_fraction)).round() as usize).max(1)
    }

    /// Number of full segments that fit `n_samples`; tail remainders are dropped.
    pub fn segment_count(&self, fs: f64, n_samples: usize) -> usize {
        let seg = self.segment_len(fs);
        if n_samples < seg {
            return 0;
        }
        (n_samples - seg) / self.step_len(fs) + 1
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.segment_seconds > 0.0) {
            return Err(Error::InvalidConfig("segment_seconds must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidConfig("overlap_fraction must lie in [0, 1)".into()));
        }
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max <= fs / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < f_min < f_max <= fs/2, got f_min={} f_max={} fs={}",
                self.f_min, self.f_max, fs
            )));
        }
        if self.segment_len(fs) < 2 {
            return Err(Error::InvalidConfig("segments must hold at least 2 samples".into()));
        }
        Ok(())
    }
}

/// A named half-open frequency band `[lo, hi)` in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo && f < self.hi
    }
}

/// Non-overlapping bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Band>", into = "Vec<Band>")]
pub struct BandSet(Vec<Band>);

impl BandSet {
    pub fn new(mut bands: Vec<Band>) -> Result<Self> {
        for b in &bands {
            if !(b.lo < b.hi) {
                return Err(Error::InvalidConfig(format!("band {} has lo >= hi", b.name)));
            }
        }
        bands.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for pair in bands.windows(2) {
            if pair[1].lo < pair[0].hi {
                return Err(Error::InvalidConfig(format!(
                    "bands {} and {} overlap",
                    pair[0].name, pair[1].name
                )));
            }
        }
        Ok(Self(bands))
    }

    pub fn bands(&self) -> &[Band] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<&Band> {
        self.0.iter().find(|b| b.name == name)
    }
}

impl Default for BandSet {
    fn default() -> Self {
        Self(vec![
            Band::new("delta", 1.0, 4.0),
            Band::new("theta", 4.0, 8.0),
            Band::new("alpha", 8.0, 13.0),
            Band::new("beta", 13.0, 30.0),
        ])
    }
}

impl TryFrom<Vec<Band>> for BandSet {
    type Error = Error;

    fn try_from(v: Vec<Band>) -> Result<Self> {
        BandSet::new(v)
    }
}

impl From<BandSet> for Vec<Band> {
    fn from(b: BandSet) -> Self {
        b.0
    }
}

/// `(good_max, ok_max)` cutoffs for one temporal metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub good_max: f64,
    pub ok_max: f64,
}

impl Cutoffs {
    pub const fn new(good_max: f64, ok_max: f64) -> Self {
        Self { good_max, ok_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcThresholds {
    pub oha: Cutoffs,
    pub thv: Cutoffs,
    pub chv: Cutoffs,
    pub rbc: Cutoffs,
    /// Absolute amplitude above which a sample counts toward OHA, in µV.
    pub voltage_amplitude_threshold: f64,
    /// Multiple of the median standard deviation used by THV and CHV.
    pub variance_z_threshold: f64,
    pub palosi_flag: f64,
}

impl Default for QcThresholds {
    fn default() -> Self {
        Self {
            oha: Cutoffs::new(0.1, 0.2),
            thv: Cutoffs::new(0.1, 0.2),
            chv: Cutoffs::new(0.15, 0.3),
            rbc: Cutoffs::new(0.15, 0.3),
            voltage_amplitude_threshold: 100.0,
            variance_z_threshold: 3.0,
            palosi_flag: 0.7,
        }
    }
}

impl QcThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("oha", self.oha), ("thv", self.thv), ("chv", self.chv), ("rbc", self.rbc)] {
            if !(0.0 < c.good_max && c.good_max < c.ok_max && c.ok_max < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} cutoffs must satisfy 0 < good_max < ok_max < 1"
                )));
            }
        }
        if !(self.voltage_amplitude_threshold > 0.0) || !(self.variance_z_threshold > 0.0) {
            return Err(Error::InvalidConfig("amplitude and variance thresholds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.palosi_flag) {
            return Err(Error::InvalidConfig("palosi_flag must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
