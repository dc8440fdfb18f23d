//! Per-recording quality reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::connectivity::{band_network, coherence, shannon_entropy};
use crate::error::{Error, Result};
use crate::palosi::analyze_recording;
use crate::signal::{BandSet, QcThresholds, SpectralConfig, ValidatedRecording};
use crate::temporal::{temporal_metrics, TemporalMetrics};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalosiSummary {
    pub global: f64,
    pub flag: bool,
    pub freqs: Vec<f64>,
    pub per_frequency: Vec<f64>,
    pub channels: Vec<String>,
    pub per_channel: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub id: String,
    pub spectral_config: SpectralConfig,
    pub thresholds: QcThresholds,
    pub temporal: TemporalMetrics,
    pub palosi: PalosiSummary,
    /// Shannon entropy of the band-averaged coherence network, by band name.
    pub band_entropy: BTreeMap<String, f64>,
    pub tool_version: String,
    pub seeds: Vec<u64>,
}

impl QualityReport {
    /// Pretty JSON with every object's keys in sorted order.
    pub fn to_json(&self) -> Result<String> {
        // serde_json's default map is ordered by key, so a round trip through
        // Value sorts nested structs as well
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn band(&self, name: &str) -> Option<f64> {
        self.band_entropy.get(name).copied()
    }
}

/// Settings shared by every recording in a QC run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QcConfig {
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub bands: BandSet,
}

/// Temporal metrics, PaLOSi and band entropies for one recording.
pub fn quality_report<S: AsRef<str>>(
    id: &str,
    rec: &ValidatedRecording,
    bad_channels: &[S],
    cfg: &QcConfig,
    thresholds: &QcThresholds,
    seeds: Vec<u64>,
) -> Result<QualityReport> {
    thresholds.validate()?;
    let temporal = temporal_metrics(rec, bad_channels, thresholds)?;
    let analysis = analyze_recording(rec, &cfg.spectral, thresholds)?;
    let nets = coherence(&analysis.cross_spectra, &rec.channels)?;
    let mut band_entropy = BTreeMap::new();
    for band in cfg.bands.bands() {
        let net = band_network(&nets, band)?;
        band_entropy.insert(band.name.clone(), shannon_entropy(&net)?);
    }
    let ix = analysis.indices;
    Ok(QualityReport {
        id: id.to_string(),
        spectral_config: cfg.spectral,
        thresholds: *thresholds,
        temporal,
        palosi: PalosiSummary {
            global: ix.global,
            flag: ix.flag,
            freqs: ix.freqs,
            per_frequency: ix.per_frequency,
            channels: rec.channels.clone(),
            per_channel: ix.per_channel,
        },
        band_entropy,
        tool_version: TOOL_VERSION.to_string(),
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{validate_recording, Recording, COMMON_AVERAGE};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise_report() -> QualityReport {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = DMatrix::from_fn(4, 2000, |_, _| rng.sample::<f64, _>(StandardNormal) * 10.0);
        let rec = validate_recording(Recording::new(data, 100.0, Recording::numbered_labels("E", 4), COMMON_AVERAGE))
            .unwrap();
        quality_report("n", &rec, &["E1"], &QcConfig::default(), &QcThresholds::default(), vec![3]).unwrap()
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let r = noise_report();
        let text = r.to_json().unwrap();
        assert_eq!(QualityReport::from_json(&text).unwrap(), r);
        assert_eq!(r.temporal.rbc, 0.25);
        assert_eq!(r.band_entropy.len(), 4);
    }

    #[test]
    fn keys_are_sorted() {
        let text = noise_report().to_json().unwrap();
        let top: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = top.clone();
        sorted.sort();
        assert_eq!(top, sorted);
        assert_eq!(top.first(), Some(&"band_entropy"));
    }
}
