//! Time-domain quality ratios and the Good/Ok/Bad labeling rule.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{QcThresholds, Recording};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityLabel {
    Good,
    Ok,
    Bad,
}

impl QualityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityLabel::Good => "Good",
            QualityLabel::Ok => "Ok",
            QualityLabel::Bad => "Bad",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalMetrics {
    pub oha: f64,
    pub thv: f64,
    pub chv: f64,
    pub rbc: f64,
    pub label: QualityLabel,
}

/// Ratio of samples whose absolute amplitude exceeds `v_thresh`.
pub fn oha(rec: &Recording, v_thresh: f64) -> f64 {
    let n = rec.data.len();
    if n == 0 {
        return 0.0;
    }
    rec.data.iter().filter(|x| x.abs() > v_thresh).count() as f64 / n as f64
}

fn std_of(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Standard deviations below this fraction of the data RMS are roundoff.
const STD_FLOOR: f64 = 1e-12;

fn rms(rec: &Recording) -> f64 {
    if rec.data.is_empty() {
        return 0.0;
    }
    (rec.data.iter().map(|x| x * x).sum::<f64>() / rec.data.len() as f64).sqrt()
}

fn exceed_ratio(mut stds: Vec<f64>, z_thresh: f64, floor: f64) -> f64 {
    let n = stds.len();
    if n == 0 {
        return 0.0;
    }
    stds.iter_mut().filter(|s| **s <= floor).for_each(|s| *s = 0.0);
    let cut = z_thresh * median(stds.clone());
    stds.iter().filter(|&&s| s > cut).count() as f64 / n as f64
}

/// Ratio of time points whose across-channel standard deviation exceeds
/// `z_thresh` times the median across-channel standard deviation.
pub fn thv(rec: &Recording, z_thresh: f64) -> f64 {
    let stds = rec.data.column_iter().map(|col| std_of(col.iter().copied())).collect();
    exceed_ratio(stds, z_thresh, STD_FLOOR * rms(rec))
}

/// Ratio of channels whose standard deviation over time exceeds `z_thresh`
/// times the median channel standard deviation.
pub fn chv(rec: &Recording, z_thresh: f64) -> f64 {
    let stds = rec.data.row_iter().map(|row| std_of(row.iter().copied())).collect();
    exceed_ratio(stds, z_thresh, STD_FLOOR * rms(rec))
}

/// Ratio of externally identified bad channels.
pub fn rbc<S: AsRef<str>>(bad_channels: &[S], rec: &Recording) -> Result<f64> {
    let known: HashSet<&str> = rec.channels.iter().map(String::as_str).collect();
    let mut bad = HashSet::new();
    for b in bad_channels {
        let b = b.as_ref();
        if !known.contains(b) {
            return Err(Error::UnknownChannel(b.to_string()));
        }
        bad.insert(b);
    }
    Ok(bad.len() as f64 / rec.n_channels() as f64)
}

/// Good iff every metric is within its good cutoff, Bad iff any exceeds its
/// ok cutoff, Ok otherwise.
pub fn label(oha: f64, thv: f64, chv: f64, rbc: f64, t: &QcThresholds) -> QualityLabel {
    let pairs = [(oha, t.oha), (thv, t.thv), (chv, t.chv), (rbc, t.rbc)];
    if pairs.iter().any(|(x, c)| *x > c.ok_max) {
        QualityLabel::Bad
    } else if pairs.iter().all(|(x, c)| *x <= c.good_max) {
        QualityLabel::Good
    } else {
        QualityLabel::Ok
    }
}

pub fn temporal_metrics<S: AsRef<str>>(
    rec: &Recording,
    bad_channels: &[S],
    t: &QcThresholds,
) -> Result<TemporalMetrics> {
    t.validate()?;
    let oha = oha(rec, t.voltage_amplitude_threshold);
    let thv = thv(rec, t.variance_z_threshold);
    let chv = chv(rec, t.variance_z_threshold);
    let rbc = rbc(bad_channels, rec)?;
    Ok(TemporalMetrics {
        oha,
        thv,
        chv,
        rbc,
        label: label(oha, thv, chv, rbc, t),
    })
}
