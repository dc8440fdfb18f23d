//! Coherence networks, edge-weight histograms and their entropy, and the
//! edge-difference network similarity.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Band;
use crate::spectra::CrossSpectra;

pub const HISTOGRAM_BINS: usize = 20;

/// Symmetric weighted graph with zero diagonal and weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub weights: DMatrix<f64>,
    pub labels: Vec<String>,
    pub band: Option<String>,
    pub freq_hz: Option<f64>,
}

impl Network {
    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    /// Strict upper-triangle weights, row by row.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.weights[(i, j)]);
            }
        }
        out
    }

    /// Writes the adjacency matrix as CSV with a label header row and a
    /// label column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("node");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.n_nodes() {
                out.push(',');
                out.push_str(&self.weights[(i, j)].to_string());
            }
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `C_ij(ω) = |S_ij| / sqrt(S_ii S_jj)` at every bin, diagonal zero.
pub fn coherence(cs: &CrossSpectra, labels: &[String]) -> Result<Vec<Network>> {
    let n = cs.n_channels();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {n} channels", labels.len())));
    }
    let mut out = Vec::with_capacity(cs.n_freqs());
    for (k, s) in cs.matrices().iter().enumerate() {
        for c in 0..n {
            if !(s[(c, c)].re > 0.0) {
                return Err(Error::ZeroPower {
                    channel: c,
                    freq_hz: cs.freqs()[k],
                });
            }
        }
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let c = (s[(i, j)].norm() / (s[(i, i)].re * s[(j, j)].re).sqrt()).min(1.0);
                w[(i, j)] = c;
                w[(j, i)] = c;
            }
        }
        out.push(Network {
            weights: w,
            labels: labels.to_vec(),
            band: None,
            freq_hz: Some(cs.freqs()[k]),
        });
    }
    Ok(out)
}

/// Element-wise mean of the per-frequency networks whose frequency falls in `band`.
pub fn band_network(per_freq: &[Network], band: &Band) -> Result<Network> {
    let members: Vec<&Network> = per_freq
        .iter()
        .filter(|n| n.freq_hz.is_some_and(|f| band.contains(f)))
        .collect();
    let Some(first) = members.first() else {
        return Err(Error::EmptyBand(band.name.clone()));
    };
    let mut w = DMatrix::zeros(first.n_nodes(), first.n_nodes());
    for m in &members {
        w += &m.weights;
    }
    w /= members.len() as f64;
    Ok(Network {
        weights: w,
        labels: first.labels.clone(),
        band: Some(band.name.clone()),
        freq_hz: None,
    })
}

/// Network at the bin closest to `freq_hz`.
pub fn network_at(per_freq: &[Network], freq_hz: f64) -> Option<&Network> {
    per_freq.iter().min_by(|a, b| {
        let da = (a.freq_hz.unwrap_or(f64::INFINITY) - freq_hz).abs();
        let db = (b.freq_hz.unwrap_or(f64::INFINITY) - freq_hz).abs();
        da.total_cmp(&db)
    })
}

/// 20 equal bins over `[0, 1]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHistogram {
    pub counts: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl WeightHistogram {
    pub fn from_weights(weights: &[f64]) -> Self {
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &w in weights {
            let b = ((w.clamp(0.0, 1.0) * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1);
            counts[b] += 1;
        }
        let total: usize = counts.iter().sum();
        let probabilities = counts
            .iter()
            .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
            .collect();
        Self { counts, probabilities }
    }

    pub fn of(net: &Network) -> Self {
        Self::from_weights(&net.edges())
    }

    pub fn modal_bin(&self) -> usize {
        // first maximum
        self.counts
            .iter()
            .enumerate()
            .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best })
            .0
    }

    /// `-Σ P_i log2 P_i / log2(20)`, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        // equal counts in m bins: the closed form log2(m)/log2(20) keeps the
        // single-bin and all-bins cases exactly 0 and 1
        let occupied: Vec<usize> = self.counts.iter().copied().filter(|&c| c > 0).collect();
        if occupied.windows(2).all(|w| w[0] == w[1]) {
            return (occupied.len().max(1) as f64).log2() / (HISTOGRAM_BINS as f64).log2();
        }
        let h: f64 = self
            .probabilities
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum();
        (h / (HISTOGRAM_BINS as f64).log2()).clamp(0.0, 1.0)
    }
}

/// Normalized Shannon entropy of the network's edge-weight histogram.
pub fn shannon_entropy(net: &Network) -> Result<f64> {
    if net.n_nodes() < 2 {
        return Err(Error::EmptyNetwork);
    }
    Ok(WeightHistogram::of(net).entropy())
}

/// `1 / (1 + Σ_{k<p} |a_pk − b_pk|)`.
pub fn network_similarity(a: &Network, b: &Network) -> Result<f64> {
    if a.n_nodes() != b.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "networks have {} and {} nodes",
            a.n_nodes(),
            b.n_nodes()
        )));
    }
    if a.labels != b.labels {
        return Err(Error::ShapeMismatch("networks use different node labels".into()));
    }
    let diff: f64 = a.edges().iter().zip(b.edges()).map(|(x, y)| (x - y).abs()).sum();
    Ok(1.0 / (1.0 + diff))
}
