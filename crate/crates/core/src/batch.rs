//! Directory-level QC: one report per recording, failures isolated per
//! file, and a label × flag aggregate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorClass, Result};
use crate::io::{read_recording_with_header, SIDECAR_EXTENSION};
use crate::par;
use crate::report::{quality_report, QcConfig, QualityReport};
use crate::signal::QcThresholds;
use crate::temporal::QualityLabel;

/// Suffix of report files, skipped when scanning a directory for inputs.
pub const REPORT_SUFFIX: &str = ".report.json";

pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "id", "label", "oha", "thv", "chv", "rbc", "palosi", "flagged", "se_delta", "se_theta", "se_alpha", "se_beta",
    "error",
];

/// Why one input produced no report.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemError {
    pub class: ErrorClass,
    pub message: String,
}

impl From<Error> for ItemError {
    fn from(e: Error) -> Self {
        Self {
            class: e.class(),
            message: e.to_string(),
        }
    }
}

/// Outcome of one input file.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub id: String,
    pub path: PathBuf,
    pub outcome: std::result::Result<QualityReport, ItemError>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlagCounts {
    pub flagged: usize,
    pub unflagged: usize,
}

impl FlagCounts {
    pub fn total(&self) -> usize {
        self.flagged + self.unflagged
    }

    pub fn fraction_flagged(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.flagged as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_inputs: usize,
    pub n_reports: usize,
    pub n_errors: usize,
    /// Label → flag counts. Labels without recordings are present with zeros.
    pub crosstab: BTreeMap<String, FlagCounts>,
    pub fraction_flagged: f64,
    pub fraction_flagged_by_label: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    /// Sorted by id.
    pub items: Vec<BatchItem>,
    pub summary: BatchSummary,
}

impl BatchResult {
    pub fn reports(&self) -> impl Iterator<Item = &QualityReport> {
        self.items.iter().filter_map(|i| i.outcome.as_ref().ok())
    }

    pub fn all_failed(&self) -> bool {
        self.summary.n_reports == 0
    }

    /// One row per input in id order; failed rows carry only id and error.
    pub fn aggregate_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(AGGREGATE_COLUMNS)?;
        for item in &self.items {
            let row: Vec<String> = match &item.outcome {
                Ok(r) => {
                    let band = |n: &str| r.band(n).map(|x| x.to_string()).unwrap_or_default();
                    vec![
                        item.id.clone(),
                        r.temporal.label.as_str().to_string(),
                        r.temporal.oha.to_string(),
                        r.temporal.thv.to_string(),
                        r.temporal.chv.to_string(),
                        r.temporal.rbc.to_string(),
                        r.palosi.global.to_string(),
                        r.palosi.flag.to_string(),
                        band("delta"),
                        band("theta"),
                        band("alpha"),
                        band("beta"),
                        String::new(),
                    ]
                }
                Err(e) => {
                    let mut row = vec![String::new(); AGGREGATE_COLUMNS.len()];
                    row[0] = item.id.clone();
                    row[AGGREGATE_COLUMNS.len() - 1] = e.message.clone();
                    row
                }
            };
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `<id>.report.json` per success, `aggregate.csv` and `summary.json`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        for r in self.reports() {
            r.write(&out_dir.join(format!("{}{REPORT_SUFFIX}", r.id)))?;
        }
        let agg = out_dir.join("aggregate.csv");
        std::fs::write(&agg, self.aggregate_csv()?).map_err(|e| Error::io(&agg, e))?;
        let summary = out_dir.join("summary.json");
        let text = serde_json::to_string_pretty(&serde_json::to_value(&self.summary)?)? + "\n";
        std::fs::write(&summary, text).map_err(|e| Error::io(&summary, e))
    }
}

fn is_input(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    path.extension().is_some_and(|e| e == SIDECAR_EXTENSION)
        && !name.ends_with(REPORT_SUFFIX)
        && name != "summary.json"
}

/// Expands directories into their sidecar files (non-recursive); files are
/// taken as given. The result is sorted and deduplicated.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            for entry in std::fs::read_dir(p).map_err(|e| Error::io(p, e))? {
                let path = entry.map_err(|e| Error::io(p, e))?.path();
                if path.is_file() && is_input(&path) {
                    out.push(path);
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn recording_id(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("recording")
        .to_string()
}

fn seeds_of(provenance: &BTreeMap<String, serde_json::Value>) -> Vec<u64> {
    match provenance.get("seed") {
        Some(serde_json::Value::Number(n)) => n.as_u64().into_iter().collect(),
        Some(serde_json::Value::Array(v)) => v.iter().filter_map(|x| x.as_u64()).collect(),
        _ => Vec::new(),
    }
}

fn process(path: &Path, cfg: &QcConfig, thresholds: &QcThresholds) -> Result<QualityReport> {
    let (header, rec) = read_recording_with_header(path)?;
    quality_report(
        &recording_id(path),
        &rec,
        &header.bad_channels,
        cfg,
        thresholds,
        seeds_of(&header.provenance),
    )
}

/// Runs QC on every input with at most `parallelism` workers (0 = default).
///
/// The result does not depend on `parallelism` or on the order of `inputs`.
pub fn run_batch(
    inputs: &[PathBuf],
    cfg: &QcConfig,
    thresholds: &QcThresholds,
    parallelism: usize,
) -> Result<BatchResult> {
    thresholds.validate()?;
    let mut inputs = inputs.to_vec();
    inputs.sort();
    inputs.dedup();
    if inputs.is_empty() {
        return Err(Error::InvalidConfig("no recordings to process".into()));
    }
    let mut items: Vec<BatchItem> = par::with_threads(parallelism, || {
        par::map_slice(&inputs, |p| BatchItem {
            id: recording_id(p),
            path: p.clone(),
            outcome: process(p, cfg, thresholds).map_err(ItemError::from),
        })
    });
    items.sort_by(|a, b| a.id.cmp(&b.id).then_with(|| a.path.cmp(&b.path)));
    let summary = summarize(&items);
    Ok(BatchResult { items, summary })
}

pub fn run_batch_dir(dir: &Path, cfg: &QcConfig, thresholds: &QcThresholds, parallelism: usize) -> Result<BatchResult> {
    run_batch(&collect_inputs(&[dir.to_path_buf()])?, cfg, thresholds, parallelism)
}

fn summarize(items: &[BatchItem]) -> BatchSummary {
    let mut crosstab: BTreeMap<String, FlagCounts> = [QualityLabel::Good, QualityLabel::Ok, QualityLabel::Bad]
        .iter()
        .map(|l| (l.as_str().to_string(), FlagCounts::default()))
        .collect();
    let mut overall = FlagCounts::default();
    for r in items.iter().filter_map(|i| i.outcome.as_ref().ok()) {
        let cell = crosstab.entry(r.temporal.label.as_str().to_string()).or_default();
        if r.palosi.flag {
            cell.flagged += 1;
            overall.flagged += 1;
        } else {
            cell.unflagged += 1;
            overall.unflagged += 1;
        }
    }
    BatchSummary {
        n_inputs: items.len(),
        n_reports: overall.total(),
        n_errors: items.len() - overall.total(),
        fraction_flagged: overall.fraction_flagged(),
        fraction_flagged_by_label: crosstab.iter().map(|(k, c)| (k.clone(), c.fraction_flagged())).collect(),
        crosstab,
    }
}
