//! Recording files: a JSON sidecar header next to a CSV or raw `f64le`
//! payload. Also reads and writes leadfield matrices as CSV.
//!
//! A recording `x` is stored as `x.json` plus `x.csv` or `x.f64`. Either
//! path may be passed to [`read_recording`]; the other is found from the
//! header or by swapping the extension.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{validate_recording, Recording, ValidatedRecording};
use crate::simkit::Leadfield;

pub const SIDECAR_EXTENSION: &str = "json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadFormat {
    Csv,
    F64le,
}

impl PayloadFormat {
    pub fn extension(self) -> &'static str {
        match self {
            PayloadFormat::Csv => "csv",
            PayloadFormat::F64le => "f64",
        }
    }

    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(PayloadFormat::Csv),
            "f64" | "bin" => Some(PayloadFormat::F64le),
            _ => None,
        }
    }
}

/// Sidecar header. `provenance` is free-form and preserved verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub format: PayloadFormat,
    /// Payload file name, relative to the sidecar.
    pub payload: String,
    pub fs: f64,
    pub channels: Vec<String>,
    pub reference: String,
    pub units: String,
    pub n_channels: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub provenance: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bad_channels: Vec<String>,
}

/// Multiplier that converts a sample in `units` to microvolts.
pub fn microvolt_scale(units: &str) -> Result<f64> {
    match units {
        "uV" | "µV" | "μV" | "microvolt" | "microvolts" => Ok(1.0),
        "mV" | "millivolt" | "millivolts" => Ok(1e3),
        "V" | "volt" | "volts" => Ok(1e6),
        other => Err(Error::UnsupportedUnits(other.to_string())),
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == SIDECAR_EXTENSION) {
        path.to_path_buf()
    } else {
        path.with_extension(SIDECAR_EXTENSION)
    }
}

/// Reads and checks a sidecar header. `path` may name the sidecar or its payload.
pub fn read_header(path: &Path) -> Result<RecordingHeader> {
    let sidecar = sidecar_path(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let header: RecordingHeader =
        serde_json::from_str(&text).map_err(|e| malformed(&sidecar, e.to_string()))?;
    if !(header.fs.is_finite() && header.fs > 0.0) {
        return Err(malformed(&sidecar, format!("fs {} is not positive", header.fs)));
    }
    if header.channels.len() != header.n_channels {
        return Err(malformed(
            &sidecar,
            format!("{} labels for n_channels = {}", header.channels.len(), header.n_channels),
        ));
    }
    if header.payload.is_empty() {
        return Err(malformed(&sidecar, "empty payload name"));
    }
    microvolt_scale(&header.units)?;
    for b in &header.bad_channels {
        if !header.channels.contains(b) {
            return Err(Error::UnknownChannel(b.clone()));
        }
    }
    Ok(header)
}

/// Payload path for a header read from `sidecar`.
fn payload_path(sidecar: &Path, header: &RecordingHeader) -> PathBuf {
    match sidecar.parent() {
        Some(dir) => dir.join(&header.payload),
        None => PathBuf::from(&header.payload),
    }
}

fn read_csv_payload(path: &Path, header: &RecordingHeader) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidRecording(format!("{}: {other:?}", path.display())),
        })?;
    let labels: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if labels.len() != header.n_channels {
        return Err(Error::ShapeMismatch(format!(
            "header declares {} channels, payload has {} columns",
            header.n_channels,
            labels.len()
        )));
    }
    if labels != header.channels {
        return Err(Error::ShapeMismatch("payload column labels differ from the header".into()));
    }
    let mut values = Vec::with_capacity(header.n_channels * header.n_samples);
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.len() != header.n_channels {
            return Err(Error::ShapeMismatch(format!(
                "row {} has {} fields, expected {}",
                rows + 1,
                record.len(),
                header.n_channels
            )));
        }
        for field in record.iter() {
            let x: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidRecording(format!("row {}: cannot parse {field:?} as a number", rows + 1))
            })?;
            values.push(x);
        }
        rows += 1;
    }
    if rows != header.n_samples {
        return Err(Error::ShapeMismatch(format!(
            "header declares {} samples, payload has {rows}",
            header.n_samples
        )));
    }
    // rows are samples: a row-major samples × channels block
    Ok(DMatrix::from_row_slice(rows, header.n_channels, &values).transpose())
}

fn read_binary_payload(path: &Path, header: &RecordingHeader) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header.n_channels * header.n_samples * 8;
    if bytes.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "header declares {} × {} samples ({expected} bytes), payload has {} bytes",
            header.n_channels,
            header.n_samples,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    // channel-major: each channel's samples are contiguous
    Ok(DMatrix::from_row_slice(header.n_channels, header.n_samples, &values))
}

/// Reads the header and payload, converts to microvolts and validates.
pub fn read_recording_with_header(path: &Path) -> Result<(RecordingHeader, ValidatedRecording)> {
    let header = read_header(path)?;
    let payload = payload_path(&sidecar_path(path), &header);
    let mut data = match header.format {
        PayloadFormat::Csv => read_csv_payload(&payload, &header)?,
        PayloadFormat::F64le => read_binary_payload(&payload, &header)?,
    };
    let scale = microvolt_scale(&header.units)?;
    if scale != 1.0 {
        data *= scale;
    }
    let rec = Recording::new(data, header.fs, header.channels.clone(), header.reference.clone());
    Ok((header, validate_recording(rec)?))
}

pub fn read_recording(path: &Path) -> Result<ValidatedRecording> {
    read_recording_with_header(path).map(|(_, rec)| rec)
}

/// Writes `rec` in microvolts. The payload format follows the extension of
/// `path` (`.csv`, or `.f64`/`.bin`); a `.json` path or no extension selects
/// `f64le`. Returns the sidecar path.
pub fn write_recording(rec: &Recording, path: &Path) -> Result<PathBuf> {
    write_recording_with(rec, path, BTreeMap::new(), &[])
}

pub fn write_recording_with(
    rec: &Recording,
    path: &Path,
    provenance: BTreeMap<String, serde_json::Value>,
    bad_channels: &[String],
) -> Result<PathBuf> {
    if rec.channels.len() != rec.n_channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} channels",
            rec.channels.len(),
            rec.n_channels()
        )));
    }
    let format = PayloadFormat::from_extension(path).unwrap_or(PayloadFormat::F64le);
    let payload = path.with_extension(format.extension());
    let sidecar = sidecar_path(&payload);
    let payload_name = payload
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("cannot derive a payload name from {}", path.display())))?
        .to_string();
    let header = RecordingHeader {
        format,
        payload: payload_name,
        fs: rec.fs,
        channels: rec.channels.clone(),
        reference: rec.reference.clone(),
        units: "uV".into(),
        n_channels: rec.n_channels(),
        n_samples: rec.n_samples(),
        provenance,
        bad_channels: bad_channels.to_vec(),
    };
    match format {
        PayloadFormat::Csv => write_csv_payload(&payload, rec)?,
        PayloadFormat::F64le => {
            let mut bytes = Vec::with_capacity(rec.data.len() * 8);
            for row in rec.data.row_iter() {
                for x in row.iter() {
                    bytes.extend_from_slice(&x.to_le_bytes());
                }
            }
            fs::write(&payload, bytes).map_err(|e| Error::io(&payload, e))?;
        }
    }
    let json = serde_json::to_string_pretty(&header)?;
    fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}

fn write_csv_payload(path: &Path, rec: &Recording) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&rec.channels)?;
    let mut row = Vec::with_capacity(rec.n_channels());
    for t in 0..rec.n_samples() {
        row.clear();
        // Display for f64 prints the shortest string that parses back exactly
        row.extend(rec.data.column(t).iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Leadfield CSV: header `channel,<source names>`, one row per electrode.
pub fn read_leadfield(path: &Path) -> Result<Leadfield> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let n_sources = reader.headers()?.len().saturating_sub(1);
    if n_sources == 0 {
        return Err(Error::ShapeMismatch(format!("{}: leadfield has no source columns", path.display())));
    }
    let mut channels = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != n_sources + 1 {
            return Err(Error::ShapeMismatch(format!(
                "leadfield row {} has {} fields, expected {}",
                channels.len() + 1,
                record.len(),
                n_sources + 1
            )));
        }
        channels.push(record[0].trim().to_string());
        for field in record.iter().skip(1) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("leadfield entry {field:?} is not a number")))?;
            if !x.is_finite() {
                return Err(Error::InvalidConfig("leadfield contains a non-finite entry".into()));
            }
            values.push(x);
        }
    }
    if channels.is_empty() {
        return Err(Error::ShapeMismatch(format!("{}: leadfield has no rows", path.display())));
    }
    Ok(Leadfield {
        matrix: DMatrix::from_row_slice(channels.len(), n_sources, &values),
        channels,
    })
}

pub fn write_leadfield(lf: &Leadfield, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["channel".to_string()];
    head.extend((0..lf.n_sources()).map(|j| format!("s{j}")));
    w.write_record(&head)?;
    for (i, label) in lf.channels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(lf.matrix.row(i).iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_recording(n_ch: usize, n_t: usize) -> Recording {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = DMatrix::from_fn(n_ch, n_t, |_, _| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-6..6)));
        Recording::new(data, 250.0, Recording::numbered_labels("E", n_ch), "Cz")
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rec = random_recording(5, 600);
        let sidecar = write_recording(&rec, &dir.path().join("r.f64")).unwrap();
        let back = read_recording(&sidecar).unwrap();
        assert_eq!(back.channels, rec.channels);
        assert_eq!(back.reference, "Cz");
        assert!(back.data.iter().zip(rec.data.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        // the payload path works too
        assert_eq!(*read_recording(&dir.path().join("r.f64")).unwrap(), *back);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rec = random_recording(3, 600);
        write_recording(&rec, &dir.path().join("r.csv")).unwrap();
        let back = read_recording(&dir.path().join("r.json")).unwrap();
        assert_eq!(back.data, rec.data);
    }

    #[test]
    fn hand_written_csv_with_three_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("Fz,Cz,Pz\n");
        for t in 0..1000 {
            csv.push_str(&format!("{},{},{}\n", t as f64 * 0.5, -(t as f64), 1.25));
        }
        fs::write(dir.path().join("x.csv"), csv).unwrap();
        let header = r#"{"format":"csv","payload":"x.csv","fs":500,"channels":["Fz","Cz","Pz"],
            "reference":"common-average","units":"uV","n_channels":3,"n_samples":1000,
            "provenance":{"site":"bench"}}"#;
        fs::write(dir.path().join("x.json"), header).unwrap();
        let (h, rec) = read_recording_with_header(&dir.path().join("x.csv")).unwrap();
        assert_eq!(rec.n_channels(), 3);
        assert_eq!(rec.fs, 500.0);
        assert_eq!(rec.data[(1, 10)], -10.0);
        assert_eq!(h.provenance["site"], "bench");
    }

    #[test]
    fn missing_channel_is_a_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let rec = random_recording(63, 600);
        let sidecar = write_recording(&rec, &dir.path().join("r.f64")).unwrap();
        let mut h: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
        h["n_channels"] = 64.into();
        h["channels"] = serde_json::to_value(Recording::numbered_labels("E", 64)).unwrap();
        fs::write(&sidecar, h.to_string()).unwrap();
        assert!(matches!(read_recording(&sidecar), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let rec = random_recording(3, 600);
        let sidecar = write_recording(&rec, &dir.path().join("r.csv")).unwrap();
        let good = fs::read_to_string(&sidecar).unwrap();

        fs::write(&sidecar, good.replace("\"uV\"", "\"furlongs\"")).unwrap();
        assert!(matches!(read_recording(&sidecar), Err(Error::UnsupportedUnits(u)) if u == "furlongs"));

        fs::write(&sidecar, good.replace("\"fs\": 250.0", "\"fs\": 0.0")).unwrap();
        assert!(matches!(read_recording(&sidecar), Err(Error::MalformedHeader { .. })));

        fs::write(&sidecar, "{ not json").unwrap();
        assert!(matches!(read_recording(&sidecar), Err(Error::MalformedHeader { .. })));
    }

    #[test]
    fn millivolts_are_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let rec = random_recording(3, 600);
        let sidecar = write_recording(&rec, &dir.path().join("r.f64")).unwrap();
        let text = fs::read_to_string(&sidecar).unwrap().replace("\"uV\"", "\"mV\"");
        fs::write(&sidecar, text).unwrap();
        let back = read_recording(&sidecar).unwrap();
        assert_eq!(back.data[(2, 5)], rec.data[(2, 5)] * 1e3);
    }

    #[test]
    fn leadfield_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lf = Leadfield {
            matrix: DMatrix::from_fn(4, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0)),
            channels: Recording::numbered_labels("E", 4),
        };
        let path = dir.path().join("lf.csv");
        write_leadfield(&lf, &path).unwrap();
        assert_eq!(read_leadfield(&path).unwrap(), lf);
    }
}
