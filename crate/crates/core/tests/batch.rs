use std::path::PathBuf;

use nalgebra::DMatrix;
use palosi_core::batch::{run_batch, run_batch_dir};
use palosi_core::io::write_recording_with;
use palosi_core::report::{quality_report, QcConfig};
use palosi_core::signal::{validate_recording, QcThresholds, Recording, COMMON_AVERAGE};
use palosi_core::simkit::{scenario_preset, simulate, HeadModel, ScenarioTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

fn noise(n: usize, seed: u64) -> Recording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = DMatrix::from_fn(n, 1000, |_, _| rng.sample::<f64, _>(StandardNormal) * 10.0);
    Recording::new(data, 100.0, Recording::numbered_labels("E", n), COMMON_AVERAGE)
}

fn write_inputs(dir: &std::path::Path) -> Vec<PathBuf> {
    (0..5u64)
        .map(|i| {
            let prov = [("seed".to_string(), Value::from(i))].into_iter().collect();
            write_recording_with(&noise(4, i), &dir.join(format!("rec{i}.f64")), prov, &[]).unwrap()
        })
        .collect()
}

#[test]
fn batch_result_ignores_parallelism_and_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = write_inputs(dir.path());
    let cfg = QcConfig::default();
    let th = QcThresholds::default();
    let base = run_batch(&inputs, &cfg, &th, 1).unwrap();
    let mut reversed = inputs.clone();
    reversed.reverse();
    for jobs in [0, 2, 3] {
        assert_eq!(run_batch(&reversed, &cfg, &th, jobs).unwrap(), base);
    }
    assert_eq!(run_batch_dir(dir.path(), &cfg, &th, 2).unwrap(), base);
    let ids: Vec<&str> = base.items.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, ["rec0", "rec1", "rec2", "rec3", "rec4"]);
    assert_eq!(base.reports().next().unwrap().seeds, vec![0]);
}

#[test]
fn reports_written_next_to_inputs_are_not_picked_up_again() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let cfg = QcConfig::default();
    let th = QcThresholds::default();
    let first = run_batch_dir(dir.path(), &cfg, &th, 0).unwrap();
    first.write(dir.path()).unwrap();
    let second = run_batch_dir(dir.path(), &cfg, &th, 0).unwrap();
    assert_eq!(first, second);
}

#[test]
fn corrupt_input_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = write_inputs(dir.path());
    std::fs::write(dir.path().join("rec2.f64"), [0u8; 17]).unwrap();
    let res = run_batch(&inputs, &QcConfig::default(), &QcThresholds::default(), 0).unwrap();
    assert_eq!(res.summary.n_reports, 4);
    assert_eq!(res.summary.n_errors, 1);
    assert!(res.items[2].outcome.is_err());
    let csv = res.aggregate_csv().unwrap();
    assert!(csv.lines().nth(3).unwrap().starts_with("rec2,,"));
}

/// Key paths and JSON types, one per line, arrays collapsed to their first element.
fn schema(v: &Value, path: &str, out: &mut Vec<String>) {
    let kind = match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    };
    out.push(format!("{path}: {kind}"));
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                schema(x, &format!("{path}.{k}"), out);
            }
        }
        Value::Array(a) => {
            if let Some(x) = a.first() {
                schema(x, &format!("{path}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn report_schema_matches_golden_file() {
    let sim = simulate(&scenario_preset(ScenarioTag::B).unwrap(), &HeadModel::default(), 60.0, 250.0, 7).unwrap();
    let rec = validate_recording(sim.recording).unwrap();
    let report = quality_report("golden", &rec, &["Fp1"], &QcConfig::default(), &QcThresholds::default(), vec![7])
        .unwrap();
    let value: Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    let mut lines = Vec::new();
    schema(&value, "$", &mut lines);
    let got = lines.join("\n") + "\n";
    let golden = include_str!("golden/report_schema.txt");
    assert_eq!(got, golden);
}
