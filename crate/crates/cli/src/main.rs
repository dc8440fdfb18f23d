use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use palosi_core::batch::{collect_inputs, run_batch};
use palosi_core::connectivity::{band_network, coherence, network_at, shannon_entropy};
use palosi_core::ica::{data_rank, fastica, remove_components, IcaOptions};
use palosi_core::inverse::{apply_inverse, default_alpha, sloreta_operator};
use palosi_core::io::{read_leadfield, read_recording, read_recording_with_header, write_recording_with};
use palosi_core::palosi::palosi_from_recording;
use palosi_core::report::QcConfig;
use palosi_core::signal::{QcThresholds, Recording};
use palosi_core::simkit::{scenario_preset, simulate, HeadModel, ScenarioTag};
use palosi_core::spectra::recording_cross_spectra;
use palosi_core::suite::{run_suite, SuiteConfig};
use palosi_core::{Error, ErrorClass, Result};
use serde_json::{json, Value};

/// Cross-spectral quality control for multichannel EEG.
#[derive(Parser)]
#[command(name = "palosi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quality reports for recordings or directories of recordings.
    Qc {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// JSON with `spectral` and `bands` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON QC thresholds.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Directory for reports, aggregate.csv and summary.json. Without it
        /// the aggregate CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Global PaLOSi of one recording.
    Palosi {
        path: PathBuf,
        #[arg(long)]
        per_channel: bool,
        #[arg(long)]
        per_frequency: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Coherence network for a band, or at one frequency.
    Connectivity {
        path: PathBuf,
        #[arg(long)]
        band: String,
        /// Use the single bin nearest this frequency instead of the band average.
        #[arg(long)]
        freq: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Simulate a dipole scenario on the spherical head.
    Simulate {
        #[arg(long, value_enum, ignore_case = true)]
        scenario: Scenario,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 250.0)]
        fs: f64,
        /// Payload path; `.csv` or `.f64`. The sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep only the K highest-variance independent components.
    Degrade {
        path: PathBuf,
        #[arg(long)]
        keep_top: usize,
        #[arg(long)]
        seed: u64,
        /// Defaults to the numerical rank of the data.
        #[arg(long)]
        components: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Standardized sLORETA source estimates.
    Inverse {
        path: PathBuf,
        #[arg(long)]
        leadfield: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulation suites.
    Suite {
        #[command(subcommand)]
        suite: SuiteCommand,
    },
}

#[derive(Subcommand)]
enum SuiteCommand {
    /// Clean vs excessively preprocessed EEG, at scalp and source level.
    Degradation {
        #[arg(long)]
        datasets: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "C")]
    C,
    #[value(name = "D")]
    D,
}

impl From<Scenario> for ScenarioTag {
    fn from(s: Scenario) -> Self {
        match s {
            Scenario::A => ScenarioTag::A,
            Scenario::B => ScenarioTag::B,
            Scenario::C => ScenarioTag::C,
            Scenario::D => ScenarioTag::D,
        }
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Io => 1,
        ErrorClass::Validation => 2,
        ErrorClass::Numerical => 3,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn load_config(path: Option<&PathBuf>) -> Result<QcConfig> {
    path.map_or_else(|| Ok(QcConfig::default()), |p| read_json(p))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn provenance(entries: Vec<(&str, Value)>) -> BTreeMap<String, Value> {
    let mut p: BTreeMap<String, Value> = entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    p.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
    p
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Qc {
            paths,
            config,
            thresholds,
            out,
            jobs,
        } => {
            let cfg = load_config(config.as_ref())?;
            let th: QcThresholds = thresholds.map_or_else(|| Ok(QcThresholds::default()), |p| read_json(&p))?;
            let result = run_batch(&collect_inputs(&paths)?, &cfg, &th, jobs)?;
            for item in &result.items {
                if let Err(e) = &item.outcome {
                    eprintln!("{}: {}", item.path.display(), e.message);
                }
            }
            match out {
                Some(dir) => {
                    result.write(&dir)?;
                    let s = &result.summary;
                    println!(
                        "{} reports, {} errors, fraction flagged {:.6}",
                        s.n_reports, s.n_errors, s.fraction_flagged
                    );
                }
                None => print!("{}", result.aggregate_csv()?),
            }
            if result.all_failed() {
                let class = result
                    .items
                    .iter()
                    .find_map(|i| i.outcome.as_ref().err().map(|e| e.class))
                    .unwrap_or(ErrorClass::Validation);
                return Ok(ExitCode::from(exit_code(class)));
            }
        }
        Command::Palosi {
            path,
            per_channel,
            per_frequency,
            config,
        } => {
            let cfg = load_config(config.as_ref())?;
            let rec = read_recording(&path)?;
            let ix = palosi_from_recording(&rec, &cfg.spectral, &QcThresholds::default())?;
            println!("global {:.6}", ix.global);
            println!("flag {}", ix.flag);
            if per_channel {
                for (label, v) in rec.channels.iter().zip(&ix.per_channel) {
                    println!("channel {label} {v:.6}");
                }
            }
            if per_frequency {
                for (f, v) in ix.freqs.iter().zip(&ix.per_frequency) {
                    println!("freq {f} {v:.6}");
                }
            }
        }
        Command::Connectivity {
            path,
            band,
            freq,
            out,
            config,
        } => {
            let cfg = load_config(config.as_ref())?;
            let rec = read_recording(&path)?;
            let b = cfg
                .bands
                .get(&band)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown band {band:?}")))?
                .clone();
            let cs = recording_cross_spectra(&rec, &cfg.spectral)?;
            let nets = coherence(&cs, &rec.channels)?;
            let net = match freq {
                Some(f) => {
                    if !b.contains(f) {
                        return Err(Error::InvalidConfig(format!("{f} Hz lies outside band {band:?}")));
                    }
                    network_at(&nets, f).cloned().ok_or(Error::EmptyBand(band.clone()))?
                }
                None => band_network(&nets, &b)?,
            };
            net.write_csv(&out)?;
            println!("entropy {:.6}", shannon_entropy(&net)?);
        }
        Command::Simulate {
            scenario,
            seed,
            duration,
            fs,
            out,
        } => {
            let head = HeadModel::default();
            let sc = scenario_preset(scenario.into())?;
            let sim = simulate(&sc, &head, duration, fs, seed)?;
            let manifest = sim.manifest(&head)?;
            let prov = provenance(vec![
                ("scenario", json!(sc.tag.to_string())),
                ("seed", json!(seed)),
                ("simulation", serde_json::to_value(&manifest)?),
            ]);
            let sidecar = write_recording_with(&sim.recording, &out, prov, &[])?;
            println!("{}", sidecar.display());
        }
        Command::Degrade {
            path,
            keep_top,
            seed,
            components,
            out,
        } => {
            let (header, rec) = read_recording_with_header(&path)?;
            let n_c = match components {
                Some(n) => n,
                None => data_rank(&rec)?,
            };
            let model = fastica(&rec, &IcaOptions::new(n_c, seed))?;
            let degraded = remove_components(&model, keep_top)?;
            let prov = provenance(vec![
                ("source", json!(path.display().to_string())),
                ("seed", json!(seed)),
                ("ica_components", json!(n_c)),
                ("keep_top", json!(keep_top)),
                ("explained", json!(model.explained)),
            ]);
            let sidecar = write_recording_with(&degraded, &out, prov, &header.bad_channels)?;
            println!("{}", sidecar.display());
        }
        Command::Inverse {
            path,
            leadfield,
            alpha,
            out,
        } => {
            let rec = read_recording(&path)?;
            let lf = read_leadfield(&leadfield)?;
            let alpha = alpha.unwrap_or_else(|| default_alpha(&lf));
            let op = sloreta_operator(&lf, alpha)?;
            let sources = apply_inverse(&op, &rec)?;
            let labels = Recording::numbered_labels("s", sources.nrows());
            let src = Recording::new(sources, rec.fs, labels, "source");
            let prov = provenance(vec![
                ("source", json!(path.display().to_string())),
                ("leadfield", json!(leadfield.display().to_string())),
                ("alpha", json!(alpha)),
            ]);
            let sidecar = write_recording_with(&src, &out, prov, &[])?;
            println!("{}", sidecar.display());
        }
        Command::Suite {
            suite:
                SuiteCommand::Degradation {
                    datasets,
                    seed,
                    out,
                    duration,
                    jobs,
                },
        } => {
            let mut cfg = SuiteConfig {
                n_datasets: datasets,
                seed,
                ..SuiteConfig::default()
            };
            if let Some(d) = duration {
                cfg.duration_s = d;
            }
            let result =
                palosi_core::par::with_threads(jobs, || run_suite(&cfg, &HeadModel::default()))?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            result.write_csv(&out.join("datasets.csv"))?;
            result.write_summary(&out.join("summary.json"))?;
            write_text(&out.join("config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
            let s = &result.summary;
            println!("median spearman {:.6}", s.median_spearman);
            println!("fraction source below scalp {:.6}", s.fraction_source_below_scalp);
            println!(
                "median similarity sce {:.6} sepe {:.6}",
                s.median_similarity_sce, s.median_similarity_sepe
            );
            for b in &s.bands {
                println!("sign test {} p {:.6e}", b.band, b.sign_test_p);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
