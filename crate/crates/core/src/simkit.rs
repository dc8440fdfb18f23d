//! Three-shell spherical head model, the reference dipole scenarios and
//! coherence-controlled source signal generation.
//!
//! Lengths are in millimetres, dipole moments in nAm and potentials in µV.
//! The leadfield is the exact series solution of the three-shell boundary
//! value problem, truncated once the terms fall below double precision.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix5, Vector5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::connectivity;
use crate::error::{Error, Result};
use crate::par;
use crate::signal::{validate_recording, Recording, SpectralConfig, COMMON_AVERAGE};
use crate::spectra::{cross_spectra, segment_and_window};

pub type Point = [f64; 3];

/// Standard deviation, in nAm, of a source with intensity 1.
pub const SOURCE_SCALE_NAM: f64 = 100.0;
/// Shortest recording for which coherence targets are attempted.
pub const MIN_TARGET_SECONDS: f64 = 60.0;
/// Allowed distance between measured coherence and the target range.
pub const TARGET_SLACK: f64 = 0.05;

const MAX_TARGET_ATTEMPTS: usize = 5;
const MAX_DEGREE: usize = 4000;
const SERIES_TOL: f64 = 1e-17;
/// Welch with a Hann taper and 50% overlap: effective number of
/// independent segments per segment.
const HANN_HALF_OVERLAP_EFFICIENCY: f64 = 0.947;

/// 19-channel 10–20 montage. x points right, y towards the nasion, z up.
pub fn ten_twenty_19() -> (Vec<String>, Vec<Point>) {
    let at = |polar: f64, azimuth: f64| -> Point {
        let (t, p) = (polar.to_radians(), azimuth.to_radians());
        [t.sin() * p.sin(), t.sin() * p.cos(), t.cos()]
    };
    let mid = |a: Point, b: Point| -> Point { normalize([a[0] + b[0], a[1] + b[1], a[2] + b[2]]) };
    let (fz, pz) = (at(36.0, 0.0), at(36.0, 180.0));
    let (f7, f8, p7, p8) = (at(72.0, -54.0), at(72.0, 54.0), at(72.0, -126.0), at(72.0, 126.0));
    let table: [(&str, Point); 19] = [
        ("Fp1", at(72.0, -18.0)),
        ("Fp2", at(72.0, 18.0)),
        ("F7", f7),
        ("F3", mid(fz, f7)),
        ("Fz", fz),
        ("F4", mid(fz, f8)),
        ("F8", f8),
        ("T7", at(72.0, -90.0)),
        ("C3", at(36.0, -90.0)),
        ("Cz", [0.0, 0.0, 1.0]),
        ("C4", at(36.0, 90.0)),
        ("T8", at(72.0, 90.0)),
        ("P7", p7),
        ("P3", mid(pz, p7)),
        ("Pz", pz),
        ("P4", mid(pz, p8)),
        ("P8", p8),
        ("O1", at(72.0, -162.0)),
        ("O2", at(72.0, 162.0)),
    ];
    (
        table.iter().map(|(l, _)| l.to_string()).collect(),
        table.iter().map(|(_, p)| *p).collect(),
    )
}

fn norm(p: Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn normalize(p: Point) -> Point {
    let n = norm(p);
    [p[0] / n, p[1] / n, p[2] / n]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale(p: Point, s: f64) -> Point {
    [p[0] * s, p[1] * s, p[2] * s]
}

/// Concentric brain, skull and scalp spheres with electrodes on the scalp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    /// Brain, skull and scalp radii.
    pub radii_mm: [f64; 3],
    /// Conductivities in S/m, same order.
    pub conductivities: [f64; 3],
    /// Unit vectors; the electrodes sit at `radii_mm[2]` along them.
    pub electrodes: Vec<Point>,
    pub labels: Vec<String>,
}

impl Default for HeadModel {
    fn default() -> Self {
        let (labels, electrodes) = ten_twenty_19();
        Self {
            radii_mm: [0.87 * 95.0, 0.92 * 95.0, 95.0],
            conductivities: [0.33, 0.0042, 0.33],
            electrodes,
            labels,
        }
    }
}

impl HeadModel {
    pub fn n_electrodes(&self) -> usize {
        self.electrodes.len()
    }

    pub fn brain_radius_mm(&self) -> f64 {
        self.radii_mm[0]
    }

    pub fn validate(&self) -> Result<()> {
        let [r1, r2, r3] = self.radii_mm;
        if !(r1 > 0.0 && r1 < r2 && r2 < r3 && r3.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "shell radii must be strictly increasing, got {:?}",
                self.radii_mm
            )));
        }
        if !self.conductivities.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidConfig("conductivities must be positive".into()));
        }
        if self.electrodes.len() != self.labels.len() || self.electrodes.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "{} electrodes for {} labels",
                self.electrodes.len(),
                self.labels.len()
            )));
        }
        if let Some(i) = self.electrodes.iter().position(|e| (norm(*e) - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidConfig(format!("electrode {} is not on the scalp", self.labels[i])));
        }
        Ok(())
    }

    /// Scalp potential coefficient of degree `n` per unit source
    /// coefficient at the brain surface, in radii normalized by the scalp.
    fn transfer(&self, n: usize) -> Result<f64> {
        let r1 = self.radii_mm[0] / self.radii_mm[2];
        let r2 = self.radii_mm[1] / self.radii_mm[2];
        let [s1, s2, s3] = self.conductivities;
        let nf = n as f64;
        let e1 = (r1 / r2).powi(n as i32);
        let f1 = e1 * r1 / r2;
        let e2 = r2.powi(n as i32);
        let f2 = e2 * r2;
        // unknowns: brain a1, skull a2 b2, scalp a3 b3, each basis bounded by 1 in its shell
        #[rustfmt::skip]
        let m = Matrix5::new(
            1.0,     -e1,          -1.0,                 0.0,           0.0,
            s1 * nf, -s2 * nf * e1, s2 * (nf + 1.0),     0.0,           0.0,
            0.0,     1.0,          f1,                  -e2,           -1.0,
            0.0,     s2 * nf,      -s2 * (nf + 1.0) * f1, -s3 * nf * e2, s3 * (nf + 1.0),
            0.0,     0.0,          0.0,                  nf,            -(nf + 1.0) * f2,
        );
        let rhs = Vector5::new(-1.0, s1 * (nf + 1.0), 0.0, 0.0, 0.0);
        let x = m.lu().solve(&rhs).ok_or(Error::SingularGram)?;
        Ok(x[3] + f2 * x[4])
    }
}

/// Fixed-orientation leadfield, electrodes × dipoles, average referenced.
#[derive(Debug, Clone, PartialEq)]
pub struct Leadfield {
    /// µV per nAm.
    pub matrix: DMatrix<f64>,
    pub channels: Vec<String>,
}

impl Leadfield {
    pub fn n_channels(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Unreferenced scalp potentials of one dipole at every electrode.
fn dipole_potentials(head: &HeadModel, transfers: &[f64], pos_mm: Point, moment: Point) -> Vec<f64> {
    let big_r = head.radii_mm[2];
    let r1 = head.radii_mm[0] / big_r;
    let b = norm(pos_mm) / big_r;
    let dir = if b > 0.0 { normalize(pos_mm) } else { [0.0, 0.0, 1.0] };
    let p_r = dot(moment, dir);
    // µV per nAm: 1e-9 A·m / R² in V, times 1e6
    let unit = 1e-3 / (big_r * 1e-3).powi(2) / (4.0 * std::f64::consts::PI * head.conductivities[0]);

    // w_n = T_n (b/r1)^(n-1) / r1²
    let mut weights = Vec::new();
    let ratio = b / r1;
    let mut pow = 1.0;
    for (i, &t) in transfers.iter().enumerate() {
        let n = (i + 1) as f64;
        let w = t * pow / (r1 * r1);
        weights.push(w);
        if w.abs() * n * n < SERIES_TOL * weights[0].abs() || b == 0.0 {
            break;
        }
        pow *= ratio;
    }

    head.electrodes
        .iter()
        .map(|&u| {
            let x = dot(u, dir).clamp(-1.0, 1.0);
            let tangential = dot(moment, u) - x * p_r;
            let (mut p0, mut p1) = (1.0, x);
            let (mut d0, mut d1) = (0.0, 1.0);
            let mut v = 0.0;
            for (i, &w) in weights.iter().enumerate() {
                let n = (i + 1) as f64;
                v += w * (n * p_r * p1 + d1 * tangential);
                let p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
                let d2 = d0 + (2.0 * n + 1.0) * p1;
                (p0, p1, d0, d1) = (p1, p2, d1, d2);
            }
            v * unit
        })
        .collect()
}

fn transfers_for(head: &HeadModel, max_b: f64) -> Result<Vec<f64>> {
    let r1 = head.radii_mm[0] / head.radii_mm[2];
    let mut out = Vec::new();
    let mut pow = 1.0;
    for n in 1..=MAX_DEGREE {
        let t = head.transfer(n)?;
        out.push(t);
        let nf = n as f64;
        if (t * pow / (r1 * r1)).abs() * nf * nf < SERIES_TOL * out[0].abs() / (r1 * r1) || max_b == 0.0 {
            break;
        }
        pow *= max_b / r1;
    }
    Ok(out)
}

/// Leadfield for arbitrary dipole positions (mm) and unit orientations.
pub fn leadfield(head: &HeadModel, positions_mm: &[Point], orientations: &[Point]) -> Result<Leadfield> {
    head.validate()?;
    if positions_mm.len() != orientations.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} positions for {} orientations",
            positions_mm.len(),
            orientations.len()
        )));
    }
    for (index, p) in positions_mm.iter().enumerate() {
        let r = norm(*p);
        if !(r < head.brain_radius_mm()) {
            return Err(Error::DipoleOutsideBrain { index, radius_mm: r });
        }
    }
    let max_b = positions_mm.iter().map(|p| norm(*p)).fold(0.0, f64::max) / head.radii_mm[2];
    let transfers = transfers_for(head, max_b)?;
    let columns = par::map_range(positions_mm.len(), |d| {
        dipole_potentials(head, &transfers, positions_mm[d], orientations[d])
    });
    let n_e = head.n_electrodes();
    let mut matrix = DMatrix::from_fn(n_e, columns.len(), |e, d| columns[d][e]);
    for mut col in matrix.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(Leadfield {
        matrix,
        channels: head.labels.clone(),
    })
}

pub fn spherical_leadfield(head: &HeadModel, scenario: &DipoleScenario) -> Result<Leadfield> {
    scenario.validate()?;
    leadfield(head, &scenario.positions_mm, &scenario.orientations)
}

/// Quasi-uniform points on the upper hemisphere at `radius_mm`.
pub fn hemisphere_grid(n: usize, radius_mm: f64) -> Vec<Point> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            scale([r * phi.cos(), r * phi.sin(), z], radius_mm)
        })
        .collect()
}

/// Radial unit orientations for the given positions.
pub fn radial(positions_mm: &[Point]) -> Vec<Point> {
    positions_mm.iter().map(|p| normalize(*p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioTag {
    A,
    B,
    C,
    D,
    #[serde(rename = "custom")]
    Custom,
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioTag::A => "A",
            ScenarioTag::B => "B",
            ScenarioTag::C => "C",
            ScenarioTag::D => "D",
            ScenarioTag::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for ScenarioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(ScenarioTag::A),
            "B" => Ok(ScenarioTag::B),
            "C" => Ok(ScenarioTag::C),
            "D" => Ok(ScenarioTag::D),
            "CUSTOM" => Ok(ScenarioTag::Custom),
            _ => Err(Error::InvalidConfig(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleScenario {
    pub tag: ScenarioTag,
    pub positions_mm: Vec<Point>,
    pub orientations: Vec<Point>,
    pub intensities: Vec<f64>,
    /// Target pairwise coherence range `[lo, hi]`.
    pub coherence: [f64; 2],
}

impl DipoleScenario {
    pub fn n_dipoles(&self) -> usize {
        self.positions_mm.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_dipoles();
        if n == 0 || self.orientations.len() != n || self.intensities.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} positions, {} orientations, {} intensities",
                n,
                self.orientations.len(),
                self.intensities.len()
            )));
        }
        if self.orientations.iter().any(|o| (norm(*o) - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidConfig("dipole orientations must be unit vectors".into()));
        }
        if self.intensities.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidConfig("intensities must be finite and non-negative".into()));
        }
        let [lo, hi] = self.coherence;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidConfig(format!("coherence range [{lo}, {hi}] is not inside [0, 1]")));
        }
        Ok(())
    }
}

/// Centre of the concentric dipole rings, an occipito-parietal point.
pub const RING_CENTER_MM: Point = [0.0, -70.0, 40.0];
pub const RING_RADII_DEG: [f64; 3] = [10.0, 20.0, 30.0];
/// Scenario D intensity of the centre dipole and of each ring.
pub const RING_DECAY: [f64; 4] = [1.0, 0.98, 0.05, 0.01];

/// Centre dipole followed by three rings of six, all at the centre's depth.
pub fn concentric_rings() -> Vec<Point> {
    let r = norm(RING_CENTER_MM);
    let c = normalize(RING_CENTER_MM);
    let e1 = [1.0, 0.0, 0.0];
    let e2 = [c[1] * e1[2] - c[2] * e1[1], c[2] * e1[0] - c[0] * e1[2], c[0] * e1[1] - c[1] * e1[0]];
    let mut out = vec![RING_CENTER_MM];
    for ring in RING_RADII_DEG {
        let t = ring.to_radians();
        for k in 0..6 {
            let phi = (60.0 * k as f64).to_radians();
            let d = [
                t.cos() * c[0] + t.sin() * (phi.cos() * e1[0] + phi.sin() * e2[0]),
                t.cos() * c[1] + t.sin() * (phi.cos() * e1[1] + phi.sin() * e2[1]),
                t.cos() * c[2] + t.sin() * (phi.cos() * e1[2] + phi.sin() * e2[2]),
            ];
            out.push(scale(d, r));
        }
    }
    out
}

pub fn scenario_preset(tag: ScenarioTag) -> Result<DipoleScenario> {
    let (positions, intensities, coherence) = match tag {
        ScenarioTag::A => (vec![RING_CENTER_MM], vec![1.0], [1.0, 1.0]),
        ScenarioTag::B => {
            let dirs = [[-0.5, 0.6, 0.62], [0.7, 0.0, 0.71], [0.0, -0.75, 0.66]];
            (dirs.iter().map(|d| scale(normalize(*d), 70.0)).collect(), vec![1.0; 3], [0.0, 0.1])
        }
        ScenarioTag::C => (concentric_rings(), vec![1.0; 19], [0.8, 0.9]),
        ScenarioTag::D => {
            let mut intensities = vec![RING_DECAY[0]];
            for w in &RING_DECAY[1..] {
                intensities.extend([*w; 6]);
            }
            (concentric_rings(), intensities, [0.0, 0.1])
        }
        ScenarioTag::Custom => {
            return Err(Error::InvalidConfig("custom scenarios have no preset".into()));
        }
    };
    Ok(DipoleScenario {
        tag,
        orientations: radial(&positions),
        positions_mm: positions,
        intensities,
        coherence,
    })
}

/// Zero-mean, unit-variance copy.
pub fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter_mut().for_each(|v| *v -= mean);
    let sd = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        x.iter_mut().for_each(|v| *v /= sd);
    }
}

pub fn white_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Filters `x` by a zero-phase gain defined on frequency in Hz.
pub fn shape_spectrum(x: &[f64], fs: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let kk = k.min(n - k);
        *b *= gain(kk as f64 * fs / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Unit-variance noise with power spectral density ∝ 1/f (zero at DC).
pub fn pink_noise(n: usize, fs: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = shape_spectrum(&white_noise(n, rng), fs, |f| if f > 0.0 { f.powf(-0.5) } else { 0.0 });
    standardize(&mut out);
    out
}

/// Unit-variance noise restricted to `[lo, hi]` Hz.
pub fn band_limited_noise(n: usize, fs: f64, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = shape_spectrum(&white_noise(n, rng), fs, |f| if f >= lo && f <= hi { 1.0 } else { 0.0 });
    standardize(&mut out);
    out
}

/// Resonance near `f0` Hz: second-order autoregression driven by white noise.
pub fn resonator(n: usize, fs: f64, f0: f64, pole: f64, rng: &mut impl Rng) -> Vec<f64> {
    let burn = 1000;
    let a1 = 2.0 * pole * (2.0 * std::f64::consts::PI * f0 / fs).cos();
    let a2 = -pole * pole;
    let (mut y1, mut y2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        let e: f64 = rng.sample(StandardNormal);
        let y = a1 * y1 + a2 * y2 + e;
        (y2, y1) = (y1, y);
        if t >= burn {
            out.push(y);
        }
    }
    standardize(&mut out);
    out
}

/// Common driver: an alpha resonance on a pink background.
fn common_driver(n: usize, fs: f64, rng: &mut impl Rng) -> Vec<f64> {
    let alpha = resonator(n, fs, 10.0, 0.97, rng);
    let pink = pink_noise(n, fs, rng);
    let mut z: Vec<f64> = alpha.iter().zip(&pink).map(|(a, p)| a + p).collect();
    standardize(&mut z);
    z
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n_t = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), n_t, |i, t| rows[i][t])
}

/// Welch power of each row on the default grid, with the segment count.
fn welch_power(rows: &DMatrix<f64>, fs: f64) -> Result<(DMatrix<f64>, usize)> {
    let rec = validate_recording(Recording::new(
        rows.clone(),
        fs,
        Recording::numbered_labels("s", rows.nrows()),
        COMMON_AVERAGE,
    ))?;
    let series = segment_and_window(&rec, &SpectralConfig::default())?;
    let n_seg = series.n_segments();
    let power = DMatrix::from_fn(rows.nrows(), series.freqs.len(), |c, k| {
        series.coefficients[k].row(c).iter().map(|z| z.norm_sqr()).sum::<f64>() / n_seg as f64
    });
    Ok((power, n_seg))
}

/// Pairwise magnitude coherence averaged over the default 1–30 Hz grid.
pub fn band_coherence(sources: &DMatrix<f64>, fs: f64) -> Result<DMatrix<f64>> {
    let rec = validate_recording(Recording::new(
        sources.clone(),
        fs,
        Recording::numbered_labels("s", sources.nrows()),
        COMMON_AVERAGE,
    ))?;
    let cs = cross_spectra(&segment_and_window(&rec, &SpectralConfig::default())?)?;
    let nets = connectivity::coherence(&cs, &rec.channels)?;
    let mut out = DMatrix::zeros(sources.nrows(), sources.nrows());
    for n in &nets {
        out += &n.weights;
    }
    Ok(out / nets.len() as f64)
}

/// Expected estimated coherence magnitude for true coherence `g` and
/// `k` effective segments (first-order bias).
fn expected_coherence(g: f64, k: f64) -> f64 {
    (g * g + (1.0 - g * g).powi(2) * std::f64::consts::PI / (4.0 * k)).sqrt()
}

/// Driver-to-noise power ratio whose expected measured coherence with an
/// equally mixed partner is `target`.
fn mixing_ratio(target: f64, sz: &[f64], se: &[f64], k: f64) -> f64 {
    let measured = |u: f64| -> f64 {
        let s: f64 = sz
            .iter()
            .zip(se)
            .map(|(&a, &b)| expected_coherence(u * a / (u * a + b), k))
            .sum();
        s / sz.len() as f64
    };
    if target <= measured(0.0) {
        return 0.0;
    }
    if target >= 1.0 - 1e-12 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-20.0f64, 20.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if measured(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn off_diagonal_range(c: &DMatrix<f64>, active: &[usize]) -> (f64, f64) {
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            range.0 = range.0.min(c[(i, j)]);
            range.1 = range.1.max(c[(i, j)]);
        }
    }
    range
}

/// Seeded source time courses, dipoles × samples, in nAm.
///
/// Every source mixes one shared driver with its own white noise; the
/// mixing ratio is solved per source so the measured pairwise coherence
/// lands in the scenario's range, and the result is checked afterwards.
pub fn generate_sources(scenario: &DipoleScenario, duration_s: f64, fs: f64, seed: u64) -> Result<DMatrix<f64>> {
    scenario.validate()?;
    if !(fs > 0.0 && duration_s > 0.0) {
        return Err(Error::InvalidConfig("duration and sampling rate must be positive".into()));
    }
    let n_t = (duration_s * fs).round() as usize;
    let n_d = scenario.n_dipoles();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp: Vec<f64> = scenario.intensities.iter().map(|i| i * SOURCE_SCALE_NAM).collect();

    if n_d == 1 {
        let z = common_driver(n_t, fs, &mut rng);
        return Ok(DMatrix::from_fn(1, n_t, |_, t| amp[0] * z[t]));
    }
    if duration_s < MIN_TARGET_SECONDS {
        return Err(Error::InvalidConfig(format!(
            "coherence targeting needs at least {MIN_TARGET_SECONDS} s, got {duration_s}"
        )));
    }

    let [lo, hi] = scenario.coherence;
    let active: Vec<usize> = (0..n_d).filter(|&i| amp[i] > 0.0).collect();
    let mut last = (0.0, 0.0);
    for _ in 0..MAX_TARGET_ATTEMPTS {
        let mut rows = vec![common_driver(n_t, fs, &mut rng)];
        for _ in 0..n_d {
            let mut e = white_noise(n_t, &mut rng);
            standardize(&mut e);
            rows.push(e);
        }
        let (power, n_seg) = welch_power(&to_matrix(&rows), fs)?;
        let k_eff = n_seg as f64 * HANN_HALF_OVERLAP_EFFICIENCY;
        let sz: Vec<f64> = power.row(0).iter().copied().collect();

        let mut sources = DMatrix::zeros(n_d, n_t);
        for i in 0..n_d {
            let target = rng.random_range(lo..=hi);
            let se: Vec<f64> = power.row(i + 1).iter().copied().collect();
            let u = mixing_ratio(target, &sz, &se, k_eff);
            let (a, b) = if u.is_infinite() {
                (1.0, 0.0)
            } else {
                ((u / (1.0 + u)).sqrt(), (1.0 / (1.0 + u)).sqrt())
            };
            let mut s: Vec<f64> = rows[0].iter().zip(&rows[i + 1]).map(|(z, e)| a * z + b * e).collect();
            standardize(&mut s);
            for (t, v) in s.iter().enumerate() {
                sources[(i, t)] = amp[i] * v;
            }
        }

        if active.len() < 2 {
            return Ok(sources);
        }
        let measured = band_coherence(&sources.select_rows(&active), fs)?;
        let idx: Vec<usize> = (0..active.len()).collect();
        last = off_diagonal_range(&measured, &idx);
        if last.0 >= lo - TARGET_SLACK && last.1 <= hi + TARGET_SLACK {
            return Ok(sources);
        }
    }
    Err(Error::TargetUnreachable {
        lo,
        hi,
        min: last.0,
        max: last.1,
    })
}

/// Noiseless scalp recording `L · sources`.
pub fn forward(lf: &Leadfield, sources: &DMatrix<f64>, fs: f64) -> Result<Recording> {
    if lf.n_sources() != sources.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "leadfield has {} sources, signal matrix {} rows",
            lf.n_sources(),
            sources.nrows()
        )));
    }
    Ok(Recording::new(&lf.matrix * sources, fs, lf.channels.clone(), COMMON_AVERAGE))
}

/// A generated scenario: sources, leadfield and scalp recording.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scenario: DipoleScenario,
    pub seed: u64,
    pub duration_s: f64,
    pub leadfield: Leadfield,
    pub sources: DMatrix<f64>,
    pub recording: Recording,
}

pub fn simulate(scenario: &DipoleScenario, head: &HeadModel, duration_s: f64, fs: f64, seed: u64) -> Result<Simulation> {
    let leadfield = spherical_leadfield(head, scenario)?;
    let sources = generate_sources(scenario, duration_s, fs, seed)?;
    let recording = forward(&leadfield, &sources, fs)?;
    Ok(Simulation {
        scenario: scenario.clone(),
        seed,
        duration_s,
        leadfield,
        sources,
        recording,
    })
}

/// Scenario description written next to a simulated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub scenario: ScenarioTag,
    pub seed: u64,
    pub duration_s: f64,
    pub fs: f64,
    pub positions_mm: Vec<Point>,
    pub orientations: Vec<Point>,
    pub intensities: Vec<f64>,
    pub coherence_target: [f64; 2],
    /// Band-averaged measured coherence between sources (empty for one source).
    pub measured_coherence: Vec<Vec<f64>>,
    pub head_radii_mm: [f64; 3],
    pub head_conductivities: [f64; 3],
}

impl Simulation {
    pub fn manifest(&self, head: &HeadModel) -> Result<SimulationManifest> {
        let measured_coherence = if self.sources.nrows() > 1 {
            let c = band_coherence(&self.sources, self.recording.fs)?;
            c.row_iter().map(|r| r.iter().copied().collect()).collect()
        } else {
            Vec::new()
        };
        Ok(SimulationManifest {
            scenario: self.scenario.tag,
            seed: self.seed,
            duration_s: self.duration_s,
            fs: self.recording.fs,
            positions_mm: self.scenario.positions_mm.clone(),
            orientations: self.scenario.orientations.clone(),
            intensities: self.scenario.intensities.clone(),
            coherence_target: self.scenario.coherence,
            measured_coherence,
            head_radii_mm: head.radii_mm,
            head_conductivities: head.conductivities,
        })
    }
}
