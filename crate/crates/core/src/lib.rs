//! Cross-spectral quality control for multichannel EEG.
//!
//! The central quantity is the PaLOS index: a stepwise common principal
//! component decomposition of the Welch cross-spectral matrices, reduced to
//! the share of total power carried by the dominant common component at each
//! frequency. Around it sit the temporal quality ratios, coherence networks,
//! a spherical-head dipole simulator, FastICA-based degradation, sLORETA
//! inversion and a batch runner.

pub mod batch;
pub mod connectivity;
pub mod cpc;
pub mod error;
pub mod ica;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod palosi;
pub mod par;
pub mod report;
pub mod signal;
pub mod simkit;
pub mod spectra;
pub mod suite;
pub mod temporal;

pub use error::{Error, ErrorClass, Result};
