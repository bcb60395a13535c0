//! Randomized fault scenarios, measurement windows, normalization and the
//! binary dataset format.

mod dataset;
mod draw;
mod normalize;
mod window;

pub use dataset::{
    build_dataset, build_split, config_hash, read_dataset, write_dataset, write_records, BuiltData, Dataset,
    Provenance, ScenarioRecord, Stream, NO_PAIR,
};
pub use draw::{safe_branches, ScenarioConfig, ScenarioSampler};
pub use normalize::Normalizer;
pub use window::{extract_window, LatchedWindow};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::transim::TraceSet;

/// Measured per-generator signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    /// Electrical active power.
    Pe,
    /// Terminal (stator) voltage magnitude.
    Vt,
    /// Rotor speed deviation.
    Omega,
    /// Rotor angle.
    Delta,
}

impl Feature {
    /// Selection used by default: active power, stator voltage, rotor speed.
    pub const DEFAULT: [Feature; 3] = [Feature::Pe, Feature::Vt, Feature::Omega];

    pub fn code(self) -> &'static str {
        match self {
            Feature::Pe => "pe",
            Feature::Vt => "vt",
            Feature::Omega => "omega",
            Feature::Delta => "delta",
        }
    }

    pub fn series(self, traces: &TraceSet) -> &[Vec<f64>] {
        match self {
            Feature::Pe => &traces.pe,
            Feature::Vt => &traces.vt,
            Feature::Omega => &traces.omega,
            Feature::Delta => &traces.delta,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pe" => Ok(Feature::Pe),
            "vt" => Ok(Feature::Vt),
            "omega" => Ok(Feature::Omega),
            "delta" => Ok(Feature::Delta),
            other => Err(Error::Config(format!("unknown feature `{other}`"))),
        }
    }
}

/// Parses a comma-separated feature list.
pub fn parse_features(s: &str) -> Result<Vec<Feature>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

pub fn format_features(features: &[Feature]) -> String {
    features.iter().map(|f| f.code()).collect::<Vec<_>>().join(",")
}

/// Sampling of the pre-clearance measurement window.
///
/// Channels are ordered feature-major: channel `f * generators + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    /// Sampling frequency (samples/s).
    pub fs: f64,
    /// Window length (s).
    pub ltw: f64,
    pub features: Vec<Feature>,
    pub generators: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { fs: 500.0, ltw: 0.5, features: Feature::DEFAULT.to_vec(), generators: 10 }
    }
}

impl WindowSpec {
    pub fn channels(&self) -> usize {
        self.features.len() * self.generators
    }

    pub fn channel(&self, feature: usize, generator: usize) -> usize {
        feature * self.generators + generator
    }

    /// Samples per channel, `N_s`.
    pub fn samples(&self) -> Result<usize> {
        sample_count(self.fs, self.ltw)
    }

    /// Row width `channels × N_s`.
    pub fn width(&self) -> Result<usize> {
        Ok(self.channels() * self.samples()?)
    }

    /// Trace samples between consecutive window samples at step `dt`.
    pub fn stride(&self, dt: f64) -> Result<usize> {
        let s = 1.0 / (self.fs * dt);
        let r = s.round();
        if r < 1.0 || (s - r).abs() > 1e-9 * r {
            return Err(Error::Config(format!(
                "sampling period 1/{} s is not a multiple of the trace step {dt} s",
                self.fs
            )));
        }
        Ok(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() || self.generators == 0 {
            return Err(Error::Config("window needs at least one feature and generator".into()));
        }
        self.samples().map(|_| ())
    }

    pub fn ensure_same(&self, other: &WindowSpec) -> Result<()> {
        if self != other {
            return Err(Error::WindowMismatch(format!(
                "fs {} / ltw {} / features {} / generators {} versus fs {} / ltw {} / features {} / generators {}",
                self.fs,
                self.ltw,
                format_features(&self.features),
                self.generators,
                other.fs,
                other.ltw,
                format_features(&other.features),
                other.generators
            )));
        }
        Ok(())
    }
}

/// `N_s = F_s × LTW`, which must be a positive integer.
pub fn sample_count(fs: f64, ltw: f64) -> Result<usize> {
    if !(fs > 0.0 && ltw > 0.0 && fs.is_finite() && ltw.is_finite()) {
        return Err(Error::Config(format!("F_s = {fs} and LTW = {ltw} must be positive")));
    }
    let p = fs * ltw;
    let r = p.round();
    if r < 1.0 || (p - r).abs() > 1e-9 * r {
        return Err(Error::NonIntegralSamples(p));
    }
    Ok(r as usize)
}
