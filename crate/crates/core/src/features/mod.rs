//! Frame-level feature ladder and per-segment descriptors.

mod frame;
mod mel;
mod onset;
mod segment;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::StftParams;
use crate::error::{Error, Result};

pub use frame::{frame_features, mfcc, spectral_flux};
pub use mel::MelFilterbank;
pub use onset::{onset_strength, segment_onsets};
pub use segment::{
    chroma, loudness_triple, segment_features, timbre_surrogate, SegmentAnalyzer,
    SegmentFeatureVector, TIMBRE_BASIS_ORDER,
};

/// Energy floor applied before every logarithm.
pub const EPS: f64 = 1e-10;

/// Mel filters used for the MFCC rows of the frame ladder.
pub const MFCC_MEL_BANDS: usize = 26;

/// Feature inventory: one of the cumulative frame ladders or the 27-value
/// segment vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureSetId {
    Frame3,
    Frame8,
    Frame11,
    Frame21,
    Msd27,
}

const LADDER: [&str; 21] = [
    "zcr", "odf", "energy", "slope", "centroid", "spread", "skewness", "flux", "mfcc1", "mfcc2",
    "mfcc3", "mfcc4", "mfcc5", "mfcc6", "mfcc7", "mfcc8", "mfcc9", "mfcc10", "mfcc11", "mfcc12",
    "mfcc13",
];

impl FeatureSetId {
    pub fn dim(self) -> usize {
        match self {
            FeatureSetId::Frame3 => 3,
            FeatureSetId::Frame8 => 8,
            FeatureSetId::Frame11 => 11,
            FeatureSetId::Frame21 => 21,
            FeatureSetId::Msd27 => 27,
        }
    }

    pub fn is_frame_set(self) -> bool {
        self != FeatureSetId::Msd27
    }

    pub fn from_dim(m: usize) -> Result<Self> {
        match m {
            3 => Ok(FeatureSetId::Frame3),
            8 => Ok(FeatureSetId::Frame8),
            11 => Ok(FeatureSetId::Frame11),
            21 => Ok(FeatureSetId::Frame21),
            27 => Ok(FeatureSetId::Msd27),
            other => Err(Error::UnknownFeatureSet(other.to_string())),
        }
    }

    /// Ordered feature identifiers.
    pub fn names(self) -> Vec<String> {
        match self {
            FeatureSetId::Msd27 => {
                let mut names: Vec<String> = (1..=12).map(|i| format!("chroma{i}")).collect();
                names.extend((1..=12).map(|i| format!("timbre{i}")));
                names.extend(
                    ["loudness_start", "loudness_peak", "peak_position"]
                        .iter()
                        .map(|s| s.to_string()),
                );
                names
            }
            _ => LADDER[..self.dim()].iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSetId::Msd27 => f.write_str("msd27"),
            other => write!(f, "{}", other.dim()),
        }
    }
}

impl FromStr for FeatureSetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msd27" | "msd" => Ok(FeatureSetId::Msd27),
            "27" => Err(Error::UnknownFeatureSet(s.into())),
            other => other
                .parse::<usize>()
                .map_err(|_| Error::UnknownFeatureSet(other.into()))
                .and_then(FeatureSetId::from_dim),
        }
    }
}

impl TryFrom<String> for FeatureSetId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSetId> for String {
    fn from(f: FeatureSetId) -> String {
        f.to_string()
    }
}

/// M features per frame, stored frame-major (`n_frames` rows of `dim` values).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    names: Vec<String>,
    n_frames: usize,
    pub frame_params: StftParams,
}

impl FeatureMatrix {
    pub fn new(
        values: Vec<f64>,
        names: Vec<String>,
        n_frames: usize,
        frame_params: StftParams,
    ) -> Result<Self> {
        if values.len() != names.len() * n_frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} frames of {} features",
                values.len(),
                n_frames,
                names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("feature values must be finite".into()));
        }
        Ok(Self {
            values,
            names,
            n_frames,
            frame_params,
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        let m = self.dim();
        &self.values[n * m..(n + 1) * m]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim().max(1))
    }

    /// Time series of one named feature.
    pub fn row(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.frames().map(|f| f[j]).collect())
    }

    /// Keeps only the first `m` features of every frame.
    pub fn truncate_features(&self, m: usize) -> FeatureMatrix {
        let m = m.min(self.dim());
        FeatureMatrix {
            values: self.frames().flat_map(|f| f[..m].iter().copied()).collect(),
            names: self.names[..m].to_vec(),
            n_frames: self.n_frames,
            frame_params: self.frame_params,
        }
    }
}

/// Contiguous run of samples of one source file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub length: usize,
    #[serde(default)]
    pub source_file: String,
}

impl Segment {
    pub fn new(start: usize, length: usize) -> Self {
        Self {
            start,
            length,
            source_file: String::new(),
        }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }
}
