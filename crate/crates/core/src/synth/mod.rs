//! Reconstruction of audio from target feature sequences: concatenative
//! methods that place development segments, and additive methods that
//! combine neighbor spectrograms and reconstruct phase with Griffin-Lim.
mod additive;
mod concat;
mod grid;

use std::fmt;
use std::str::FromStr;

use crate::dsp::{StftParams, Waveform};
use crate::error::{Error, Result};
use crate::features::{
    frame_features, segment_features, segment_onsets, FeatureMatrix, FeatureSetId, Segment,
    SegmentFeatureVector,
};
use crate::index::{AudioStore, DbMode, DevDatabase, WeightVector};
use crate::io::AnalysisDocument;

pub use additive::{
    add_combine, additive_synthesize, estimate_frame_magnitude, estimate_segment_magnitude,
    frame_median, CombineMode,
};
pub use concat::{cross_normalized, cross_penalized, cross_plain, render_segments, select_segments};
pub use grid::{build_candidate_grid, path_cost, viterbi_path, CandidateGrid, ViterbiPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    CrossPlain,
    CrossNormalized,
    CrossPenalized,
    AddMedian,
    AddMean,
    AddMax,
    FrameMedian,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::CrossPlain,
        Method::CrossNormalized,
        Method::CrossPenalized,
        Method::AddMedian,
        Method::AddMean,
        Method::AddMax,
        Method::FrameMedian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::CrossPlain => "cross-plain",
            Method::CrossNormalized => "cross-normalized",
            Method::CrossPenalized => "cross-penalized",
            Method::AddMedian => "add-median",
            Method::AddMean => "add-mean",
            Method::AddMax => "add-max",
            Method::FrameMedian => "frame-median",
        }
    }

    pub fn is_concatenative(self) -> bool {
        matches!(
            self,
            Method::CrossPlain | Method::CrossNormalized | Method::CrossPenalized
        )
    }

    pub fn combine_mode(self) -> Option<CombineMode> {
        match self {
            Method::AddMedian | Method::FrameMedian => Some(CombineMode::Median),
            Method::AddMean => Some(CombineMode::Mean),
            Method::AddMax => Some(CombineMode::Max),
            _ => None,
        }
    }

    /// Database mode the method operates on.
    pub fn mode(self) -> DbMode {
        if self == Method::FrameMedian {
            DbMode::Frame
        } else {
            DbMode::Segment
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

pub const DEFAULT_P: usize = 10;
pub const DEFAULT_LAMBDA_V: f64 = 1.0;
pub const DEFAULT_GL_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub method: Method,
    pub p: usize,
    pub weights: WeightVector,
    /// Penalty for switching source file between consecutive segments.
    pub lambda_v: f64,
    pub gl_iters: usize,
    pub gl_seed: u64,
    /// Linear fade applied at both ends of every placed segment; 0 disables.
    pub boundary_fade_ms: f64,
}

impl SynthConfig {
    pub fn new(method: Method, weights: WeightVector) -> Self {
        Self {
            method,
            p: DEFAULT_P,
            weights,
            lambda_v: DEFAULT_LAMBDA_V,
            gl_iters: DEFAULT_GL_ITERS,
            gl_seed: 0,
            boundary_fade_ms: 0.0,
        }
    }

    pub fn validate(&self, db: &DevDatabase) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParam("P must be at least 1".into()));
        }
        if !(self.lambda_v.is_finite() && self.lambda_v >= 0.0) {
            return Err(Error::InvalidParam("lambda_v must be finite and nonnegative".into()));
        }
        if !(self.boundary_fade_ms.is_finite() && self.boundary_fade_ms >= 0.0) {
            return Err(Error::InvalidParam("fade length must be nonnegative".into()));
        }
        if self.weights.dim() != db.dim() {
            return Err(Error::DimensionMismatch {
                expected: db.dim(),
                got: self.weights.dim(),
            });
        }
        if self.method.mode() != db.mode {
            return Err(Error::DatabaseMismatch(format!(
                "{} needs a {} database, got {}",
                self.method,
                self.method.mode(),
                db.mode
            )));
        }
        if self.p > db.len() {
            return Err(Error::TooManyNeighbors {
                requested: self.p,
                available: db.len(),
            });
        }
        Ok(())
    }
}

/// Segment-level description of the audio to reconstruct. `audio` is present
/// when the target was analysed from a waveform rather than read from an
/// analysis document.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTarget {
    pub segments: Vec<Segment>,
    pub features: Vec<SegmentFeatureVector>,
    pub len: usize,
    pub sample_rate: u32,
    pub audio: Option<Waveform>,
}

impl SegmentTarget {
    pub fn from_audio(w: Waveform, p: StftParams) -> Result<Self> {
        let segments = segment_onsets(&w, p)?;
        let features = segment_features(&w, &segments, p)?;
        Ok(Self {
            len: w.len(),
            sample_rate: w.sample_rate,
            segments,
            features,
            audio: Some(w),
        })
    }

    pub fn from_analysis(doc: &AnalysisDocument, sample_rate: u32) -> Result<Self> {
        let (segments, features) = doc.to_segments(sample_rate)?;
        let len = segments.last().map_or(0, Segment::end);
        Ok(Self {
            segments,
            features,
            len,
            sample_rate,
            audio: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.len() != self.features.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} segments but {} feature vectors",
                self.segments.len(),
                self.features.len()
            )));
        }
        let mut prev_end = 0;
        for s in &self.segments {
            if s.length == 0 || s.start < prev_end || s.end() > self.len {
                return Err(Error::InvalidParam(format!(
                    "target segment [{}, {}) is empty, overlapping or outside {} samples",
                    s.start,
                    s.end(),
                    self.len
                )));
            }
            prev_end = s.end();
        }
        if let Some(a) = &self.audio {
            if a.len() != self.len {
                return Err(Error::ShapeMismatch("target audio length differs".into()));
            }
        }
        Ok(())
    }

    /// Feature vectors standardized with the database statistics.
    pub fn queries(&self, db: &DevDatabase) -> Result<Vec<Vec<f64>>> {
        self.features
            .iter()
            .map(|f| db.standardize_query(&f.to_vec()))
            .collect()
    }
}

/// Frame-level description of the audio to reconstruct.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTarget {
    pub features: FeatureMatrix,
    pub len: usize,
    pub sample_rate: u32,
}

impl FrameTarget {
    pub fn from_audio(w: &Waveform, p: StftParams, set: FeatureSetId) -> Result<Self> {
        Ok(Self {
            features: frame_features(w, p, set)?,
            len: w.len(),
            sample_rate: w.sample_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Segments(SegmentTarget),
    Frames(FrameTarget),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Segments(t) => t.len,
            Target::Frames(t) => t.len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs the configured method. Output has exactly the target's length.
pub fn synthesize(
    target: &Target,
    db: &DevDatabase,
    store: &AudioStore,
    cfg: &SynthConfig,
) -> Result<Waveform> {
    match (target, cfg.method) {
        (Target::Frames(t), Method::FrameMedian) => frame_median(t, db, store, cfg),
        (Target::Segments(t), Method::CrossPlain) => cross_plain(t, db, store, cfg),
        (Target::Segments(t), Method::CrossNormalized) => cross_normalized(t, db, store, cfg),
        (Target::Segments(t), Method::CrossPenalized) => cross_penalized(t, db, store, cfg),
        (Target::Segments(t), Method::AddMedian | Method::AddMean | Method::AddMax) => {
            additive_synthesize(t, db, store, cfg)
        }
        (_, m) => Err(Error::DatabaseMismatch(format!(
            "method {m} does not apply to this kind of target"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!(
            "add-min".parse::<Method>(),
            Err(Error::UnknownMethod(_))
        ));
    }
}
