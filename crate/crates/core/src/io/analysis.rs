use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Segment, SegmentFeatureVector};

pub const ANALYSIS_SCHEMA: u32 = 1;

/// One segment of an analysis document. Times are in seconds;
/// `loudness_max_time` is measured from the segment start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSegment {
    pub start: f64,
    pub duration: f64,
    pub pitches: [f64; 12],
    pub timbre: [f64; 12],
    pub loudness_start: f64,
    pub loudness_max: f64,
    pub loudness_max_time: f64,
}

/// Segment features of one track, in Echo Nest field naming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDocument {
    pub schema: u32,
    pub track_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
    pub segments: Vec<AnalysisSegment>,
}

fn schema_err(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        reason: reason.into(),
    }
}

impl AnalysisDocument {
    pub fn from_features(
        track_id: &str,
        sample_rate: u32,
        segments: &[Segment],
        features: &[SegmentFeatureVector],
    ) -> Result<Self> {
        if segments.len() != features.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} segments but {} feature vectors",
                segments.len(),
                features.len()
            )));
        }
        let sr = sample_rate as f64;
        let segments = segments
            .iter()
            .zip(features)
            .map(|(s, f)| {
                let duration = s.length as f64 / sr;
                AnalysisSegment {
                    start: s.start as f64 / sr,
                    duration,
                    pitches: f.chroma,
                    timbre: f.timbre,
                    loudness_start: f.loudness_start,
                    loudness_max: f.loudness_peak,
                    loudness_max_time: f.peak_position * duration,
                }
            })
            .collect();
        Ok(Self {
            schema: ANALYSIS_SCHEMA,
            track_id: track_id.to_string(),
            sample_rate: Some(sample_rate),
            segments,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| schema_err(e.path().to_string(), e.inner().to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_json()? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != ANALYSIS_SCHEMA {
            return Err(schema_err(
                "schema",
                format!("unsupported schema {}, expected {ANALYSIS_SCHEMA}", self.schema),
            ));
        }
        if self.sample_rate == Some(0) {
            return Err(schema_err("sample_rate", "must be positive"));
        }
        let mut prev: Option<f64> = None;
        for (i, s) in self.segments.iter().enumerate() {
            let at = |field: &str| format!("segments[{i}].{field}");
            let values = s
                .pitches
                .iter()
                .chain(&s.timbre)
                .chain([&s.loudness_start, &s.loudness_max]);
            if values.into_iter().any(|v| !v.is_finite()) {
                return Err(schema_err(format!("segments[{i}]"), "non-finite feature value"));
            }
            if !(s.start.is_finite() && s.start >= 0.0) {
                return Err(schema_err(at("start"), "must be finite and nonnegative"));
            }
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(schema_err(at("duration"), "must be finite and positive"));
            }
            if !(s.loudness_max_time.is_finite()
                && s.loudness_max_time >= 0.0
                && s.loudness_max_time <= s.duration * (1.0 + 1e-9))
            {
                return Err(schema_err(
                    at("loudness_max_time"),
                    "must lie within the segment",
                ));
            }
            if let Some(p) = prev {
                if s.start <= p {
                    return Err(schema_err(at("start"), "segments must be ordered by start"));
                }
            }
            prev = Some(s.start);
        }
        Ok(())
    }

    pub fn end_seconds(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.start + s.duration)
            .fold(0.0, f64::max)
    }

    /// Segments in samples at `sample_rate`, with their 27-value feature
    /// vectors. Boundaries are rounded to the nearest sample.
    pub fn to_segments(&self, sample_rate: u32) -> Result<(Vec<Segment>, Vec<SegmentFeatureVector>)> {
        let sr = sample_rate as f64;
        let mut segs = Vec::with_capacity(self.segments.len());
        let mut feats = Vec::with_capacity(self.segments.len());
        for (i, s) in self.segments.iter().enumerate() {
            let start = (s.start * sr).round() as usize;
            let end = ((s.start + s.duration) * sr).round() as usize;
            if end <= start {
                return Err(schema_err(
                    format!("segments[{i}].duration"),
                    format!("shorter than one sample at {sample_rate} Hz"),
                ));
            }
            if let Some(last) = segs.last() {
                let last: &Segment = last;
                if start < last.start + 1 {
                    return Err(schema_err(
                        format!("segments[{i}].start"),
                        "collides with the previous segment after rounding",
                    ));
                }
            }
            segs.push(Segment::new(start, end - start));
            feats.push(SegmentFeatureVector {
                chroma: s.pitches,
                timbre: s.timbre,
                loudness_start: s.loudness_start,
                loudness_peak: s.loudness_max,
                peak_position: (s.loudness_max_time / s.duration).min(1.0),
            });
        }
        Ok((segs, feats))
    }
}
