use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dsp::{frames_for_span, griffin_lim, MagSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::index::{AudioStore, DbMode, DevDatabase};

use super::concat::check_segment_db;
use super::grid::build_candidate_grid;
use super::{FrameTarget, SegmentTarget, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CombineMode {
    Median,
    Mean,
    Max,
}

impl CombineMode {
    pub const ALL: [CombineMode; 3] = [CombineMode::Median, CombineMode::Mean, CombineMode::Max];

    pub fn name(self) -> &'static str {
        match self {
            CombineMode::Median => "median",
            CombineMode::Mean => "mean",
            CombineMode::Max => "max",
        }
    }

    /// Combines one bin's values; `v` is reordered. An even count takes the
    /// mean of the two middle values as its median.
    fn reduce(self, v: &mut [f64]) -> f64 {
        match self {
            CombineMode::Mean => v.iter().sum::<f64>() / v.len() as f64,
            CombineMode::Max => v.iter().fold(0.0_f64, |a, b| a.max(*b)),
            CombineMode::Median => {
                v.sort_unstable_by(f64::total_cmp);
                let mid = v.len() / 2;
                if v.len() % 2 == 1 {
                    v[mid]
                } else {
                    0.5 * (v[mid - 1] + v[mid])
                }
            }
        }
    }
}

impl fmt::Display for CombineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CombineMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Elementwise median, mean or maximum of equally shaped spectrograms.
pub fn add_combine(spectra: &[MagSpectrogram], mode: CombineMode) -> Result<MagSpectrogram> {
    let Some(first) = spectra.first() else {
        return Err(Error::InvalidParam("nothing to combine".into()));
    };
    if let Some(s) = spectra
        .iter()
        .find(|s| s.n_bins() != first.n_bins() || s.n_frames() != first.n_frames())
    {
        return Err(Error::ShapeMismatch(format!(
            "cannot combine {}x{} with {}x{}",
            first.n_bins(),
            first.n_frames(),
            s.n_bins(),
            s.n_frames()
        )));
    }
    if spectra.len() == 1 {
        return Ok(first.clone());
    }
    let mut buf = vec![0.0; spectra.len()];
    let values = (0..first.values().len())
        .map(|i| {
            for (b, s) in buf.iter_mut().zip(spectra) {
                *b = s.values()[i];
            }
            mode.reduce(&mut buf)
        })
        .collect();
    MagSpectrogram::new(values, first.n_frames(), first.params, first.sample_rate)
}

fn combine_mode(cfg: &SynthConfig) -> Result<CombineMode> {
    cfg.method
        .combine_mode()
        .ok_or_else(|| Error::UnknownMethod(format!("{} is not additive", cfg.method)))
}

/// Magnitude estimate in the aligned framing of the target: every segment's
/// frames are the combination of its P neighbors' frames, each resampled in
/// time to the segment's frame count. Frames outside every segment stay zero.
pub fn estimate_segment_magnitude(
    target: &SegmentTarget,
    db: &DevDatabase,
    store: &AudioStore,
    cfg: &SynthConfig,
) -> Result<MagSpectrogram> {
    check_segment_db(target, db)?;
    cfg.validate(db)?;
    let mode = combine_mode(cfg)?;
    let p = db.params;
    let grid = build_candidate_grid(&target.queries(db)?, db, cfg.p, &cfg.weights)?;
    let n_frames = target.len.div_ceil(p.hop);
    let n_bins = p.n_bins();
    let mut values = vec![0.0; n_frames * n_bins];
    for (i, seg) in target.segments.iter().enumerate() {
        let span = frames_for_span(seg.start, seg.length, p.hop);
        if span.is_empty() {
            continue;
        }
        let neighbors = grid
            .candidates(i)
            .iter()
            .map(|&e| {
                let entry = db.entry(e);
                let spec = store.aligned(db.source_file(e))?;
                let mut r = frames_for_span(entry.start, entry.length, p.hop);
                r.end = r.end.min(spec.n_frames());
                if r.start >= r.end {
                    let n = (entry.start / p.hop).min(spec.n_frames().saturating_sub(1));
                    r = n..n + 1;
                }
                Ok(spec.frame_range(r.start, r.end).resample_frames(span.len()))
            })
            .collect::<Result<Vec<_>>>()?;
        let combined = add_combine(&neighbors, mode)?;
        values[span.start * n_bins..span.end * n_bins].copy_from_slice(combined.values());
    }
    MagSpectrogram::new(values, n_frames, p, target.sample_rate)
}

/// Add-Median, Add-Mean or Add-Max: combined magnitudes followed by one
/// Griffin-Lim pass over the whole target.
pub fn additive_synthesize(
    target: &SegmentTarget,
    db: &DevDatabase,
    store: &AudioStore,
    cfg: &SynthConfig,
) -> Result<Waveform> {
    let est = estimate_segment_magnitude(target, db, store, cfg)?;
    reconstruct(&est, target.len, cfg)
}

fn reconstruct(est: &MagSpectrogram, len: usize, cfg: &SynthConfig) -> Result<Waveform> {
    if est.n_frames() == 0 {
        return Ok(Waveform::zeros(len, est.sample_rate));
    }
    let w = griffin_lim(est, cfg.gl_iters, cfg.gl_seed)?;
    Ok(w.slice(0, len))
}

/// Frame-by-frame estimate: each target frame's magnitude is the median of
/// its P nearest development frames.
pub fn estimate_frame_magnitude(
    target: &FrameTarget,
    db: &DevDatabase,
    store: &AudioStore,
    cfg: &SynthConfig,
) -> Result<MagSpectrogram> {
    if db.mode != DbMode::Frame {
        return Err(Error::DatabaseMismatch("frame-median needs a frame database".into()));
    }
    cfg.validate(db)?;
    if target.features.dim() != db.dim() {
        return Err(Error::DimensionMismatch {
            expected: db.dim(),
            got: target.features.dim(),
        });
    }
    if target.features.frame_params != db.params {
        return Err(Error::DatabaseMismatch(
            "target and database use different STFT parameters".into(),
        ));
    }
    let p = db.params;
    let mode = cfg.method.combine_mode().unwrap_or(CombineMode::Median);
    let frames: Vec<Vec<f64>> = (0..target.features.n_frames())
        .into_par_iter()
        .map(|n| {
            let q = db.standardize_query(target.features.frame(n))?;
            let nn = db.knn(&q, cfg.p, &cfg.weights)?;
            let columns = nn
                .indices
                .iter()
                .map(|&e| {
                    let spec = store.magnitude(db.source_file(e))?;
                    let k = (db.entry(e).start / p.hop).min(spec.n_frames() - 1);
                    Ok(spec.frame(k))
                })
                .collect::<Result<Vec<&[f64]>>>()?;
            let mut buf = vec![0.0; columns.len()];
            Ok((0..p.n_bins())
                .map(|k| {
                    for (b, c) in buf.iter_mut().zip(&columns) {
                        *b = c[k];
                    }
                    mode.reduce(&mut buf)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    MagSpectrogram::from_frames(&frames, p, target.sample_rate)
}

pub fn frame_median(
    target: &FrameTarget,
    db: &DevDatabase,
    store: &AudioStore,
    cfg: &SynthConfig,
) -> Result<Waveform> {
    let est = estimate_frame_magnitude(target, db, store, cfg)?;
    reconstruct(&est, target.len, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::StftParams;

    fn spec(values: Vec<f64>) -> MagSpectrogram {
        let p = StftParams::new(4, 2, crate::dsp::Window::Hann).unwrap();
        MagSpectrogram::new(values, 1, p, 8000).unwrap()
    }

    #[test]
    fn hand_computed_modes() {
        let s = [
            spec(vec![1.0, 0.0, 3.0]),
            spec(vec![2.0, 0.0, 3.0]),
            spec(vec![9.0, 6.0, 3.0]),
        ];
        let med = add_combine(&s, CombineMode::Median).unwrap();
        let mean = add_combine(&s, CombineMode::Mean).unwrap();
        let max = add_combine(&s, CombineMode::Max).unwrap();
        assert_eq!(med.values(), &[2.0, 0.0, 3.0]);
        assert_eq!(mean.values(), &[4.0, 2.0, 3.0]);
        assert_eq!(max.values(), &[9.0, 6.0, 3.0]);
    }

    #[test]
    fn even_median_averages_middle_pair() {
        let s = [spec(vec![1.0, 0.0, 0.0]), spec(vec![4.0, 0.0, 2.0])];
        assert_eq!(
            add_combine(&s, CombineMode::Median).unwrap().values(),
            &[2.5, 0.0, 1.0]
        );
    }

    #[test]
    fn single_input_is_identity() {
        let s = [spec(vec![0.3, 0.1, 7.0])];
        for m in CombineMode::ALL {
            assert_eq!(add_combine(&s, m).unwrap(), s[0]);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = StftParams::new(4, 2, crate::dsp::Window::Hann).unwrap();
        let a = MagSpectrogram::zeros(1, p, 8000);
        let b = MagSpectrogram::zeros(2, p, 8000);
        assert!(add_combine(&[a, b], CombineMode::Mean).is_err());
        assert!(add_combine(&[], CombineMode::Mean).is_err());
    }
}
