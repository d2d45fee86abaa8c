//! Per-segment descriptors laid out like the Echo Nest / MSD segment record:
//! 12 chroma, 12 timbre, loudness at start, loudness at peak, peak position.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp::{MagSpectrogram, StftParams, StftProcessor, Waveform};
use crate::error::{Error, Result};

use super::mel::MelFilterbank;
use super::{Segment, EPS};

pub const TIMBRE_MEL_BANDS: usize = 23;
pub const TIMBRE_PATCH_FRAMES: usize = 8;

/// (mel index, time index) of the 2-D cosine basis functions behind the 12
/// timbre coefficients, ordered by total frequency then by time index.
pub const TIMBRE_BASIS_ORDER: [(usize, usize); 12] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
    (4, 0),
    (3, 1),
];

const CHROMA_FMIN: f64 = 55.0;
const CHROMA_FMAX: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatureVector {
    pub chroma: [f64; 12],
    pub timbre: [f64; 12],
    pub loudness_start: f64,
    pub loudness_peak: f64,
    pub peak_position: f64,
}

impl SegmentFeatureVector {
    pub const DIM: usize = 27;

    /// Flattened f_1..f_27.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::DIM);
        v.extend_from_slice(&self.chroma);
        v.extend_from_slice(&self.timbre);
        v.extend([self.loudness_start, self.loudness_peak, self.peak_position]);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != Self::DIM {
            return Err(Error::DimensionMismatch {
                expected: Self::DIM,
                got: v.len(),
            });
        }
        let mut chroma = [0.0; 12];
        let mut timbre = [0.0; 12];
        chroma.copy_from_slice(&v[..12]);
        timbre.copy_from_slice(&v[12..24]);
        Ok(Self {
            chroma,
            timbre,
            loudness_start: v[24],
            loudness_peak: v[25],
            peak_position: v[26],
        })
    }
}

/// Bundles the transforms shared by all segment descriptors of one stream.
pub struct SegmentAnalyzer {
    stft: StftProcessor,
    mel: MelFilterbank,
    sample_rate: u32,
    // pitch class per FFT bin, None outside the chroma range
    pitch_class: Vec<Option<usize>>,
}

impl SegmentAnalyzer {
    pub fn new(p: StftParams, sample_rate: u32) -> Result<Self> {
        let stft = StftProcessor::new(p)?;
        let mel = MelFilterbank::new(TIMBRE_MEL_BANDS, p.frame_len, sample_rate);
        let pitch_class = (0..p.n_bins())
            .map(|k| {
                let f = k as f64 * sample_rate as f64 / p.frame_len as f64;
                if !(CHROMA_FMIN..=CHROMA_FMAX).contains(&f) {
                    return None;
                }
                let semis = (12.0 * (f / 440.0).log2()).round() as i64;
                // A is pitch class 9 with C = 0
                Some((semis + 9).rem_euclid(12) as usize)
            })
            .collect();
        Ok(Self {
            stft,
            mel,
            sample_rate,
            pitch_class,
        })
    }

    pub fn params(&self) -> StftParams {
        self.stft.params()
    }

    fn spectrum(&self, seg: &[f64]) -> Result<MagSpectrogram> {
        let p = self.stft.params();
        if seg.is_empty() {
            return Err(Error::InvalidParam("empty segment".into()));
        }
        if seg.len() < p.frame_len {
            let mut padded = seg.to_vec();
            padded.resize(p.frame_len, 0.0);
            Ok(self.stft.forward(&padded, self.sample_rate)?.magnitude())
        } else {
            Ok(self.stft.forward(seg, self.sample_rate)?.magnitude())
        }
    }

    /// Power folded onto pitch classes C..B, peak-normalized to 1.
    pub fn chroma(&self, seg: &[f64]) -> Result<[f64; 12]> {
        let mag = self.spectrum(seg)?;
        let mut out = [0.0; 12];
        for frame in mag.frames() {
            for (m, pc) in frame.iter().zip(&self.pitch_class) {
                if let Some(pc) = pc {
                    out[*pc] += m * m;
                }
            }
        }
        let max = out.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut out {
                *v /= max;
            }
        }
        Ok(out)
    }

    /// 2-D cosine projections of the segment's 23-band log-mel patch,
    /// resampled to 8 time steps. Coefficient 1 is the patch mean.
    pub fn timbre(&self, seg: &[f64]) -> Result<[f64; 12]> {
        let mag = self.spectrum(seg)?;
        let log_mel: Vec<Vec<f64>> = mag
            .frames()
            .map(|f| self.mel.energies(f).iter().map(|e| (e + EPS).ln()).collect())
            .collect();
        let patch = resample_columns(&log_mel, TIMBRE_PATCH_FRAMES);
        let (h, w) = (TIMBRE_MEL_BANDS as f64, TIMBRE_PATCH_FRAMES as f64);
        let mut out = [0.0; 12];
        for (c, &(u, v)) in out.iter_mut().zip(TIMBRE_BASIS_ORDER.iter()) {
            let mut acc = 0.0;
            for (t, col) in patch.iter().enumerate() {
                let ct = (PI * v as f64 * (t as f64 + 0.5) / w).cos();
                for (m, x) in col.iter().enumerate() {
                    acc += x * ct * (PI * u as f64 * (m as f64 + 0.5) / h).cos();
                }
            }
            *c = acc / (h * w);
        }
        Ok(out)
    }

    /// Loudness over non-overlapping hop-sized blocks:
    /// (first block, loudest block, loudest block center / duration).
    pub fn loudness(&self, seg: &[f64]) -> Result<(f64, f64, f64)> {
        if seg.is_empty() {
            return Err(Error::InvalidParam("empty segment".into()));
        }
        let hop = self.stft.params().hop;
        let mut start = None;
        let mut peak = f64::NEG_INFINITY;
        let mut peak_center = 0.0;
        for (b, block) in seg.chunks(hop).enumerate() {
            let ms = block.iter().map(|x| x * x).sum::<f64>() / block.len() as f64;
            let db = 10.0 * (ms + EPS).log10();
            start.get_or_insert(db);
            if db > peak {
                peak = db;
                peak_center = (b * hop) as f64 + block.len() as f64 / 2.0;
            }
        }
        Ok((start.unwrap(), peak, peak_center / seg.len() as f64))
    }

    pub fn features(&self, seg: &[f64]) -> Result<SegmentFeatureVector> {
        let (loudness_start, loudness_peak, peak_position) = self.loudness(seg)?;
        Ok(SegmentFeatureVector {
            chroma: self.chroma(seg)?,
            timbre: self.timbre(seg)?,
            loudness_start,
            loudness_peak,
            peak_position,
        })
    }
}

/// Linear interpolation of a list of columns to exactly `n` columns.
fn resample_columns(cols: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    if cols.len() == 1 {
        return vec![cols[0].clone(); n];
    }
    let last = (cols.len() - 1) as f64;
    (0..n)
        .map(|j| {
            let pos = j as f64 * last / (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(cols.len() - 1);
            let frac = pos - lo as f64;
            cols[lo]
                .iter()
                .zip(&cols[hi])
                .map(|(a, b)| (1.0 - frac) * a + frac * b)
                .collect()
        })
        .collect()
}

pub fn chroma(w: &Waveform, p: StftParams) -> Result<[f64; 12]> {
    SegmentAnalyzer::new(p, w.sample_rate)?.chroma(&w.samples)
}

pub fn timbre_surrogate(w: &Waveform, p: StftParams) -> Result<[f64; 12]> {
    SegmentAnalyzer::new(p, w.sample_rate)?.timbre(&w.samples)
}

pub fn loudness_triple(w: &Waveform, p: StftParams) -> Result<(f64, f64, f64)> {
    SegmentAnalyzer::new(p, w.sample_rate)?.loudness(&w.samples)
}

/// One feature vector per segment, in segment order.
pub fn segment_features(
    w: &Waveform,
    segs: &[Segment],
    p: StftParams,
) -> Result<Vec<SegmentFeatureVector>> {
    let analyzer = SegmentAnalyzer::new(p, w.sample_rate)?;
    segs.iter()
        .map(|s| {
            if s.length == 0 || s.end() > w.len() {
                return Err(Error::InvalidParam(format!(
                    "segment [{}, {}) outside signal of {} samples",
                    s.start,
                    s.end(),
                    w.len()
                )));
            }
            analyzer.features(&w.samples[s.start..s.end()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, sr: u32, len: usize, amp: f64) -> Waveform {
        let samples = (0..len)
            .map(|n| amp * (2.0 * PI * freq * n as f64 / sr as f64).sin())
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn chroma_pitch_classes() {
        let p = StftParams::default();
        assert_eq!(chroma(&Waveform::zeros(4000, 16000), p).unwrap(), [0.0; 12]);
        for f in [440.0, 880.0, 220.0] {
            let c = chroma(&tone(f, 16000, 8000, 0.5), p).unwrap();
            let argmax = (0..12).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap();
            assert_eq!(argmax, 9, "{f} Hz");
            assert_eq!(c[9], 1.0);
        }
        // C5 ~ 523.25 Hz
        let c = chroma(&tone(523.25, 16000, 8000, 0.5), p).unwrap();
        let argmax = (0..12).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap();
        assert_eq!(argmax, 0);
    }

    #[test]
    fn chroma_ignores_gain() {
        let p = StftParams::default();
        let a = chroma(&tone(330.0, 16000, 6000, 0.1), p).unwrap();
        let b = chroma(&tone(330.0, 16000, 6000, 0.7), p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn silent_timbre_is_floor_then_zero() {
        let t = timbre_surrogate(&Waveform::zeros(3000, 16000), StftParams::default()).unwrap();
        assert!((t[0] - EPS.ln()).abs() < 1e-9);
        assert!(t[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn constant_segment_loudness() {
        let w = Waveform::new(vec![0.5; 2000], 16000).unwrap();
        let (start, peak, pos) = loudness_triple(&w, StftParams::default()).unwrap();
        assert_eq!(start, peak);
        assert!((pos - 128.0 / 2000.0).abs() < 1e-12);
    }

    #[test]
    fn rising_envelope_peaks_late() {
        let x: Vec<f64> = (0..4000).map(|n| n as f64 / 4000.0).collect();
        let w = Waveform::new(x, 16000).unwrap();
        let (_, _, pos) = loudness_triple(&w, StftParams::default()).unwrap();
        assert!(pos > 0.5);
    }

    #[test]
    fn impulse_at_midpoint() {
        let len = 5000;
        let mut x = vec![0.0; len];
        x[len / 2] = 1.0;
        let w = Waveform::new(x, 16000).unwrap();
        let p = StftParams::default();
        let (_, _, pos) = loudness_triple(&w, p).unwrap();
        assert!((pos - 0.5).abs() <= p.hop as f64 / len as f64);
    }

    #[test]
    fn vector_layout_round_trip() {
        let v: Vec<f64> = (0..27).map(|i| i as f64).collect();
        let f = SegmentFeatureVector::from_slice(&v).unwrap();
        assert_eq!(f.chroma[0], 0.0);
        assert_eq!(f.timbre[0], 12.0);
        assert_eq!(f.loudness_start, 24.0);
        assert_eq!(f.peak_position, 26.0);
        assert_eq!(f.to_vec(), v);
        assert!(SegmentFeatureVector::from_slice(&v[..26]).is_err());
    }

    #[test]
    fn segment_features_keep_order_and_validate() {
        let sr = 16000;
        let mut x = tone(440.0, sr, 8000, 0.5).samples;
        x.extend(tone(523.25, sr, 8000, 0.5).samples);
        let w = Waveform::new(x, sr).unwrap();
        let segs = vec![Segment::new(0, 8000), Segment::new(8000, 8000)];
        let f = segment_features(&w, &segs, StftParams::default()).unwrap();
        let argmax = |c: &[f64; 12]| (0..12).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap();
        assert_eq!(argmax(&f[0].chroma), 9);
        assert_eq!(argmax(&f[1].chroma), 0);
        assert!(segment_features(&w, &[Segment::new(15000, 2000)], StftParams::default()).is_err());
    }
}
