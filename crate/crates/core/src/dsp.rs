//! Time-frequency primitives: STFT, least-squares inverse STFT, Griffin-Lim
//! phase reconstruction and resampling-based time stretching.
//!
//! Spectrograms are stored frame-major: frame `n` is a contiguous slice of
//! `n_bins` values, which is what every consumer in this crate iterates over.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParam("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> f64 {
        peak_abs(&self.samples)
    }

    /// Copy of `[start, start + len)`, zero-filled past the end of the signal.
    pub fn slice(&self, start: usize, len: usize) -> Waveform {
        let mut out = vec![0.0; len];
        if start < self.samples.len() {
            let end = (start + len).min(self.samples.len());
            out[..end - start].copy_from_slice(&self.samples[start..end]);
        }
        Waveform {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }
}

pub(crate) fn peak_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of `len` taps.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "rectangular" | "rect" => Ok(Window::Rectangular),
            other => Err(Error::InvalidParam(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StftParams {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 256,
            window: Window::Hann,
        }
    }
}

impl StftParams {
    pub fn new(frame_len: usize, hop: usize, window: Window) -> Result<Self> {
        let p = Self {
            frame_len,
            hop,
            window,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 {
            return Err(Error::InvalidParam(format!(
                "frame length {} must be at least 2",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidParam(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.frame_len
            )));
        }
        Ok(())
    }

    /// One-sided bin count, `frame_len / 2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Frames covering `len` samples, the trailing partial frame included.
    /// Zero for signals shorter than one frame.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            1 + (len - self.frame_len).div_ceil(self.hop)
        }
    }

    /// Length of the overlap-add output for `n_frames` frames.
    pub fn output_len(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            (n_frames - 1) * self.hop + self.frame_len
        }
    }

    /// Whether shifted copies of the window sum to a constant in steady state.
    pub fn is_cola(&self) -> bool {
        let w = self.window.coefficients(self.frame_len);
        let sums: Vec<f64> = (0..self.hop)
            .map(|t| w.iter().skip(t).step_by(self.hop).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        max > 0.0 && (max - min) <= 1e-9 * max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    values: Vec<Complex64>,
    n_bins: usize,
    n_frames: usize,
    pub params: StftParams,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn new(
        values: Vec<Complex64>,
        n_frames: usize,
        params: StftParams,
        sample_rate: u32,
    ) -> Result<Self> {
        let n_bins = params.n_bins();
        if values.len() != n_bins * n_frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} frames of {} bins",
                values.len(),
                n_frames,
                n_bins
            )));
        }
        Ok(Self {
            values,
            n_bins,
            n_frames,
            params,
            sample_rate,
        })
    }

    /// Combines magnitudes with per-bin phases (radians), both frame-major.
    pub fn from_polar(mag: &MagSpectrogram, phase: &[f64]) -> Result<Self> {
        if phase.len() != mag.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} phases for {} magnitudes",
                phase.len(),
                mag.values.len()
            )));
        }
        let values = mag
            .values
            .iter()
            .zip(phase)
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect();
        Self::new(values, mag.n_frames, mag.params, mag.sample_rate)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame(&self, n: usize) -> &[Complex64] {
        &self.values[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn magnitude(&self) -> MagSpectrogram {
        MagSpectrogram {
            values: self.values.iter().map(|c| c.norm()).collect(),
            n_bins: self.n_bins,
            n_frames: self.n_frames,
            params: self.params,
            sample_rate: self.sample_rate,
        }
    }

    pub fn phase(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.arg()).collect()
    }
}

/// Nonnegative STFT magnitudes, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MagSpectrogram {
    values: Vec<f64>,
    n_bins: usize,
    n_frames: usize,
    pub params: StftParams,
    pub sample_rate: u32,
}

impl MagSpectrogram {
    pub fn new(
        values: Vec<f64>,
        n_frames: usize,
        params: StftParams,
        sample_rate: u32,
    ) -> Result<Self> {
        let n_bins = params.n_bins();
        if values.len() != n_bins * n_frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} frames of {} bins",
                values.len(),
                n_frames,
                n_bins
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParam(format!(
                "magnitude entries must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self {
            values,
            n_bins,
            n_frames,
            params,
            sample_rate,
        })
    }

    pub fn zeros(n_frames: usize, params: StftParams, sample_rate: u32) -> Self {
        let n_bins = params.n_bins();
        Self {
            values: vec![0.0; n_bins * n_frames],
            n_bins,
            n_frames,
            params,
            sample_rate,
        }
    }

    /// Builds from a list of frames, each of `params.n_bins()` values.
    pub fn from_frames<F: AsRef<[f64]>>(
        frames: &[F],
        params: StftParams,
        sample_rate: u32,
    ) -> Result<Self> {
        let values: Vec<f64> = frames
            .iter()
            .flat_map(|f| f.as_ref().iter().copied())
            .collect();
        Self::new(values, frames.len(), params, sample_rate)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[frame * self.n_bins + bin]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.n_bins)
    }

    /// Center frequency of `bin` in Hz.
    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.params.frame_len as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Frames `[start, end)` as a new spectrogram.
    pub fn frame_range(&self, start: usize, end: usize) -> MagSpectrogram {
        MagSpectrogram {
            values: self.values[start * self.n_bins..end * self.n_bins].to_vec(),
            n_bins: self.n_bins,
            n_frames: end - start,
            params: self.params,
            sample_rate: self.sample_rate,
        }
    }

    /// Appends all frames of `other`, which must share bin count.
    pub fn append(&mut self, other: &MagSpectrogram) -> Result<()> {
        if other.n_bins != self.n_bins {
            return Err(Error::ShapeMismatch(format!(
                "cannot append {} bins to {} bins",
                other.n_bins, self.n_bins
            )));
        }
        self.values.extend_from_slice(&other.values);
        self.n_frames += other.n_frames;
        Ok(())
    }

    pub fn push_frame(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.n_bins {
            return Err(Error::DimensionMismatch {
                expected: self.n_bins,
                got: frame.len(),
            });
        }
        self.values.extend_from_slice(frame);
        self.n_frames += 1;
        Ok(())
    }

    /// Linear interpolation along time to exactly `n_frames` frames.
    /// Identity when the frame count already matches.
    pub fn resample_frames(&self, n_frames: usize) -> MagSpectrogram {
        if n_frames == self.n_frames {
            return self.clone();
        }
        let mut out = MagSpectrogram::zeros(n_frames, self.params, self.sample_rate);
        if self.n_frames == 0 || n_frames == 0 {
            return out;
        }
        let last = (self.n_frames - 1) as f64;
        for j in 0..n_frames {
            let pos = if n_frames == 1 {
                last / 2.0
            } else {
                j as f64 * last / (n_frames - 1) as f64
            };
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(self.n_frames - 1);
            let frac = pos - lo as f64;
            let (a, b) = (self.frame(lo), self.frame(hi));
            let dst = &mut out.values[j * self.n_bins..(j + 1) * self.n_bins];
            for k in 0..self.n_bins {
                dst[k] = if frac == 0.0 {
                    a[k]
                } else {
                    (1.0 - frac) * a[k] + frac * b[k]
                };
            }
        }
        out
    }
}

/// Reusable forward/inverse transform for one set of parameters.
pub struct StftProcessor {
    params: StftParams,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftProcessor {
    pub fn new(params: StftParams) -> Result<Self> {
        params.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: params.window.coefficients(params.frame_len),
            forward: planner.plan_fft_forward(params.frame_len),
            inverse: planner.plan_fft_inverse(params.frame_len),
            params,
        })
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn forward(&self, samples: &[f64], sample_rate: u32) -> Result<ComplexSpectrogram> {
        let p = self.params;
        if samples.len() < p.frame_len {
            return Err(Error::SignalTooShort {
                len: samples.len(),
                frame_len: p.frame_len,
            });
        }
        let n_frames = p.n_frames(samples.len());
        let n_bins = p.n_bins();
        let mut values = Vec::with_capacity(n_frames * n_bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); p.frame_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for n in 0..n_frames {
            let start = n * p.hop;
            for (j, slot) in buf.iter_mut().enumerate() {
                let x = samples.get(start + j).copied().unwrap_or(0.0);
                *slot = Complex64::new(x * self.window[j], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            values.extend_from_slice(&buf[..n_bins]);
        }
        ComplexSpectrogram::new(values, n_frames, p, sample_rate)
    }

    /// Least-squares overlap-add inverse: windowed frames divided by the
    /// summed squared window. Samples no frame covers come out as zero.
    pub fn inverse(&self, spec: &ComplexSpectrogram) -> Result<Waveform> {
        let p = self.params;
        if spec.params != p {
            return Err(Error::InvalidParam(
                "spectrogram parameters differ from the processor's".into(),
            ));
        }
        if !p.is_cola() {
            return Err(Error::NotCola {
                window: p.window.name(),
                frame_len: p.frame_len,
                hop: p.hop,
            });
        }
        let len = p.output_len(spec.n_frames);
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let n_bins = p.n_bins();
        let mut buf = vec![Complex64::new(0.0, 0.0); p.frame_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / p.frame_len as f64;
        for n in 0..spec.n_frames {
            let frame = spec.frame(n);
            buf[..n_bins].copy_from_slice(frame);
            for k in n_bins..p.frame_len {
                buf[k] = frame[p.frame_len - k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = n * p.hop;
            for j in 0..p.frame_len {
                let w = self.window[j];
                out[start + j] += w * buf[j].re * scale;
                norm[start + j] += w * w;
            }
        }
        for (x, d) in out.iter_mut().zip(&norm) {
            *x = if *d > 1e-12 { *x / d } else { 0.0 };
        }
        Ok(Waveform {
            samples: out,
            sample_rate: spec.sample_rate,
        })
    }
}

pub fn stft(w: &Waveform, p: StftParams) -> Result<ComplexSpectrogram> {
    StftProcessor::new(p)?.forward(&w.samples, w.sample_rate)
}

pub fn istft(c: &ComplexSpectrogram) -> Result<Waveform> {
    StftProcessor::new(c.params)?.inverse(c)
}

/// Magnitude spectrogram whose frame `n` starts at sample `n * hop`, with
/// `ceil(len / hop)` frames. Segment boundaries map onto frame ranges in this
/// framing (see [`frames_for_span`]).
pub fn aligned_magnitude(w: &Waveform, p: StftParams) -> Result<MagSpectrogram> {
    aligned_magnitude_with(&StftProcessor::new(p)?, w)
}

pub(crate) fn aligned_magnitude_with(proc: &StftProcessor, w: &Waveform) -> Result<MagSpectrogram> {
    let p = proc.params();
    let n_frames = w.len().div_ceil(p.hop);
    if n_frames == 0 {
        return Ok(MagSpectrogram::zeros(0, p, w.sample_rate));
    }
    let padded = w.slice(0, p.output_len(n_frames));
    let spec = proc.forward(&padded.samples, w.sample_rate)?;
    debug_assert_eq!(spec.n_frames(), n_frames);
    Ok(spec.magnitude())
}

/// Frames of the aligned framing that belong to the span `[start, start+len)`:
/// those whose first sample falls inside it.
pub fn frames_for_span(start: usize, len: usize, hop: usize) -> std::ops::Range<usize> {
    start.div_ceil(hop)..(start + len).div_ceil(hop)
}

/// Relative distance between `target` magnitudes and those of `actual`, with
/// interior bins counted twice so the norm matches the full two-sided
/// spectrum (the norm Griffin-Lim's least-squares step minimizes).
pub fn inconsistency(target: &MagSpectrogram, actual: &ComplexSpectrogram) -> f64 {
    let n_bins = target.n_bins;
    let weight = |k: usize| {
        if k == 0 || (target.params.frame_len.is_multiple_of(2) && k == n_bins - 1) {
            1.0
        } else {
            2.0
        }
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (m, c)) in target.values.iter().zip(actual.values()).enumerate() {
        let w = weight(i % n_bins);
        let d = m - c.norm();
        num += w * d * d;
        den += w * m * m;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Griffin-Lim reconstruction from uniformly random initial phases.
pub fn griffin_lim(m: &MagSpectrogram, n_iter: usize, seed: u64) -> Result<Waveform> {
    griffin_lim_traced(m, n_iter, seed).map(|(w, _)| w)
}

/// Griffin-Lim that also returns the inconsistency after every iteration.
pub fn griffin_lim_traced(
    m: &MagSpectrogram,
    n_iter: usize,
    seed: u64,
) -> Result<(Waveform, Vec<f64>)> {
    if n_iter == 0 {
        return Err(Error::InvalidParam("griffin-lim needs at least one iteration".into()));
    }
    let proc = StftProcessor::new(m.params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phase: Vec<f64> = (0..m.values.len())
        .map(|_| rng.random::<f64>() * 2.0 * PI)
        .collect();
    let mut trace = Vec::with_capacity(n_iter);
    let mut signal = Waveform::zeros(0, m.sample_rate);
    for _ in 0..n_iter {
        let estimate = ComplexSpectrogram::from_polar(m, &phase)?;
        signal = proc.inverse(&estimate)?;
        if signal.is_empty() {
            break;
        }
        let reanalysed = proc.forward(&signal.samples, signal.sample_rate)?;
        trace.push(inconsistency(m, &reanalysed));
        phase = reanalysed.phase();
    }
    Ok((signal, trace))
}

const SINC_ZERO_CROSSINGS: f64 = 16.0;

/// Stretches `s` to exactly `target_len` samples by band-limited
/// (windowed-sinc) resampling. Pitch moves with length.
pub fn time_stretch(s: &Waveform, target_len: usize) -> Result<Waveform> {
    if target_len == 0 {
        return Err(Error::InvalidParam("target length must be at least 1".into()));
    }
    if s.is_empty() {
        return Err(Error::InvalidParam("cannot stretch an empty segment".into()));
    }
    if target_len == s.len() {
        return Ok(s.clone());
    }
    let n_in = s.len();
    let ratio = n_in as f64 / target_len as f64;
    let cutoff = if ratio > 1.0 { 1.0 / ratio } else { 1.0 };
    let half = SINC_ZERO_CROSSINGS / cutoff;
    let mut out = Vec::with_capacity(target_len);
    for j in 0..target_len {
        let x = (j as f64 + 0.5) * ratio - 0.5;
        let lo = (x - half).ceil().max(0.0) as usize;
        let hi = ((x + half).floor() as isize).min(n_in as isize - 1);
        let mut acc = 0.0;
        if hi >= lo as isize {
            for i in lo..=hi as usize {
                let d = x - i as f64;
                acc += s.samples[i] * sinc_kernel(d, cutoff, half);
            }
        }
        out.push(acc);
    }
    Ok(Waveform {
        samples: out,
        sample_rate: s.sample_rate,
    })
}

fn sinc_kernel(d: f64, cutoff: f64, half: f64) -> f64 {
    if d.abs() >= half {
        return 0.0;
    }
    let t = cutoff * d;
    let sinc = if t == 0.0 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    };
    let win = 0.5 + 0.5 * (PI * d / half).cos();
    cutoff * sinc * win
}
