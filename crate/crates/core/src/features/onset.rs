use crate::dsp::{MagSpectrogram, StftParams, StftProcessor, Waveform};
use crate::error::Result;

use super::Segment;

/// Minimum spacing between two detected onsets, in seconds.
pub const MIN_ONSET_GAP_S: f64 = 0.05;

/// Half-wave rectified spectral flux per frame, 0 for the first frame.
pub(crate) fn half_wave_flux(m: &MagSpectrogram) -> Vec<f64> {
    (0..m.n_frames())
        .map(|n| {
            if n == 0 {
                return 0.0;
            }
            m.frame(n)
                .iter()
                .zip(m.frame(n - 1))
                .map(|(a, b)| (a - b).max(0.0))
                .sum()
        })
        .collect()
}

/// Onset detection function: rectified flux smoothed by a centered 3-frame
/// moving average (shortened at the edges).
pub fn onset_strength(m: &MagSpectrogram) -> Vec<f64> {
    let raw = half_wave_flux(m);
    let n = raw.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Offset inside frame `n` at which an impulse produces the largest
/// rectified-flux increase between frames `n - 1` and `n`.
fn impulse_offset(p: &StftParams) -> usize {
    let w = p.window.coefficients(p.frame_len);
    let gain = |j: usize| w[j] - w.get(j + p.hop).copied().unwrap_or(0.0);
    let best = (0..p.frame_len).map(gain).fold(f64::MIN, f64::max);
    let first = (0..p.frame_len).find(|&j| gain(j) >= best - 1e-12).unwrap_or(0);
    let last = (0..p.frame_len).rev().find(|&j| gain(j) >= best - 1e-12).unwrap_or(0);
    (first + last) / 2
}

/// Splits `w` at onsets. Peaks of the onset strength above median + one
/// standard deviation are kept, at least 50 ms apart (the stronger of two
/// close peaks wins). Segments tile the whole signal; the first starts at 0.
pub fn segment_onsets(w: &Waveform, p: StftParams) -> Result<Vec<Segment>> {
    let len = w.len();
    if len == 0 {
        return Ok(Vec::new());
    }
    let padded;
    let samples = if len < p.frame_len {
        padded = w.slice(0, p.frame_len);
        &padded.samples
    } else {
        &w.samples
    };
    let mag = StftProcessor::new(p)?
        .forward(samples, w.sample_rate)?
        .magnitude();
    let odf = onset_strength(&mag);
    let threshold = median(&odf) + std_dev(&odf);
    let gap = ((MIN_ONSET_GAP_S * w.sample_rate as f64) / p.hop as f64).ceil() as usize;

    let mut picks: Vec<usize> = Vec::new();
    for n in 0..odf.len() {
        let v = odf[n];
        if v <= threshold || v <= 0.0 {
            continue;
        }
        let rising = n == 0 || v > odf[n - 1];
        let not_falling = n + 1 == odf.len() || v >= odf[n + 1];
        if !(rising && not_falling) {
            continue;
        }
        match picks.last() {
            Some(&last) if n - last < gap.max(1) => {
                if v > odf[last] {
                    *picks.last_mut().unwrap() = n;
                }
            }
            _ => picks.push(n),
        }
    }

    let offset = impulse_offset(&p);
    let mut bounds = vec![0usize];
    for n in picks {
        let b = n * p.hop + offset;
        if b > *bounds.last().unwrap() && b < len {
            bounds.push(b);
        }
    }
    bounds.push(len);
    Ok(bounds
        .windows(2)
        .map(|b| Segment::new(b[0], b[1] - b[0]))
        .collect())
}

fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64).sqrt()
}
