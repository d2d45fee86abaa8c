use std::f64::consts::PI;

use crate::dsp::{MagSpectrogram, StftParams, StftProcessor, Waveform};
use crate::error::{Error, Result};

use super::mel::MelFilterbank;
use super::onset::half_wave_flux;
use super::{FeatureMatrix, FeatureSetId, EPS, MFCC_MEL_BANDS};

/// Frame features of `w`, one column per STFT frame of `p`.
///
/// Rows follow the cumulative ladder: time-domain descriptors, then spectral
/// shape, then MFCCs, so every smaller set is a prefix of the larger ones.
pub fn frame_features(w: &Waveform, p: StftParams, set: FeatureSetId) -> Result<FeatureMatrix> {
    if !set.is_frame_set() {
        return Err(Error::UnknownFeatureSet(format!(
            "{set} is not a frame feature set"
        )));
    }
    let proc = StftProcessor::new(p)?;
    let mag = proc.forward(&w.samples, w.sample_rate)?.magnitude();
    let m = set.dim();
    let n_frames = mag.n_frames();

    let odf = half_wave_flux(&mag);
    let flux = spectral_flux(&mag);
    let mfccs = if m > 8 {
        Some(mfcc(&mag, MFCC_MEL_BANDS, m - 8)?)
    } else {
        None
    };
    let freqs: Vec<f64> = (0..mag.n_bins()).map(|k| mag.bin_frequency(k)).collect();

    let mut values = Vec::with_capacity(n_frames * m);
    for n in 0..n_frames {
        let start = n * p.hop;
        let end = (start + p.frame_len).min(w.len());
        let raw = &w.samples[start..end];
        let mut row = Vec::with_capacity(21);
        row.push(zero_crossing_rate(raw, p.frame_len));
        row.push(odf[n]);
        row.push(raw.iter().map(|x| x * x).sum());
        if m > 3 {
            let shape = SpectralShape::of(mag.frame(n), &freqs);
            row.extend([shape.slope, shape.centroid, shape.spread, shape.skewness]);
            row.push(flux[n]);
        }
        if let Some(c) = &mfccs {
            row.extend_from_slice(c.frame(n));
        }
        values.extend_from_slice(&row[..m]);
    }
    FeatureMatrix::new(values, set.names(), n_frames, p)
}

/// Sign changes per sample pair; zero counts as positive. The frame is
/// zero-padded to `frame_len`.
fn zero_crossing_rate(raw: &[f64], frame_len: usize) -> f64 {
    let crossings = raw
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    // padding zeros after a negative tail add one crossing
    let pad = usize::from(raw.len() < frame_len && raw.last().is_some_and(|&x| x < 0.0));
    (crossings + pad) as f64 / (frame_len - 1) as f64
}

struct SpectralShape {
    slope: f64,
    centroid: f64,
    spread: f64,
    skewness: f64,
}

impl SpectralShape {
    fn of(mag: &[f64], freqs: &[f64]) -> Self {
        let n = mag.len() as f64;
        let f_mean = freqs.iter().sum::<f64>() / n;
        let m_mean = mag.iter().sum::<f64>() / n;
        let (mut cov, mut var) = (0.0, 0.0);
        for (f, m) in freqs.iter().zip(mag) {
            cov += (f - f_mean) * (m - m_mean);
            var += (f - f_mean) * (f - f_mean);
        }
        let slope = if var > 0.0 { cov / var } else { 0.0 };

        let total: f64 = mag.iter().sum();
        if total < EPS {
            return Self {
                slope,
                centroid: 0.0,
                spread: 0.0,
                skewness: 0.0,
            };
        }
        let centroid = freqs.iter().zip(mag).map(|(f, m)| f * m).sum::<f64>() / total;
        let moment = |k: i32| {
            freqs
                .iter()
                .zip(mag)
                .map(|(f, m)| (f - centroid).powi(k) * m)
                .sum::<f64>()
                / total
        };
        let spread = moment(2).sqrt();
        let skewness = if spread > 1e-9 {
            moment(3) / spread.powi(3)
        } else {
            0.0
        };
        Self {
            slope,
            centroid,
            spread,
            skewness,
        }
    }
}

/// Euclidean distance between consecutive magnitude frames; the first frame
/// has no predecessor and gets 0.
pub fn spectral_flux(m: &MagSpectrogram) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.n_frames());
    for n in 0..m.n_frames() {
        if n == 0 {
            out.push(0.0);
            continue;
        }
        let d: f64 = m
            .frame(n)
            .iter()
            .zip(m.frame(n - 1))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        out.push(d.sqrt());
    }
    out
}

/// Cepstral coefficients 1..=`n_coeffs` (coefficient 0 dropped) from the log
/// mel energies via an orthonormal DCT-II.
pub fn mfcc(m: &MagSpectrogram, n_mels: usize, n_coeffs: usize) -> Result<FeatureMatrix> {
    if n_mels == 0 || n_coeffs >= n_mels {
        return Err(Error::InvalidParam(format!(
            "{n_coeffs} cepstral coefficients need more than {n_mels} mel bands"
        )));
    }
    let bank = MelFilterbank::new(n_mels, m.params.frame_len, m.sample_rate);
    let dct = dct2_basis(n_mels, n_coeffs);
    let mut values = Vec::with_capacity(m.n_frames() * n_coeffs);
    for frame in m.frames() {
        let log_mel: Vec<f64> = bank.energies(frame).iter().map(|e| (e + EPS).ln()).collect();
        for row in &dct {
            values.push(row.iter().zip(&log_mel).map(|(c, x)| c * x).sum());
        }
    }
    let names = (1..=n_coeffs).map(|i| format!("mfcc{i}")).collect();
    FeatureMatrix::new(values, names, m.n_frames(), m.params)
}

/// Rows 1..=n_coeffs of the orthonormal DCT-II matrix of size `n`.
fn dct2_basis(n: usize, n_coeffs: usize) -> Vec<Vec<f64>> {
    let scale = (2.0 / n as f64).sqrt();
    (1..=n_coeffs)
        .map(|k| {
            (0..n)
                .map(|i| scale * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Window;

    fn sine(freq: f64, sr: u32, len: usize) -> Waveform {
        let samples = (0..len)
            .map(|n| (2.0 * PI * freq * n as f64 / sr as f64).sin())
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn silent_frames_are_zero() {
        let w = Waveform::zeros(4096, 16000);
        let f = frame_features(&w, StftParams::default(), FeatureSetId::Frame8).unwrap();
        for frame in f.frames() {
            assert_eq!(&frame[..3], &[0.0, 0.0, 0.0]);
            assert!(frame.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn sine_centroid_and_zcr() {
        let sr = 16000;
        let w = sine(1000.0, sr, 16000);
        let p = StftParams::default();
        let f = frame_features(&w, p, FeatureSetId::Frame8).unwrap();
        let bin_width = sr as f64 / p.frame_len as f64;
        let centroid = f.row("centroid").unwrap();
        let zcr = f.row("zcr").unwrap();
        // last frame is zero-padded, skip it
        for n in 0..f.n_frames() - 1 {
            assert!((centroid[n] - 1000.0).abs() <= bin_width, "{}", centroid[n]);
            assert!((zcr[n] - 0.125).abs() <= 0.125 * 0.05, "{}", zcr[n]);
        }
    }

    #[test]
    fn msd_set_rejected_for_frames() {
        let w = Waveform::zeros(4096, 16000);
        assert!(matches!(
            frame_features(&w, StftParams::default(), FeatureSetId::Msd27),
            Err(Error::UnknownFeatureSet(_))
        ));
    }

    #[test]
    fn flux_cases() {
        let p = StftParams::new(4, 2, Window::Hann).unwrap();
        let c = MagSpectrogram::from_frames(&[[1.0, 2.0, 3.0]; 4], p, 8000).unwrap();
        assert_eq!(spectral_flux(&c), vec![0.0; 4]);
        let one = MagSpectrogram::from_frames(&[vec![1.0, 2.0, 3.0]], p, 8000).unwrap();
        assert_eq!(spectral_flux(&one), vec![0.0]);
        let two =
            MagSpectrogram::from_frames(&[vec![1.0, 2.0, 3.0], vec![1.0, 3.0, 3.0]], p, 8000)
                .unwrap();
        assert_eq!(spectral_flux(&two), vec![0.0, 1.0]);
    }

    #[test]
    fn mfcc_of_flat_mel_input_vanishes() {
        let p = StftParams::new(512, 128, Window::Hann).unwrap();
        let m = MagSpectrogram::zeros(2, p, 16000);
        assert!(mfcc(&m, 13, 13).is_err());
        // silence gives an exactly flat log-mel vector (the floor everywhere)
        let c = mfcc(&m, 26, 13).unwrap();
        assert_eq!(c.dim(), 13);
        assert!(c.frames().all(|f| f.iter().all(|v| v.abs() < 1e-6)));
    }
}
