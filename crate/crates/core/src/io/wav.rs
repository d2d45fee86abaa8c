use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use log::warn;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

fn wav_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Reads PCM integer or 32-bit float WAV, averaging channels to mono.
/// Integer samples of `b` bits are scaled by `2^-(b-1)`, so 16-bit audio maps
/// onto `[-1, 1)` by `1/32768`.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(wav_err(path, "zero channels"));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (SampleFormat::Int, bits @ 8..=32) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
        (fmt, bits) => {
            return Err(wav_err(
                path,
                format!("unsupported sample format {fmt:?} with {bits} bits"),
            ))
        }
    };
    let samples: Vec<f64> = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate).map_err(|e| wav_err(path, e))
}

/// Writes 16-bit mono PCM and returns the number of clipped samples.
pub fn write_wav(w: &Waveform, path: &Path) -> Result<usize> {
    if let Some(i) = w.samples.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidParam(format!("sample {i} is not finite")));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    let mut clipped = 0;
    for &x in &w.samples {
        let code = (x * 32768.0).round();
        let v = if code > i16::MAX as f64 {
            clipped += 1;
            i16::MAX
        } else if code < i16::MIN as f64 {
            clipped += 1;
            i16::MIN
        } else {
            code as i16
        };
        writer.write_sample(v).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))?;
    if clipped > 0 {
        warn!("{}: clipped {clipped} samples", path.display());
    }
    Ok(clipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        let w = Waveform::new(vec![0.0, 2.0, -0.5, -1.0], 8000).unwrap();
        assert_eq!(write_wav(&w, &path).unwrap(), 1);
        let r = read_wav(&path).unwrap();
        assert_eq!(r.samples, vec![0.0, 32767.0 / 32768.0, -0.5, -1.0]);
        assert_eq!(r.sample_rate, 8000);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_wav(Path::new("/nonexistent/x.wav")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.wav");
        std::fs::write(&path, b"RIFF not really").unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Wav { .. })));
    }
}
