use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::dsp::{aligned_magnitude_with, MagSpectrogram, StftParams, StftProcessor, Waveform};
use crate::error::{Error, Result};

struct Stored {
    waveform: Waveform,
    plain: OnceLock<MagSpectrogram>,
    aligned: OnceLock<MagSpectrogram>,
}

/// Development audio keyed by file id, with magnitude spectrograms computed
/// on first use.
pub struct AudioStore {
    params: StftParams,
    processor: OnceLock<StftProcessor>,
    files: BTreeMap<String, Stored>,
}

impl AudioStore {
    pub fn new(params: StftParams) -> Self {
        Self {
            params,
            processor: OnceLock::new(),
            files: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn insert(&mut self, id: &str, w: Waveform) {
        self.files.insert(
            id.to_string(),
            Stored {
                waveform: w,
                plain: OnceLock::new(),
                aligned: OnceLock::new(),
            },
        );
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Option<&Waveform> {
        self.files.get(id).map(|s| &s.waveform)
    }

    pub fn waveform(&self, id: &str) -> Result<&Waveform> {
        self.get(id).ok_or_else(|| Error::MissingAudio(id.to_string()))
    }

    fn processor(&self) -> Result<&StftProcessor> {
        if let Some(p) = self.processor.get() {
            return Ok(p);
        }
        let p = StftProcessor::new(self.params)?;
        Ok(self.processor.get_or_init(|| p))
    }

    fn stored(&self, id: &str) -> Result<&Stored> {
        self.files.get(id).ok_or_else(|| Error::MissingAudio(id.to_string()))
    }

    /// Plain STFT magnitudes (frame `n` at sample `n * hop`, trailing
    /// partial frame padded).
    pub fn magnitude(&self, id: &str) -> Result<&MagSpectrogram> {
        let s = self.stored(id)?;
        if let Some(m) = s.plain.get() {
            return Ok(m);
        }
        let proc = self.processor()?;
        let m = proc.forward(&s.waveform.samples, s.waveform.sample_rate)?.magnitude();
        Ok(s.plain.get_or_init(|| m))
    }

    /// Magnitudes in the aligned framing used for segment spans.
    pub fn aligned(&self, id: &str) -> Result<&MagSpectrogram> {
        let s = self.stored(id)?;
        if let Some(m) = s.aligned.get() {
            return Ok(m);
        }
        let m = aligned_magnitude_with(self.processor()?, &s.waveform)?;
        Ok(s.aligned.get_or_init(|| m))
    }
}

impl std::fmt::Debug for AudioStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AudioStore")
            .field("params", &self.params)
            .field("files", &self.files.keys().collect::<Vec<_>>())
            .finish()
    }
}
