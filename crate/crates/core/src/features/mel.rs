/// Triangular filters on the HTK mel scale, evaluated at the one-sided FFT
/// bin frequencies and spanning 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_bins: usize,
    // one row of n_bins weights per band
    weights: Vec<Vec<f64>>,
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl MelFilterbank {
    pub fn new(n_mels: usize, frame_len: usize, sample_rate: u32) -> Self {
        let n_bins = frame_len / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = |k: usize| k as f64 * sample_rate as f64 / frame_len as f64;
        let weights = (0..n_mels)
            .map(|b| {
                let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = bin_hz(k);
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                    })
                    .collect()
            })
            .collect();
        Self { n_bins, weights }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn weights(&self, band: usize) -> &[f64] {
        &self.weights[band]
    }

    /// Band energies of one magnitude frame (weights applied to |X|^2).
    pub fn energies(&self, magnitude: &[f64]) -> Vec<f64> {
        debug_assert_eq!(magnitude.len(), self.n_bins);
        self.weights
            .iter()
            .map(|w| w.iter().zip(magnitude).map(|(w, m)| w * m * m).sum())
            .collect()
    }
}
