use crate::dsp::MagSpectrogram;
use crate::error::{Error, Result};

/// Lowest value reported by the dB metrics.
pub const DB_FLOOR: f64 = -300.0;
/// Floor applied to both probabilities inside the KL log ratio.
pub const KL_EPS: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-9;

fn check_shapes(s: &MagSpectrogram, s_hat: &MagSpectrogram) -> Result<()> {
    if s.n_bins() != s_hat.n_bins() || s.n_frames() != s_hat.n_frames() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} against {}x{}",
            s.n_bins(),
            s.n_frames(),
            s_hat.n_bins(),
            s_hat.n_frames()
        )));
    }
    Ok(())
}

/// `log10(||S - S_hat||_F / ||S||_F)`, or `None` when the error is zero.
fn log_ratio(s: &MagSpectrogram, s_hat: &MagSpectrogram) -> Result<Option<f64>> {
    check_shapes(s, s_hat)?;
    let den = s.frobenius_norm();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num = s
        .values()
        .iter()
        .zip(s_hat.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok((num > 0.0).then(|| (num / den).log10()))
}

pub fn mse_db(s: &MagSpectrogram, s_hat: &MagSpectrogram) -> Result<f64> {
    Ok(log_ratio(s, s_hat)?.map_or(DB_FLOOR, |l| (10.0 * l).max(DB_FLOOR)))
}

pub fn relative_error_db(s: &MagSpectrogram, s_hat: &MagSpectrogram) -> Result<f64> {
    Ok(log_ratio(s, s_hat)?.map_or(DB_FLOOR, |l| (2.0 * (10.0 * l)).max(DB_FLOOR)))
}

/// Scales `s` to unit total mass.
pub fn normalize_spectrogram(s: &MagSpectrogram) -> Result<MagSpectrogram> {
    let total = s.sum();
    if total <= 0.0 {
        return Err(Error::ZeroReference);
    }
    let values = s.values().iter().map(|v| v / total).collect();
    MagSpectrogram::new(values, s.n_frames(), s.params, s.sample_rate)
}

/// As [`normalize_spectrogram`], but an all-zero input becomes the uniform
/// distribution.
pub fn normalize_or_uniform(s: &MagSpectrogram) -> Result<MagSpectrogram> {
    if s.sum() > 0.0 {
        return normalize_spectrogram(s);
    }
    let n = s.values().len();
    if n == 0 {
        return Err(Error::ZeroReference);
    }
    MagSpectrogram::new(vec![1.0 / n as f64; n], s.n_frames(), s.params, s.sample_rate)
}

/// `sum p ln(max(p, eps) / max(q, eps))` over entries with `p > 0`, natural
/// log. Both inputs must sum to one.
pub fn kl_divergence(p: &MagSpectrogram, q: &MagSpectrogram) -> Result<f64> {
    check_shapes(p, q)?;
    for s in [p, q] {
        let total = s.sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotNormalized(total));
        }
    }
    Ok(p.values()
        .iter()
        .zip(q.values())
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a.max(KL_EPS) / b.max(KL_EPS)).ln())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub relative_error_db: f64,
    pub mse_db: f64,
    pub kl: f64,
}

/// All three metrics of an estimate against its reference.
pub fn score(s: &MagSpectrogram, s_hat: &MagSpectrogram) -> Result<Scores> {
    Ok(Scores {
        relative_error_db: relative_error_db(s, s_hat)?,
        mse_db: mse_db(s, s_hat)?,
        kl: kl_divergence(&normalize_spectrogram(s)?, &normalize_or_uniform(s_hat)?)?,
    })
}
