use crate::dsp::{peak_abs, time_stretch, Waveform};
use crate::error::{Error, Result};
use crate::index::{AudioStore, DbMode, DevDatabase};

use super::grid::{build_candidate_grid, viterbi_path};
use super::{Method, SegmentTarget, SynthConfig};

const LOUDNESS_PEAK: usize = 25;

pub(super) fn check_segment_db(target: &SegmentTarget, db: &DevDatabase) -> Result<()> {
    if db.mode != DbMode::Segment {
        return Err(Error::DatabaseMismatch("segment methods need a segment database".into()));
    }
    if db.sample_rate != target.sample_rate {
        return Err(Error::DatabaseMismatch(format!(
            "target at {} Hz, database at {} Hz",
            target.sample_rate, db.sample_rate
        )));
    }
    target.validate()
}

/// Entry chosen for every target segment: the nearest neighbor, or the
/// Viterbi path over P candidates for Cross-Penalized.
pub fn select_segments(target: &SegmentTarget, db: &DevDatabase, cfg: &SynthConfig) -> Result<Vec<usize>> {
    check_segment_db(target, db)?;
    cfg.validate(db)?;
    let queries = target.queries(db)?;
    if cfg.method == Method::CrossPenalized {
        let grid = build_candidate_grid(&queries, db, cfg.p, &cfg.weights)?;
        Ok(viterbi_path(&grid, cfg.lambda_v).entries)
    } else {
        Ok(build_candidate_grid(&queries, db, 1, &cfg.weights)?.nearest())
    }
}

/// Places the audio of `entries[i]` at the start of target segment `i`.
/// Without normalization a replacement is truncated or zero-padded to the
/// slot; with it, the replacement is stretched to the slot length and scaled
/// to the target segment's peak (or, lacking target audio, to its loudness).
pub fn render_segments(
    target: &SegmentTarget,
    db: &DevDatabase,
    store: &AudioStore,
    entries: &[usize],
    normalize: bool,
    fade_ms: f64,
) -> Result<Waveform> {
    if entries.len() != target.segments.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} entries for {} segments",
            entries.len(),
            target.segments.len()
        )));
    }
    let mut out = vec![0.0; target.len];
    let fade = (fade_ms * target.sample_rate as f64 / 1000.0).round() as usize;
    for ((seg, feats), &e) in target.segments.iter().zip(&target.features).zip(entries) {
        let entry = db.entry(e);
        let source = store.waveform(db.source_file(e))?;
        let piece = source.slice(entry.start, entry.length);
        let slot = &mut out[seg.start..seg.end()];
        if normalize {
            let mut stretched = time_stretch(&piece, seg.length)?;
            let have = stretched.peak();
            let gain = match &target.audio {
                Some(a) => {
                    let want = peak_abs(&a.samples[seg.start..seg.end()]);
                    if want == 0.0 || have == 0.0 {
                        0.0
                    } else {
                        want / have
                    }
                }
                None => {
                    let ln = db.raw_row(e)[LOUDNESS_PEAK];
                    10f64.powf((feats.loudness_peak - ln) / 20.0)
                }
            };
            if gain != 1.0 {
                for x in &mut stretched.samples {
                    *x *= gain;
                }
            }
            slot.copy_from_slice(&stretched.samples);
        } else {
            let n = slot.len().min(piece.len());
            slot[..n].copy_from_slice(&piece.samples[..n]);
        }
        apply_fade(slot, fade);
    }
    Waveform::new(out, target.sample_rate)
}

fn apply_fade(x: &mut [f64], ramp: usize) {
    let ramp = ramp.min(x.len() / 2);
    if ramp == 0 {
        return;
    }
    let n = x.len();
    for k in 0..ramp {
        let g = k as f64 / ramp as f64;
        x[k] *= g;
        x[n - 1 - k] *= g;
    }
}

fn run(target: &SegmentTarget, db: &DevDatabase, store: &AudioStore, cfg: &SynthConfig, method: Method) -> Result<Waveform> {
    let cfg = SynthConfig {
        method,
        ..cfg.clone()
    };
    let entries = select_segments(target, db, &cfg)?;
    render_segments(
        target,
        db,
        store,
        &entries,
        method != Method::CrossPlain,
        cfg.boundary_fade_ms,
    )
}

pub fn cross_plain(target: &SegmentTarget, db: &DevDatabase, store: &AudioStore, cfg: &SynthConfig) -> Result<Waveform> {
    run(target, db, store, cfg, Method::CrossPlain)
}

pub fn cross_normalized(target: &SegmentTarget, db: &DevDatabase, store: &AudioStore, cfg: &SynthConfig) -> Result<Waveform> {
    run(target, db, store, cfg, Method::CrossNormalized)
}

pub fn cross_penalized(target: &SegmentTarget, db: &DevDatabase, store: &AudioStore, cfg: &SynthConfig) -> Result<Waveform> {
    run(target, db, store, cfg, Method::CrossPenalized)
}
