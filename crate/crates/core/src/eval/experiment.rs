use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dsp::{aligned_magnitude, MagSpectrogram, StftParams, Waveform};
use crate::error::{Error, Result};
use crate::features::{
    frame_features, segment_features, segment_onsets, FeatureMatrix, FeatureSetId, Segment,
    SegmentFeatureVector,
};
use crate::index::{
    AudioStore, DbMode, DevDatabase, Entry, FeatureGroups, FileRecord, WeightVector,
};
use crate::synth::{
    estimate_frame_magnitude, estimate_segment_magnitude, synthesize, FrameTarget, Method,
    SegmentTarget, SynthConfig, Target, DEFAULT_LAMBDA_V,
};

use super::metrics::{score, Scores};

/// Parameter grid and split protocol of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: DbMode,
    /// Frame-ladder sizes; ignored in segment mode.
    pub m_values: Vec<usize>,
    /// Development-set sizes in entries (frames or segments).
    pub n_values: Vec<usize>,
    pub p_values: Vec<usize>,
    pub methods: Vec<Method>,
    /// Weight selections; segment mode only.
    pub feature_combos: Vec<FeatureGroups>,
    pub trials: usize,
    pub split_seed: u64,
    /// Also exclude the test file's group (speaker or genre) from the
    /// development draw when groups are labelled.
    pub genre_exclusion: bool,
    /// Test excerpt length in frames (frame mode) or segments.
    pub test_len: usize,
    pub lambda_v: f64,
}

impl ExperimentSpec {
    pub fn frame_default() -> Self {
        Self {
            mode: DbMode::Frame,
            m_values: vec![3, 8, 11, 21],
            n_values: vec![1_000, 10_000, 100_000],
            p_values: vec![1, 5, 10, 20],
            methods: vec![Method::FrameMedian],
            feature_combos: vec![],
            trials: 25,
            split_seed: 0,
            genre_exclusion: true,
            test_len: 300,
            lambda_v: DEFAULT_LAMBDA_V,
        }
    }

    pub fn segment_default() -> Self {
        Self {
            mode: DbMode::Segment,
            m_values: vec![27],
            n_values: vec![10_000],
            p_values: vec![1, 5, 10, 20],
            methods: vec![Method::AddMedian, Method::AddMean, Method::AddMax],
            feature_combos: FeatureGroups::combinations(),
            trials: 25,
            split_seed: 0,
            genre_exclusion: true,
            test_len: 20,
            lambda_v: DEFAULT_LAMBDA_V,
        }
    }

    fn m_grid(&self) -> Vec<usize> {
        match self.mode {
            DbMode::Frame => self.m_values.clone(),
            DbMode::Segment => vec![27],
        }
    }

    fn combo_grid(&self) -> Vec<Option<FeatureGroups>> {
        match self.mode {
            DbMode::Frame => vec![None],
            DbMode::Segment => self.feature_combos.iter().copied().map(Some).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(msg.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.n_values.is_empty() || self.p_values.is_empty() || self.methods.is_empty() {
            return bad("N, P and method grids must be nonempty");
        }
        if self.test_len == 0 {
            return bad("test excerpt length must be at least 1");
        }
        if self.p_values.contains(&0) || self.n_values.contains(&0) {
            return bad("N and P values must be positive");
        }
        if let Some(m) = self.methods.iter().find(|m| m.mode() != self.mode) {
            return Err(Error::InvalidParam(format!(
                "method {m} does not run on {} databases",
                self.mode
            )));
        }
        match self.mode {
            DbMode::Frame => {
                if self.m_values.is_empty() {
                    return bad("M grid must be nonempty");
                }
                for &m in &self.m_values {
                    if !FeatureSetId::from_dim(m)?.is_frame_set() {
                        return Err(Error::UnknownFeatureSet(m.to_string()));
                    }
                }
            }
            DbMode::Segment => {
                if self.feature_combos.is_empty() {
                    return bad("feature combination grid must be nonempty");
                }
            }
        }
        Ok(())
    }
}

/// Derived per-trial seed; shared by every cell so that cells of one trial
/// see the same test excerpt and nested development draws.
pub fn trial_seed(split_seed: u64, trial: usize) -> u64 {
    splitmix64(split_seed ^ splitmix64(trial as u64 ^ 0xA076_1D64_78BD_642F))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Audio and precomputed raw features of every corpus file.
pub struct ExperimentCorpus {
    mode: DbMode,
    params: StftParams,
    sample_rate: u32,
    files: Vec<FileRecord>,
    store: AudioStore,
    frame_feats: Vec<FeatureMatrix>,
    segment_feats: Vec<(Vec<Segment>, Vec<SegmentFeatureVector>)>,
}

/// Development frames are drawn in runs of about this many seconds.
const DEV_CHUNK_SECONDS: f64 = 10.0;
const TEST_DRAW_ATTEMPTS: usize = 100;

impl ExperimentCorpus {
    /// `frame_set` bounds the largest M usable in frame mode.
    pub fn new(
        files: Vec<(FileRecord, Waveform)>,
        mode: DbMode,
        params: StftParams,
        frame_set: FeatureSetId,
    ) -> Result<Self> {
        params.validate()?;
        let sample_rate = files.first().ok_or(Error::EmptyDatabase)?.1.sample_rate;
        let kept: Vec<_> = files
            .into_iter()
            .filter(|(rec, w)| {
                let ok = w.sample_rate == sample_rate && w.len() >= params.frame_len;
                if !ok {
                    warn!("leaving '{}' out of the experiment corpus", rec.id);
                }
                ok
            })
            .collect();
        let mut frame_feats = Vec::new();
        let mut segment_feats = Vec::new();
        match mode {
            DbMode::Frame => {
                frame_feats = kept
                    .par_iter()
                    .map(|(_, w)| frame_features(w, params, frame_set))
                    .collect::<Result<_>>()?;
            }
            DbMode::Segment => {
                segment_feats = kept
                    .par_iter()
                    .map(|(_, w)| {
                        let segs = segment_onsets(w, params)?;
                        let feats = segment_features(w, &segs, params)?;
                        Ok((segs, feats))
                    })
                    .collect::<Result<_>>()?;
            }
        }
        let mut store = AudioStore::new(params);
        let mut records = Vec::with_capacity(kept.len());
        for (rec, w) in kept {
            store.insert(&rec.id, w);
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        Ok(Self {
            mode,
            params,
            sample_rate,
            files: records,
            store,
            frame_feats,
            segment_feats,
        })
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    pub fn store(&self) -> &AudioStore {
        &self.store
    }

    pub fn mode(&self) -> DbMode {
        self.mode
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Entries a file contributes: frames or segments.
    fn units(&self, file: usize) -> usize {
        match self.mode {
            DbMode::Frame => self.frame_feats[file].n_frames(),
            DbMode::Segment => self.segment_feats[file].0.len(),
        }
    }

    fn waveform(&self, file: usize) -> &Waveform {
        self.store
            .get(&self.files[file].id)
            .expect("store holds every corpus file")
    }

    fn frame_dim(&self) -> usize {
        self.frame_feats.first().map_or(0, FeatureMatrix::dim)
    }
}

/// Test excerpt of one trial: units `[first, first + len)` of `file`.
#[derive(Debug, Clone)]
struct TestPick {
    file: usize,
    first: usize,
    len: usize,
}

/// Development units in draw order as `(file, unit index)`.
struct TrialPlan {
    seed: u64,
    test: TestPick,
    dev: Vec<(usize, usize)>,
}

fn eligible_dev_files(corpus: &ExperimentCorpus, spec: &ExperimentSpec, test_file: usize) -> Vec<usize> {
    let test_group = corpus.files[test_file].group.as_ref();
    (0..corpus.files.len())
        .filter(|&f| f != test_file)
        .filter(|&f| {
            !(spec.genre_exclusion
                && test_group.is_some()
                && corpus.files[f].group.as_ref() == test_group)
        })
        .collect()
}

fn plan_trial(
    corpus: &ExperimentCorpus,
    spec: &ExperimentSpec,
    trial: usize,
    max_n: usize,
) -> Result<TrialPlan> {
    let seed = trial_seed(spec.split_seed, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<usize> = (0..corpus.files.len())
        .filter(|&f| corpus.units(f) > 0 && !eligible_dev_files(corpus, spec, f).is_empty())
        .collect();
    if candidates.is_empty() {
        return Err(Error::CorpusTooSmall {
            cell: format!("trial {trial}"),
            reason: "no file can serve as test excerpt with a disjoint development set".into(),
        });
    }
    let mut test = None;
    for _ in 0..TEST_DRAW_ATTEMPTS {
        let file = candidates[rng.random_range(0..candidates.len())];
        let units = corpus.units(file);
        let len = spec.test_len.min(units);
        let first = rng.random_range(0..=units - len);
        let pick = TestPick { file, first, len };
        if reference(corpus, &pick)?.frobenius_norm() > 0.0 {
            test = Some(pick);
            break;
        }
    }
    let test = test.ok_or_else(|| Error::CorpusTooSmall {
        cell: format!("trial {trial}"),
        reason: "could not draw a non-silent test excerpt".into(),
    })?;

    let mut files = eligible_dev_files(corpus, spec, test.file);
    let mut dev = Vec::new();
    match corpus.mode {
        DbMode::Frame => {
            let chunk = ((DEV_CHUNK_SECONDS * corpus.sample_rate as f64 / corpus.params.hop as f64)
                .round() as usize)
                .max(1);
            let mut chunks: Vec<(usize, usize, usize)> = files
                .iter()
                .flat_map(|&f| {
                    let n = corpus.units(f);
                    (0..n).step_by(chunk).map(move |s| (f, s, (s + chunk).min(n)))
                })
                .collect();
            chunks.shuffle(&mut rng);
            for (f, s, e) in chunks {
                if dev.len() >= max_n {
                    break;
                }
                dev.extend((s..e).map(|u| (f, u)));
            }
        }
        DbMode::Segment => {
            files.shuffle(&mut rng);
            for f in files {
                if dev.len() >= max_n {
                    break;
                }
                dev.extend((0..corpus.units(f)).map(|u| (f, u)));
            }
        }
    }
    dev.truncate(max_n);
    Ok(TrialPlan { seed, test, dev })
}

/// Magnitudes the estimate is scored against.
fn reference(corpus: &ExperimentCorpus, t: &TestPick) -> Result<MagSpectrogram> {
    match corpus.mode {
        DbMode::Frame => Ok(corpus
            .store
            .magnitude(&corpus.files[t.file].id)?
            .frame_range(t.first, t.first + t.len)),
        DbMode::Segment => aligned_magnitude(&segment_target(corpus, t).audio.unwrap(), corpus.params),
    }
}

fn segment_target(corpus: &ExperimentCorpus, t: &TestPick) -> SegmentTarget {
    let (segs, feats) = &corpus.segment_feats[t.file];
    let segs = &segs[t.first..t.first + t.len];
    let offset = segs[0].start;
    let end = segs.last().unwrap().end();
    let audio = corpus.waveform(t.file).slice(offset, end - offset);
    SegmentTarget {
        segments: segs
            .iter()
            .map(|s| Segment::new(s.start - offset, s.length))
            .collect(),
        features: feats[t.first..t.first + t.len].to_vec(),
        len: audio.len(),
        sample_rate: corpus.sample_rate,
        audio: Some(audio),
    }
}

fn frame_target(corpus: &ExperimentCorpus, t: &TestPick, set: FeatureSetId) -> Result<FrameTarget> {
    let m = set.dim();
    let feats = &corpus.frame_feats[t.file];
    let values = (t.first..t.first + t.len)
        .flat_map(|n| feats.frame(n)[..m].iter().copied())
        .collect();
    Ok(FrameTarget {
        features: FeatureMatrix::new(values, set.names(), t.len, corpus.params)?,
        len: corpus.params.output_len(t.len),
        sample_rate: corpus.sample_rate,
    })
}

fn dev_database(
    corpus: &ExperimentCorpus,
    dev: &[(usize, usize)],
    set: FeatureSetId,
) -> Result<DevDatabase> {
    let p = corpus.params;
    let m = set.dim();
    let mut entries = Vec::with_capacity(dev.len());
    let mut raw = Vec::with_capacity(dev.len() * m);
    for &(f, u) in dev {
        match corpus.mode {
            DbMode::Frame => {
                entries.push(Entry {
                    file: f,
                    start: u * p.hop,
                    length: p.frame_len,
                });
                raw.extend_from_slice(&corpus.frame_feats[f].frame(u)[..m]);
            }
            DbMode::Segment => {
                let (segs, feats) = &corpus.segment_feats[f];
                entries.push(Entry {
                    file: f,
                    start: segs[u].start,
                    length: segs[u].length,
                });
                raw.extend(feats[u].to_vec());
            }
        }
    }
    DevDatabase::from_raw(
        corpus.mode,
        set,
        p,
        corpus.sample_rate,
        corpus.files.clone(),
        entries,
        raw,
    )
}

/// One scored synthesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub method: String,
    pub feature_combo: String,
    pub seed: u64,
    pub relative_error_db: f64,
    pub mse_db: f64,
    pub kl: f64,
    #[serde(skip)]
    pub trial: usize,
    #[serde(skip)]
    pub test_file: String,
    #[serde(skip)]
    pub dev_files: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub method: String,
    pub feature_combo: String,
    pub trials: usize,
    pub relative_error_db: f64,
    pub mse_db: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<TrialRecord>,
}

impl ExperimentReport {
    /// Per-cell means, in the grid order of the records.
    pub fn summary(&self) -> Vec<CellSummary> {
        let mut out: Vec<CellSummary> = Vec::new();
        for r in &self.records {
            let same = out.last().is_some_and(|c| {
                c.m == r.m
                    && c.n == r.n
                    && c.p == r.p
                    && c.method == r.method
                    && c.feature_combo == r.feature_combo
            });
            if !same {
                out.push(CellSummary {
                    m: r.m,
                    n: r.n,
                    p: r.p,
                    method: r.method.clone(),
                    feature_combo: r.feature_combo.clone(),
                    trials: 0,
                    relative_error_db: 0.0,
                    mse_db: 0.0,
                    kl: 0.0,
                });
            }
            let c = out.last_mut().unwrap();
            c.trials += 1;
            c.relative_error_db += r.relative_error_db;
            c.mse_db += r.mse_db;
            c.kl += r.kl;
        }
        for c in &mut out {
            let t = c.trials as f64;
            c.relative_error_db /= t;
            c.mse_db /= t;
            c.kl /= t;
        }
        out
    }

    /// Mean of the cell matching every given coordinate.
    pub fn cell(&self, m: usize, n: usize, p: usize, method: &str, combo: &str) -> Option<CellSummary> {
        self.summary().into_iter().find(|c| {
            c.m == m && c.n == n && c.p == p && c.method == method && c.feature_combo == combo
        })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        w.into_inner()
            .map_err(|e| Error::Format(format!("csv buffer: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let bytes = self.to_csv()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())?)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{}", self.summary_json()?).map_err(|e| Error::io(path, e))
    }
}

struct Task {
    trial: usize,
    n_idx: usize,
    m_idx: usize,
}

fn frame_combo_label(m: usize) -> String {
    format!("frame{m}")
}

impl ExperimentCorpus {
    /// Runs every cell of `spec`. Records are ordered by M, N, P, method,
    /// feature combination and trial, independent of thread scheduling.
    pub fn run(&self, spec: &ExperimentSpec) -> Result<ExperimentReport> {
        spec.validate()?;
        if spec.mode != self.mode {
            return Err(Error::DatabaseMismatch(format!(
                "{} experiment on a {} corpus",
                spec.mode, self.mode
            )));
        }
        let m_grid = spec.m_grid();
        if self.mode == DbMode::Frame {
            if let Some(&m) = m_grid.iter().find(|&&m| m > self.frame_dim()) {
                return Err(Error::InvalidParam(format!(
                    "M={m} exceeds the {} precomputed features",
                    self.frame_dim()
                )));
            }
        }
        let max_n = *spec.n_values.iter().max().unwrap();
        let plans: Vec<TrialPlan> = (0..spec.trials)
            .map(|t| plan_trial(self, spec, t, max_n))
            .collect::<Result<_>>()?;
        for (t, plan) in plans.iter().enumerate() {
            if let Some(&n) = spec.n_values.iter().find(|&&n| n > plan.dev.len()) {
                return Err(Error::CorpusTooSmall {
                    cell: format!("N={n}, trial {t}"),
                    reason: format!(
                        "only {} development entries remain after excluding the test material",
                        plan.dev.len()
                    ),
                });
            }
        }
        let min_n = *spec.n_values.iter().min().unwrap();
        if let Some(&p) = spec.p_values.iter().find(|&&p| p > min_n) {
            return Err(Error::TooManyNeighbors {
                requested: p,
                available: min_n,
            });
        }
        info!(
            "running {} trials over {} cells",
            spec.trials,
            m_grid.len() * spec.n_values.len() * spec.p_values.len() * spec.methods.len()
        );

        let mut tasks = Vec::new();
        for trial in 0..spec.trials {
            for n_idx in 0..spec.n_values.len() {
                for m_idx in 0..m_grid.len() {
                    tasks.push(Task { trial, n_idx, m_idx });
                }
            }
        }
        let results: Vec<Vec<(Vec<usize>, TrialRecord)>> = tasks
            .par_iter()
            .map(|task| self.run_task(spec, &plans[task.trial], task))
            .collect::<Result<_>>()?;
        let mut keyed: Vec<(Vec<usize>, TrialRecord)> = results.into_iter().flatten().collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(ExperimentReport {
            records: keyed.into_iter().map(|(_, r)| r).collect(),
        })
    }

    fn run_task(
        &self,
        spec: &ExperimentSpec,
        plan: &TrialPlan,
        task: &Task,
    ) -> Result<Vec<(Vec<usize>, TrialRecord)>> {
        let m = spec.m_grid()[task.m_idx];
        let n = spec.n_values[task.n_idx];
        let set = FeatureSetId::from_dim(m)?;
        let dev = &plan.dev[..n];
        let db = dev_database(self, dev, set)?;
        let dev_files: BTreeSet<String> = dev
            .iter()
            .map(|&(f, _)| self.files[f].id.clone())
            .collect();
        let reference = reference(self, &plan.test)?;
        let test_file = self.files[plan.test.file].id.clone();
        let target = match self.mode {
            DbMode::Frame => Target::Frames(frame_target(self, &plan.test, set)?),
            DbMode::Segment => Target::Segments(segment_target(self, &plan.test)),
        };

        let mut out = Vec::new();
        for (p_idx, &p) in spec.p_values.iter().enumerate() {
            for (method_idx, &method) in spec.methods.iter().enumerate() {
                for (combo_idx, combo) in spec.combo_grid().into_iter().enumerate() {
                    let weights = match combo {
                        Some(g) => WeightVector::from_groups(g)?,
                        None => WeightVector::ones(m),
                    };
                    let cfg = SynthConfig {
                        method,
                        p,
                        weights,
                        lambda_v: spec.lambda_v,
                        gl_iters: 1,
                        gl_seed: plan.seed,
                        boundary_fade_ms: 0.0,
                    };
                    let estimate = self.estimate(&target, &db, &cfg)?;
                    let Scores {
                        relative_error_db,
                        mse_db,
                        kl,
                    } = score(&reference, &estimate)?;
                    let key = vec![task.m_idx, task.n_idx, p_idx, method_idx, combo_idx, task.trial];
                    out.push((
                        key,
                        TrialRecord {
                            m,
                            n,
                            p,
                            method: method.to_string(),
                            feature_combo: combo.map_or_else(|| frame_combo_label(m), |g| g.to_string()),
                            seed: plan.seed,
                            relative_error_db,
                            mse_db,
                            kl,
                            trial: task.trial,
                            test_file: test_file.clone(),
                            dev_files: dev_files.clone(),
                        },
                    ));
                }
            }
        }
        Ok(out)
    }

    /// Additive methods are scored on their magnitude estimate, concatenative
    /// ones on the magnitudes of the rendered waveform.
    fn estimate(&self, target: &Target, db: &DevDatabase, cfg: &SynthConfig) -> Result<MagSpectrogram> {
        match target {
            Target::Frames(t) => estimate_frame_magnitude(t, db, &self.store, cfg),
            Target::Segments(t) if cfg.method.is_concatenative() => {
                let w = synthesize(target, db, &self.store, cfg)?;
                aligned_magnitude(&w, self.params).inspect(|m| {
                    debug_assert_eq!(m.n_frames(), t.len.div_ceil(self.params.hop));
                })
            }
            Target::Segments(t) => estimate_segment_magnitude(t, db, &self.store, cfg),
        }
    }
}
