use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{StftParams, Waveform};
use crate::error::{Error, Result};
use crate::features::{frame_features, segment_features, segment_onsets, FeatureSetId};

use super::knn::{knn_rows, NeighborSet, WeightVector};
use super::stats::{compute_stats, StandardizationStats};
use super::store::AudioStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbMode {
    Frame,
    Segment,
}

impl std::str::FromStr for DbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(DbMode::Frame),
            "segment" => Ok(DbMode::Segment),
            other => Err(Error::InvalidParam(format!("unknown database mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for DbMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DbMode::Frame => "frame",
            DbMode::Segment => "segment",
        })
    }
}

/// One audio file of a corpus. `group` carries a speaker or genre label used
/// for split exclusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub n_samples: usize,
}

/// Where an entry's audio lives: `file` indexes the database file table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Entry {
    pub file: usize,
    pub start: usize,
    pub length: usize,
}

/// Immutable store of standardized development features and the audio
/// locations they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct DevDatabase {
    pub mode: DbMode,
    pub feature_set: FeatureSetId,
    pub params: StftParams,
    pub sample_rate: u32,
    stats: StandardizationStats,
    files: Vec<FileRecord>,
    entries: Vec<Entry>,
    features: Vec<f64>,
}

/// Entry spans and raw (unstandardized) feature rows of one file.
#[derive(Debug, Clone)]
pub struct FileFeatures {
    pub spans: Vec<(usize, usize)>,
    pub rows: Vec<f64>,
}

/// Features of one file in the layout the database mode expects: one row per
/// STFT frame, or one 27-value row per onset segment.
pub fn file_features(
    w: &Waveform,
    mode: DbMode,
    set: FeatureSetId,
    p: StftParams,
) -> Result<FileFeatures> {
    match mode {
        DbMode::Frame => {
            let f = frame_features(w, p, set)?;
            let spans = (0..f.n_frames()).map(|n| (n * p.hop, p.frame_len)).collect();
            Ok(FileFeatures {
                spans,
                rows: f.frames().flatten().copied().collect(),
            })
        }
        DbMode::Segment => {
            if set != FeatureSetId::Msd27 {
                return Err(Error::UnknownFeatureSet(format!(
                    "segment databases use msd27, not {set}"
                )));
            }
            let segs = segment_onsets(w, p)?;
            let feats = segment_features(w, &segs, p)?;
            Ok(FileFeatures {
                spans: segs.iter().map(|s| (s.start, s.length)).collect(),
                rows: feats.iter().flat_map(|f| f.to_vec()).collect(),
            })
        }
    }
}

impl DevDatabase {
    /// Standardizes `raw` (row-major, one row per entry) with stats computed
    /// from exactly these rows.
    pub fn from_raw(
        mode: DbMode,
        feature_set: FeatureSetId,
        params: StftParams,
        sample_rate: u32,
        files: Vec<FileRecord>,
        entries: Vec<Entry>,
        raw: Vec<f64>,
    ) -> Result<Self> {
        let dim = feature_set.dim();
        if entries.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if raw.len() != entries.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values for {} entries of dimension {}",
                raw.len(),
                entries.len(),
                dim
            )));
        }
        if let Some(e) = entries.iter().find(|e| e.file >= files.len()) {
            return Err(Error::DatabaseMismatch(format!(
                "entry references file #{} of {}",
                e.file,
                files.len()
            )));
        }
        let rows: Vec<&[f64]> = raw.chunks_exact(dim).collect();
        let stats = if rows.len() == 1 {
            StandardizationStats::singleton(rows[0])
        } else {
            compute_stats(&rows)?
        };
        let mut features = Vec::with_capacity(raw.len());
        for r in &rows {
            features.extend(stats.standardize(r)?);
        }
        Ok(Self {
            mode,
            feature_set,
            params,
            sample_rate,
            stats,
            files,
            entries,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_set.dim()
    }

    pub fn stats(&self) -> &StandardizationStats {
        &self.stats
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &Entry {
        &self.entries[i]
    }

    pub fn source_file(&self, i: usize) -> &str {
        &self.files[self.entries[i].file].id
    }

    /// Standardized feature vector of entry `i`.
    pub fn feature_row(&self, i: usize) -> &[f64] {
        let m = self.dim();
        &self.features[i * m..(i + 1) * m]
    }

    /// Raw feature vector of entry `i`.
    pub fn raw_row(&self, i: usize) -> Vec<f64> {
        self.stats
            .unstandardize(self.feature_row(i))
            .expect("row dimension matches stats")
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Applies the development stats to a raw query.
    pub fn standardize_query(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.stats.standardize(raw)
    }

    /// `query` must already be standardized with [`Self::stats`].
    pub fn knn(&self, query: &[f64], p: usize, w: &WeightVector) -> Result<NeighborSet> {
        knn_rows(query, &self.features, self.dim(), p, w)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            mode: self.mode,
            feature_set: self.feature_set,
            feature_names: self.feature_set.names(),
            stft: self.params,
            sample_rate: self.sample_rate,
            dim: self.dim(),
            n_entries: self.len(),
            stats: self.stats.clone(),
            files: self.files.clone(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;

        let path = dir.join("features.f64");
        let mut bytes = Vec::with_capacity(self.features.len() * 8);
        for v in &self.features {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;

        let path = dir.join("entries.jsonl");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        for e in &self.entries {
            let line = serde_json::to_string(&EntryLine {
                source_file: self.files[e.file].id.clone(),
                start: e.start,
                length: e.length,
            })?;
            writeln!(out, "{line}").map_err(|err| Error::io(&path, err))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest {} v{}",
                manifest.format, manifest.version
            )));
        }
        if manifest.dim != manifest.feature_set.dim() || manifest.stats.dim() != manifest.dim {
            return Err(Error::Format("manifest dimensions disagree".into()));
        }

        let path = dir.join("features.f64");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = manifest.n_entries * manifest.dim * 8;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "features.f64 has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let features: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let path = dir.join("entries.jsonl");
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let ids: std::collections::HashMap<&str, usize> = manifest
            .files
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.as_str(), i))
            .collect();
        let mut entries = Vec::with_capacity(manifest.n_entries);
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EntryLine = serde_json::from_str(&line)?;
            let file = *ids.get(rec.source_file.as_str()).ok_or_else(|| {
                Error::Format(format!(
                    "entries.jsonl line {}: unknown source file '{}'",
                    lineno + 1,
                    rec.source_file
                ))
            })?;
            entries.push(Entry {
                file,
                start: rec.start,
                length: rec.length,
            });
        }
        if entries.len() != manifest.n_entries {
            return Err(Error::Format(format!(
                "entries.jsonl has {} records, manifest says {}",
                entries.len(),
                manifest.n_entries
            )));
        }
        Ok(Self {
            mode: manifest.mode,
            feature_set: manifest.feature_set,
            params: manifest.stft,
            sample_rate: manifest.sample_rate,
            stats: manifest.stats,
            files: manifest.files,
            entries,
            features,
        })
    }
}

const MANIFEST_FORMAT: &str = "exsynth-db";
const MANIFEST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    mode: DbMode,
    feature_set: FeatureSetId,
    feature_names: Vec<String>,
    stft: StftParams,
    sample_rate: u32,
    dim: usize,
    n_entries: usize,
    stats: StandardizationStats,
    files: Vec<FileRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryLine {
    source_file: String,
    start: usize,
    length: usize,
}

/// A corpus member on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub group: Option<String>,
}

/// Builds a database from in-memory audio. Files whose sample rate differs
/// from the first file's, or that are shorter than one frame, are skipped
/// with a warning.
pub fn build_from_audio(
    files: Vec<(FileRecord, Waveform)>,
    mode: DbMode,
    set: FeatureSetId,
    p: StftParams,
) -> Result<(DevDatabase, AudioStore)> {
    p.validate()?;
    let Some(sample_rate) = files.first().map(|(_, w)| w.sample_rate) else {
        return Err(Error::EmptyDatabase);
    };
    let kept: Vec<(FileRecord, Waveform)> = files
        .into_iter()
        .filter(|(rec, w)| {
            if w.sample_rate != sample_rate {
                warn!(
                    "skipping '{}': sample rate {} differs from {}",
                    rec.id, w.sample_rate, sample_rate
                );
                return false;
            }
            if w.len() < p.frame_len {
                warn!("skipping '{}': shorter than one frame", rec.id);
                return false;
            }
            true
        })
        .collect();
    let analysed: Vec<Result<FileFeatures>> = kept
        .par_iter()
        .map(|(_, w)| file_features(w, mode, set, p))
        .collect();

    let mut records = Vec::new();
    let mut entries = Vec::new();
    let mut raw = Vec::new();
    let mut store = AudioStore::new(p);
    for ((rec, w), feats) in kept.into_iter().zip(analysed) {
        let feats = feats?;
        let file = records.len();
        entries.extend(feats.spans.iter().map(|&(start, length)| Entry {
            file,
            start,
            length,
        }));
        raw.extend(feats.rows);
        store.insert(&rec.id, w);
        records.push(rec);
    }
    let db = DevDatabase::from_raw(mode, set, p, sample_rate, records, entries, raw)?;
    Ok((db, store))
}

/// Reads every corpus file and builds the database; unreadable files are
/// logged and skipped.
pub fn build_database(
    corpus: &[CorpusFile],
    mode: DbMode,
    set: FeatureSetId,
    p: StftParams,
) -> Result<(DevDatabase, AudioStore)> {
    let mut files = Vec::new();
    for f in corpus {
        match crate::io::read_wav(&f.path) {
            Ok(w) => files.push((
                FileRecord {
                    id: f.id.clone(),
                    path: Some(f.path.clone()),
                    group: f.group.clone(),
                    n_samples: w.len(),
                },
                w,
            )),
            Err(e) => warn!("skipping '{}': {e}", f.path.display()),
        }
    }
    build_from_audio(files, mode, set, p)
}
