use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonnegative per-feature weights of the distance kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParam("weights must be finite and nonnegative".into()));
        }
        if !w.iter().any(|v| *v > 0.0) {
            return Err(Error::InvalidParam("at least one weight must be positive".into()));
        }
        Ok(Self(w))
    }

    pub fn ones(dim: usize) -> Self {
        Self(vec![1.0; dim])
    }

    /// Unit weights on the selected groups of the 27-value segment vector.
    pub fn from_groups(groups: FeatureGroups) -> Result<Self> {
        let mut w = vec![0.0; 27];
        if groups.chroma {
            w[..12].fill(1.0);
        }
        if groups.timbre {
            w[12..24].fill(1.0);
        }
        if groups.loudness {
            w[24..].fill(1.0);
        }
        Self::new(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }
}

/// Subset of {chroma, timbre, loudness} used by the segment distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureGroups {
    pub chroma: bool,
    pub timbre: bool,
    pub loudness: bool,
}

impl FeatureGroups {
    pub const ALL: FeatureGroups = FeatureGroups {
        chroma: true,
        timbre: true,
        loudness: true,
    };

    /// The seven nonempty combinations.
    pub fn combinations() -> Vec<FeatureGroups> {
        (1u8..8)
            .map(|bits| FeatureGroups {
                chroma: bits & 1 != 0,
                timbre: bits & 2 != 0,
                loudness: bits & 4 != 0,
            })
            .collect()
    }
}

impl fmt::Display for FeatureGroups {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.chroma {
            parts.push("chroma");
        }
        if self.timbre {
            parts.push("timbre");
        }
        if self.loudness {
            parts.push("loudness");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FeatureGroups {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut g = FeatureGroups {
            chroma: false,
            timbre: false,
            loudness: false,
        };
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "chroma" | "pitches" => g.chroma = true,
                "timbre" => g.timbre = true,
                "loudness" => g.loudness = true,
                other => {
                    return Err(Error::InvalidParam(format!("unknown feature group '{other}'")))
                }
            }
        }
        if !(g.chroma || g.timbre || g.loudness) {
            return Err(Error::InvalidParam("empty feature group list".into()));
        }
        Ok(g)
    }
}

/// `sqrt(sum_j w_j (f_j - g_j)^2)`.
pub fn weighted_distance(f: &[f64], g: &[f64], w: &WeightVector) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: f.len(),
            got: g.len(),
        });
    }
    if w.dim() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: f.len(),
            got: w.dim(),
        });
    }
    Ok(distance_unchecked(f, g, w.as_slice()))
}

#[inline]
fn distance_unchecked(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..f.len() {
        let d = f[j] - g[j];
        acc += w[j] * d * d;
    }
    acc.sqrt()
}

/// The P closest entries, ascending by distance then by entry index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

const PARALLEL_MIN_ROWS: usize = 8192;

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Exact P-nearest-neighbor scan over `rows` (row-major, `dim` columns).
pub fn knn_rows(
    query: &[f64],
    rows: &[f64],
    dim: usize,
    p: usize,
    w: &WeightVector,
) -> Result<NeighborSet> {
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: query.len(),
        });
    }
    if w.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.dim(),
        });
    }
    let n = rows.len().checked_div(dim).unwrap_or(0);
    if n == 0 {
        return Err(Error::EmptyDatabase);
    }
    if p == 0 || p > n {
        return Err(Error::TooManyNeighbors {
            requested: p,
            available: n,
        });
    }
    let weights = w.as_slice();
    let score = |(i, row): (usize, &[f64])| (distance_unchecked(query, row, weights), i);
    let mut scored: Vec<(f64, usize)> = if n >= PARALLEL_MIN_ROWS {
        rows.par_chunks_exact(dim).enumerate().map(score).collect()
    } else {
        rows.chunks_exact(dim).enumerate().map(score).collect()
    };
    if p < n {
        scored.select_nth_unstable_by(p - 1, by_distance_then_index);
        scored.truncate(p);
    }
    scored.sort_unstable_by(by_distance_then_index);
    Ok(NeighborSet {
        indices: scored.iter().map(|s| s.1).collect(),
        distances: scored.iter().map(|s| s.0).collect(),
    })
}
