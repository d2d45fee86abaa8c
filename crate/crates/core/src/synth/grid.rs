use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{DevDatabase, WeightVector};

/// P candidates per target segment with their distances and source files,
/// row-major (`rows` rows of `p` cells).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    p: usize,
    candidates: Vec<usize>,
    scores: Vec<f64>,
    files: Vec<usize>,
}

impl CandidateGrid {
    pub fn new(p: usize, candidates: Vec<usize>, scores: Vec<f64>, files: Vec<usize>) -> Result<Self> {
        if p == 0 || !candidates.len().is_multiple_of(p) {
            return Err(Error::ShapeMismatch(format!(
                "{} candidates do not fill rows of {p}",
                candidates.len()
            )));
        }
        if scores.len() != candidates.len() || files.len() != candidates.len() {
            return Err(Error::ShapeMismatch(
                "candidates, scores and files differ in length".into(),
            ));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParam("scores must be finite".into()));
        }
        Ok(Self {
            p,
            candidates,
            scores,
            files,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rows(&self) -> usize {
        self.candidates.len() / self.p
    }

    pub fn candidates(&self, i: usize) -> &[usize] {
        &self.candidates[i * self.p..(i + 1) * self.p]
    }

    pub fn scores(&self, i: usize) -> &[f64] {
        &self.scores[i * self.p..(i + 1) * self.p]
    }

    pub fn files(&self, i: usize) -> &[usize] {
        &self.files[i * self.p..(i + 1) * self.p]
    }

    /// Entry indices of column 0, the per-row nearest neighbors.
    pub fn nearest(&self) -> Vec<usize> {
        (0..self.rows()).map(|i| self.candidates(i)[0]).collect()
    }
}

/// Row `i` is the P-nearest-neighbor set of `queries[i]`.
pub fn build_candidate_grid(
    queries: &[Vec<f64>],
    db: &DevDatabase,
    p: usize,
    w: &WeightVector,
) -> Result<CandidateGrid> {
    let rows: Vec<_> = queries
        .par_iter()
        .map(|q| db.knn(q, p, w))
        .collect::<Result<_>>()?;
    let mut candidates = Vec::with_capacity(rows.len() * p);
    let mut scores = Vec::with_capacity(rows.len() * p);
    let mut files = Vec::with_capacity(rows.len() * p);
    for r in rows {
        files.extend(r.indices.iter().map(|&e| db.entry(e).file));
        candidates.extend(r.indices);
        scores.extend(r.distances);
    }
    CandidateGrid::new(p, candidates, scores, files)
}

/// Chosen column per row, the corresponding entries and the total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub choices: Vec<usize>,
    pub entries: Vec<usize>,
    pub cost: f64,
}

fn transition(grid: &CandidateGrid, i: usize, q: usize, p: usize, lambda_v: f64) -> f64 {
    if grid.files(i - 1)[q] == grid.files(i)[p] {
        0.0
    } else {
        lambda_v
    }
}

/// Cost of one column sequence, accumulated left to right: the score of row
/// 0, then for each later row the transition cost followed by its score.
pub fn path_cost(grid: &CandidateGrid, lambda_v: f64, choices: &[usize]) -> f64 {
    let mut cost = 0.0;
    for (i, &c) in choices.iter().enumerate() {
        if i > 0 {
            cost += transition(grid, i, choices[i - 1], c, lambda_v);
        }
        cost += grid.scores(i)[c];
    }
    cost
}

/// Minimum-cost column sequence under the same-file transition penalty.
/// Among equal-cost paths the lexicographically smallest column sequence
/// wins.
pub fn viterbi_path(grid: &CandidateGrid, lambda_v: f64) -> ViterbiPath {
    let rows = grid.rows();
    let p = grid.p();
    if rows == 0 {
        return ViterbiPath {
            choices: vec![],
            entries: vec![],
            cost: 0.0,
        };
    }
    let mut cost: Vec<f64> = grid.scores(0).to_vec();
    // rank[q]: position of the best prefix ending in q in lexicographic order
    let mut rank: Vec<usize> = (0..p).collect();
    let mut back = vec![0usize; rows * p];
    for i in 1..rows {
        let mut next = vec![0.0; p];
        let mut keys = Vec::with_capacity(p);
        for c in 0..p {
            let mut best_q = 0;
            let mut best = f64::INFINITY;
            for q in 0..p {
                let v = cost[q] + transition(grid, i, q, c, lambda_v);
                if v < best || (v == best && rank[q] < rank[best_q]) {
                    best = v;
                    best_q = q;
                }
            }
            next[c] = best + grid.scores(i)[c];
            back[i * p + c] = best_q;
            keys.push((rank[best_q], c));
        }
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by_key(|&c| keys[c]);
        for (r, c) in order.into_iter().enumerate() {
            rank[c] = r;
        }
        cost = next;
    }
    let mut last = 0;
    for c in 1..p {
        if cost[c] < cost[last] || (cost[c] == cost[last] && rank[c] < rank[last]) {
            last = c;
        }
    }
    let total = cost[last];
    let mut choices = vec![0; rows];
    choices[rows - 1] = last;
    for i in (1..rows).rev() {
        choices[i - 1] = back[i * p + choices[i]];
    }
    let entries = choices
        .iter()
        .enumerate()
        .map(|(i, &c)| grid.candidates(i)[c])
        .collect();
    ViterbiPath {
        choices,
        entries,
        cost: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(p: usize, scores: Vec<f64>, files: Vec<usize>) -> CandidateGrid {
        let candidates = (0..scores.len()).collect();
        CandidateGrid::new(p, candidates, scores, files).unwrap()
    }

    #[test]
    fn zero_penalty_is_rowwise_argmin() {
        let g = grid(2, vec![0.1, 0.5, 0.7, 0.2, 0.3, 0.4], vec![0, 1, 1, 0, 0, 1]);
        let path = viterbi_path(&g, 0.0);
        assert_eq!(path.choices, vec![0, 1, 0]);
        assert!((path.cost - 0.6).abs() < 1e-12);
    }

    #[test]
    fn large_penalty_keeps_one_file() {
        let g = grid(2, vec![0.1, 0.5, 0.7, 0.2, 0.3, 0.4], vec![0, 1, 1, 0, 0, 1]);
        let path = viterbi_path(&g, 1e9);
        let files: Vec<usize> = (0..3).map(|i| g.files(i)[path.choices[i]]).collect();
        assert!(files.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(path.cost, path_cost(&g, 1e9, &path.choices));
    }

    #[test]
    fn ties_prefer_smallest_sequence() {
        let g = grid(2, vec![1.0; 6], vec![0; 6]);
        assert_eq!(viterbi_path(&g, 1.0).choices, vec![0, 0, 0]);
        // 0,1 and 1,0 both cost 2; 0,1 is smaller
        let g = grid(2, vec![1.0, 1.0, 1.0, 1.0], vec![0, 1, 1, 0]);
        assert_eq!(viterbi_path(&g, 0.0).choices, vec![0, 0]);
        let p = viterbi_path(&g, 5.0);
        assert_eq!(p.choices, vec![0, 1]);
        assert_eq!(p.cost, 2.0);
    }

    #[test]
    fn lexicographic_tie_break_through_rank() {
        // row0 both cost 0; row1 col0 reachable equally from both
        // prefixes; ranks must prefer prefix (0) over (1)
        let g = grid(2, vec![0.0, 0.0, 0.0, 5.0, 0.0, 5.0], vec![0, 0, 0, 0, 0, 0]);
        assert_eq!(viterbi_path(&g, 1.0).choices, vec![0, 0, 0]);
    }
}
