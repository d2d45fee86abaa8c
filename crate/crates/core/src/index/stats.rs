use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this a feature dimension counts as constant.
pub const DEGENERATE_SIGMA: f64 = 1e-12;

/// Per-dimension mean and population standard deviation of the development
/// features. Constant dimensions get `sigma = 1` and are flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl StandardizationStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Stats for a single vector: every dimension is degenerate.
    pub(crate) fn singleton(row: &[f64]) -> Self {
        Self {
            mu: row.to_vec(),
            sigma: vec![1.0; row.len()],
            degenerate: vec![true; row.len()],
        }
    }

    pub fn standardize(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(f)?;
        Ok(f.iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn unstandardize(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(f)?;
        Ok(f.iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(x, (m, s))| x * s + m)
            .collect())
    }

    fn check_dim(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

pub fn compute_stats<R: AsRef<[f64]>>(raw: &[R]) -> Result<StandardizationStats> {
    if raw.len() < 2 {
        return Err(Error::NotEnoughData {
            needed: 2,
            got: raw.len(),
        });
    }
    let dim = raw[0].as_ref().len();
    let mut mu = vec![0.0; dim];
    for r in raw {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        for (m, x) in mu.iter_mut().zip(r) {
            *m += x;
        }
    }
    let n = raw.len() as f64;
    for m in &mut mu {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for r in raw {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mu) {
            *v += (x - m) * (x - m);
        }
    }
    let mut sigma = Vec::with_capacity(dim);
    let mut degenerate = Vec::with_capacity(dim);
    for v in var {
        let s = (v / n).sqrt();
        let flat = s.is_nan() || s < DEGENERATE_SIGMA;
        degenerate.push(flat);
        sigma.push(if flat { 1.0 } else { s });
    }
    Ok(StandardizationStats {
        mu,
        sigma,
        degenerate,
    })
}

pub fn standardize(f: &[f64], stats: &StandardizationStats) -> Result<Vec<f64>> {
    stats.standardize(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_stats() {
        let s = compute_stats(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(s.mu, vec![1.0]);
        assert_eq!(s.sigma, vec![1.0]);
        assert_eq!(s.degenerate, vec![false]);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let s = compute_stats(&[vec![3.0, 1.0], vec![3.0, 5.0], vec![3.0, 0.0]]).unwrap();
        assert!(s.degenerate[0]);
        assert_eq!(s.sigma[0], 1.0);
        assert!(!s.degenerate[1]);
        assert_eq!(s.standardize(&[3.0, 2.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            compute_stats(&[vec![1.0]]),
            Err(Error::NotEnoughData { .. })
        ));
        assert!(compute_stats(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let s = compute_stats(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert!(matches!(
            s.standardize(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn mean_and_mean_plus_sigma() {
        let s = compute_stats(&[vec![1.0, 10.0], vec![3.0, 30.0], vec![8.0, -5.0]]).unwrap();
        assert!(s.standardize(&s.mu).unwrap().iter().all(|v| *v == 0.0));
        let shifted: Vec<f64> = s.mu.iter().zip(&s.sigma).map(|(m, s)| m + s).collect();
        for v in s.standardize(&shifted).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
