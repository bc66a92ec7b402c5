use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-user, per-channel mean rewards. Row `j` belongs to user `j`, column
/// `c` to channel `c + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMatrix {
    k: usize,
    m: usize,
    values: Vec<f64>,
}

impl MeanMatrix {
    /// Builds a matrix from a row-major slice of `k * m` entries.
    pub fn new(k: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::InvalidMatrix("k and m must be positive".into()));
        }
        if k > m {
            return Err(Error::InvalidMatrix(format!(
                "more users ({k}) than channels ({m})"
            )));
        }
        if values.len() != k * m {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries, got {}",
                k * m,
                values.len()
            )));
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ValueOutOfRange(bad));
        }
        Ok(Self { k, m, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        Self::new(k, m, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Mean reward of channel `channel` (0-based) for user `user`.
    #[inline]
    pub fn get(&self, user: usize, channel: usize) -> f64 {
        self.values[user * self.m + channel]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.values[user * self.m..(user + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.m).map(<[f64]>::to_vec).collect()
    }
}
