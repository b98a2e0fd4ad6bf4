//! Real `(L+1)² × J` matrices on the centred time axis j ∈ [−J/2+1, J/2].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sh::channel_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredMatrix {
    pub order: usize,
    pub sample_rate: f64,
    len: usize,
    /// Row-major, one row per channel.
    data: Vec<f64>,
}

/// GTVV samples `v(t)` on the centred axis.
pub type GtvvMatrix = CenteredMatrix;

impl CenteredMatrix {
    pub fn zeros(order: usize, len: usize, sample_rate: f64) -> Self {
        Self {
            order,
            sample_rate,
            len,
            data: vec![0.0; channel_count(order) * len],
        }
    }

    pub fn from_rows(order: usize, sample_rate: f64, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != channel_count(order) {
            return invalid("row count does not match order");
        }
        let len = rows[0].len();
        if len < 2 || len % 2 != 0 || rows.iter().any(|r| r.len() != len) {
            return invalid("rows must share one even length");
        }
        Ok(Self {
            order,
            sample_rate,
            len,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds the matrix from circularly indexed rows (index 0 is t = 0 and
    /// index J−1 is t = −1).
    pub fn from_circular(order: usize, sample_rate: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let len = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(order, len, sample_rate);
        if rows.len() != m.rows() {
            return invalid("row count does not match order");
        }
        for (l, row) in rows.iter().enumerate() {
            for j in m.j_min()..=m.j_max() {
                let v = row[j.rem_euclid(len as i64) as usize];
                m.set(l, j, v);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        channel_count(self.order)
    }

    /// Axis length J.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn j_min(&self) -> i64 {
        1 - (self.len / 2) as i64
    }

    pub fn j_max(&self) -> i64 {
        (self.len / 2) as i64
    }

    pub fn contains(&self, j: i64) -> bool {
        j >= self.j_min() && j <= self.j_max()
    }

    #[inline]
    pub fn col_index(&self, j: i64) -> usize {
        (j - self.j_min()) as usize
    }

    #[inline]
    pub fn get(&self, l: usize, j: i64) -> f64 {
        if self.contains(j) {
            self.data[l * self.len + self.col_index(j)]
        } else {
            0.0
        }
    }

    #[inline]
    pub fn set(&mut self, l: usize, j: i64, v: f64) {
        let c = self.col_index(j);
        self.data[l * self.len + c] = v;
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.len..(l + 1) * self.len]
    }

    pub fn row_mut(&mut self, l: usize) -> &mut [f64] {
        let len = self.len;
        &mut self.data[l * len..(l + 1) * len]
    }

    pub fn column(&self, j: i64) -> Vec<f64> {
        (0..self.rows()).map(|l| self.get(l, j)).collect()
    }

    pub fn set_column(&mut self, j: i64, col: &[f64]) {
        for (l, v) in col.iter().enumerate() {
            self.set(l, j, *v);
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= alpha);
        out
    }

    /// Keeps the first `(order+1)²` rows.
    pub fn truncate_order(&self, order: usize) -> Result<Self> {
        if order > self.order {
            return invalid("cannot raise the order of a matrix");
        }
        let rows = channel_count(order);
        Ok(Self {
            order,
            sample_rate: self.sample_rate,
            len: self.len,
            data: self.data[..rows * self.len].to_vec(),
        })
    }

    /// Fraction of energy in columns with j < 0.
    pub fn acausal_energy_fraction(&self) -> f64 {
        let mut neg = 0.0;
        let mut total = 0.0;
        for l in 0..self.rows() {
            for (c, v) in self.row(l).iter().enumerate() {
                let e = v * v;
                total += e;
                if (c as i64) + self.j_min() < 0 {
                    neg += e;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            neg / total
        }
    }

    /// Fraction of energy in columns outside [lo, hi].
    pub fn energy_outside(&self, lo: i64, hi: i64) -> f64 {
        let mut out = 0.0;
        let mut total = 0.0;
        for l in 0..self.rows() {
            for (c, v) in self.row(l).iter().enumerate() {
                let j = c as i64 + self.j_min();
                let e = v * v;
                total += e;
                if j < lo || j > hi {
                    out += e;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            out / total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_layout() {
        let m = CenteredMatrix::zeros(1, 8, 16000.0);
        assert_eq!(m.j_min(), -3);
        assert_eq!(m.j_max(), 4);
        assert_eq!(m.col_index(0), 3);
    }

    #[test]
    fn circular_mapping() {
        let rows: Vec<Vec<f64>> = (0..4).map(|l| (0..8).map(|n| (10 * l + n) as f64).collect()).collect();
        let m = CenteredMatrix::from_circular(1, 16000.0, &rows).unwrap();
        assert_eq!(m.get(2, 0), 20.0);
        assert_eq!(m.get(2, -1), 27.0);
        assert_eq!(m.get(2, 4), 24.0);
        assert_eq!(m.get(2, -3), 25.0);
        assert_eq!(m.get(2, 9), 0.0);
    }

    #[test]
    fn energy_fractions() {
        let mut m = CenteredMatrix::zeros(0, 8, 16000.0);
        m.set(0, -1, 1.0);
        m.set(0, 2, 3.0);
        assert!((m.acausal_energy_fraction() - 0.1).abs() < 1e-15);
        assert!((m.energy_outside(0, 1) - 1.0).abs() < 1e-15);
    }
}
