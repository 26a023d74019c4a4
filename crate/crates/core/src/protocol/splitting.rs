use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Left-child indicator of one passive-party candidate over a node's instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingVector {
    pub bits: Vec<bool>,
    pub feature: usize,
    pub threshold: f64,
}

impl SplittingVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Active-set indices in ascending order.
    pub fn active(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&j| self.bits[j]).collect()
    }

    pub fn inactive(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&j| !self.bits[j]).collect()
    }

    /// `mᵀx`, summed over the active set in index order.
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.bits
            .iter()
            .zip(x)
            .filter(|(b, _)| **b)
            .fold(0.0, |acc, (_, v)| acc + v)
    }

    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (j, _) in self.bits.iter().enumerate().filter(|(_, b)| **b) {
            out[j / 8] |= 1 << (j % 8);
        }
        out
    }

    pub fn unpack(bytes: &[u8], n: usize, feature: usize, threshold: f64) -> Result<Self> {
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::arg("packed splitting vector has the wrong length"));
        }
        let bits = (0..n).map(|j| bytes[j / 8] >> (j % 8) & 1 == 1).collect();
        Ok(Self {
            bits,
            feature,
            threshold,
        })
    }
}

/// `bit_j = 1` iff `column_j <= s`.
pub fn build_splitting_vector(column: &[f64], s: f64, feature: usize) -> SplittingVector {
    SplittingVector {
        bits: column.iter().map(|&v| v <= s).collect(),
        feature,
        threshold: s,
    }
}

/// Splitting vectors of every candidate at one node, `M = [m_1 … m_l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalMatrix {
    n: usize,
    columns: Vec<SplittingVector>,
}

impl CategoricalMatrix {
    pub fn new(columns: Vec<SplittingVector>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::arg("a categorical matrix needs at least one column"));
        };
        let n = first.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::arg("splitting vectors differ in length"));
        }
        Ok(Self { n, columns })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[SplittingVector] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &SplittingVector {
        &self.columns[i]
    }
}
