use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-instance first and second derivatives of the logistic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradPair {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl GradPair {
    pub fn new(g: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if g.len() != h.len() {
            return Err(Error::arg(format!(
                "gradient length {} != hessian length {}",
                g.len(),
                h.len()
            )));
        }
        Ok(Self { g, h })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Sums over `rows`, accumulated in the order given.
    pub fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + self.g[r], h + self.h[r]))
    }

    /// Clamps every gradient to `[-bound, bound]`.
    pub fn clip_gradients(&mut self, bound: f64) {
        for g in &mut self.g {
            *g = g.clamp(-bound, bound);
        }
    }

    /// Gathers the entries of `rows` into a node-local pair.
    pub fn gather(&self, rows: &[usize]) -> Self {
        Self {
            g: rows.iter().map(|&r| self.g[r]).collect(),
            h: rows.iter().map(|&r| self.h[r]).collect(),
        }
    }

    /// Replaces every Hessian by one (gradient-only split scoring).
    pub fn with_unit_hessian(&self) -> Self {
        Self {
            g: self.g.clone(),
            h: vec![1.0; self.g.len()],
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn grad_hess(labels: &[u8], margins: &[f64]) -> Result<GradPair> {
    if labels.len() != margins.len() {
        return Err(Error::arg(format!(
            "{} labels for {} margins",
            labels.len(),
            margins.len()
        )));
    }
    if let Some(m) = margins.iter().find(|m| !m.is_finite()) {
        return Err(Error::arg(format!("non-finite margin {m}")));
    }
    let (g, h) = labels
        .iter()
        .zip(margins)
        .map(|(&y, &m)| {
            let p = sigmoid(m);
            (p - f64::from(y), p * (1.0 - p))
        })
        .unzip();
    Ok(GradPair { g, h })
}
