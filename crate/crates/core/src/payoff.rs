//! Discounted exercise values along simulated paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{PathBatch, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    BasketPut,
    MaxCall,
    MinPut,
    GeometricPut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub strike: f64,
    /// Basket weights; ignored by the other payoffs.
    pub weights: Vec<f64>,
}

impl PayoffSpec {
    pub fn new(kind: PayoffKind, strike: f64, weights: Vec<f64>) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "strike must be positive (got {strike})"
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "basket weights must be finite".into(),
            ));
        }
        Ok(Self {
            kind,
            strike,
            weights,
        })
    }

    /// Basket put with equal weights `1/d`.
    pub fn equal_basket_put(strike: f64, dim: usize) -> Result<Self> {
        Self::new(PayoffKind::BasketPut, strike, vec![1.0 / dim as f64; dim])
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.kind == PayoffKind::BasketPut && self.weights.len() != dim {
            return Err(Error::ShapeMismatch {
                what: "basket weights",
                expected: dim,
                actual: self.weights.len(),
            });
        }
        Ok(())
    }

    /// Undiscounted payoff of one asset vector.
    pub fn value(&self, s: &[f64]) -> f64 {
        let k = self.strike;
        let v = match self.kind {
            PayoffKind::BasketPut => {
                k - self.weights.iter().zip(s).map(|(w, x)| w * x).sum::<f64>()
            }
            PayoffKind::MaxCall => s.iter().copied().fold(f64::NEG_INFINITY, f64::max) - k,
            PayoffKind::MinPut => k - s.iter().copied().fold(f64::INFINITY, f64::min),
            PayoffKind::GeometricPut => {
                let mean_log = s.iter().map(|x| x.ln()).sum::<f64>() / s.len() as f64;
                k - mean_log.exp()
            }
        };
        v.max(0.0)
    }
}

/// `z[i][k] = exp(-r t_k) phi(S_{t_k})` and the first in-the-money index of
/// every path.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedPayoffs {
    steps: usize,
    z: Vec<f64>,
    tau0: Vec<usize>,
}

impl DiscountedPayoffs {
    /// Builds from row-major `m x (n + 1)` values, computing `tau0`.
    pub fn from_values(steps: usize, z: Vec<f64>) -> Result<Self> {
        let w = steps + 1;
        if !z.len().is_multiple_of(w) || z.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "payoff buffer length {} is not a positive multiple of n+1 = {w}",
                z.len()
            )));
        }
        if z.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(
                "payoffs must be finite and nonnegative".into(),
            ));
        }
        let tau0 = z.chunks_exact(w).map(first_in_the_money).collect();
        Ok(Self { steps, z, tau0 })
    }

    pub fn paths(&self) -> usize {
        self.tau0.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.steps + 1;
        &self.z[i * w..(i + 1) * w]
    }

    pub fn tau0(&self) -> &[usize] {
        &self.tau0
    }
}

/// Smallest `k` with `z[k] > 0`, capped at `n = z.len() - 1`.
pub fn first_in_the_money(z: &[f64]) -> usize {
    let n = z.len() - 1;
    z.iter().position(|&x| x > 0.0).map_or(n, |k| k.min(n))
}

pub fn evaluate_payoffs(
    spec: &PayoffSpec,
    batch: &PathBatch,
    rate: f64,
    grid: &TimeGrid,
) -> Result<DiscountedPayoffs> {
    spec.check_dim(batch.asset_dim())?;
    if grid.steps() != batch.steps() {
        return Err(Error::ShapeMismatch {
            what: "grid steps",
            expected: batch.steps(),
            actual: grid.steps(),
        });
    }
    let w = grid.steps() + 1;
    let discount: Vec<f64> = grid.dates().iter().map(|t| (-rate * t).exp()).collect();
    let mut z = vec![0.0; batch.paths() * w];
    z.par_chunks_mut(w).enumerate().for_each(|(i, row)| {
        for (k, zk) in row.iter_mut().enumerate() {
            *zk = discount[k] * spec.value(batch.spot_at(i, k));
        }
    });
    DiscountedPayoffs::from_values(grid.steps(), z)
}
