//! Independent reference prices: the one-dimensional reduction of the
//! geometric basket, a CRR tree for the reduced put, and the Black–Scholes
//! European put.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{BlackScholesParams, TimeGrid};

/// One-dimensional Black–Scholes parameters equivalent to a geometric basket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    pub s_hat: f64,
    pub sigma_hat: f64,
    pub delta_hat: f64,
}

/// The geometric mean of correlated lognormal assets is lognormal; match its
/// spot, volatility and dividend yield.
pub fn geometric_reduction(params: &BlackScholesParams) -> ReducedParams {
    let d = params.dim();
    let df = d as f64;
    let s_hat = (params.spot.iter().map(|s| s.ln()).sum::<f64>() / df).exp();
    let mut quad = 0.0;
    for i in 0..d {
        for j in 0..d {
            quad += params.vol[i] * params.vol[j] * params.correlation(i, j);
        }
    }
    let sigma_hat = quad.sqrt() / df;
    let carry = params
        .div
        .iter()
        .zip(&params.vol)
        .map(|(q, s)| q + 0.5 * s * s)
        .sum::<f64>()
        / df;
    ReducedParams {
        s_hat,
        sigma_hat,
        delta_hat: carry - 0.5 * sigma_hat * sigma_hat,
    }
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Black–Scholes put with continuous dividend yield.
pub fn bs_european_put(
    spot: f64,
    vol: f64,
    rate: f64,
    div: f64,
    maturity: f64,
    strike: f64,
) -> f64 {
    if strike <= 0.0 {
        return 0.0;
    }
    let sd = vol * maturity.sqrt();
    let fwd = spot * ((rate - div) * maturity).exp();
    let d1 = ((fwd / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    (-rate * maturity).exp() * (strike * norm_cdf(-d2) - fwd * norm_cdf(-d1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exercise {
    /// Only at the grid dates `t_0..t_n`.
    Bermudan,
    /// At every tree level.
    American,
}

/// CRR tree for a put on the reduced asset.
pub fn binomial_put(
    reduced: &ReducedParams,
    rate: f64,
    strike: f64,
    grid: &TimeGrid,
    tree_steps: usize,
    exercise: Exercise,
) -> Result<f64> {
    let n = grid.steps();
    if tree_steps == 0 || !tree_steps.is_multiple_of(n) {
        return Err(Error::InvalidParameter(format!(
            "tree_steps {tree_steps} must be a positive multiple of n = {n}"
        )));
    }
    if !(reduced.sigma_hat > 0.0) {
        return Err(Error::InvalidParameter(
            "reduced volatility must be positive".into(),
        ));
    }
    let dt = grid.maturity() / tree_steps as f64;
    let up = (reduced.sigma_hat * dt.sqrt()).exp();
    let down = 1.0 / up;
    let growth = ((rate - reduced.delta_hat) * dt).exp();
    let q = (growth - down) / (up - down);
    let disc = (-rate * dt).exp();
    let (pu, pd) = (disc * q, disc * (1.0 - q));
    let stride = tree_steps / n;

    // Node j at level l has spot s_hat * up^(2j - l).
    let spot = |level: usize, j: usize| reduced.s_hat * up.powi(2 * j as i32 - level as i32);
    let mut values: Vec<f64> = (0..=tree_steps)
        .map(|j| (strike - spot(tree_steps, j)).max(0.0))
        .collect();
    for level in (0..tree_steps).rev() {
        let exercisable = match exercise {
            Exercise::American => true,
            Exercise::Bermudan => level % stride == 0,
        };
        for j in 0..=level {
            let cont = pd * values[j] + pu * values[j + 1];
            values[j] = if exercisable {
                cont.max(strike - spot(level, j))
            } else {
                cont
            };
        }
        values.pop();
    }
    Ok(values[0])
}

/// Bermudan put exercisable at the grid dates only.
pub fn binomial_bermudan_put(
    reduced: &ReducedParams,
    rate: f64,
    strike: f64,
    grid: &TimeGrid,
    tree_steps: usize,
) -> Result<f64> {
    binomial_put(reduced, rate, strike, grid, tree_steps, Exercise::Bermudan)
}
