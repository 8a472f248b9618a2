//! Correlated Black–Scholes and Heston path simulation on a uniform grid.
//!
//! Every path owns its own ChaCha stream keyed by `(seed, path index)`, so a
//! batch is bitwise identical whatever the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = k T / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    maturity: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(maturity: f64, steps: usize) -> Result<Self> {
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "maturity must be positive and finite (got {maturity})"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter(
                "grid needs at least one step".into(),
            ));
        }
        Ok(Self { maturity, steps })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    pub fn date(&self, k: usize) -> f64 {
        if k == self.steps {
            self.maturity
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn dates(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.date(k)).collect()
    }
}

/// Lower-triangular Cholesky factor of the equicorrelation matrix, row-major
/// `d x d`.
pub fn chol_equicorrelation(rho: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let lower = if dim > 1 {
        -1.0 / (dim as f64 - 1.0)
    } else {
        f64::NEG_INFINITY
    };
    if !(rho > lower && rho <= 1.0) && dim > 1 {
        return Err(Error::InvalidCorrelation { rho, dim });
    }
    let gamma = |i: usize, j: usize| if i == j { 1.0 } else { rho };
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = gamma(i, j);
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                // rho = 1 leaves a zero pivot; clamp the roundoff.
                l[i * dim + i] = s.max(0.0).sqrt();
            } else {
                let pivot = l[j * dim + j];
                l[i * dim + j] = if pivot > 0.0 { s / pivot } else { 0.0 };
            }
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlackScholesParams {
    pub spot: Vec<f64>,
    pub vol: Vec<f64>,
    pub div: Vec<f64>,
    pub rate: f64,
    pub corr: f64,
    chol: Vec<f64>,
}

impl BlackScholesParams {
    pub fn new(spot: Vec<f64>, vol: Vec<f64>, div: Vec<f64>, rate: f64, corr: f64) -> Result<Self> {
        let dim = spot.len();
        if dim == 0 || vol.len() != dim || div.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "spot, vol and div need one entry per asset (got {}, {}, {})",
                dim,
                vol.len(),
                div.len()
            )));
        }
        if let Some(s) = spot.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "spot must be positive (got {s})"
            )));
        }
        if let Some(v) = vol.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "volatility must be positive (got {v})"
            )));
        }
        if !rate.is_finite() || div.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidParameter(
                "rate and dividends must be finite".into(),
            ));
        }
        let chol = chol_equicorrelation(corr, dim)?;
        Ok(Self {
            spot,
            vol,
            div,
            rate,
            corr,
            chol,
        })
    }

    /// Same spot, vol and dividend for every asset.
    pub fn uniform(
        dim: usize,
        spot: f64,
        vol: f64,
        div: f64,
        rate: f64,
        corr: f64,
    ) -> Result<Self> {
        Self::new(vec![spot; dim], vec![vol; dim], vec![div; dim], rate, corr)
    }

    pub fn dim(&self) -> usize {
        self.spot.len()
    }

    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    /// Correlation matrix entry `Gamma_ij`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            self.corr
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HestonParams {
    pub spot: f64,
    pub rate: f64,
    pub v0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("spot", self.spot), ("v0", self.v0), ("theta", self.theta)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "heston {name} must be positive (got {v})"
                )));
            }
        }
        // kappa = 0 or xi = 0 are accepted as degenerate constant-variance limits.
        for (name, v) in [("kappa", self.kappa), ("xi", self.xi)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "heston {name} must be nonnegative (got {v})"
                )));
            }
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "heston rho must lie in (-1, 1) (got {})",
                self.rho
            )));
        }
        if !self.rate.is_finite() {
            return Err(Error::InvalidParameter("rate must be finite".into()));
        }
        Ok(())
    }
}

/// Simulated paths: standardized increments and asset values.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    paths: usize,
    steps: usize,
    brownian_dim: usize,
    asset_dim: usize,
    // paths x steps x brownian_dim
    increments: Vec<f64>,
    // paths x (steps + 1) x asset_dim
    spots: Vec<f64>,
    pub seed: u64,
}

impl PathBatch {
    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    pub fn asset_dim(&self) -> usize {
        self.asset_dim
    }

    /// Increments of path `i`, `n x d` row-major by time step.
    pub fn increments(&self, i: usize) -> &[f64] {
        let w = self.steps * self.brownian_dim;
        &self.increments[i * w..(i + 1) * w]
    }

    /// Asset values of path `i`, `(n + 1) x d'` row-major by date.
    pub fn spots(&self, i: usize) -> &[f64] {
        let w = (self.steps + 1) * self.asset_dim;
        &self.spots[i * w..(i + 1) * w]
    }

    pub fn spot_at(&self, i: usize, k: usize) -> &[f64] {
        let row = self.spots(i);
        &row[k * self.asset_dim..(k + 1) * self.asset_dim]
    }

    /// Assembles a batch from raw buffers, mostly for tests and replays.
    pub fn from_raw(
        steps: usize,
        brownian_dim: usize,
        asset_dim: usize,
        increments: Vec<f64>,
        spots: Vec<f64>,
    ) -> Result<Self> {
        let gw = steps * brownian_dim;
        let sw = (steps + 1) * asset_dim;
        if gw == 0 || sw == 0 || !increments.len().is_multiple_of(gw) {
            return Err(Error::InvalidParameter(
                "increment buffer has wrong shape".into(),
            ));
        }
        let paths = increments.len() / gw;
        if spots.len() != paths * sw {
            return Err(Error::ShapeMismatch {
                what: "spot buffer",
                expected: paths * sw,
                actual: spots.len(),
            });
        }
        Ok(Self {
            paths,
            steps,
            brownian_dim,
            asset_dim,
            increments,
            spots,
            seed: 0,
        })
    }

    fn allocate(
        paths: usize,
        steps: usize,
        brownian_dim: usize,
        asset_dim: usize,
        seed: u64,
    ) -> Self {
        Self {
            paths,
            steps,
            brownian_dim,
            asset_dim,
            increments: vec![0.0; paths * steps * brownian_dim],
            spots: vec![0.0; paths * (steps + 1) * asset_dim],
            seed,
        }
    }

    fn fill<F>(&mut self, fill_path: F)
    where
        F: Fn(&mut ChaCha8Rng, &mut [f64], &mut [f64]) + Sync,
    {
        let gw = self.steps * self.brownian_dim;
        let sw = (self.steps + 1) * self.asset_dim;
        let seed = self.seed;
        self.increments
            .par_chunks_mut(gw)
            .zip(self.spots.par_chunks_mut(sw))
            .enumerate()
            .for_each(|(i, (g, s))| {
                let mut rng = path_rng(seed, i as u64);
                fill_path(&mut rng, g, s);
            });
    }
}

/// Independent stream for path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_paths(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidParameter("path count must be >= 1".into()));
    }
    Ok(())
}

/// Exact lognormal stepping of the correlated Black–Scholes model, one
/// Brownian component per asset.
pub fn simulate_black_scholes(
    params: &BlackScholesParams,
    grid: &TimeGrid,
    m: usize,
    seed: u64,
) -> Result<PathBatch> {
    check_paths(m)?;
    let d = params.dim();
    let h = grid.dt();
    let sqrt_h = h.sqrt();
    let drift: Vec<f64> = (0..d)
        .map(|j| (params.rate - params.div[j] - 0.5 * params.vol[j] * params.vol[j]) * h)
        .collect();
    let chol = params.chol();
    let mut batch = PathBatch::allocate(m, grid.steps(), d, d, seed);
    batch.fill(|rng, g, s| {
        let mut log_s: Vec<f64> = params.spot.iter().map(|x| x.ln()).collect();
        s[..d].copy_from_slice(&params.spot);
        for k in 0..grid.steps() {
            let gk = &mut g[k * d..(k + 1) * d];
            for x in gk.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            for j in 0..d {
                let shock: f64 = chol[j * d..j * d + j + 1]
                    .iter()
                    .zip(gk.iter())
                    .map(|(l, z)| l * z)
                    .sum();
                log_s[j] += drift[j] + params.vol[j] * sqrt_h * shock;
                s[(k + 1) * d + j] = log_s[j].exp();
            }
        }
    });
    Ok(batch)
}

/// Full-truncation Euler on the variance, log-Euler on the spot. Component 0
/// drives the variance, component 1 is the orthogonal spot noise.
pub fn simulate_heston(
    params: &HestonParams,
    grid: &TimeGrid,
    m: usize,
    seed: u64,
) -> Result<PathBatch> {
    check_paths(m)?;
    params.validate()?;
    let h = grid.dt();
    let sqrt_h = h.sqrt();
    let rho_bar = (1.0 - params.rho * params.rho).sqrt();
    let mut batch = PathBatch::allocate(m, grid.steps(), 2, 1, seed);
    batch.fill(|rng, g, s| {
        let mut v = params.v0;
        let mut log_s = params.spot.ln();
        s[0] = params.spot;
        for k in 0..grid.steps() {
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            g[2 * k] = g1;
            g[2 * k + 1] = g2;
            let vp = v.max(0.0);
            let vol = vp.sqrt();
            log_s += (params.rate - 0.5 * vp) * h + vol * sqrt_h * (params.rho * g1 + rho_bar * g2);
            v += params.kappa * (params.theta - vp) * h + params.xi * vol * sqrt_h * g1;
            s[k + 1] = log_s.exp();
        }
    });
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_and_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn grid_dates() {
        let g = TimeGrid::new(3.0, 3).unwrap();
        assert_eq!(g.dates(), vec![0.0, 1.0, 2.0, 3.0]);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(
            chol_equicorrelation(0.0, 3).unwrap(),
            vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]
        );
        assert_eq!(chol_equicorrelation(1.0, 2).unwrap(), vec![1., 0., 1., 0.]);
        let d = 10;
        let l = chol_equicorrelation(0.1, d).unwrap();
        for i in 0..d {
            for j in 0..d {
                let g: f64 = (0..d).map(|k| l[i * d + k] * l[j * d + k]).sum();
                let want = if i == j { 1.0 } else { 0.1 };
                assert!((g - want).abs() < 1e-12, "({i},{j}) -> {g}");
                if j > i {
                    assert_eq!(l[i * d + j], 0.0);
                }
            }
            assert!(l[i * d + i] >= 0.0);
        }
    }

    #[test]
    fn cholesky_rejects_out_of_range() {
        assert!(matches!(
            chol_equicorrelation(-0.5, 4),
            Err(Error::InvalidCorrelation { dim: 4, .. })
        ));
        assert!(chol_equicorrelation(1.2, 2).is_err());
        assert!(chol_equicorrelation(-1.0 / 3.0, 4).is_err());
    }

    #[test]
    fn zero_vol_rejected() {
        assert!(BlackScholesParams::uniform(2, 100.0, 0.0, 0.0, 0.05, 0.0).is_err());
    }

    #[test]
    fn bs_martingale() {
        let p = BlackScholesParams::uniform(1, 100.0, 0.2, 0.0, 0.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let b = simulate_black_scholes(&p, &grid, 100_000, 7).unwrap();
        let (mean, se) = mean_and_se((0..b.paths()).map(|i| b.spot_at(i, 4)[0]));
        assert!((mean - 100.0).abs() < 3.0 * se, "{mean} +- {se}");
        assert!((0..b.paths()).all(|i| b.spots(i).iter().all(|&s| s > 0.0)));
    }

    #[test]
    fn bs_discounted_martingale_with_dividends() {
        let p = BlackScholesParams::uniform(3, 100.0, 0.3, 0.04, 0.05, 0.2).unwrap();
        let grid = TimeGrid::new(2.0, 5).unwrap();
        let b = simulate_black_scholes(&p, &grid, 50_000, 11).unwrap();
        let growth = ((0.04 - 0.05) * 2.0f64).exp();
        for j in 0..3 {
            let (mean, se) = mean_and_se((0..b.paths()).map(|i| b.spot_at(i, 5)[j] * growth));
            assert!((mean - 100.0).abs() < 4.0 * se, "asset {j}: {mean} +- {se}");
        }
    }

    #[test]
    fn perfect_correlation() {
        let p = BlackScholesParams::uniform(2, 100.0, 0.2, 0.0, 0.03, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let b = simulate_black_scholes(&p, &grid, 200, 3).unwrap();
        for i in 0..b.paths() {
            for k in 0..=6 {
                let s = b.spot_at(i, k);
                assert!((s[0].ln() - s[1].ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn increments_standardized() {
        let p = BlackScholesParams::uniform(2, 100.0, 0.2, 0.0, 0.03, 0.5).unwrap();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let m = 40_000;
        let b = simulate_black_scholes(&p, &grid, m, 5).unwrap();
        for slot in 0..6 {
            let xs: Vec<f64> = (0..m).map(|i| b.increments(i)[slot]).collect();
            let (mean, se) = mean_and_se(xs.iter().copied());
            assert!(mean.abs() < 5.0 * se);
            let (var, var_se) = mean_and_se(xs.iter().map(|x| x * x));
            assert!((var - 1.0).abs() < 5.0 * var_se);
        }
    }

    #[test]
    fn reproducible_across_pools() {
        let p = BlackScholesParams::uniform(3, 100.0, 0.2, 0.0, 0.03, 0.1).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_black_scholes(&p, &grid, 1000, 99).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn heston_degenerates_to_black_scholes() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let m = 100_000;
        let bs = BlackScholesParams::uniform(1, 100.0, 0.2, 0.0, 0.03, 0.0).unwrap();
        let bs_b = simulate_black_scholes(&bs, &grid, m, 21).unwrap();
        let (bs_mean, bs_se) = mean_and_se((0..m).map(|i| bs_b.spot_at(i, 10)[0]));
        for (kappa, xi) in [(2.0, 0.0), (0.0, 0.0)] {
            let h = HestonParams {
                spot: 100.0,
                rate: 0.03,
                v0: 0.04,
                kappa,
                theta: 0.04,
                xi,
                rho: -0.5,
            };
            let hb = simulate_heston(&h, &grid, m, 22).unwrap();
            let (mean, se) = mean_and_se((0..m).map(|i| hb.spot_at(i, 10)[0]));
            let combined = (se * se + bs_se * bs_se).sqrt();
            assert!(
                (mean - bs_mean).abs() < 3.0 * combined,
                "{mean} vs {bs_mean}"
            );
        }
    }

    #[test]
    fn heston_discounted_martingale() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let h = HestonParams {
            spot: 100.0,
            rate: 0.05,
            v0: 0.04,
            kappa: 2.0,
            theta: 0.04,
            xi: 0.3,
            rho: -0.7,
        };
        let m = 100_000;
        let b = simulate_heston(&h, &grid, m, 8).unwrap();
        let disc = (-0.05f64).exp();
        let (mean, se) = mean_and_se((0..m).map(|i| b.spot_at(i, 50)[0] * disc));
        assert!((mean - 100.0).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn heston_rejects_bad_rho() {
        let h = HestonParams {
            spot: 100.0,
            rate: 0.05,
            v0: 0.04,
            kappa: 2.0,
            theta: 0.04,
            xi: 0.3,
            rho: 1.0,
        };
        assert!(h.validate().is_err());
    }
}
