//! Statistical and algebraic property checks behind the `check` command.
//!
//! Every check returns a [`CheckOutcome`] instead of panicking so the command
//! can print the whole suite.

use std::fmt;

use chaosdual_core::basis::{
    conditional_prefix_sum, enumerate_basis, eval_basis, MultiIndexBasis, Scaling,
};
use chaosdual_core::dual::{pathwise_max, restarted_martingale, DualObjective, Martingale};
use chaosdual_core::market::{
    path_rng, simulate_black_scholes, BlackScholesParams, PathBatch, TimeGrid,
};
use chaosdual_core::optim::{european_anchor, minimize, DescentConfig};
use chaosdual_core::payoff::{evaluate_payoffs, DiscountedPayoffs, PayoffSpec};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Owned sample for checks that need a concrete objective.
pub struct Problem {
    pub basis: MultiIndexBasis,
    pub batch: PathBatch,
    pub payoffs: DiscountedPayoffs,
}

impl Problem {
    /// Two-asset at-the-money basket put, three dates, degree 2.
    pub fn small_basket(m: usize, seed: u64) -> Result<Self, CliError> {
        let params = BlackScholesParams::uniform(2, 100.0, 0.2, 0.0, 0.05, 0.0)?;
        let grid = TimeGrid::new(1.0, 3)?;
        let batch = simulate_black_scholes(&params, &grid, m, seed)?;
        let spec = PayoffSpec::equal_basket_put(100.0, 2)?;
        let payoffs = evaluate_payoffs(&spec, &batch, params.rate, &grid)?;
        let basis = enumerate_basis(2, 3, 2)?;
        Ok(Self {
            basis,
            batch,
            payoffs,
        })
    }

    pub fn objective(&self) -> Result<DualObjective<'_>, CliError> {
        Ok(DualObjective::new(&self.basis, &self.batch, &self.payoffs)?)
    }

    /// Smallest gap between the best and second-best date over all paths.
    fn min_tie_gap(&self, lambda: &[f64]) -> Result<f64, CliError> {
        let mut gap = f64::INFINITY;
        for i in 0..self.batch.paths() {
            let z = self.payoffs.path(i);
            let tau0 = self.payoffs.tau0()[i];
            let vals = eval_basis(&self.basis, self.batch.increments(i), Scaling::Orthonormal)?;
            let mk = conditional_prefix_sum(&self.basis, &vals, lambda)?;
            let nk = restarted_martingale(&mk, tau0);
            let (best, kstar) = pathwise_max(z, &nk, tau0);
            for k in tau0..z.len() {
                if k != kstar {
                    gap = gap.min(best - (z[k] - nk[k]));
                }
            }
        }
        Ok(gap)
    }
}

fn normals(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Sample second moments of orthonormal basis functions equal the identity
/// within `z_max` standard errors.
pub fn orthonormality(
    p: usize,
    n: usize,
    d: usize,
    m: usize,
    seed: u64,
    z_max: f64,
) -> Result<CheckOutcome, CliError> {
    let basis = enumerate_basis(p, n, d)?;
    let len = basis.len();
    let pairs = len * (len + 1) / 2;
    let mut sum = vec![0.0; pairs];
    let mut sum_sq = vec![0.0; pairs];
    for i in 0..m {
        let mut rng = path_rng(seed, i as u64);
        let vals = eval_basis(&basis, &normals(&mut rng, n * d), Scaling::Orthonormal)?.values;
        let mut idx = 0;
        for a in 0..len {
            for b in a..len {
                let x = vals[a] * vals[b];
                sum[idx] += x;
                sum_sq[idx] += x * x;
                idx += 1;
            }
        }
    }
    let mf = m as f64;
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    for a in 0..len {
        for b in a..len {
            let mean = sum[idx] / mf;
            let var = (sum_sq[idx] / mf - mean * mean).max(0.0);
            let target = if a == b { 1.0 } else { 0.0 };
            let z = (mean - target).abs() / (var / mf).sqrt().max(1e-300);
            worst = worst.max(z);
            idx += 1;
        }
    }
    Ok(CheckOutcome::new(
        "orthonormality",
        worst <= z_max,
        format!("{len} elements, {pairs} pairs, m={m}: worst |z| = {worst:.2} (limit {z_max})"),
    ))
}

/// Conditioning on the first `k` increments keeps elements activated by `k`
/// and sends every later element to zero in expectation.
pub fn drop_term(
    p: usize,
    n: usize,
    d: usize,
    outer: usize,
    inner: usize,
    seed: u64,
    z_max: f64,
) -> Result<CheckOutcome, CliError> {
    let basis = enumerate_basis(p, n, d)?;
    let len = basis.len();
    let mut worst: f64 = 0.0;
    let mut prefix_ok = true;
    for o in 0..outer {
        let mut rng = path_rng(seed, u64::MAX - o as u64);
        let k = 1 + o % (n - 1).max(1);
        let k = k.min(n - 1);
        let base = normals(&mut rng, n * d);
        let base_vals = eval_basis(&basis, &base, Scaling::Orthonormal)?.values;
        let cut = basis.active_until(k);
        let mut sum = vec![0.0; len];
        let mut sum_sq = vec![0.0; len];
        let mut g = base.clone();
        for _ in 0..inner {
            for x in &mut g[k * d..] {
                *x = rng.sample(StandardNormal);
            }
            let vals = eval_basis(&basis, &g, Scaling::Orthonormal)?.values;
            prefix_ok &= vals[..cut] == base_vals[..cut];
            for a in cut..len {
                sum[a] += vals[a];
                sum_sq[a] += vals[a] * vals[a];
            }
        }
        let mf = inner as f64;
        for a in cut..len {
            let mean = sum[a] / mf;
            let var = (sum_sq[a] / mf - mean * mean).max(0.0);
            worst = worst.max(mean.abs() / (var / mf).sqrt().max(1e-300));
        }
    }
    Ok(CheckOutcome::new(
        "drop-term conditional expectation",
        worst <= z_max && prefix_ok,
        format!(
            "{outer} conditioning paths x {inner} resamples: worst |z| = {worst:.2} (limit {z_max}), prefix kept: {prefix_ok}"
        ),
    ))
}

fn random_lambda(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let mag = rng.random_range(0.05..0.5);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Central finite differences against the analytic gradient at `count`
/// random coefficient vectors without near-ties.
pub fn finite_difference_gradient(
    count: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckOutcome, CliError> {
    let problem = Problem::small_basket(200, seed)?;
    let obj = problem.objective()?;
    let len = problem.basis.len();
    let mut rng = path_rng(seed, 1 << 40);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    let mut skipped = 0;
    while tested < count {
        let lambda = random_lambda(&mut rng, len);
        if problem.min_tie_gap(&lambda)? < 1e-4 {
            skipped += 1;
            if skipped > 50 * count {
                break;
            }
            continue;
        }
        let grad = obj.objective_and_gradient(&lambda)?.gradient;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut x = lambda.clone();
        for a in 0..len {
            let h = 1e-6 * (1.0 + lambda[a].abs());
            x[a] = lambda[a] + h;
            let up = obj.objective_and_gradient(&x)?.value;
            x[a] = lambda[a] - h;
            let down = obj.objective_and_gradient(&x)?.value;
            x[a] = lambda[a];
            let fd = (up - down) / (2.0 * h);
            num += (fd - grad[a]).powi(2);
            den += grad[a].powi(2);
        }
        worst = worst.max((num / den).sqrt());
        tested += 1;
    }
    Ok(CheckOutcome::new(
        "gradient vs finite differences",
        tested == count && worst <= tol,
        format!("{tested} coefficient vectors ({skipped} near-tie draws skipped): worst relative error {worst:.2e} (limit {tol:.0e})"),
    ))
}

/// Convexity along random segments and the subgradient inequality.
pub fn convexity(triples: usize, seed: u64) -> Result<CheckOutcome, CliError> {
    let problem = Problem::small_basket(500, seed)?;
    let obj = problem.objective()?;
    let len = problem.basis.len();
    let mut rng = path_rng(seed, 1 << 41);
    let mut worst_chord = f64::NEG_INFINITY;
    let mut worst_sub = f64::NEG_INFINITY;
    for _ in 0..triples {
        let l1 = random_lambda(&mut rng, len);
        let l2 = random_lambda(&mut rng, len);
        let theta: f64 = rng.random();
        let mid: Vec<f64> = l1
            .iter()
            .zip(&l2)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        let r1 = obj.objective_and_gradient(&l1)?;
        let v2 = obj.objective_and_gradient(&l2)?.value;
        let vm = obj.objective_and_gradient(&mid)?.value;
        worst_chord = worst_chord.max(vm - (theta * r1.value + (1.0 - theta) * v2));

        let e: Vec<f64> = (0..len).map(|_| rng.random_range(-1e-2..1e-2)).collect();
        let shifted: Vec<f64> = l1.iter().zip(&e).map(|(a, b)| a + b).collect();
        let vs = obj.objective_and_gradient(&shifted)?.value;
        let lin: f64 = r1.gradient.iter().zip(&e).map(|(g, x)| g * x).sum();
        worst_sub = worst_sub.max(r1.value + lin - vs);
    }
    let tol = 1e-12;
    Ok(CheckOutcome::new(
        "convexity",
        worst_chord <= tol && worst_sub <= tol,
        format!(
            "{triples} triples: max chord excess {worst_chord:.2e}, max subgradient excess {worst_sub:.2e} (limit {tol:.0e})"
        ),
    ))
}

/// The restarted and full martingales give the same mean objective.
pub fn restart_equivalence(m: usize, seed: u64, z_max: f64) -> Result<CheckOutcome, CliError> {
    // Coefficients fitted on an independent sample so the martingale is
    // far from zero.
    let fit = Problem::small_basket(5_000, seed ^ 0x5eed)?;
    let fit_obj = fit.objective()?;
    let lambda = minimize(
        &fit_obj,
        &DescentConfig::with_anchor(european_anchor(&fit.payoffs)),
    )?
    .lambda
    .into_inner();

    let problem = Problem::small_basket(m, seed)?;
    let restarted = problem.objective()?.objective_and_gradient(&lambda)?;
    let full = problem
        .objective()?
        .with_martingale(Martingale::Full)
        .objective_and_gradient(&lambda)?;
    let diffs: Vec<f64> = full
        .path_max
        .iter()
        .zip(&restarted.path_max)
        .map(|(a, b)| a - b)
        .collect();
    let mf = m as f64;
    let mean = diffs.iter().sum::<f64>() / mf;
    let var = diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (mf - 1.0);
    let se = (var / mf).sqrt();
    let z = mean.abs() / se.max(1e-300);
    Ok(CheckOutcome::new(
        "restarted vs full martingale",
        z <= z_max,
        format!(
            "m={m}: full {:.5}, restarted {:.5}, mean difference {mean:.2e} +- {se:.2e} (|z| = {z:.2}, limit {z_max})",
            full.value, restarted.value
        ),
    ))
}

/// Strictly decreasing accepted values.
pub fn strict_descent(name: &str, values: &[f64]) -> CheckOutcome {
    let ok = values.windows(2).all(|w| w[1] < w[0]);
    CheckOutcome::new(
        &format!("strict descent ({name})"),
        ok,
        format!("{} accepted iterates", values.len()),
    )
}

/// Quick suite for the `check` command.
pub fn quick_suite(seed: u64) -> Result<Vec<CheckOutcome>, CliError> {
    let problem = Problem::small_basket(2_000, seed)?;
    let obj = problem.objective()?;
    let descent = minimize(
        &obj,
        &DescentConfig::with_anchor(european_anchor(&problem.payoffs)),
    )?;
    let values: Vec<f64> = descent.trace.accepted.iter().map(|a| a.value).collect();
    Ok(vec![
        orthonormality(2, 2, 2, 20_000, seed, 5.0)?,
        drop_term(2, 3, 2, 4, 5_000, seed, 5.0)?,
        finite_difference_gradient(5, seed, 1e-5)?,
        convexity(20, seed)?,
        strict_descent("small basket", &values),
        restart_equivalence(20_000, seed, 4.0)?,
    ])
}
