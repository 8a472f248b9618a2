//! The `price`, `oracle` and `bench` commands.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use chaosdual_core::basis::enumerate_basis;
use chaosdual_core::dual::DualObjective;
use chaosdual_core::market::{simulate_black_scholes, simulate_heston, PathBatch};
use chaosdual_core::optim::{european_anchor, minimize, DescentTrace, StopReason};
use chaosdual_core::oracle::{
    binomial_put, bs_european_put, geometric_reduction, Exercise, ReducedParams,
};
use chaosdual_core::payoff::{evaluate_payoffs, PayoffKind};
use serde::{Deserialize, Serialize};

use crate::config::{Model, ReportFormat, RunConfig, Validated};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub simulate_s: f64,
    pub payoff_s: f64,
    pub basis_s: f64,
    pub optimize_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    pub price: f64,
    pub stderr: f64,
    pub european: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub rejections: usize,
    pub stop_reason: StopReason,
    pub basis_size: usize,
    pub degree: usize,
    pub steps: usize,
    pub brownian_dim: usize,
    pub paths: usize,
    pub seed: u64,
    pub threads: usize,
    pub timing: Timing,
}

impl PricingResult {
    /// Equality ignoring wall-clock fields.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            timing: Timing {
                simulate_s: 0.0,
                payoff_s: 0.0,
                basis_s: 0.0,
                optimize_s: 0.0,
            },
            threads: 0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

#[derive(Debug, Clone)]
pub struct PriceRun {
    pub result: PricingResult,
    pub trace: DescentTrace,
}

/// Runs `f` on a pool of `threads` workers (0 = all cores).
pub fn with_threads<T: Send>(
    threads: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<(T, usize), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config(format!("method.threads: {e}")))?;
    let used = pool.current_num_threads();
    Ok((pool.install(f), used))
}

fn simulate(v: &Validated) -> Result<PathBatch, CliError> {
    Ok(match &v.model {
        Model::BlackScholes(p) => simulate_black_scholes(p, &v.grid, v.paths, v.seed)?,
        Model::Heston(p) => simulate_heston(p, &v.grid, v.paths, v.seed)?,
    })
}

/// Simulate, compute payoffs, enumerate the basis and minimize.
pub fn price(v: &Validated) -> Result<PriceRun, CliError> {
    let (out, threads) = with_threads(v.threads, || price_in_pool(v))?;
    let mut run = out?;
    run.result.threads = threads;
    Ok(run)
}

fn price_in_pool(v: &Validated) -> Result<PriceRun, CliError> {
    let t = Instant::now();
    let batch = simulate(v)?;
    let simulate_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let payoffs = evaluate_payoffs(&v.payoff, &batch, v.model.rate(), &v.grid)?;
    let anchor = european_anchor(&payoffs);
    let payoff_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let basis = enumerate_basis(v.degree, v.grid.steps(), v.model.brownian_dim())?;
    let basis_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let objective = DualObjective::new(&basis, &batch, &payoffs)?;
    let descent = minimize(&objective, &v.descent(anchor))?;
    let optimize_s = t.elapsed().as_secs_f64();

    let result = PricingResult {
        benchmark: None,
        price: descent.price(),
        stderr: descent.stderr(),
        european: anchor,
        iterations: descent.trace.accepted.len() - 1,
        evaluations: descent.trace.evaluations,
        rejections: descent.trace.rejections,
        stop_reason: descent.trace.stop,
        basis_size: basis.len(),
        degree: v.degree,
        steps: v.grid.steps(),
        brownian_dim: basis.dim(),
        paths: v.paths,
        seed: v.seed,
        threads: 0,
        timing: Timing {
            simulate_s,
            payoff_s,
            basis_s,
            optimize_s,
        },
    };
    Ok(PriceRun {
        result,
        trace: descent.trace,
    })
}

/// `price` plus report and trace output.
pub fn run_price(config: &RunConfig) -> Result<PriceRun, CliError> {
    let v = config.validate()?;
    let mut run = price(&v)?;
    run.result.benchmark = config.benchmark.clone();
    if let Some(path) = &config.output.report {
        write_report(&run.result, path, config.output.format)?;
    }
    if let Some(path) = &config.output.trace {
        write_trace(&run.trace, path)?;
    }
    Ok(run)
}

pub fn render_report(result: &PricingResult, format: ReportFormat) -> Result<String, CliError> {
    match format {
        ReportFormat::Toml => {
            toml::to_string(result).map_err(|e| CliError::Numerical(e.to_string()))
        }
        ReportFormat::Json => {
            serde_json::to_string_pretty(result).map_err(|e| CliError::Numerical(e.to_string()))
        }
    }
}

pub fn parse_report(text: &str, format: ReportFormat) -> Result<PricingResult, CliError> {
    match format {
        ReportFormat::Toml => toml::from_str(text).map_err(|e| CliError::config(e.to_string())),
        ReportFormat::Json => {
            serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))
        }
    }
}

pub fn write_report(
    result: &PricingResult,
    path: &Path,
    format: ReportFormat,
) -> Result<(), CliError> {
    std::fs::write(path, render_report(result, format)?)?;
    Ok(())
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<PricingResult, CliError> {
    parse_report(&std::fs::read_to_string(path)?, format)
}

pub fn write_trace(trace: &DescentTrace, path: &Path) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,value,step,gamma,grad_norm")?;
    for (i, it) in trace.accepted.iter().enumerate() {
        writeln!(
            f,
            "{i},{},{},{},{}",
            it.value, it.step, it.gamma, it.grad_norm
        )?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub reduced: ReducedParams,
    pub tree_steps: usize,
    pub bermudan: f64,
    pub american: f64,
    pub european: f64,
}

/// Reference prices for geometric baskets (or any one-asset put) through the
/// one-dimensional reduction.
pub fn run_oracle(config: &RunConfig) -> Result<OracleReport, CliError> {
    let v = config.validate()?;
    let Model::BlackScholes(params) = &v.model else {
        return Err(CliError::config("reduction undefined for the heston model"));
    };
    let one_asset_put = params.dim() == 1
        && match v.payoff.kind {
            PayoffKind::GeometricPut | PayoffKind::MinPut => true,
            PayoffKind::BasketPut => v.payoff.weights == [1.0],
            PayoffKind::MaxCall => false,
        };
    if v.payoff.kind != PayoffKind::GeometricPut && !one_asset_put {
        return Err(CliError::config(format!(
            "reduction undefined for payoff {:?} on {} assets",
            v.payoff.kind,
            params.dim()
        )));
    }
    let reduced = geometric_reduction(params);
    let strike = v.payoff.strike;
    let bermudan = binomial_put(
        &reduced,
        params.rate,
        strike,
        &v.grid,
        v.tree_steps,
        Exercise::Bermudan,
    )
    .map_err(|e| CliError::config(format!("method.tree_steps: {e}")))?;
    let american = binomial_put(
        &reduced,
        params.rate,
        strike,
        &v.grid,
        v.tree_steps,
        Exercise::American,
    )
    .map_err(|e| CliError::config(format!("method.tree_steps: {e}")))?;
    let european = bs_european_put(
        reduced.s_hat,
        reduced.sigma_hat,
        params.rate,
        reduced.delta_hat,
        v.grid.maturity(),
        strike,
    );
    Ok(OracleReport {
        reduced,
        tree_steps: v.tree_steps,
        bermudan,
        american,
        european,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub threads: usize,
    pub seconds: f64,
    pub efficiency: f64,
    pub price: f64,
}

/// Prices the same configuration at each thread count. Prices must agree
/// bitwise.
pub fn run_bench(config: &RunConfig, thread_counts: &[usize]) -> Result<Vec<BenchRow>, CliError> {
    if thread_counts.is_empty() || thread_counts.contains(&0) {
        return Err(CliError::config(
            "--threads needs a list of positive counts",
        ));
    }
    let v = config.validate()?;
    let mut rows: Vec<BenchRow> = Vec::new();
    let mut reference: Option<PricingResult> = None;
    for &threads in thread_counts {
        let run_cfg = Validated {
            threads,
            ..v.clone()
        };
        let t = Instant::now();
        let run = price(&run_cfg)?;
        let seconds = t.elapsed().as_secs_f64();
        if let Some(r) = &reference {
            if r.price.to_bits() != run.result.price.to_bits() || !r.same_outcome(&run.result) {
                return Err(CliError::Numerical(format!(
                    "price differs across thread counts: {} ({} threads) vs {} ({} threads)",
                    r.price, thread_counts[0], run.result.price, threads
                )));
            }
        } else {
            reference = Some(run.result.clone());
        }
        let efficiency = match rows.first() {
            Some(base) => base.seconds * base.threads as f64 / (threads as f64 * seconds),
            None => 1.0,
        };
        rows.push(BenchRow {
            threads,
            seconds,
            efficiency,
            price: run.result.price,
        });
    }
    Ok(rows)
}
