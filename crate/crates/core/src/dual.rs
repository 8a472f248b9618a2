//! Sample average of the dual objective
//! `V(lambda) = 1/m sum_i max_{tau0 <= k <= n} (z_k - N_k(lambda))`
//! together with its gradient and the variance estimator, evaluated by a
//! deterministic map-reduce over paths.
//!
//! Paths are grouped into fixed blocks whose size depends only on `m`. Each
//! block is accumulated sequentially, then block partials are combined by a
//! pairwise tree in block order. Chunks handed to workers are unions of whole
//! blocks, so the result does not depend on the chunking or the thread count.

use std::ops::Range;

use rayon::prelude::*;

use crate::basis::{HermiteTable, MultiIndexBasis, Scaling};
use crate::error::{Error, Result};
use crate::market::PathBatch;
use crate::payoff::DiscountedPayoffs;

/// Coefficients over the non-constant basis elements.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "coefficients must be finite".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for CoefficientVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One evaluation of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub second_moment: f64,
    pub variance: f64,
    pub stderr: f64,
    /// Per-path maxima.
    pub path_max: Vec<f64>,
    /// Per-path smallest maximizing date.
    pub argmax: Vec<usize>,
}

impl ObjectiveReport {
    pub fn gradient_norm_sq(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum()
    }

    fn from_partial(p: Partial) -> Self {
        let m = p.argmax.len() as f64;
        let value = p.sum / m;
        let second_moment = p.sum_sq / m;
        let variance = (second_moment - value * value).max(0.0);
        let gradient = p.grad.into_iter().map(|g| g / m).collect();
        Self {
            value,
            gradient,
            second_moment,
            variance,
            stderr: (variance / m).sqrt(),
            path_max: p.maxima,
            argmax: p.argmax,
        }
    }
}

/// Anything the descent loop can minimize.
pub trait Objective {
    fn dim(&self) -> usize;
    fn evaluate(&self, lambda: &[f64]) -> Result<ObjectiveReport>;
}

/// `N_k = M_k - M_{min(k, tau0)}`.
pub fn restarted_martingale(mk: &[f64], tau0: usize) -> Vec<f64> {
    mk.iter()
        .enumerate()
        .map(|(k, &m)| if k <= tau0 { 0.0 } else { m - mk[tau0] })
        .collect()
}

/// Maximum of `z_k - N_k` over `k in tau0..=n` and the smallest maximizer.
pub fn pathwise_max(z: &[f64], martingale: &[f64], tau0: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, tau0);
    for k in tau0..z.len() {
        let v = z[k] - martingale[k];
        if v > best.0 {
            best = (v, k);
        }
    }
    best
}

/// Which martingale family the objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Martingale {
    /// Started at the first in-the-money date.
    #[default]
    Restarted,
    /// Started at time zero.
    Full,
}

/// Fixed partition of `0..m` into reduction blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionPlan {
    paths: usize,
    block: usize,
}

impl ReductionPlan {
    const MIN_BLOCK: usize = 32;
    const MAX_BLOCKS: usize = 128;

    pub fn for_paths(paths: usize) -> Self {
        let block = paths.div_ceil(Self::MAX_BLOCKS).max(Self::MIN_BLOCK);
        Self { paths, block }
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.paths)
            .step_by(self.block)
            .map(move |s| s..(s + self.block).min(self.paths))
    }

    pub fn block_count(&self) -> usize {
        self.paths.div_ceil(self.block)
    }

    /// Splits the blocks into about `count` contiguous chunks.
    pub fn chunks(&self, count: usize) -> Vec<Range<usize>> {
        let blocks = self.block_count();
        let count = count.clamp(1, blocks.max(1));
        let per = blocks.div_ceil(count);
        (0..blocks)
            .step_by(per)
            .map(|b| b * self.block..((b + per) * self.block).min(self.paths))
            .collect()
    }

    /// Default chunking for the current rayon pool.
    pub fn default_chunks(&self) -> Vec<Range<usize>> {
        self.chunks(8 * rayon::current_num_threads())
    }

    fn validate(&self, chunks: &[Range<usize>]) -> Result<()> {
        let fail = |reason: String| Error::InvalidChunks {
            paths: self.paths,
            reason,
        };
        if self.paths == 0 {
            return Err(fail("no paths to reduce".into()));
        }
        if chunks.is_empty() {
            return Err(fail("empty chunk list".into()));
        }
        let mut next = 0;
        for c in chunks {
            if c.start != next || c.end <= c.start {
                return Err(fail(format!("chunk {c:?} does not continue at {next}")));
            }
            if c.end != self.paths && c.end % self.block != 0 {
                return Err(fail(format!(
                    "chunk {c:?} ends inside a block of {}",
                    self.block
                )));
            }
            next = c.end;
        }
        if next != self.paths {
            return Err(fail(format!("chunks stop at {next}")));
        }
        Ok(())
    }
}

/// Accumulated contributions of a set of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial {
    pub sum: f64,
    pub sum_sq: f64,
    /// Sum over paths of the per-path gradient.
    pub grad: Vec<f64>,
    pub maxima: Vec<f64>,
    pub argmax: Vec<usize>,
}

impl Partial {
    pub fn empty(grad_len: usize) -> Self {
        Self {
            sum: 0.0,
            sum_sq: 0.0,
            grad: vec![0.0; grad_len],
            maxima: Vec::new(),
            argmax: Vec::new(),
        }
    }

    pub fn push(&mut self, value: f64, kstar: usize) {
        self.sum += value;
        self.sum_sq += value * value;
        self.maxima.push(value);
        self.argmax.push(kstar);
    }

    fn merge(mut self, other: Self) -> Self {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += b;
        }
        self.maxima.extend(other.maxima);
        self.argmax.extend(other.argmax);
        self
    }
}

fn pairwise(mut parts: Vec<Partial>) -> Partial {
    if parts.len() == 1 {
        return parts.pop().expect("one part");
    }
    let right = parts.split_off(parts.len() / 2);
    pairwise(parts).merge(pairwise(right))
}

/// Runs `worker` on every block of every chunk in parallel and combines the
/// block partials in a fixed pairwise order.
pub fn parallel_reduce<F>(
    plan: &ReductionPlan,
    chunks: &[Range<usize>],
    worker: F,
) -> Result<Partial>
where
    F: Fn(Range<usize>) -> Result<Partial> + Sync,
{
    plan.validate(chunks)?;
    let per_chunk: Vec<Vec<Partial>> = chunks
        .par_iter()
        .map(|c| {
            (c.start..c.end)
                .step_by(plan.block)
                .map(|s| worker(s..(s + plan.block).min(c.end)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(pairwise(per_chunk.into_iter().flatten().collect()))
}

/// Dual objective on a fixed sample.
pub struct DualObjective<'a> {
    basis: &'a MultiIndexBasis,
    batch: &'a PathBatch,
    payoffs: &'a DiscountedPayoffs,
    plan: ReductionPlan,
    martingale: Martingale,
    scaling: Scaling,
    chunks: Option<Vec<Range<usize>>>,
}

impl<'a> DualObjective<'a> {
    pub fn new(
        basis: &'a MultiIndexBasis,
        batch: &'a PathBatch,
        payoffs: &'a DiscountedPayoffs,
    ) -> Result<Self> {
        if batch.steps() != basis.steps() || payoffs.steps() != basis.steps() {
            return Err(Error::ShapeMismatch {
                what: "time steps",
                expected: basis.steps(),
                actual: if batch.steps() != basis.steps() {
                    batch.steps()
                } else {
                    payoffs.steps()
                },
            });
        }
        if batch.brownian_dim() != basis.dim() {
            return Err(Error::ShapeMismatch {
                what: "brownian dimension",
                expected: basis.dim(),
                actual: batch.brownian_dim(),
            });
        }
        if batch.paths() != payoffs.paths() {
            return Err(Error::ShapeMismatch {
                what: "payoff paths",
                expected: batch.paths(),
                actual: payoffs.paths(),
            });
        }
        Ok(Self {
            basis,
            batch,
            payoffs,
            plan: ReductionPlan::for_paths(batch.paths()),
            martingale: Martingale::Restarted,
            scaling: Scaling::Orthonormal,
            chunks: None,
        })
    }

    pub fn with_martingale(mut self, martingale: Martingale) -> Self {
        self.martingale = martingale;
        self
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    /// Pins the work split; `None` uses the pool-dependent default.
    pub fn with_chunks(mut self, chunks: Option<Vec<Range<usize>>>) -> Self {
        self.chunks = chunks;
        self
    }

    pub fn plan(&self) -> &ReductionPlan {
        &self.plan
    }

    pub fn objective_and_gradient(&self, lambda: &[f64]) -> Result<ObjectiveReport> {
        if lambda.len() != self.basis.len() {
            return Err(Error::ShapeMismatch {
                what: "lambda",
                expected: self.basis.len(),
                actual: lambda.len(),
            });
        }
        let chunks = match &self.chunks {
            Some(c) => c.clone(),
            None => self.plan.default_chunks(),
        };
        let partial = parallel_reduce(&self.plan, &chunks, |r| self.eval_block(r, lambda))?;
        Ok(ObjectiveReport::from_partial(partial))
    }

    /// Sequential evaluation over a single chunk.
    pub fn objective_sequential(&self, lambda: &[f64]) -> Result<ObjectiveReport> {
        let chunks = [0..self.plan.paths()];
        let partial = parallel_reduce(&self.plan, &chunks, |r| self.eval_block(r, lambda))?;
        Ok(ObjectiveReport::from_partial(partial))
    }

    fn eval_block(&self, range: Range<usize>, lambda: &[f64]) -> Result<Partial> {
        let basis = self.basis;
        let n = basis.steps();
        let len = basis.len();
        let mut partial = Partial::empty(len);
        let mut table = HermiteTable::new(n * basis.dim(), basis.degree());
        let mut values = vec![0.0; len];
        let mut level = vec![0.0; n + 1];

        for i in range.clone() {
            let z = self.payoffs.path(i);
            let tau0 = self.payoffs.tau0()[i];
            let origin = match self.martingale {
                Martingale::Restarted => tau0,
                Martingale::Full => 0,
            };
            let first = basis.first_after(origin);

            level.iter_mut().for_each(|x| *x = 0.0);
            if first < len {
                table.fill(self.batch.increments(i), self.scaling);
                let mut acc = 0.0;
                for k in origin + 1..=n {
                    let seg = basis.activated_at(k);
                    let mut inc = 0.0;
                    for idx in seg {
                        let b = basis.value_from_table(idx, &table);
                        values[idx] = b;
                        inc += lambda[idx] * b;
                    }
                    acc += inc;
                    level[k] = acc;
                }
            }

            let (value, kstar) = pathwise_max(z, &level, tau0);
            if !value.is_finite() {
                return Err(Error::Worker {
                    start: range.start,
                    end: range.end,
                    reason: format!("non-finite pathwise maximum on path {i}"),
                });
            }
            partial.push(value, kstar);
            for (g, b) in partial.grad[first..basis.active_until(kstar)]
                .iter_mut()
                .zip(&values[first..])
            {
                *g -= b;
            }
        }
        Ok(partial)
    }
}

impl Objective for DualObjective<'_> {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn evaluate(&self, lambda: &[f64]) -> Result<ObjectiveReport> {
        self.objective_and_gradient(lambda)
    }
}
